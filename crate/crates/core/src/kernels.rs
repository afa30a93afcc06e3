//! Gaussian kernel primitives: Silverman bandwidths, Nadaraya-Watson
//! propensity regression on `u`, product kernel density estimation on
//! `x = (u, z)`, and integrals of functions of `z` against the fitted density.
//!
//! Both kernels are Gaussian. The density estimate is therefore a uniform
//! mixture of axis-aligned Gaussians, which makes the `z`-integrals mixtures of
//! one-dimensional Gaussian expectations: each mixture component contributes
//! its `u`-kernel factor as a weight times a Gauss-Hermite expectation of the
//! integrand against its `z`-kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Propensities are clamped to `[EPS_CLIP, 1 - EPS_CLIP]` before any use that
/// divides by them or by their complement.
pub const EPS_CLIP: f64 = 0.01;

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Standard normal density, the kernel used throughout.
#[inline]
pub fn gaussian_kernel(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule per coordinate.
    Auto,
    /// A single bandwidth shared by every coordinate.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KdeBandwidth {
    Auto,
    /// One bandwidth per coordinate of `(u, z)`.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZIntegrationMode {
    /// Gauss-Hermite expectation against each component's `z`-kernel.
    MixtureQuadrature,
    /// Replace each component's `z`-kernel by a point mass at its center; a
    /// fast approximation that drops the `z`-direction smoothing.
    DegenerateZ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub propensity_bandwidth: Bandwidth,
    pub kde_bandwidth: KdeBandwidth,
    /// Gauss-Hermite nodes per `z`-coordinate in `MixtureQuadrature` mode.
    pub quadrature_nodes: usize,
    pub z_integration_mode: ZIntegrationMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            propensity_bandwidth: Bandwidth::Auto,
            kde_bandwidth: KdeBandwidth::Auto,
            quadrature_nodes: 20,
            z_integration_mode: ZIntegrationMode::MixtureQuadrature,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(b) = self.propensity_bandwidth {
            if !b.is_finite() || b <= 0.0 {
                return Err(Error::Domain(format!(
                    "propensity bandwidth must be positive, got {b}"
                )));
            }
        }
        if let KdeBandwidth::Fixed(ref h) = self.kde_bandwidth {
            if h.is_empty() || h.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Domain(format!(
                    "kde bandwidths must all be positive, got {h:?}"
                )));
            }
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 quadrature nodes, got {}",
                self.quadrature_nodes
            )));
        }
        Ok(())
    }
}

/// Per-coordinate Silverman bandwidths:
/// `h_j = (4 / (d + 2))^(1/(d+4)) * n^(-1/(d+4)) * sd_j`.
pub fn silverman_bandwidth(samples: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = samples.nrows();
    let d = samples.ncols();
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "bandwidth selection needs at least 2 samples, got {n}"
        )));
    }
    let exponent = 1.0 / (d as f64 + 4.0);
    let factor = (4.0 / (d as f64 + 2.0)).powf(exponent) * (n as f64).powf(-exponent);
    let mut h = DVector::zeros(d);
    for j in 0..d {
        let col = samples.column(j);
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if sd <= 0.0 || !sd.is_finite() {
            return Err(Error::DegenerateData(format!(
                "coordinate {j} has zero sample variance"
            )));
        }
        h[j] = factor * sd;
    }
    Ok(h)
}

/// Nadaraya-Watson kernel regression of the missingness indicator on `u`.
#[derive(Debug, Clone)]
pub struct PropensityEstimate {
    u: DMatrix<f64>,
    r: Vec<f64>,
    bandwidth: DVector<f64>,
}

impl PropensityEstimate {
    /// Raw Nadaraya-Watson ratio at `u`; lies in `[0, 1]` wherever the kernel
    /// weights do not all underflow.
    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.u.ncols() {
            return Err(Error::Shape(format!(
                "query has dimension {}, training data has {}",
                u.len(),
                self.u.ncols()
            )));
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.u.nrows() {
            let mut w = 1.0;
            for (d, &ud) in u.iter().enumerate() {
                w *= gaussian_kernel((ud - self.u[(j, d)]) / self.bandwidth[d]);
            }
            num += self.r[j] * w;
            den += w;
        }
        if den == 0.0 {
            return Err(Error::DegenerateData(
                "all kernel weights underflowed; query too far from the support".into(),
            ));
        }
        Ok(num / den)
    }

    /// Propensity clamped to `[EPS_CLIP, 1 - EPS_CLIP]`.
    pub fn evaluate_clipped(&self, u: &[f64]) -> Result<f64> {
        Ok(self.evaluate(u)?.clamp(EPS_CLIP, 1.0 - EPS_CLIP))
    }

    /// Inverse-probability weight denominator: the propensity clipped from
    /// below only, so fully observed data keeps weights exactly 1.
    pub fn weight_denominator(&self, u: &[f64]) -> Result<f64> {
        Ok(self.evaluate(u)?.max(EPS_CLIP))
    }

    pub fn bandwidth(&self) -> &DVector<f64> {
        &self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }
}

/// Fit the kernel regression propensity with a single bandwidth for every
/// `u`-coordinate.
pub fn nw_propensity(u: &DMatrix<f64>, r: &[bool], b: f64) -> Result<PropensityEstimate> {
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::Domain(format!("bandwidth must be positive, got {b}")));
    }
    nw_propensity_vector(u, r, DVector::from_element(u.ncols(), b))
}

/// Fit with one bandwidth per coordinate of `u`.
pub fn nw_propensity_vector(
    u: &DMatrix<f64>,
    r: &[bool],
    bandwidth: DVector<f64>,
) -> Result<PropensityEstimate> {
    if u.nrows() == 0 {
        return Err(Error::DegenerateData("no training points".into()));
    }
    if u.nrows() != r.len() {
        return Err(Error::Shape(format!(
            "u has {} rows but r has {} entries",
            u.nrows(),
            r.len()
        )));
    }
    if bandwidth.len() != u.ncols() || bandwidth.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Domain(format!(
            "need {} positive bandwidths, got {bandwidth:?}",
            u.ncols()
        )));
    }
    Ok(PropensityEstimate {
        u: u.clone(),
        r: r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        bandwidth,
    })
}

/// Resolve the configured propensity bandwidth against the data and fit.
pub fn nw_propensity_from_config(
    u: &DMatrix<f64>,
    r: &[bool],
    config: &KernelConfig,
) -> Result<PropensityEstimate> {
    config.validate()?;
    let bandwidth = match config.propensity_bandwidth {
        Bandwidth::Auto => silverman_bandwidth(u)?,
        Bandwidth::Fixed(b) => DVector::from_element(u.ncols(), b),
    };
    nw_propensity_vector(u, r, bandwidth)
}

/// Product-kernel density estimate on `x = (u, z)`: a uniform mixture of `n`
/// axis-aligned Gaussians centered at the data points.
#[derive(Debug, Clone)]
pub struct KdeEstimate {
    centers: DMatrix<f64>,
    bandwidth: DVector<f64>,
}

impl KdeEstimate {
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "query has dimension {}, estimate has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self.marginal_prefix_density(x))
    }

    /// Density of the first `point.len()` coordinates with the rest integrated
    /// out; for a Gaussian product mixture this just drops the remaining
    /// factors.
    pub fn marginal_prefix_density(&self, point: &[f64]) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for j in 0..n {
            let mut w = 1.0;
            for (d, &xd) in point.iter().enumerate() {
                w *= gaussian_kernel((xd - self.centers[(j, d)]) / self.bandwidth[d])
                    / self.bandwidth[d];
            }
            acc += w;
        }
        acc / n as f64
    }

    /// Per-component weights at a fixed `u`-prefix:
    /// `w_j(u) = n^{-1} prod_d h_d^{-1} K((u_d - x_{jd}) / h_d)`.
    /// Summing them recovers the `u`-marginal density.
    pub fn component_u_weights(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        let inv_n = 1.0 / n as f64;
        (0..n)
            .map(|j| {
                let mut w = inv_n;
                for (d, &ud) in u.iter().enumerate() {
                    w *= gaussian_kernel((ud - self.centers[(j, d)]) / self.bandwidth[d])
                        / self.bandwidth[d];
                }
                w
            })
            .collect()
    }

    pub fn n(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn bandwidth(&self) -> &DVector<f64> {
        &self.bandwidth
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }
}

pub fn product_kde(x: &DMatrix<f64>, h: &DVector<f64>) -> Result<KdeEstimate> {
    if x.nrows() == 0 {
        return Err(Error::DegenerateData("no training points".into()));
    }
    if h.len() != x.ncols() || h.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Domain(format!(
            "need {} positive bandwidths, got {h:?}",
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("training data contains a nonfinite value".into()));
    }
    Ok(KdeEstimate {
        centers: x.clone(),
        bandwidth: h.clone(),
    })
}

pub fn product_kde_from_config(x: &DMatrix<f64>, config: &KernelConfig) -> Result<KdeEstimate> {
    config.validate()?;
    let h = match &config.kde_bandwidth {
        KdeBandwidth::Auto => silverman_bandwidth(x)?,
        KdeBandwidth::Fixed(h) => {
            if h.len() == 1 {
                DVector::from_element(x.ncols(), h[0])
            } else {
                DVector::from_vec(h.clone())
            }
        }
    };
    product_kde(x, &h)
}

/// One evaluation point of the `z`-integration expansion: the owning mixture
/// component, the `z`-coordinates, and the quadrature weight (1 in
/// `DegenerateZ` mode).
#[derive(Debug, Clone)]
pub struct ZPoint {
    pub component: usize,
    pub z: Vec<f64>,
    pub weight: f64,
}

/// Expand the KDE's `z`-kernels into weighted evaluation points. `m_u` is the
/// number of leading coordinates that belong to `u`. The expansion does not
/// depend on the query `u`, so callers evaluating many rows reuse it.
pub fn z_expansion(kde: &KdeEstimate, m_u: usize, config: &KernelConfig) -> Vec<ZPoint> {
    let m_z = kde.dim() - m_u;
    let n = kde.n();
    match config.z_integration_mode {
        ZIntegrationMode::DegenerateZ => (0..n)
            .map(|j| ZPoint {
                component: j,
                z: (0..m_z).map(|d| kde.centers[(j, m_u + d)]).collect(),
                weight: 1.0,
            })
            .collect(),
        ZIntegrationMode::MixtureQuadrature => {
            let rule = GaussHermite::cached(config.quadrature_nodes);
            let q = rule.len();
            let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
            let mut points = Vec::with_capacity(n * q.pow(m_z as u32));
            let mut index = vec![0usize; m_z];
            for j in 0..n {
                index.iter_mut().for_each(|v| *v = 0);
                loop {
                    let mut z = Vec::with_capacity(m_z);
                    let mut w = 1.0;
                    for d in 0..m_z {
                        let t = rule.nodes()[index[d]];
                        z.push(
                            kde.centers[(j, m_u + d)]
                                + std::f64::consts::SQRT_2 * kde.bandwidth[m_u + d] * t,
                        );
                        w *= rule.weights()[index[d]] * inv_sqrt_pi;
                    }
                    points.push(ZPoint {
                        component: j,
                        z,
                        weight: w,
                    });
                    // odometer over the m_z-dimensional tensor grid
                    let mut d = 0;
                    loop {
                        if d == m_z {
                            break;
                        }
                        index[d] += 1;
                        if index[d] < q {
                            break;
                        }
                        index[d] = 0;
                        d += 1;
                    }
                    if d == m_z {
                        break;
                    }
                }
            }
            points
        }
    }
}

/// `integral g(z) fhat(u, z) dz` where the first `u.len()` coordinates of the
/// estimate are held at `u` and the rest are integrated against `g`.
pub fn kde_z_integral<F>(
    kde: &KdeEstimate,
    u: &[f64],
    g: F,
    config: &KernelConfig,
) -> Result<DVector<f64>>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    let weights = kde.component_u_weights(u);
    let expansion = z_expansion(kde, u.len(), config);
    kde_z_integral_expanded(&weights, &expansion, g)
}

/// Same integral with the component weights and point expansion precomputed.
pub fn kde_z_integral_expanded<F>(
    component_weights: &[f64],
    expansion: &[ZPoint],
    mut g: F,
) -> Result<DVector<f64>>
where
    F: FnMut(&[f64]) -> DVector<f64>,
{
    let mut acc: Option<DVector<f64>> = None;
    for p in expansion {
        let w = component_weights[p.component] * p.weight;
        let term = g(&p.z) * w;
        acc = Some(match acc {
            None => term,
            Some(a) => a + term,
        });
    }
    let out = acc.ok_or_else(|| Error::DegenerateData("empty z expansion".into()))?;
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Numeric("z integral produced a nonfinite value".into()))
    }
}
