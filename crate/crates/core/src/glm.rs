//! Exponential-dispersion-family densities, scores, score Jacobians, and
//! expectations over the outcome, shared by both estimators.
//!
//! Only canonical links are provided (identity, logit, log), so the score and
//! its Jacobian have the closed forms
//!
//! `S(y, x; beta) = (y - mu(eta)) / lambda * d`
//! `dS/dbeta      = -mu'(eta) / lambda * d d^T`
//!
//! where `eta = beta . d` and `d = (1, x^T)^T` is the design vector.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;

/// Default Gauss-Hermite degree for outcome integrals of Gaussian models.
pub const DEFAULT_Y_QUADRATURE_NODES: usize = 40;

/// Truncation threshold for Poisson outcome sums: stop once the accumulated
/// mass exceeds `1 - POISSON_MASS_TAIL`.
const POISSON_MASS_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamilyKind {
    GaussianIdentity,
    BernoulliLogit,
    PoissonLog,
}

/// How `expect_over_y` integrates against the outcome distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YIntegrationRule {
    /// Exact two-term sum over {0, 1}.
    ExactBinary,
    /// Partial sum over the nonnegative integers, truncated by mass.
    TruncatedCount,
    /// Gauss-Hermite quadrature.
    GaussHermite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmFamily {
    kind: GlmFamilyKind,
    dispersion: f64,
}

impl GlmFamily {
    pub fn new(kind: GlmFamilyKind, dispersion: f64) -> Result<Self> {
        if !dispersion.is_finite() || dispersion <= 0.0 {
            return Err(Error::Domain(format!(
                "dispersion must be a positive real, got {dispersion}"
            )));
        }
        if matches!(
            kind,
            GlmFamilyKind::BernoulliLogit | GlmFamilyKind::PoissonLog
        ) && dispersion != 1.0
        {
            return Err(Error::Domain(format!(
                "{kind:?} requires dispersion 1, got {dispersion}"
            )));
        }
        Ok(Self { kind, dispersion })
    }

    pub fn gaussian(dispersion: f64) -> Result<Self> {
        Self::new(GlmFamilyKind::GaussianIdentity, dispersion)
    }

    pub fn bernoulli() -> Self {
        Self {
            kind: GlmFamilyKind::BernoulliLogit,
            dispersion: 1.0,
        }
    }

    pub fn poisson() -> Self {
        Self {
            kind: GlmFamilyKind::PoissonLog,
            dispersion: 1.0,
        }
    }

    pub fn kind(&self) -> GlmFamilyKind {
        self.kind
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Which integration path `expect_over_y` takes for this family.
    pub fn y_integration_rule(&self) -> YIntegrationRule {
        match self.kind {
            GlmFamilyKind::BernoulliLogit => YIntegrationRule::ExactBinary,
            GlmFamilyKind::PoissonLog => YIntegrationRule::TruncatedCount,
            GlmFamilyKind::GaussianIdentity => YIntegrationRule::GaussHermite,
        }
    }

    /// Cumulant function b(eta).
    pub fn cumulant(&self, eta: f64) -> f64 {
        match self.kind {
            GlmFamilyKind::GaussianIdentity => 0.5 * eta * eta,
            // log(1 + e^eta) without overflow for large |eta|
            GlmFamilyKind::BernoulliLogit => eta.max(0.0) + (-eta.abs()).exp().ln_1p(),
            GlmFamilyKind::PoissonLog => eta.exp(),
        }
    }

    /// Mean function mu(eta) = b'(eta).
    pub fn mean(&self, eta: f64) -> f64 {
        match self.kind {
            GlmFamilyKind::GaussianIdentity => eta,
            GlmFamilyKind::BernoulliLogit => {
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            GlmFamilyKind::PoissonLog => eta.exp(),
        }
    }

    /// Mean derivative mu'(eta) = b''(eta).
    pub fn mean_deriv(&self, eta: f64) -> f64 {
        match self.kind {
            GlmFamilyKind::GaussianIdentity => 1.0,
            GlmFamilyKind::BernoulliLogit => {
                let mu = self.mean(eta);
                mu * (1.0 - mu)
            }
            GlmFamilyKind::PoissonLog => eta.exp(),
        }
    }

    /// Normalizer c(y; lambda), the part of the log density not involving eta.
    pub fn normalizer(&self, y: f64) -> f64 {
        match self.kind {
            GlmFamilyKind::GaussianIdentity => {
                -y * y / (2.0 * self.dispersion)
                    - 0.5 * (2.0 * std::f64::consts::PI * self.dispersion).ln()
            }
            GlmFamilyKind::BernoulliLogit => 0.0,
            GlmFamilyKind::PoissonLog => -ln_gamma(y + 1.0),
        }
    }

    /// Validate that `y` lies in the family support.
    pub fn check_support(&self, y: f64) -> Result<()> {
        match self.kind {
            GlmFamilyKind::GaussianIdentity => {
                if y.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("Gaussian outcome must be finite, got {y}")))
                }
            }
            GlmFamilyKind::BernoulliLogit => {
                if y == 0.0 || y == 1.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "Bernoulli outcome must be 0 or 1, got {y}"
                    )))
                }
            }
            GlmFamilyKind::PoissonLog => {
                if y.is_finite() && y >= 0.0 && y.fract() == 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!(
                        "Poisson outcome must be a nonnegative integer, got {y}"
                    )))
                }
            }
        }
    }

    /// Log density at natural parameter `eta`, without support validation.
    pub fn log_density_at_eta(&self, y: f64, eta: f64) -> f64 {
        (y * eta - self.cumulant(eta)) / self.dispersion + self.normalizer(y)
    }
}

/// A generalized linear model: family plus coefficients `(alpha, beta_u, beta_z)`
/// for covariates `x = (u, z)` of dimensions `m_u` and `m_z`.
#[derive(Debug, Clone)]
pub struct GlmModel {
    family: GlmFamily,
    beta: DVector<f64>,
    m_u: usize,
    m_z: usize,
}

impl GlmModel {
    pub fn new(family: GlmFamily, beta: DVector<f64>, m_u: usize, m_z: usize) -> Result<Self> {
        if beta.len() != 1 + m_u + m_z {
            return Err(Error::Shape(format!(
                "beta has length {}, expected 1 + {m_u} + {m_z}",
                beta.len()
            )));
        }
        Ok(Self {
            family,
            beta,
            m_u,
            m_z,
        })
    }

    pub fn family(&self) -> &GlmFamily {
        &self.family
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn m_u(&self) -> usize {
        self.m_u
    }

    pub fn m_z(&self) -> usize {
        self.m_z
    }

    /// Number of covariates m = m_u + m_z.
    pub fn m(&self) -> usize {
        self.m_u + self.m_z
    }

    /// eta = alpha + x . (beta_u, beta_z), with a finiteness check.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.m() {
            return Err(Error::Shape(format!(
                "covariate vector has length {}, expected {}",
                x.len(),
                self.m()
            )));
        }
        let mut eta = self.beta[0];
        for (k, &xk) in x.iter().enumerate() {
            eta += self.beta[k + 1] * xk;
        }
        if eta.is_finite() {
            Ok(eta)
        } else {
            Err(Error::Overflow(format!("nonfinite linear predictor {eta}")))
        }
    }

    pub fn log_density(&self, y: f64, x: &[f64]) -> Result<f64> {
        self.family.check_support(y)?;
        let eta = self.linear_predictor(x)?;
        Ok(self.family.log_density_at_eta(y, eta))
    }

    /// Score S(y, x; beta) = (y - mu(eta)) / lambda * (1, x^T)^T.
    pub fn score(&self, y: f64, x: &[f64]) -> Result<DVector<f64>> {
        self.family.check_support(y)?;
        let eta = self.linear_predictor(x)?;
        let resid = (y - self.family.mean(eta)) / self.family.dispersion;
        let mut s = DVector::zeros(self.m() + 1);
        s[0] = resid;
        for (k, &xk) in x.iter().enumerate() {
            s[k + 1] = resid * xk;
        }
        Ok(s)
    }

    /// Score Jacobian dS/dbeta = -mu'(eta) / lambda * d d^T; symmetric.
    pub fn score_jacobian(&self, y: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        self.family.check_support(y)?;
        let eta = self.linear_predictor(x)?;
        let scale = -self.family.mean_deriv(eta) / self.family.dispersion;
        let p = self.m() + 1;
        let mut design = DVector::zeros(p);
        design[0] = 1.0;
        for (k, &xk) in x.iter().enumerate() {
            design[k + 1] = xk;
        }
        let mut jac = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                jac[(i, j)] = scale * design[i] * design[j];
            }
        }
        Ok(jac)
    }

    /// `integral g(y) p(y | x; beta) dy` with the default quadrature degree.
    ///
    /// Exact two-term sum for Bernoulli, mass-truncated sum for Poisson,
    /// Gauss-Hermite for Gaussian.
    pub fn expect_over_y<F>(&self, x: &[f64], g: F) -> Result<DVector<f64>>
    where
        F: FnMut(f64) -> DVector<f64>,
    {
        self.expect_over_y_with_nodes(x, g, DEFAULT_Y_QUADRATURE_NODES)
    }

    pub fn expect_over_y_with_nodes<F>(
        &self,
        x: &[f64],
        mut g: F,
        nodes: usize,
    ) -> Result<DVector<f64>>
    where
        F: FnMut(f64) -> DVector<f64>,
    {
        let eta = self.linear_predictor(x)?;
        let out = match self.family.y_integration_rule() {
            YIntegrationRule::ExactBinary => {
                let mu = self.family.mean(eta);
                g(0.0) * (1.0 - mu) + g(1.0) * mu
            }
            YIntegrationRule::TruncatedCount => {
                let mu = self.family.mean(eta);
                if !mu.is_finite() {
                    return Err(Error::Overflow(format!("Poisson mean overflowed at eta={eta}")));
                }
                // Walk outward from the mode so large means do not underflow
                // the recursion; stop once the accumulated mass passes the
                // target or the terms are negligible relative to the mode.
                let target = 1.0 - POISSON_MASS_TAIL;
                let mode = mu.floor().max(0.0) as u64;
                let log_pmode = -mu + mode as f64 * mu.ln() - ln_gamma(mode as f64 + 1.0);
                let pmode = log_pmode.exp();
                if pmode <= 0.0 || !pmode.is_finite() {
                    return Err(Error::Numeric(format!(
                        "Poisson mode mass underflowed at mean {mu}"
                    )));
                }
                let mut acc = g(mode as f64) * pmode;
                let mut mass = pmode;
                let mut pk = pmode;
                let mut k = mode;
                while mass < target {
                    k += 1;
                    pk *= mu / k as f64;
                    if pk < pmode * 1e-18 && k as f64 > mu {
                        break;
                    }
                    acc += g(k as f64) * pk;
                    mass += pk;
                    if k > mode + 500_000 {
                        return Err(Error::Numeric(format!(
                            "Poisson outcome sum did not reach target mass at mean {mu}"
                        )));
                    }
                }
                if mode > 0 {
                    let mut pk = pmode;
                    let mut k = mode;
                    while mass < target && k > 0 {
                        pk *= k as f64 / mu;
                        k -= 1;
                        if pk < pmode * 1e-18 {
                            break;
                        }
                        acc += g(k as f64) * pk;
                        mass += pk;
                    }
                }
                acc
            }
            YIntegrationRule::GaussHermite => {
                let rule = GaussHermite::cached(nodes.max(2));
                let sd = self.family.dispersion.sqrt();
                let scale = std::f64::consts::SQRT_2 * sd;
                let norm = 1.0 / std::f64::consts::PI.sqrt();
                let mut acc: Option<DVector<f64>> = None;
                for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
                    let term = g(eta + scale * t) * (w * norm);
                    acc = Some(match acc {
                        None => term,
                        Some(a) => a + term,
                    });
                }
                acc.expect("quadrature rule has at least two nodes")
            }
        };
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Numeric(
                "outcome integral produced a nonfinite value".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::ChaCha8Rng;
    use rand::{RngExt, SeedableRng};
    use rand_distr::StandardNormal;

    fn families() -> Vec<GlmFamily> {
        vec![
            GlmFamily::gaussian(1.0).unwrap(),
            GlmFamily::gaussian(2.5).unwrap(),
            GlmFamily::bernoulli(),
            GlmFamily::poisson(),
        ]
    }

    fn draw_y(family: &GlmFamily, eta: f64, rng: &mut ChaCha8Rng) -> f64 {
        match family.kind() {
            GlmFamilyKind::GaussianIdentity => {
                let z: f64 = rng.sample(StandardNormal);
                family.mean(eta) + family.dispersion().sqrt() * z
            }
            GlmFamilyKind::BernoulliLogit => {
                if rng.random::<f64>() < family.mean(eta) {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamilyKind::PoissonLog => (rng.random::<f64>() * 6.0).floor(),
        }
    }

    #[test]
    fn log_density_known_values() {
        // standard normal at its mean
        let gauss = GlmModel::new(
            GlmFamily::gaussian(1.0).unwrap(),
            DVector::zeros(3),
            1,
            1,
        )
        .unwrap();
        assert_relative_eq!(
            gauss.log_density(0.0, &[0.3, -0.7]).unwrap(),
            -0.9189385332046727,
            epsilon = 1e-12
        );
        // symmetric logit at predictor 0
        let bern = GlmModel::new(GlmFamily::bernoulli(), DVector::zeros(3), 1, 1).unwrap();
        assert_relative_eq!(
            bern.log_density(1.0, &[0.0, 0.0]).unwrap(),
            -std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        // Poisson mass at mean 1, y = 2: -1 - log 2
        let pois = GlmModel::new(GlmFamily::poisson(), DVector::zeros(3), 1, 1).unwrap();
        assert_relative_eq!(
            pois.log_density(2.0, &[0.0, 0.0]).unwrap(),
            -1.0 - std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn score_known_values() {
        let gauss = GlmModel::new(
            GlmFamily::gaussian(1.0).unwrap(),
            DVector::zeros(3),
            1,
            1,
        )
        .unwrap();
        let s = gauss.score(1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0, 0.0]);

        let bern = GlmModel::new(GlmFamily::bernoulli(), DVector::zeros(3), 1, 1).unwrap();
        let s = bern.score(1.0, &[1.0, 1.0]).unwrap();
        for v in s.iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn score_jacobian_known_values() {
        let gauss = GlmModel::new(
            GlmFamily::gaussian(1.0).unwrap(),
            DVector::zeros(3),
            1,
            1,
        )
        .unwrap();
        let j = gauss.score_jacobian(0.5, &[0.0, 0.0]).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0, 0.0]));
        assert_relative_eq!(j, expected, epsilon = 1e-12);

        let bern = GlmModel::new(GlmFamily::bernoulli(), DVector::zeros(3), 1, 1).unwrap();
        let j = bern.score_jacobian(1.0, &[1.0, 1.0]).unwrap();
        for v in j.iter() {
            assert_relative_eq!(*v, -0.25, epsilon = 1e-12);
        }
    }

    /// Central finite difference of the log density in beta; the independent
    /// oracle for the analytic score.
    fn fd_score(family: &GlmFamily, beta: &DVector<f64>, y: f64, x: &[f64]) -> DVector<f64> {
        let h = 1e-6;
        let p = beta.len();
        let mut out = DVector::zeros(p);
        for k in 0..p {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[k] += h;
            bm[k] -= h;
            let lp = GlmModel::new(*family, bp, x.len() - 1, 1)
                .unwrap()
                .log_density(y, x)
                .unwrap();
            let lm = GlmModel::new(*family, bm, x.len() - 1, 1)
                .unwrap()
                .log_density(y, x)
                .unwrap();
            out[k] = (lp - lm) / (2.0 * h);
        }
        out
    }

    fn fd_score_jacobian(
        family: &GlmFamily,
        beta: &DVector<f64>,
        y: f64,
        x: &[f64],
    ) -> DMatrix<f64> {
        let h = 1e-5;
        let p = beta.len();
        let mut out = DMatrix::zeros(p, p);
        for k in 0..p {
            let mut bp = beta.clone();
            let mut bm = beta.clone();
            bp[k] += h;
            bm[k] -= h;
            let sp = GlmModel::new(*family, bp, x.len() - 1, 1)
                .unwrap()
                .score(y, x)
                .unwrap();
            let sm = GlmModel::new(*family, bm, x.len() - 1, 1)
                .unwrap()
                .score(y, x)
                .unwrap();
            out.set_column(k, &((sp - sm) / (2.0 * h)));
        }
        out
    }

    #[test]
    fn score_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in families() {
            for _ in 0..100 {
                let beta =
                    DVector::from_fn(3, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
                let x = [
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ];
                let model = GlmModel::new(family, beta.clone(), 1, 1).unwrap();
                let eta = model.linear_predictor(&x).unwrap();
                let y = draw_y(&family, eta, &mut rng);
                let analytic = model.score(y, &x).unwrap();
                let fd = fd_score(&family, &beta, y, &x);
                for k in 0..3 {
                    let tol = 1e-5 * analytic[k].abs().max(1.0);
                    assert!(
                        (analytic[k] - fd[k]).abs() < tol,
                        "{family:?}: score component {k}: {} vs fd {}",
                        analytic[k],
                        fd[k]
                    );
                }
            }
        }
    }

    #[test]
    fn score_jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for family in families() {
            for _ in 0..100 {
                let beta =
                    DVector::from_fn(3, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
                let x = [
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ];
                let model = GlmModel::new(family, beta.clone(), 1, 1).unwrap();
                let eta = model.linear_predictor(&x).unwrap();
                let y = draw_y(&family, eta, &mut rng);
                let analytic = model.score_jacobian(y, &x).unwrap();
                let fd = fd_score_jacobian(&family, &beta, y, &x);
                for i in 0..3 {
                    for j in 0..3 {
                        let tol = 1e-4 * analytic[(i, j)].abs().max(1.0);
                        assert!(
                            (analytic[(i, j)] - fd[(i, j)]).abs() < tol,
                            "{family:?}: jacobian ({i},{j}): {} vs fd {}",
                            analytic[(i, j)],
                            fd[(i, j)]
                        );
                    }
                }
                // symmetry
                assert_relative_eq!(analytic.clone(), analytic.transpose(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn expect_over_y_moments() {
        let gauss = GlmModel::new(
            GlmFamily::gaussian(1.0).unwrap(),
            DVector::from_vec(vec![2.0, 0.0, 0.0]),
            1,
            1,
        )
        .unwrap();
        let mean = gauss
            .expect_over_y(&[1.0, 1.0], |y| DVector::from_vec(vec![y]))
            .unwrap();
        assert_relative_eq!(mean[0], 2.0, epsilon = 1e-8);

        let bern = GlmModel::new(GlmFamily::bernoulli(), DVector::zeros(3), 1, 1).unwrap();
        let second = bern
            .expect_over_y(&[0.0, 0.0], |y| DVector::from_vec(vec![y * y]))
            .unwrap();
        assert_relative_eq!(second[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn expect_over_y_is_normalized_and_score_centered() {
        for family in families() {
            for &eta0 in &[-10.0, -3.0, 0.0, 2.0, 10.0] {
                let beta = DVector::from_vec(vec![eta0, 0.0, 0.0]);
                let model = GlmModel::new(family, beta, 1, 1).unwrap();
                let x = [0.0, 0.0];
                let one = model
                    .expect_over_y(&x, |_| DVector::from_vec(vec![1.0]))
                    .unwrap();
                assert!(
                    (one[0] - 1.0).abs() < 1e-10,
                    "{family:?} at eta {eta0}: normalization {}",
                    one[0]
                );
                let mean_score = model.expect_over_y(&x, |y| model.score(y, &x).unwrap()).unwrap();
                for v in mean_score.iter() {
                    assert!(
                        v.abs() < 1e-8,
                        "{family:?} at eta {eta0}: score mean {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn bernoulli_bypasses_quadrature() {
        assert_eq!(
            GlmFamily::bernoulli().y_integration_rule(),
            YIntegrationRule::ExactBinary
        );
        assert_eq!(
            GlmFamily::poisson().y_integration_rule(),
            YIntegrationRule::TruncatedCount
        );
        assert_eq!(
            GlmFamily::gaussian(1.0).unwrap().y_integration_rule(),
            YIntegrationRule::GaussHermite
        );
    }

    #[test]
    fn support_and_overflow_errors() {
        let bern = GlmModel::new(GlmFamily::bernoulli(), DVector::zeros(3), 1, 1).unwrap();
        assert!(matches!(
            bern.log_density(2.0, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        let pois = GlmModel::new(GlmFamily::poisson(), DVector::zeros(3), 1, 1).unwrap();
        assert!(matches!(
            pois.log_density(2.5, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            pois.log_density(-1.0, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        let gauss = GlmModel::new(
            GlmFamily::gaussian(1.0).unwrap(),
            DVector::from_vec(vec![0.0, f64::MAX, f64::MAX]),
            1,
            1,
        )
        .unwrap();
        assert!(matches!(
            gauss.log_density(0.0, &[f64::MAX, f64::MAX]),
            Err(Error::Overflow(_))
        ));
        assert!(GlmFamily::gaussian(0.0).is_err());
        assert!(GlmFamily::new(GlmFamilyKind::BernoulliLogit, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_holds_across_predictors(eta0 in -10.0..10.0f64) {
            for family in families() {
                let model = GlmModel::new(
                    family,
                    DVector::from_vec(vec![eta0, 0.0, 0.0]),
                    1,
                    1,
                )
                .unwrap();
                let one = model
                    .expect_over_y(&[0.0, 0.0], |_| DVector::from_vec(vec![1.0]))
                    .unwrap();
                prop_assert!((one[0] - 1.0).abs() < 1e-10);
            }
        }
    }
}
