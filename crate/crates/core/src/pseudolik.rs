//! Maximum pseudolikelihood estimation of the regression coefficients under
//! outcome-dependent missingness, using the instruments `z`.
//!
//! The conditional law of `z` given `(y, u)` on complete cases equals
//! `p(y|u,z) f(u,z) / integral p(y|u,z') f(u,z') dz'`, which does not involve
//! the missingness mechanism. Replacing `f` by the product kernel estimate
//! gives the plug-in log-pseudolikelihood
//!
//! `l(beta) = n^{-1} sum_i r_i log[ p(y_i|u_i,z_i;beta) fhat(u_i,z_i) /
//!            integral p(y_i|u_i,z;beta) fhat(u_i,z) dz ]`
//!
//! maximized here by Newton ascent with the analytic gradient and a
//! finite-difference Hessian. The influence rows add the correction `delta_i`
//! that accounts for the kernel estimation error in `fhat`:
//!
//! `phi_i = M^{-1} (grad_i + delta_i)`, `M = -n^{-1} sum_i d2 H_i`.
//!
//! Because `fhat` is a uniform Gaussian mixture, every `z`-integral is a sum
//! over mixture components of Gaussian expectations; those are expanded once
//! per fit into weighted evaluation points (see `kernels::z_expansion`) and
//! the per-row component weights are cached, so each gradient evaluation is a
//! dense pass over (complete rows) x (expansion points). All exponentials run
//! on a per-row shifted scale; the shift cancels in the ratios and is added
//! back to the log denominator.

use nalgebra::{DMatrix, DVector};
use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{GlmFamily, GlmModel};
use crate::ipw::{complete_case_fit, EstimatorFit};
use crate::kernels::{
    nw_propensity_from_config, product_kde_from_config, z_expansion, KdeEstimate, KernelConfig,
    PropensityEstimate, ZPoint,
};

/// Convergence tolerance on the max-norm of the pseudo-score.
pub const PSEUDO_SCORE_TOL: f64 = 1e-7;
const TARGET_TOL: f64 = 1e-11;
const MAX_ITER: usize = 200;
const RESTARTS: usize = 3;

/// Everything that does not change with `beta` during one fit: the kernel
/// density estimate on `(u, z)`, the expanded `z`-integration points, the
/// per-row component weights, and the log density values at the observed
/// points.
pub struct PseudoLikContext {
    family: GlmFamily,
    kde: KdeEstimate,
    m_u: usize,
    m_z: usize,
    /// component index per expansion point
    comp: Vec<u32>,
    /// quadrature weight per expansion point
    point_weight: Vec<f64>,
    /// z-coordinates per expansion point, flattened P x m_z
    point_z: Vec<f64>,
    /// w_j(u_i) for every row i (outer) and component j (inner)
    row_weights: Vec<Vec<f64>>,
    /// log fhat(u_i, z_i) per complete row (beta-free part of the loglik)
    log_kde_at_rows: Vec<f64>,
}

impl PseudoLikContext {
    pub fn new(data: &Dataset, family: GlmFamily, config: &KernelConfig) -> Result<Self> {
        let x = data.x_matrix();
        let kde = product_kde_from_config(&x, config)?;
        Self::with_kde(data, family, config, kde)
    }

    pub fn with_kde(
        data: &Dataset,
        family: GlmFamily,
        config: &KernelConfig,
        kde: KdeEstimate,
    ) -> Result<Self> {
        config.validate()?;
        let expansion = z_expansion(&kde, data.m_u(), config);
        let m_z = data.m_z();
        let mut comp = Vec::with_capacity(expansion.len());
        let mut point_weight = Vec::with_capacity(expansion.len());
        let mut point_z = Vec::with_capacity(expansion.len() * m_z);
        for p in &expansion {
            comp.push(p.component as u32);
            point_weight.push(p.weight);
            point_z.extend_from_slice(&p.z);
        }
        let row_weights: Vec<Vec<f64>> = (0..data.n())
            .map(|i| kde.component_u_weights(&data.u_row(i)))
            .collect();
        let log_kde_at_rows: Vec<f64> = (0..data.n())
            .map(|i| {
                if data.is_observed(i) {
                    kde.evaluate(&data.x_row(i)).map(|v| v.ln())
                } else {
                    Ok(f64::NAN)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            family,
            kde,
            m_u: data.m_u(),
            m_z,
            comp,
            point_weight,
            point_z,
            row_weights,
            log_kde_at_rows,
        })
    }

    pub fn kde(&self) -> &KdeEstimate {
        &self.kde
    }

    pub fn family(&self) -> &GlmFamily {
        &self.family
    }

    fn points(&self) -> usize {
        self.comp.len()
    }

    /// `z_p . beta_z` for every expansion point; recomputed once per beta.
    fn z_projections(&self, beta: &DVector<f64>) -> Vec<f64> {
        let beta_z = &beta.as_slice()[1 + self.m_u..];
        let mut out = Vec::with_capacity(self.points());
        for p in 0..self.points() {
            let mut acc = 0.0;
            for (d, bz) in beta_z.iter().enumerate() {
                acc += self.point_z[p * self.m_z + d] * bz;
            }
            out.push(acc);
        }
        out
    }

    /// `alpha + u_i . beta_u`, accumulated left to right so that `a_i + c_p`
    /// reproduces the model's linear predictor bitwise.
    fn u_projection(&self, beta: &DVector<f64>, i: usize, data: &Dataset) -> f64 {
        let mut acc = beta[0];
        for d in 0..self.m_u {
            acc += beta[1 + d] * data.u()[(i, d)];
        }
        acc
    }

    fn expansion_points(&self) -> Vec<ZPoint> {
        (0..self.points())
            .map(|p| ZPoint {
                component: self.comp[p] as usize,
                z: self.point_z[p * self.m_z..(p + 1) * self.m_z].to_vec(),
                weight: self.point_weight[p],
            })
            .collect()
    }
}

/// Accumulators for one row's z-integrals at a fixed outcome value, on the
/// shifted exponential scale.
struct RowIntegrals {
    /// `shift + ln(sum omega t)`, the log of the denominator integral
    log_denominator: f64,
    /// denominator on the shifted scale
    denom: f64,
    /// numerator for the intercept/u block: `sum omega t resid`
    num_resid: f64,
    /// numerator for the z block: `sum omega t resid z_d`
    num_resid_z: [f64; 8],
}

/// One dense pass over the expansion points for a row at outcome `y`.
/// `e_scratch` has length `points`; entries for zero-weight points are set to
/// -inf so they drop out of both the shift and the sums.
fn row_integrals(
    ctx: &PseudoLikContext,
    weights: &[f64],
    y: f64,
    a_i: f64,
    c: &[f64],
    e_scratch: &mut [f64],
    with_gradient: bool,
) -> Option<RowIntegrals> {
    debug_assert!(ctx.m_z <= 8, "expand the z accumulator block");
    let lambda = ctx.family.dispersion();
    let mut shift = f64::NEG_INFINITY;
    for p in 0..ctx.points() {
        let omega = weights[ctx.comp[p] as usize] * ctx.point_weight[p];
        if omega == 0.0 {
            e_scratch[p] = f64::NEG_INFINITY;
            continue;
        }
        let eta = a_i + c[p];
        let e = (y * eta - ctx.family.cumulant(eta)) / lambda;
        e_scratch[p] = e;
        if e > shift {
            shift = e;
        }
    }
    if !shift.is_finite() {
        return None;
    }
    let mut denom = 0.0;
    let mut num_resid = 0.0;
    let mut num_resid_z = [0.0; 8];
    for p in 0..ctx.points() {
        let t = (e_scratch[p] - shift).exp();
        if t == 0.0 {
            continue;
        }
        let omega = weights[ctx.comp[p] as usize] * ctx.point_weight[p];
        let wt = omega * t;
        denom += wt;
        if with_gradient {
            let eta = a_i + c[p];
            let wr = wt * ((y - ctx.family.mean(eta)) / lambda);
            num_resid += wr;
            for d in 0..ctx.m_z {
                num_resid_z[d] += wr * ctx.point_z[p * ctx.m_z + d];
            }
        }
    }
    if denom <= 0.0 || !denom.is_finite() {
        return None;
    }
    Some(RowIntegrals {
        log_denominator: shift + denom.ln(),
        denom,
        num_resid,
        num_resid_z,
    })
}

/// The plug-in log-pseudolikelihood `l(beta)`.
pub fn pseudo_loglik(beta: &DVector<f64>, data: &Dataset, ctx: &PseudoLikContext) -> Result<f64> {
    if data.complete_cases() == 0 {
        return Err(Error::DegenerateData("no complete cases".into()));
    }
    let lambda = ctx.family.dispersion();
    let beta_z = &beta.as_slice()[1 + ctx.m_u..];
    let c = ctx.z_projections(beta);
    let mut e_scratch = vec![0.0; ctx.points()];
    let mut acc = 0.0;
    for i in 0..data.n() {
        let Some(y) = data.y(i) else { continue };
        let a_i = ctx.u_projection(beta, i, data);
        let integrals =
            row_integrals(ctx, &ctx.row_weights[i], y, a_i, &c, &mut e_scratch, false)
                .ok_or_else(|| {
                    Error::Numeric(format!(
                        "pseudolikelihood denominator underflowed at row {i}"
                    ))
                })?;
        // log p(y|u_i,z_i) - log integral: the normalizer c(y; lambda) cancels
        let mut eta_obs = a_i;
        for (d, bz) in beta_z.iter().enumerate() {
            eta_obs += bz * data.z()[(i, d)];
        }
        let ylp = (y * eta_obs - ctx.family.cumulant(eta_obs)) / lambda;
        acc += ylp + ctx.log_kde_at_rows[i] - integrals.log_denominator;
    }
    if acc.is_nan() {
        return Err(Error::Numeric("pseudolikelihood is NaN".into()));
    }
    Ok(acc / data.n() as f64)
}

/// The analytic pseudo-score
/// `n^{-1} sum_i r_i [ S_i - (integral grad p fhat dz) / (integral p fhat dz) ]`.
pub fn pseudo_score(
    beta: &DVector<f64>,
    data: &Dataset,
    ctx: &PseudoLikContext,
) -> Result<DVector<f64>> {
    score_and_rows(beta, data, ctx, false).map(|(_, mean)| mean)
}

/// Per-row gradient contributions `r_i * dH_i/dbeta` (zero rows where the
/// outcome is missing) together with their mean, the pseudo-score.
pub fn per_row_gradients(
    beta: &DVector<f64>,
    data: &Dataset,
    ctx: &PseudoLikContext,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (rows, mean) = score_and_rows(beta, data, ctx, true)?;
    Ok((rows.expect("rows requested"), mean))
}

fn score_and_rows(
    beta: &DVector<f64>,
    data: &Dataset,
    ctx: &PseudoLikContext,
    keep_rows: bool,
) -> Result<(Option<DMatrix<f64>>, DVector<f64>)> {
    if data.complete_cases() == 0 {
        return Err(Error::DegenerateData("no complete cases".into()));
    }
    let dim = data.dim();
    let lambda = ctx.family.dispersion();
    let beta_z = &beta.as_slice()[1 + ctx.m_u..];
    let c = ctx.z_projections(beta);
    let mut e_scratch = vec![0.0; ctx.points()];
    let mut rows = if keep_rows {
        Some(DMatrix::zeros(data.n(), dim))
    } else {
        None
    };
    let mut mean = DVector::zeros(dim);
    let mut grad = vec![0.0; dim];
    for i in 0..data.n() {
        let Some(y) = data.y(i) else { continue };
        let a_i = ctx.u_projection(beta, i, data);
        let integrals =
            row_integrals(ctx, &ctx.row_weights[i], y, a_i, &c, &mut e_scratch, true)
                .ok_or_else(|| {
                    Error::Numeric(format!("pseudo-score denominator underflowed at row {i}"))
                })?;
        let mut eta_obs = a_i;
        for (d, bz) in beta_z.iter().enumerate() {
            eta_obs += bz * data.z()[(i, d)];
        }
        let resid_obs = (y - ctx.family.mean(eta_obs)) / lambda;
        let ratio0 = integrals.num_resid / integrals.denom;
        grad[0] = resid_obs - ratio0;
        for d in 0..ctx.m_u {
            grad[1 + d] = (resid_obs - ratio0) * data.u()[(i, d)];
        }
        for d in 0..ctx.m_z {
            grad[1 + ctx.m_u + d] = resid_obs * data.z()[(i, d)]
                - integrals.num_resid_z[d] / integrals.denom;
        }
        for (k, &gk) in grad.iter().enumerate() {
            mean[k] += gk;
            if let Some(ref mut r) = rows {
                r[(i, k)] = gk;
            }
        }
    }
    mean /= data.n() as f64;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("pseudo-score is nonfinite".into()));
    }
    Ok((rows, mean))
}

/// Central finite-difference Hessian of the pseudo-score, symmetrized. The
/// step is `1e-5 * (1 + |beta_k|)` per coordinate.
pub fn pseudo_hessian(
    beta: &DVector<f64>,
    data: &Dataset,
    ctx: &PseudoLikContext,
) -> Result<DMatrix<f64>> {
    let dim = beta.len();
    let mut h = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let step = 1e-5 * (1.0 + beta[k].abs());
        let mut bp = beta.clone();
        let mut bm = beta.clone();
        bp[k] += step;
        bm[k] -= step;
        let gp = pseudo_score(&bp, data, ctx)?;
        let gm = pseudo_score(&bm, data, ctx)?;
        h.set_column(k, &((gp - gm) / (2.0 * step)));
    }
    // symmetrize: the exact Hessian is symmetric, finite differences are not
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// The kernel-estimation correction row
///
/// `delta_i = pi(u_i) [ E_Y{ A(Y)/B(Y) } - E_Y{ S(Y, x_i) } ]`
///
/// where `A(y)/B(y)` is the ratio of the `z`-integrals of `grad p` and `p`
/// against `fhat(u_i, .)` and the outer expectations are over
/// `p(y | u_i, z_i; beta)`.
///
/// The ratio is accumulated with weights normalized by `B(y)`, so a
/// single-component degenerate mixture collapses to the score exactly and the
/// two expectations cancel bitwise.
#[allow(clippy::too_many_arguments)]
pub fn delta_row(
    family: &GlmFamily,
    beta: &DVector<f64>,
    u: &[f64],
    z: &[f64],
    pi_clipped: f64,
    component_weights: &[f64],
    expansion: &[ZPoint],
    y_nodes: usize,
) -> Result<DVector<f64>> {
    let m_u = u.len();
    let m_z = z.len();
    let dim = 1 + m_u + m_z;
    let lambda = family.dispersion();
    let model = GlmModel::new(*family, beta.clone(), m_u, m_z)?;
    let x: Vec<f64> = u.iter().chain(z.iter()).cloned().collect();

    // per-point natural parameters and cached cumulant/mean values
    let beta_z = &beta.as_slice()[1 + m_u..];
    let mut a_i = beta[0];
    for (d, &ud) in u.iter().enumerate() {
        a_i += beta[1 + d] * ud;
    }
    let points = expansion.len();
    let mut eta_p = Vec::with_capacity(points);
    let mut cum_p = Vec::with_capacity(points);
    let mut mean_p = Vec::with_capacity(points);
    let mut omega_p = Vec::with_capacity(points);
    for p in expansion {
        let mut cz = 0.0;
        for d in 0..m_z {
            cz += p.z[d] * beta_z[d];
        }
        let eta = a_i + cz;
        eta_p.push(eta);
        cum_p.push(family.cumulant(eta));
        mean_p.push(family.mean(eta));
        omega_p.push(component_weights[p.component] * p.weight);
    }

    let mut t_scratch = vec![0.0; points];
    let mut failed = false;
    let ratio_expectation = model.expect_over_y_with_nodes(
        &x,
        |y| {
            let mut shift = f64::NEG_INFINITY;
            for p in 0..points {
                if omega_p[p] == 0.0 {
                    continue;
                }
                let e = (y * eta_p[p] - cum_p[p]) / lambda;
                if e > shift {
                    shift = e;
                }
            }
            let mut b = 0.0;
            if shift.is_finite() {
                for p in 0..points {
                    if omega_p[p] == 0.0 {
                        t_scratch[p] = 0.0;
                        continue;
                    }
                    let e = (y * eta_p[p] - cum_p[p]) / lambda;
                    let t = omega_p[p] * (e - shift).exp();
                    t_scratch[p] = t;
                    b += t;
                }
            }
            if b <= 0.0 || !b.is_finite() {
                failed = true;
                return DVector::zeros(dim);
            }
            let mut out = DVector::zeros(dim);
            let mut resid_total = 0.0;
            for p in 0..points {
                if t_scratch[p] == 0.0 {
                    continue;
                }
                let nu = t_scratch[p] / b;
                let resid = nu * ((y - mean_p[p]) / lambda);
                resid_total += resid;
                for d in 0..m_z {
                    out[1 + m_u + d] += resid * expansion[p].z[d];
                }
            }
            out[0] = resid_total;
            for (d, &ud) in u.iter().enumerate() {
                out[1 + d] = resid_total * ud;
            }
            out
        },
        y_nodes,
    )?;
    if failed {
        return Err(Error::Numeric(
            "inner z-integral denominator underflowed in delta computation".into(),
        ));
    }
    let score_expectation =
        model.expect_over_y_with_nodes(&x, |y| model.score(y, &x).expect("support"), y_nodes)?;
    Ok((ratio_expectation - score_expectation) * pi_clipped)
}

/// All delta rows for a dataset; row `i` is computed whether or not `y_i` is
/// observed, since it only uses `(u_i, z_i)`.
pub fn delta_hat(
    fit: &EstimatorFit,
    data: &Dataset,
    prop: &PropensityEstimate,
    ctx: &PseudoLikContext,
) -> Result<DMatrix<f64>> {
    delta_hat_at(&fit.beta, data, prop, ctx)
}

pub fn delta_hat_at(
    beta: &DVector<f64>,
    data: &Dataset,
    prop: &PropensityEstimate,
    ctx: &PseudoLikContext,
) -> Result<DMatrix<f64>> {
    let expansion = ctx.expansion_points();
    let mut out = DMatrix::zeros(data.n(), data.dim());
    for i in 0..data.n() {
        let u = data.u_row(i);
        let z = data.z_row(i);
        let pi = prop.evaluate_clipped(&u)?;
        let row = delta_row(
            &ctx.family,
            beta,
            &u,
            &z,
            pi,
            &ctx.row_weights[i],
            &expansion,
            crate::glm::DEFAULT_Y_QUADRATURE_NODES,
        )
        .map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("{msg} (row {i})")),
            other => other,
        })?;
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

/// Maximize the pseudolikelihood and attach influence rows.
///
/// `init` defaults to the complete-case maximum likelihood fit. On
/// non-convergence the solver retries from up to three deterministically
/// jittered starts before reporting failure.
pub fn solve_pseudolik(
    data: &Dataset,
    family: &GlmFamily,
    config: &KernelConfig,
    init: Option<&DVector<f64>>,
) -> Result<EstimatorFit> {
    let ctx = PseudoLikContext::new(data, *family, config)?;
    let prop = nw_propensity_from_config(data.u(), data.indicators(), config)?;
    solve_pseudolik_with(data, &ctx, &prop, init)
}

pub fn solve_pseudolik_with(
    data: &Dataset,
    ctx: &PseudoLikContext,
    prop: &PropensityEstimate,
    init: Option<&DVector<f64>>,
) -> Result<EstimatorFit> {
    let base_init = match init {
        Some(b) => b.clone(),
        None => complete_case_fit(&ctx.family, data)?,
    };

    let mut last_err: Option<Error> = None;
    for attempt in 0..=RESTARTS {
        let start = if attempt == 0 {
            base_init.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE + attempt as u64);
            DVector::from_fn(base_init.len(), |k, _| {
                base_init[k] + 0.25 * rng.sample::<f64, _>(StandardNormal)
            })
        };
        match ascend(data, ctx, start) {
            Ok((beta, iterations, score_norm)) => {
                return finish_fit(data, ctx, prop, beta, iterations, score_norm)
            }
            Err(e @ Error::Convergence { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}

fn ascend(
    data: &Dataset,
    ctx: &PseudoLikContext,
    mut beta: DVector<f64>,
) -> Result<(DVector<f64>, usize, f64)> {
    let mut iterations = 0;
    for _ in 0..MAX_ITER {
        let g = pseudo_score(&beta, data, ctx)?;
        let norm = g.amax();
        if norm < TARGET_TOL {
            return Ok((beta, iterations, norm));
        }
        let hess = pseudo_hessian(&beta, data, ctx)?;
        // Newton direction; fall back to steepest ascent if the Hessian step
        // is not an ascent direction
        let newton = hess.lu().solve(&(-&g));
        let direction = match newton {
            Some(d) if d.dot(&g) > 0.0 => d,
            _ => g.clone(),
        };
        // backtracking line search on the objective
        let f0 = pseudo_loglik(&beta, data, ctx)?;
        let slope = direction.dot(&g);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &beta + &direction * step;
            match pseudo_loglik(&cand, data, ctx) {
                Ok(f) if f.is_finite() && f >= f0 + 1e-4 * step * slope => {
                    beta = cand;
                    moved = true;
                    break;
                }
                Ok(_) | Err(Error::Overflow(_)) | Err(Error::Numeric(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !moved {
            let final_norm = pseudo_score(&beta, data, ctx)?.amax();
            if final_norm < PSEUDO_SCORE_TOL {
                return Ok((beta, iterations, final_norm));
            }
            return Err(Error::Convergence {
                message: format!("pseudolikelihood ascent stalled at score norm {final_norm:.3e}"),
                last_iterate: beta.iter().cloned().collect(),
            });
        }
        iterations += 1;
    }
    let final_norm = pseudo_score(&beta, data, ctx)?.amax();
    if final_norm < PSEUDO_SCORE_TOL {
        return Ok((beta, iterations, final_norm));
    }
    Err(Error::Convergence {
        message: format!(
            "pseudolikelihood ascent did not converge in {MAX_ITER} iterations; \
             score norm {final_norm:.3e}"
        ),
        last_iterate: beta.iter().cloned().collect(),
    })
}

fn finish_fit(
    data: &Dataset,
    ctx: &PseudoLikContext,
    prop: &PropensityEstimate,
    beta: DVector<f64>,
    iterations: usize,
    score_norm: f64,
) -> Result<EstimatorFit> {
    let hess = pseudo_hessian(&beta, data, ctx)?;
    // the mean Hessian must be negative definite at a proper maximum
    let m = -hess;
    let eig = m.clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max_eig > 0.0) || min_eig <= 1e-10 * max_eig {
        return Err(Error::Identifiability(format!(
            "pseudolikelihood Hessian is singular or indefinite at the optimum \
             (eigenvalues of -H in [{min_eig:.3e}, {max_eig:.3e}]); the instrument may be too weak"
        )));
    }
    let (grad_rows, _) = per_row_gradients(&beta, data, ctx)?;
    let delta = delta_hat_at(&beta, data, prop, ctx)?;
    let lu = m.lu();
    let mut influence = DMatrix::zeros(data.n(), data.dim());
    for i in 0..data.n() {
        let rhs = DVector::from_fn(data.dim(), |k, _| grad_rows[(i, k)] + delta[(i, k)]);
        let row = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Identifiability("singular influence prefactor".into()))?;
        influence.row_mut(i).copy_from(&row.transpose());
    }
    Ok(EstimatorFit {
        beta,
        influence,
        converged: score_norm < PSEUDO_SCORE_TOL,
        iterations,
        score_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{product_kde, ZIntegrationMode};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn toy_dataset(missing: &[usize]) -> Dataset {
        let ys = [1.4, -0.2, 2.3, 0.8, 1.9, 0.1, 1.1, 2.8];
        let us = [0.5, -1.0, 1.5, 0.0, 0.7, -0.4, 1.1, 0.9];
        let zs = [1.0, 0.2, -0.5, 0.9, -1.1, 0.4, -0.3, 0.6];
        let y: Vec<Option<f64>> = ys
            .iter()
            .enumerate()
            .map(|(i, &v)| if missing.contains(&i) { None } else { Some(v) })
            .collect();
        Dataset::new(
            y,
            DMatrix::from_column_slice(8, 1, &us),
            DMatrix::from_column_slice(8, 1, &zs),
        )
        .unwrap()
    }

    fn configs() -> Vec<KernelConfig> {
        vec![
            KernelConfig::default(),
            KernelConfig {
                z_integration_mode: ZIntegrationMode::DegenerateZ,
                ..KernelConfig::default()
            },
        ]
    }

    #[test]
    fn score_matches_finite_difference_of_loglik() {
        use rand::rngs::ChaCha8Rng;
        use rand::{RngExt, SeedableRng};
        use rand_distr::StandardNormal;
        let data = toy_dataset(&[1, 5]);
        let family = GlmFamily::gaussian(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for config in configs() {
            let ctx = PseudoLikContext::new(&data, family, &config).unwrap();
            for _ in 0..10 {
                let beta =
                    DVector::from_fn(3, |_, _| 0.6 * rng.sample::<f64, _>(StandardNormal));
                let analytic = pseudo_score(&beta, &data, &ctx).unwrap();
                for k in 0..3 {
                    let h = 1e-6 * (1.0 + beta[k].abs());
                    let mut bp = beta.clone();
                    let mut bm = beta.clone();
                    bp[k] += h;
                    bm[k] -= h;
                    let fp = pseudo_loglik(&bp, &data, &ctx).unwrap();
                    let fm = pseudo_loglik(&bm, &data, &ctx).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    let tol = 1e-5 * analytic[k].abs().max(1.0);
                    assert!(
                        (analytic[k] - fd).abs() < tol,
                        "component {k}: analytic {} vs fd {fd}",
                        analytic[k]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_instrument_coefficient_reduces_to_conditional_kde() {
        let data = toy_dataset(&[2]);
        let family = GlmFamily::gaussian(1.0).unwrap();
        let config = KernelConfig::default();
        let ctx = PseudoLikContext::new(&data, family, &config).unwrap();
        // with beta_z = 0 every ratio is fhat(u_i, z_i) / fhat_U(u_i)
        let beta = DVector::from_vec(vec![0.7, -0.3, 0.0]);
        let got = pseudo_loglik(&beta, &data, &ctx).unwrap();
        let mut expected = 0.0;
        for i in 0..data.n() {
            if data.y(i).is_none() {
                continue;
            }
            let joint = ctx.kde().evaluate(&data.x_row(i)).unwrap();
            let marginal = ctx.kde().marginal_prefix_density(&data.u_row(i));
            expected += (joint / marginal).ln();
        }
        expected /= data.n() as f64;
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn solver_reaches_a_stationary_point() {
        let data = toy_dataset(&[1]);
        let family = GlmFamily::gaussian(1.0).unwrap();
        for config in configs() {
            let fit = solve_pseudolik(&data, &family, &config, None).unwrap();
            assert!(fit.converged);
            assert!(fit.score_norm < 1e-7, "score norm {}", fit.score_norm);
            let ctx = PseudoLikContext::new(&data, family, &config).unwrap();
            let score = pseudo_score(&fit.beta, &data, &ctx).unwrap();
            assert!(score.amax() < 1e-7);
            // mean Hessian negative semidefinite at the maximum
            let hess = pseudo_hessian(&fit.beta, &data, &ctx).unwrap();
            let eig = hess.symmetric_eigen();
            for v in eig.eigenvalues.iter() {
                assert!(*v <= 1e-8, "eigenvalue {v} > 0 at maximum");
            }
        }
    }

    #[test]
    fn delta_row_is_exactly_zero_for_single_degenerate_component() {
        // one mixture component in DegenerateZ mode: the inner ratio collapses
        // to the score and the two outer expectations cancel bitwise
        for family in [GlmFamily::gaussian(1.0).unwrap(), GlmFamily::bernoulli()] {
            let centers = DMatrix::from_row_slice(1, 2, &[0.4, -0.8]);
            let kde = product_kde(&centers, &DVector::from_vec(vec![0.6, 0.7])).unwrap();
            let config = KernelConfig {
                z_integration_mode: ZIntegrationMode::DegenerateZ,
                ..KernelConfig::default()
            };
            let expansion = z_expansion(&kde, 1, &config);
            let weights = kde.component_u_weights(&[0.4]);
            let beta = DVector::from_vec(vec![0.3, 0.5, -0.2]);
            let row = delta_row(
                &family,
                &beta,
                &[0.4],
                &[-0.8],
                0.77,
                &weights,
                &expansion,
                40,
            )
            .unwrap();
            for v in row.iter() {
                assert_eq!(*v, 0.0, "{family:?}: delta component {v} != 0");
            }
        }
    }

    /// Independent brute-force oracle for delta rows on Bernoulli data: exact
    /// two-term outcome sums and composite Simpson quadrature in z, built
    /// directly from the density formulas.
    fn delta_row_bruteforce(
        beta: &DVector<f64>,
        u: f64,
        z: f64,
        pi: f64,
        centers: &DMatrix<f64>,
        h: &DVector<f64>,
    ) -> DVector<f64> {
        let n = centers.nrows();
        let fhat = |uu: f64, zz: f64| -> f64 {
            let mut acc = 0.0;
            for j in 0..n {
                acc += crate::kernels::gaussian_kernel((uu - centers[(j, 0)]) / h[0]) / h[0]
                    * crate::kernels::gaussian_kernel((zz - centers[(j, 1)]) / h[1])
                    / h[1];
            }
            acc / n as f64
        };
        let mu = |eta: f64| 1.0 / (1.0 + (-eta).exp());
        let p = |y: f64, uu: f64, zz: f64| -> f64 {
            let m = mu(beta[0] + beta[1] * uu + beta[2] * zz);
            if y == 1.0 {
                m
            } else {
                1.0 - m
            }
        };
        // grad p = p * S
        let grad_p = |y: f64, uu: f64, zz: f64| -> DVector<f64> {
            let eta = beta[0] + beta[1] * uu + beta[2] * zz;
            let resid = y - mu(eta);
            DVector::from_vec(vec![resid, resid * uu, resid * zz]) * p(y, uu, zz)
        };
        let simpson = |f: &dyn Fn(f64) -> f64| -> f64 {
            let lo = centers.column(1).min() - 12.0 * h[1];
            let hi = centers.column(1).max() + 12.0 * h[1];
            let panels = 20_000;
            let step = (hi - lo) / panels as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..panels {
                let w = if i % 2 == 0 { 2.0 } else { 4.0 };
                acc += w * f(lo + i as f64 * step);
            }
            acc * step / 3.0
        };
        let mut out = DVector::zeros(3);
        for y in [0.0, 1.0] {
            let b = simpson(&|zz| p(y, u, zz) * fhat(u, zz));
            let mut a = DVector::zeros(3);
            for k in 0..3 {
                a[k] = simpson(&|zz| grad_p(y, u, zz)[k] * fhat(u, zz));
            }
            let term1 = a / b * p(y, u, z);
            let term2 = grad_p(y, u, z);
            out += term1 - term2;
        }
        out * pi
    }

    #[test]
    fn delta_row_matches_bruteforce_oracle_on_bernoulli() {
        let centers = DMatrix::from_row_slice(3, 2, &[0.2, -0.5, -0.6, 0.8, 1.0, 0.1]);
        let h = DVector::from_vec(vec![0.7, 0.6]);
        let kde = product_kde(&centers, &h).unwrap();
        let config = KernelConfig {
            quadrature_nodes: 40,
            ..KernelConfig::default()
        };
        let expansion = z_expansion(&kde, 1, &config);
        let family = GlmFamily::bernoulli();
        let beta = DVector::from_vec(vec![0.4, -0.7, 0.9]);
        for (u, z, pi) in [(0.2, -0.5, 0.8), (-0.6, 0.8, 0.55), (1.0, 0.1, 0.33)] {
            let weights = kde.component_u_weights(&[u]);
            let got =
                delta_row(&family, &beta, &[u], &[z], pi, &weights, &expansion, 40).unwrap();
            let oracle = delta_row_bruteforce(&beta, u, z, pi, &centers, &h);
            for k in 0..3 {
                let tol = 1e-5 * oracle[k].abs().max(1e-3);
                assert!(
                    (got[k] - oracle[k]).abs() < tol,
                    "component {k}: {} vs oracle {}",
                    got[k],
                    oracle[k]
                );
            }
        }
    }

    #[test]
    fn denominator_underflow_names_the_row() {
        // a huge instrument coefficient drives the cumulant to +inf at every
        // expansion point, so the z-integral of the density underflows to zero
        let data = toy_dataset(&[]);
        let family = GlmFamily::gaussian(1.0).unwrap();
        let ctx = PseudoLikContext::new(&data, family, &KernelConfig::default()).unwrap();
        let beta = DVector::from_vec(vec![0.0, 0.0, 1e200]);
        match pseudo_loglik(&beta, &data, &ctx) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("row 0"), "message: {msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
