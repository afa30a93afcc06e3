//! Inverse-probability-weighted estimation of the regression coefficients,
//! valid when the outcome is missing at random. The missingness propensity is
//! estimated nonparametrically by kernel regression on `u`, complete cases are
//! reweighted by its inverse, and the weighted score equation is solved by
//! Newton iteration. Influence rows are the plug-in form
//!
//! `psi_i = M^{-1} (r_i / pi(u_i)) S(y_i, x_i; beta)`
//!
//! with `M` an estimate of `E[-dS/dbeta]`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{GlmFamily, GlmModel};
use crate::kernels::{nw_propensity_from_config, KernelConfig, PropensityEstimate, EPS_CLIP};

/// Convergence tolerance on the max-norm of the weighted mean score.
pub const IPW_SCORE_TOL: f64 = 1e-9;
const MAX_ITER: usize = 100;
/// Newton keeps polishing below the declared tolerance while it can; this
/// keeps the fit reproducible at rounding level under row permutations.
const TARGET_TOL: f64 = 1e-13;

/// A fitted coefficient vector with per-observation influence rows.
#[derive(Debug, Clone)]
pub struct EstimatorFit {
    pub beta: DVector<f64>,
    /// n x (m+1); row i is the estimated influence of observation i.
    pub influence: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
}

impl EstimatorFit {
    /// `n^{-1} sum_i row_i row_i^T`, the estimate of the influence second
    /// moment; `diag / n` estimates the variance of the coefficient estimate.
    pub fn influence_second_moment(&self) -> DMatrix<f64> {
        let n = self.influence.nrows() as f64;
        let mut acc = DMatrix::zeros(self.influence.ncols(), self.influence.ncols());
        for i in 0..self.influence.nrows() {
            let row = self.influence.row(i);
            for a in 0..self.influence.ncols() {
                for b in 0..self.influence.ncols() {
                    acc[(a, b)] += row[a] * row[b];
                }
            }
        }
        acc / n
    }

    /// Estimated variance of the coefficient estimate: influence second moment
    /// divided by n.
    pub fn variance_estimate(&self) -> DMatrix<f64> {
        self.influence_second_moment() / self.influence.nrows() as f64
    }
}

/// How the influence prefactor `E[-dS/dbeta]^{-1}` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefactorMode {
    /// Propensity-weighted complete-case average of `-dS/dbeta`.
    #[default]
    WeightedCompleteCase,
    /// Plain average over all rows; for canonical links the score Jacobian is
    /// free of `y`, so missing rows contribute too.
    UnweightedAllRows,
}

/// The weighted mean score `n^{-1} sum_i (r_i / pi(u_i)) S(y_i, x_i; beta)`;
/// rows with a missing outcome contribute zero.
pub fn ipw_score(
    family: &GlmFamily,
    beta: &DVector<f64>,
    data: &Dataset,
    prop: &PropensityEstimate,
) -> Result<DVector<f64>> {
    let weights = ipw_weights(data, prop)?;
    let model = GlmModel::new(*family, beta.clone(), data.m_u(), data.m_z())?;
    weighted_mean_score(&model, data, &weights)
}

/// Per-row weights `r_i / pi(u_i)` with the propensity clipped from below;
/// zero on missing rows.
pub fn ipw_weights(data: &Dataset, prop: &PropensityEstimate) -> Result<Vec<f64>> {
    let mut w = vec![0.0; data.n()];
    for i in 0..data.n() {
        if data.is_observed(i) {
            let denom = prop.weight_denominator(&data.u_row(i))?;
            debug_assert!(denom >= EPS_CLIP);
            w[i] = 1.0 / denom;
        }
    }
    Ok(w)
}

fn weighted_mean_score(
    model: &GlmModel,
    data: &Dataset,
    weights: &[f64],
) -> Result<DVector<f64>> {
    let n = data.n() as f64;
    let mut acc = DVector::zeros(data.dim());
    for i in 0..data.n() {
        if weights[i] == 0.0 {
            continue;
        }
        let y = data
            .y(i)
            .ok_or_else(|| Error::Shape(format!("weight on missing row {i}")))?;
        acc += model.score(y, &data.x_row(i))? * weights[i];
    }
    Ok(acc / n)
}

fn weighted_mean_score_jacobian(
    model: &GlmModel,
    data: &Dataset,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let n = data.n() as f64;
    let mut acc = DMatrix::zeros(data.dim(), data.dim());
    for i in 0..data.n() {
        if weights[i] == 0.0 {
            continue;
        }
        let y = data
            .y(i)
            .ok_or_else(|| Error::Shape(format!("weight on missing row {i}")))?;
        acc += model.score_jacobian(y, &data.x_row(i))? * weights[i];
    }
    Ok(acc / n)
}

/// Newton solve of a weighted GLM score equation. Returns
/// (beta, iterations, final score max-norm, converged).
fn newton_weighted_glm(
    family: &GlmFamily,
    data: &Dataset,
    weights: &[f64],
    init: DVector<f64>,
    declared_tol: f64,
) -> Result<(DVector<f64>, usize, f64, bool)> {
    let mut beta = init;
    let mut iterations = 0;
    for _ in 0..MAX_ITER {
        let model = GlmModel::new(*family, beta.clone(), data.m_u(), data.m_z())?;
        let score = weighted_mean_score(&model, data, weights)?;
        let norm = score.amax();
        if norm < TARGET_TOL {
            break;
        }
        let jac = weighted_mean_score_jacobian(&model, data, weights)?;
        let step = jac.lu().solve(&(-&score)).ok_or_else(|| {
            Error::Identifiability("singular Jacobian in weighted score equation".into())
        })?;
        // damped update: backtrack while the score norm worsens
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step * lambda;
            let cand_model = GlmModel::new(*family, cand.clone(), data.m_u(), data.m_z())?;
            match weighted_mean_score(&cand_model, data, weights) {
                Ok(s) if s.amax().is_finite() && (s.amax() < norm || lambda < 1.0) => {
                    beta = cand;
                    accepted = true;
                    break;
                }
                Ok(_) | Err(Error::Overflow(_)) => lambda *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            break;
        }
        iterations += 1;
    }
    // final norm at the accepted iterate
    let model = GlmModel::new(*family, beta.clone(), data.m_u(), data.m_z())?;
    let norm = weighted_mean_score(&model, data, weights)?.amax();
    Ok((beta, iterations, norm, norm < declared_tol))
}

/// Unweighted maximum likelihood on complete cases; the Newton initializer for
/// both estimators.
pub fn complete_case_fit(family: &GlmFamily, data: &Dataset) -> Result<DVector<f64>> {
    let weights: Vec<f64> = data
        .indicators()
        .iter()
        .map(|&r| if r { 1.0 } else { 0.0 })
        .collect();
    let (beta, _, norm, converged) = newton_weighted_glm(
        family,
        data,
        &weights,
        DVector::zeros(data.dim()),
        IPW_SCORE_TOL,
    )?;
    if !converged {
        return Err(Error::Convergence {
            message: format!("complete-case fit stalled at score norm {norm:.3e}"),
            last_iterate: beta.iter().cloned().collect(),
        });
    }
    Ok(beta)
}

/// Solve the propensity-weighted score equation and attach influence rows.
pub fn solve_ipw(data: &Dataset, family: &GlmFamily, config: &KernelConfig) -> Result<EstimatorFit> {
    let prop = nw_propensity_from_config(data.u(), data.indicators(), config)?;
    solve_ipw_with(data, family, &prop, PrefactorMode::default())
}

/// As `solve_ipw`, with the propensity supplied and the influence prefactor
/// mode chosen explicitly.
pub fn solve_ipw_with(
    data: &Dataset,
    family: &GlmFamily,
    prop: &PropensityEstimate,
    prefactor: PrefactorMode,
) -> Result<EstimatorFit> {
    let weights = ipw_weights(data, prop)?;
    let init = complete_case_fit(family, data)?;
    let (beta, iterations, score_norm, converged) =
        newton_weighted_glm(family, data, &weights, init, IPW_SCORE_TOL)?;
    if !converged {
        return Err(Error::Convergence {
            message: format!(
                "IPW Newton did not reach tolerance; final score norm {score_norm:.3e}"
            ),
            last_iterate: beta.iter().cloned().collect(),
        });
    }

    let model = GlmModel::new(*family, beta.clone(), data.m_u(), data.m_z())?;
    let prefactor_matrix = match prefactor {
        PrefactorMode::WeightedCompleteCase => -weighted_mean_score_jacobian(&model, data, &weights)?,
        PrefactorMode::UnweightedAllRows => {
            let ones = vec![1.0; data.n()];
            // the score Jacobian of a canonical link does not involve y, so
            // evaluate it with a placeholder outcome on every row
            let n = data.n() as f64;
            let mut acc = DMatrix::zeros(data.dim(), data.dim());
            for i in 0..data.n() {
                let y = data.y(i).unwrap_or(0.0);
                acc += model.score_jacobian(y, &data.x_row(i))? * ones[i];
            }
            -acc / n
        }
    };
    let lu = prefactor_matrix.lu();
    let mut influence = DMatrix::zeros(data.n(), data.dim());
    for i in 0..data.n() {
        if weights[i] == 0.0 {
            continue;
        }
        let y = data.y(i).expect("weighted row has an observed outcome");
        let s = model.score(y, &data.x_row(i))? * weights[i];
        let row = lu.solve(&s).ok_or_else(|| {
            Error::Identifiability("singular influence prefactor in IPW fit".into())
        })?;
        influence.row_mut(i).copy_from(&row.transpose());
    }

    Ok(EstimatorFit {
        beta,
        influence,
        converged,
        iterations,
        score_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::nw_propensity;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn small_gaussian_dataset() -> Dataset {
        // 5 rows, fully observed
        let y = vec![Some(1.2), Some(-0.3), Some(2.1), Some(0.4), Some(1.0)];
        let u = DMatrix::from_column_slice(5, 1, &[0.5, -1.0, 1.5, 0.0, 0.7]);
        let z = DMatrix::from_column_slice(5, 1, &[1.0, 0.2, -0.5, 0.9, -1.1]);
        Dataset::new(y, u, z).unwrap()
    }

    #[test]
    fn score_reduces_to_unweighted_mean_without_missingness() {
        let data = small_gaussian_dataset();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let prop = nw_propensity(data.u(), data.indicators(), 0.8).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.2, 0.5]);
        let weighted = ipw_score(&family, &beta, &data, &prop).unwrap();
        let model = GlmModel::new(family, beta, 1, 1).unwrap();
        let mut plain = DVector::zeros(3);
        for i in 0..data.n() {
            plain += model.score(data.y(i).unwrap(), &data.x_row(i)).unwrap();
        }
        plain /= data.n() as f64;
        assert_relative_eq!(weighted, plain, epsilon = 1e-15);
    }

    #[test]
    fn score_matches_hand_evaluation_with_missing_rows() {
        let y = vec![Some(1.2), None, Some(2.1), Some(0.4), Some(1.0)];
        let u = DMatrix::from_column_slice(5, 1, &[0.5, -1.0, 1.5, 0.0, 0.7]);
        let z = DMatrix::from_column_slice(5, 1, &[1.0, 0.2, -0.5, 0.9, -1.1]);
        let data = Dataset::new(y, u, z).unwrap();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let prop = nw_propensity(data.u(), data.indicators(), 0.8).unwrap();
        let beta = DVector::from_vec(vec![0.1, 0.2, -0.4]);
        let got = ipw_score(&family, &beta, &data, &prop).unwrap();

        // direct formula: (1/n) sum_i r_i/pi_i * (y_i - eta_i) * (1, u_i, z_i)
        let mut expected = DVector::zeros(3);
        for i in [0usize, 2, 3, 4] {
            let ui = data.u()[(i, 0)];
            let zi = data.z()[(i, 0)];
            let pi = prop.evaluate(&[ui]).unwrap().max(EPS_CLIP);
            let eta = 0.1 + 0.2 * ui - 0.4 * zi;
            let resid = data.y(i).unwrap() - eta;
            expected += DVector::from_vec(vec![resid, resid * ui, resid * zi]) / pi;
        }
        expected /= 5.0;
        assert_relative_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn no_missingness_ipw_equals_ols() {
        let data = small_gaussian_dataset();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let fit = solve_ipw(&data, &family, &KernelConfig::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.score_norm < 1e-8);

        // OLS oracle by normal equations
        let n = data.n();
        let mut design = DMatrix::zeros(n, 3);
        let mut yv = DVector::zeros(n);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = data.u()[(i, 0)];
            design[(i, 2)] = data.z()[(i, 0)];
            yv[i] = data.y(i).unwrap();
        }
        let xtx = design.transpose() * &design;
        let xty = design.transpose() * yv;
        let ols = xtx.lu().solve(&xty).unwrap();
        assert_relative_eq!(fit.beta, ols, epsilon = 1e-8);
    }

    #[test]
    fn weights_lie_in_the_contract_range() {
        let y = vec![Some(1.2), None, Some(2.1), Some(0.4), Some(1.0), Some(0.2)];
        let u = DMatrix::from_column_slice(6, 1, &[0.5, -1.0, 1.5, 0.0, 0.7, 0.3]);
        let z = DMatrix::from_column_slice(6, 1, &[1.0, 0.2, -0.5, 0.9, -1.1, 0.4]);
        let data = Dataset::new(y, u, z).unwrap();
        let prop = nw_propensity(data.u(), data.indicators(), 0.5).unwrap();
        let weights = ipw_weights(&data, &prop).unwrap();
        for (i, w) in weights.iter().enumerate() {
            if data.is_observed(i) {
                assert!((1.0..=1.0 / EPS_CLIP).contains(w), "weight {w} out of range");
            } else {
                assert_eq!(*w, 0.0);
            }
        }
    }

    #[test]
    fn solver_postcondition_score_norm() {
        let data = small_gaussian_dataset();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let prop = nw_propensity(data.u(), data.indicators(), 0.8).unwrap();
        let fit = solve_ipw_with(&data, &family, &prop, PrefactorMode::WeightedCompleteCase)
            .unwrap();
        let score = ipw_score(&family, &fit.beta, &data, &prop).unwrap();
        assert!(score.amax() < 1e-8, "score norm {}", score.amax());
    }

    #[test]
    fn influence_rows_are_zero_on_missing_rows() {
        let y = vec![Some(1.2), None, Some(2.1), Some(0.4), Some(1.0)];
        let u = DMatrix::from_column_slice(5, 1, &[0.5, -1.0, 1.5, 0.0, 0.7]);
        let z = DMatrix::from_column_slice(5, 1, &[1.0, 0.2, -0.5, 0.9, -1.1]);
        let data = Dataset::new(y, u, z).unwrap();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let fit = solve_ipw(&data, &family, &KernelConfig::default()).unwrap();
        assert_eq!(fit.influence.nrows(), 5);
        for v in fit.influence.row(1).iter() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn prefactor_modes_agree_without_missingness() {
        let data = small_gaussian_dataset();
        let family = GlmFamily::gaussian(1.0).unwrap();
        let prop = nw_propensity(data.u(), data.indicators(), 0.8).unwrap();
        let a = solve_ipw_with(&data, &family, &prop, PrefactorMode::WeightedCompleteCase)
            .unwrap();
        let b = solve_ipw_with(&data, &family, &prop, PrefactorMode::UnweightedAllRows).unwrap();
        assert_relative_eq!(a.influence, b.influence, epsilon = 1e-10);
    }
}
