//! Monte Carlo harness: the synthetic data generator, calibration of the
//! missingness intercept to a target missing rate, and the seeded rejection
//! rate grid runner.
//!
//! The generator draws `z ~ N(0,1)`, `u | z ~ N(1 - z, 1)`,
//! `y | u, z ~ N(1 + u + b_z z, 1)` and observes `y` with probability
//! `Phi(c0 + c1 f(y) + c2 u)`. `c1 = 0` is the missing-at-random null;
//! `b_z` controls the instrument strength.

use nalgebra::{DMatrix, DVector};
use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::dist::normal_cdf;
use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::kernels::KernelConfig;
use crate::mar_test::run_test_with_fits;

/// Shape of the outcome dependence in the missingness propensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FShape {
    /// f(y) = y
    #[serde(rename = "y")]
    Linear,
    /// f(y) = 0.4 y^2
    #[serde(rename = "y2")]
    Quadratic,
    /// f(y) = 2.5 * 1(y > 1)
    #[serde(rename = "indicator")]
    Threshold,
}

impl FShape {
    pub fn apply(&self, y: f64) -> f64 {
        match self {
            FShape::Linear => y,
            FShape::Quadratic => 0.4 * y * y,
            FShape::Threshold => {
                if y > 1.0 {
                    2.5
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FShape::Linear => "y",
            FShape::Quadratic => "y2",
            FShape::Threshold => "indicator",
        }
    }
}

impl std::str::FromStr for FShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" | "linear" => Ok(FShape::Linear),
            "y2" | "quadratic" => Ok(FShape::Quadratic),
            "indicator" | "threshold" => Ok(FShape::Threshold),
            other => Err(Error::Usage(format!(
                "unknown f-shape '{other}' (expected y, y2, or indicator)"
            ))),
        }
    }
}

/// One simulation configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Instrument strength: the coefficient of `z` in the outcome model.
    pub b_z: f64,
    /// Missingness intercept (calibrate with `calibrate_c0`).
    pub c0: f64,
    /// Strength of the outcome dependence; 0 is the null.
    pub c1: f64,
    /// Strength of the covariate dependence.
    pub c2: f64,
    pub f_shape: FShape,
    pub n: usize,
    /// Overall missing fraction the intercept calibration targets.
    pub target_missing: f64,
}

impl Scenario {
    pub fn new(b_z: f64, c0: f64, c1: f64, c2: f64, f_shape: FShape, n: usize) -> Result<Self> {
        let sc = Self {
            b_z,
            c0,
            c1,
            c2,
            f_shape,
            n,
            target_missing: 0.2,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Domain(format!(
                "scenario sample size must be at least 50, got {}",
                self.n
            )));
        }
        if !(0.05..0.95).contains(&self.target_missing) {
            return Err(Error::Domain(format!(
                "target missing fraction must lie in (0.05, 0.95), got {}",
                self.target_missing
            )));
        }
        for (name, v) in [
            ("b_z", self.b_z),
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// True outcome-model coefficients for this scenario: `(1, 1, b_z)`.
    pub fn true_beta(&self) -> DVector<f64> {
        DVector::from_vec(vec![1.0, 1.0, self.b_z])
    }
}

/// A generated dataset plus the full outcome vector. The full vector exists
/// only for oracle uses (drift scores, bias checks); the test itself must see
/// only `dataset`.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub full_y: DVector<f64>,
}

/// Derive an independent stream seed for one replication.
fn rep_seed(master: u64, rep: u64) -> u64 {
    // splitmix64 finalizer over the (master, rep) pair
    let mut x = master ^ (rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn generate_dataset(sc: &Scenario, seed: u64) -> Result<SimulatedDataset> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sc.n;
    let mut y = Vec::with_capacity(n);
    let mut full_y = DVector::zeros(n);
    let mut u = DMatrix::zeros(n, 1);
    let mut z = DMatrix::zeros(n, 1);
    for i in 0..n {
        let zi: f64 = rng.sample(StandardNormal);
        let ui = 1.0 - zi + rng.sample::<f64, _>(StandardNormal);
        let yi = 1.0 + ui + sc.b_z * zi + rng.sample::<f64, _>(StandardNormal);
        let p_obs = normal_cdf(sc.c0 + sc.c1 * sc.f_shape.apply(yi) + sc.c2 * ui);
        let observed = rng.random::<f64>() < p_obs;
        z[(i, 0)] = zi;
        u[(i, 0)] = ui;
        full_y[i] = yi;
        y.push(if observed { Some(yi) } else { None });
    }
    let dataset = Dataset::new(y, u, z)?;
    Ok(SimulatedDataset { dataset, full_y })
}

/// Number of Monte Carlo draws behind the intercept calibration.
const CALIBRATION_DRAWS: usize = 100_000;

/// Find `c0` so that the expected missing fraction
/// `E[1 - Phi(c0 + c1 f(Y) + c2 U)]` hits the scenario's target, by bisection
/// over a fixed sample of `(Y, U)` draws. Deterministic given the seed.
pub fn calibrate_c0(sc: &Scenario, seed: u64) -> Result<f64> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shifted: Vec<f64> = Vec::with_capacity(CALIBRATION_DRAWS);
    for _ in 0..CALIBRATION_DRAWS {
        let zi: f64 = rng.sample(StandardNormal);
        let ui = 1.0 - zi + rng.sample::<f64, _>(StandardNormal);
        let yi = 1.0 + ui + sc.b_z * zi + rng.sample::<f64, _>(StandardNormal);
        shifted.push(sc.c1 * sc.f_shape.apply(yi) + sc.c2 * ui);
    }
    let missing_rate = |c0: f64| -> f64 {
        let total: f64 = shifted.iter().map(|s| 1.0 - normal_cdf(c0 + s)).sum();
        total / shifted.len() as f64
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    // missing rate is strictly decreasing in c0
    if missing_rate(lo) < sc.target_missing || missing_rate(hi) > sc.target_missing {
        return Err(Error::Calibration(format!(
            "target missing fraction {} not bracketed on [-10, 10]",
            sc.target_missing
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if missing_rate(mid) > sc.target_missing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c0 = 0.5 * (lo + hi);
    let achieved = missing_rate(c0);
    if (achieved - sc.target_missing).abs() > 0.002 {
        return Err(Error::Calibration(format!(
            "calibration stalled at missing rate {achieved:.4} for target {}",
            sc.target_missing
        )));
    }
    Ok(c0)
}

/// What one replication produced, when it succeeded.
#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub statistic: f64,
    pub p_value: f64,
    pub beta_ipw: Vec<f64>,
    pub beta_pseudo: Vec<f64>,
    /// Diagonal of the influence-based variance estimate of each coefficient.
    pub var_diag_ipw: Vec<f64>,
    pub var_diag_pseudo: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub outcome: std::result::Result<RepRecord, String>,
}

/// Run `reps` seeded replications of generate-then-test. Replications are
/// independent (each has its own derived stream) and are collected in rep
/// order, so the result does not depend on the parallelism degree.
pub fn simulate_replications(
    sc: &Scenario,
    reps: usize,
    family: &GlmFamily,
    config: &KernelConfig,
    seed: u64,
) -> Result<Vec<RepOutcome>> {
    sc.validate()?;
    config.validate()?;
    let out: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rs = rep_seed(seed, rep as u64);
            let outcome = (|| -> Result<RepRecord> {
                let sim = generate_dataset(sc, rs)?;
                let (result, ipw_fit, pseudo_fit) =
                    run_test_with_fits(&sim.dataset, family, config)?;
                let var_ipw = ipw_fit.variance_estimate();
                let var_pseudo = pseudo_fit.variance_estimate();
                Ok(RepRecord {
                    statistic: result.statistic,
                    p_value: result.p_value,
                    beta_ipw: result.beta_ipw.iter().cloned().collect(),
                    beta_pseudo: result.beta_pseudo.iter().cloned().collect(),
                    var_diag_ipw: var_ipw.diagonal().iter().cloned().collect(),
                    var_diag_pseudo: var_pseudo.diagonal().iter().cloned().collect(),
                })
            })()
            .map_err(|e| e.to_string());
            RepOutcome {
                rep,
                seed: rs,
                outcome,
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionSummary {
    /// Fraction of completed replications with `p < level`.
    pub rate: f64,
    /// Binomial standard error of the rate.
    pub se: f64,
    pub rejections: usize,
    pub completed: usize,
    pub failures: usize,
}

/// Empirical rejection rate of the test at the given level.
///
/// Failed replications are counted and reported separately, and excluded from
/// the denominator; more than 10% failures aborts with a harness error so
/// that hard alternatives cannot inflate the power estimate.
pub fn rejection_rate(
    sc: &Scenario,
    reps: usize,
    level: f64,
    family: &GlmFamily,
    config: &KernelConfig,
    seed: u64,
) -> Result<RejectionSummary> {
    if reps < 50 {
        return Err(Error::Domain(format!(
            "need at least 50 replications for a rate estimate, got {reps}"
        )));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let outcomes = simulate_replications(sc, reps, family, config, seed)?;
    summarize_outcomes(&outcomes, reps, level)
}

/// Reduce replication outcomes to a rejection-rate summary.
pub fn summarize_outcomes(
    outcomes: &[RepOutcome],
    reps: usize,
    level: f64,
) -> Result<RejectionSummary> {
    let failures = outcomes.iter().filter(|o| o.outcome.is_err()).count();
    if failures * 10 > reps {
        return Err(Error::Harness(format!(
            "{failures} of {reps} replications failed"
        )));
    }
    let completed = reps - failures;
    let rejections = outcomes
        .iter()
        .filter_map(|o| o.outcome.as_ref().ok())
        .filter(|r| r.p_value < level)
        .count();
    let rate = rejections as f64 / completed as f64;
    let se = (rate * (1.0 - rate) / completed as f64).sqrt();
    Ok(RejectionSummary {
        rate,
        se,
        rejections,
        completed,
        failures,
    })
}

/// One cell of the rejection-rate grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub f_shape: FShape,
    pub b_z: f64,
    pub c2: f64,
    pub c1: f64,
    pub n: usize,
    pub reps: usize,
    pub rate: Option<f64>,
    pub se: Option<f64>,
    pub failures: usize,
    pub error: Option<String>,
}

/// Map `rejection_rate` over a list of scenarios. Cell failures land in the
/// row's `error` column without aborting the rest of the grid.
pub fn run_grid(
    scenarios: &[Scenario],
    reps: usize,
    level: f64,
    family: &GlmFamily,
    config: &KernelConfig,
    seed: u64,
) -> Vec<GridRow> {
    scenarios
        .iter()
        .enumerate()
        .map(|(idx, sc)| {
            let cell_seed = rep_seed(seed, 0x10_0000 + idx as u64);
            match rejection_rate(sc, reps, level, family, config, cell_seed) {
                Ok(summary) => GridRow {
                    f_shape: sc.f_shape,
                    b_z: sc.b_z,
                    c2: sc.c2,
                    c1: sc.c1,
                    n: sc.n,
                    reps,
                    rate: Some(summary.rate),
                    se: Some(summary.se),
                    failures: summary.failures,
                    error: None,
                },
                Err(e) => GridRow {
                    f_shape: sc.f_shape,
                    b_z: sc.b_z,
                    c2: sc.c2,
                    c1: sc.c1,
                    n: sc.n,
                    reps,
                    rate: None,
                    se: None,
                    failures: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Serialize grid rows as CSV with a fixed header.
pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let mut out = String::from("f_shape,b_z,c2,c1,n,reps,rate,se,failures,error\n");
    for row in rows {
        let rate = row.rate.map(|v| format!("{v:.6}")).unwrap_or_default();
        let se = row.se.map(|v| format!("{v:.6}")).unwrap_or_default();
        let error = row.error.clone().unwrap_or_default().replace(',', ";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.f_shape.label(),
            row.b_z,
            row.c2,
            row.c1,
            row.n,
            row.reps,
            rate,
            se,
            row.failures,
            error
        ));
    }
    out
}
