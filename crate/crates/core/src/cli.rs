//! Command-line surface: `test` runs the missing-at-random test on a CSV
//! dataset, `fit` runs either estimator alone, `simulate` reproduces the
//! rejection-rate study on synthetic data, and `power` evaluates the local
//! power approximation. Results are JSON on stdout (plus CSV files for
//! grids); errors are structured JSON on stderr. Exit codes: 0 success,
//! 1 usage error, 2 estimation or data failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::dist::normal_pdf;
use crate::error::{Error, Result};
use crate::glm::GlmFamily;
use crate::io::{read_dataset, InputSchema};
use crate::ipw::solve_ipw;
use crate::kernels::{Bandwidth, KdeBandwidth, KernelConfig, ZIntegrationMode};
use crate::mar_test::{local_power, run_test, ParametricPropensity};
use crate::pseudolik::solve_pseudolik;
use crate::sim::{calibrate_c0, grid_to_csv, run_grid, FShape, Scenario};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Parser)]
#[command(
    name = "martest",
    version,
    about = "Test whether a GLM outcome is missing at random, using an instrumental variable"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the missing-at-random test on a CSV dataset
    Test(TestArgs),
    /// Fit a single estimator and report its coefficients
    Fit(FitArgs),
    /// Estimate rejection rates over a grid of synthetic scenarios
    Simulate(SimulateArgs),
    /// Approximate the local power of the test under a drifting alternative
    Power(PowerArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row
    file: PathBuf,
    /// Name of the outcome column (empty cells or NA mean missing)
    #[arg(long)]
    y_col: String,
    /// Comma-separated covariate column names
    #[arg(long, value_delimiter = ',', required = true)]
    u_cols: Vec<String>,
    /// Comma-separated instrument column names
    #[arg(long, value_delimiter = ',', required = true)]
    z_cols: Vec<String>,
    /// Optional 0/1 indicator column; must match the outcome emptiness
    #[arg(long)]
    indicator_col: Option<String>,
    /// Outcome family: gaussian, bernoulli, or poisson
    #[arg(long, default_value = "gaussian")]
    family: String,
    /// Dispersion for the gaussian family
    #[arg(long, default_value_t = 1.0)]
    dispersion: f64,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args)]
struct KernelArgs {
    /// Propensity regression bandwidth (default: Silverman)
    #[arg(long)]
    bandwidth_prop: Option<f64>,
    /// Density estimate bandwidths, one value or one per (u,z) coordinate
    #[arg(long, value_delimiter = ',')]
    bandwidth_kde: Option<Vec<f64>>,
    /// Gauss-Hermite nodes per instrument coordinate
    #[arg(long, default_value_t = 20)]
    quad_nodes: usize,
    /// z-integration mode: mixture or degenerate
    #[arg(long, default_value = "mixture")]
    z_mode: String,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Nominal test level (only echoed into the report)
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Which estimator: ipw or pseudo
    #[arg(long)]
    estimator: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Outcome dependence shape: y, y2, or indicator
    #[arg(long, default_value = "y")]
    f_shape: String,
    /// Instrument strength
    #[arg(long, default_value_t = 1.0)]
    bz: f64,
    /// Comma-separated grid of outcome-dependence strengths
    #[arg(long, value_delimiter = ',', default_value = "0")]
    c1_list: Vec<f64>,
    /// Comma-separated grid of covariate-dependence strengths
    #[arg(long, value_delimiter = ',', default_value = "0")]
    c2_list: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    /// Target overall missing fraction
    #[arg(long, default_value_t = 0.2)]
    target_missing: f64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON output path
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long, default_value = "y")]
    f_shape: String,
    #[arg(long, default_value_t = 1.0)]
    bz: f64,
    /// Covariate-dependence strength of the null propensity
    #[arg(long, default_value_t = 0.0)]
    c2: f64,
    /// Finite-sample outcome-dependence strength the drift should match
    #[arg(long)]
    c1: f64,
    /// Sample size the prediction refers to
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Calibration sample size for the influence/drift covariance
    #[arg(long, default_value_t = 4000)]
    n_cal: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    target_missing: f64,
    #[command(flatten)]
    kernel: KernelArgs,
}

impl KernelArgs {
    fn to_config(&self) -> Result<KernelConfig> {
        let z_integration_mode = match self.z_mode.as_str() {
            "mixture" => ZIntegrationMode::MixtureQuadrature,
            "degenerate" => ZIntegrationMode::DegenerateZ,
            other => {
                return Err(Error::Usage(format!(
                    "unknown z-mode '{other}' (expected mixture or degenerate)"
                )))
            }
        };
        let config = KernelConfig {
            propensity_bandwidth: match self.bandwidth_prop {
                Some(b) => Bandwidth::Fixed(b),
                None => Bandwidth::Auto,
            },
            kde_bandwidth: match &self.bandwidth_kde {
                Some(h) => KdeBandwidth::Fixed(h.clone()),
                None => KdeBandwidth::Auto,
            },
            quadrature_nodes: self.quad_nodes,
            z_integration_mode,
        };
        config
            .validate()
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(config)
    }
}

impl DataArgs {
    fn family(&self) -> Result<GlmFamily> {
        match self.family.as_str() {
            "gaussian" => GlmFamily::gaussian(self.dispersion)
                .map_err(|e| Error::Usage(e.to_string())),
            "bernoulli" => Ok(GlmFamily::bernoulli()),
            "poisson" => Ok(GlmFamily::poisson()),
            other => Err(Error::Usage(format!(
                "unknown family '{other}' (expected gaussian, bernoulli, or poisson)"
            ))),
        }
    }

    fn schema(&self) -> Result<InputSchema> {
        InputSchema::new(
            self.y_col.clone(),
            self.u_cols.clone(),
            self.z_cols.clone(),
            self.indicator_col.clone(),
        )
        .map_err(|e| Error::Usage(e.to_string()))
    }
}

fn vector_json(v: &DVector<f64>) -> Value {
    Value::from(v.iter().cloned().collect::<Vec<f64>>())
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::from(
        (0..m.nrows())
            .map(|i| m.row(i).iter().cloned().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn command_test(args: &TestArgs) -> Result<Value> {
    check_level(args.level)?;
    let family = args.data.family()?;
    let config = args.data.kernel.to_config()?;
    let schema = args.data.schema()?;
    let data = read_dataset(&args.data.file, &schema)?;
    let result = run_test(&data, &family, &config)?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "beta_ipw": vector_json(&result.beta_ipw),
        "beta_pseudo": vector_json(&result.beta_pseudo),
        "W_hat": matrix_json(&result.w_hat),
        "T": result.statistic,
        "df": result.df,
        "p_value": result.p_value,
        "reject_at_level": result.p_value < args.level,
        "level": args.level,
        "relative_bias": result.relative_bias,
        "diagnostics": {
            "w_condition": result.diagnostics.w_condition,
            "n": result.diagnostics.n,
            "complete_cases": result.diagnostics.complete_cases,
            "ipw_iterations": result.diagnostics.ipw_iterations,
            "pseudo_iterations": result.diagnostics.pseudo_iterations,
        },
    }))
}

fn command_fit(args: &FitArgs) -> Result<Value> {
    let family = args.data.family()?;
    let config = args.data.kernel.to_config()?;
    let schema = args.data.schema()?;
    let data = read_dataset(&args.data.file, &schema)?;
    let fit = match args.estimator.as_str() {
        "ipw" => solve_ipw(&data, &family, &config)?,
        "pseudo" => solve_pseudolik(&data, &family, &config, None)?,
        other => {
            return Err(Error::Usage(format!(
                "unknown estimator '{other}' (expected ipw or pseudo)"
            )))
        }
    };
    let variance = fit.variance_estimate();
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "estimator": args.estimator,
        "beta": vector_json(&fit.beta),
        "converged": fit.converged,
        "iterations": fit.iterations,
        "score_norm": fit.score_norm,
        "variance_diag": variance.diagonal().iter().cloned().collect::<Vec<f64>>(),
    }))
}

fn command_simulate(args: &SimulateArgs) -> Result<Value> {
    check_level(args.level)?;
    let f_shape: FShape = args.f_shape.parse()?;
    let family = GlmFamily::gaussian(1.0).expect("unit dispersion is valid");
    let config = args.kernel.to_config()?;
    let mut scenarios = Vec::new();
    for (idx, (&c2, &c1)) in args
        .c2_list
        .iter()
        .flat_map(|c2| args.c1_list.iter().map(move |c1| (c2, c1)))
        .enumerate()
    {
        let mut sc = Scenario::new(args.bz, 0.0, c1, c2, f_shape, args.n)
            .map_err(|e| Error::Usage(e.to_string()))?;
        sc.target_missing = args.target_missing;
        sc.validate().map_err(|e| Error::Usage(e.to_string()))?;
        sc.c0 = calibrate_c0(&sc, args.seed ^ (0xCA11B0 + idx as u64))?;
        scenarios.push(sc);
    }
    let rows = run_grid(&scenarios, args.reps, args.level, &family, &config, args.seed);
    let csv = grid_to_csv(&rows);
    std::fs::write(&args.out, &csv)?;
    let payload = json!({
        "schema_version": SCHEMA_VERSION,
        "level": args.level,
        "reps": args.reps,
        "seed": args.seed,
        "rows": rows,
    });
    if let Some(ref json_path) = args.json {
        std::fs::write(json_path, serde_json::to_string_pretty(&payload)? + "\n")?;
    }
    // human-readable summary
    let mut summary = String::new();
    summary.push_str(&format!(
        "rejection rates at level {} over {} replications (seed {})\n",
        args.level, args.reps, args.seed
    ));
    for row in &rows {
        match (row.rate, row.se) {
            (Some(rate), Some(se)) => summary.push_str(&format!(
                "  f={} bz={} c2={} c1={} n={}: {:.1}% (se {:.1}pp, {} failures)\n",
                row.f_shape.label(),
                row.b_z,
                row.c2,
                row.c1,
                row.n,
                100.0 * rate,
                100.0 * se,
                row.failures
            )),
            _ => summary.push_str(&format!(
                "  f={} bz={} c2={} c1={} n={}: ERROR {}\n",
                row.f_shape.label(),
                row.b_z,
                row.c2,
                row.c1,
                row.n,
                row.error.as_deref().unwrap_or("unknown")
            )),
        }
    }
    eprint!("{summary}");
    Ok(payload)
}

fn command_power(args: &PowerArgs) -> Result<Value> {
    check_level(args.level)?;
    let f_shape: FShape = args.f_shape.parse()?;
    let family = GlmFamily::gaussian(1.0).expect("unit dispersion is valid");
    let config = args.kernel.to_config()?;
    // null scenario: the drift starts from c1 = 0 with the intercept
    // calibrated for the null missing fraction
    let mut sc = Scenario::new(args.bz, 0.0, 0.0, args.c2, f_shape, args.n)
        .map_err(|e| Error::Usage(e.to_string()))?;
    sc.target_missing = args.target_missing;
    sc.c0 = calibrate_c0(&sc, args.seed ^ 0xCA11B0)?;
    let (c0, c2) = (sc.c0, sc.c2);
    let prop_model = ParametricPropensity::new(
        1,
        move |u: &[f64]| crate::dist::normal_cdf(c0 + c2 * u[0]),
        move |y: f64, u: &[f64]| {
            DVector::from_vec(vec![normal_pdf(c0 + c2 * u[0]) * f_shape.apply(y)])
        },
    );
    // the drifting alternative gamma = n^{-1/2} gamma0 matches c1 at size n
    let gamma0 = DVector::from_vec(vec![(args.n as f64).sqrt() * args.c1]);
    let estimate = local_power(
        &sc,
        &prop_model,
        &gamma0,
        args.level,
        args.n_cal,
        &family,
        &config,
        args.seed,
    )?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "f_shape": f_shape.label(),
        "b_z": args.bz,
        "c2": args.c2,
        "c1": args.c1,
        "n": args.n,
        "n_cal": args.n_cal,
        "level": args.level,
        "gamma0": gamma0.iter().cloned().collect::<Vec<f64>>(),
        "noncentrality": estimate.noncentrality,
        "power": estimate.power_at_level,
        "eta_hat": matrix_json(&estimate.eta_hat),
    }))
}

fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Test(args) => command_test(args),
        Command::Fit(args) => command_fit(args),
        Command::Simulate(args) => command_simulate(args),
        Command::Power(args) => command_power(args),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    run_with_args(std::env::args())
}

pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version as "errors" with successful exit
            if e.use_stderr() {
                eprintln!(
                    "{}",
                    json!({
                        "schema_version": SCHEMA_VERSION,
                        "error": { "code": "usage", "message": e.to_string() },
                    })
                );
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match dispatch(&cli) {
        Ok(payload) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&payload).expect("report serializes")
            );
            0
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({
                    "schema_version": SCHEMA_VERSION,
                    "error": { "code": e.code(), "message": e.to_string() },
                })
            );
            e.exit_code()
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(format!("JSON serialization failed: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_args_reject_bad_mode() {
        let args = KernelArgs {
            bandwidth_prop: None,
            bandwidth_kde: None,
            quad_nodes: 20,
            z_mode: "nope".into(),
        };
        assert!(matches!(args.to_config(), Err(Error::Usage(_))));
    }

    #[test]
    fn family_parsing() {
        let mk = |name: &str| DataArgs {
            file: PathBuf::from("x.csv"),
            y_col: "y".into(),
            u_cols: vec!["u".into()],
            z_cols: vec!["z".into()],
            indicator_col: None,
            family: name.into(),
            dispersion: 1.0,
            kernel: KernelArgs {
                bandwidth_prop: None,
                bandwidth_kde: None,
                quad_nodes: 20,
                z_mode: "mixture".into(),
            },
        };
        assert!(mk("gaussian").family().is_ok());
        assert!(mk("bernoulli").family().is_ok());
        assert!(mk("poisson").family().is_ok());
        assert!(matches!(mk("beta").family(), Err(Error::Usage(_))));
    }
}
