// Scratch diagnostics for the null behavior of the test.
use std::time::Instant;

use martest::ipw::solve_ipw_with;
use martest::kernels::{nw_propensity_from_config, KernelConfig, ZIntegrationMode};
use martest::mar_test::{assemble_test, discrepancy_covariance};
use martest::pseudolik::{pseudo_hessian, solve_pseudolik_with, PseudoLikContext};
use martest::sim::{calibrate_c0, generate_dataset, FShape, Scenario};
use martest::GlmFamily;
use nalgebra::{DMatrix, DVector};

fn main() {
    let n: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(400);
    let reps: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30);
    let family = GlmFamily::gaussian(1.0).unwrap();
    let config = KernelConfig {
        z_integration_mode: ZIntegrationMode::DegenerateZ,
        ..KernelConfig::default()
    };
    let mut sc = Scenario::new(1.0, 0.0, 0.0, 0.0, FShape::Linear, n).unwrap();
    sc.c0 = calibrate_c0(&sc, 1).unwrap();
    println!("c0 = {:.4}", sc.c0);

    let mut beta_ipw_all = Vec::new();
    let mut beta_pseudo_all = Vec::new();
    let mut w_mean = DMatrix::<f64>::zeros(3, 3);
    let mut t_stats = Vec::new();
    let mut iters = Vec::new();
    let t0 = Instant::now();
    for rep in 0..reps {
        let sim = generate_dataset(&sc, 1000 + rep as u64).unwrap();
        let data = &sim.dataset;
        let t_fit = Instant::now();
        let prop = nw_propensity_from_config(data.u(), data.indicators(), &config).unwrap();
        let ipw = solve_ipw_with(data, &family, &prop, Default::default()).unwrap();
        let t_ipw = t_fit.elapsed();
        let ctx = PseudoLikContext::new(data, family, &config).unwrap();
        let t_ctx = t_fit.elapsed();
        let pseudo = solve_pseudolik_with(data, &ctx, &prop, Some(&ipw.beta)).unwrap();
        let t_pseudo = t_fit.elapsed();
        let result = assemble_test(&ipw, &pseudo, data).unwrap();
        let t_all = t_fit.elapsed();
        if rep < 3 {
            let hess = pseudo_hessian(&pseudo.beta, data, &ctx).unwrap();
            let eig = hess.symmetric_eigen();
            println!(
                "rep {rep}: ipw {:?} ctx {:?} pseudo({} its) {:?} total {:?} | hess eig {:?}",
                t_ipw,
                t_ctx - t_ipw,
                pseudo.iterations,
                t_pseudo - t_ctx,
                t_all,
                eig.eigenvalues.as_slice()
            );
        }
        iters.push(pseudo.iterations);
        beta_ipw_all.push(ipw.beta.clone());
        beta_pseudo_all.push(pseudo.beta.clone());
        w_mean += discrepancy_covariance(&ipw.influence, &pseudo.influence).unwrap();
        t_stats.push(result.statistic);
    }
    let elapsed = t0.elapsed();
    w_mean /= reps as f64;
    println!(
        "reps {reps} at n={n}: {:.2?} total, {:.3?} per rep, pseudo iterations {:?}",
        elapsed,
        elapsed / reps as u32,
        &iters[..iters.len().min(10)]
    );

    let mean = |v: &Vec<DVector<f64>>| -> DVector<f64> {
        let mut m = DVector::zeros(3);
        for b in v {
            m += b;
        }
        m / v.len() as f64
    };
    let m_ipw = mean(&beta_ipw_all);
    let m_pseudo = mean(&beta_pseudo_all);
    println!("mean beta_ipw    = {:?}", m_ipw.as_slice());
    println!("mean beta_pseudo = {:?}", m_pseudo.as_slice());

    // empirical covariance of sqrt(n)(beta_pseudo - beta_ipw)
    let diffs: Vec<DVector<f64>> = beta_ipw_all
        .iter()
        .zip(&beta_pseudo_all)
        .map(|(a, b)| (b - a) * (n as f64).sqrt())
        .collect();
    let md = mean(&diffs);
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for d in &diffs {
        let c = d - &md;
        cov += &c * c.transpose();
    }
    cov /= (reps - 1) as f64;
    println!("mean sqrt(n) diff = {:?}", md.as_slice());
    println!("empirical cov of sqrt(n) diff diag = {:?}", cov.diagonal().as_slice());
    println!("mean W_hat diag                    = {:?}", w_mean.diagonal().as_slice());
    t_stats.sort_by(f64::total_cmp);
    println!("T quartiles: {:.3} {:.3} {:.3}   (chi2_3: 1.21 2.37 4.11)",
        t_stats[reps / 4], t_stats[reps / 2], t_stats[3 * reps / 4]);
    let rej = t_stats.iter().filter(|&&t| t > 7.8147).count();
    println!("rejections at 5%: {} / {reps}", rej);
}
