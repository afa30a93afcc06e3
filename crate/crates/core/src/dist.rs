//! Tail probabilities used by the test: central chi-squared survival function,
//! its quantile, and the noncentral chi-squared CDF via the Poisson-mixture
//! series.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Upper-tail probability of the chi-squared distribution with `df` degrees of
/// freedom, through the regularized upper incomplete gamma function.
pub fn chisq_sf(t: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "chi-squared statistic must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, t / 2.0))
}

/// Lower-tail probability of the central chi-squared distribution.
pub fn chisq_cdf(t: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "chi-squared statistic must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(gamma_lr(df as f64 / 2.0, t / 2.0))
}

/// Upper quantile: the `t` with `chisq_sf(t, df) = alpha`, by bisection.
pub fn chisq_quantile(p: f64, df: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p <= 0.0 {
        return Err(Error::Domain(format!(
            "quantile probability must lie in (0, 1), got {p}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = df as f64 + 10.0;
    while chisq_cdf(hi, df)? < p {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Numeric("chi-squared quantile out of range".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chisq_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + hi) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// CDF of the noncentral chi-squared distribution with `df` degrees of freedom
/// and noncentrality `ncp`, as a Poisson(ncp/2) mixture of central chi-squared
/// CDFs. Terms are added from j = 0 past the Poisson mode until they fall
/// below 1e-12 relative.
pub fn noncentral_chisq_cdf(t: f64, df: usize, ncp: f64) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    if !ncp.is_finite() || ncp < 0.0 {
        return Err(Error::Domain(format!(
            "noncentrality must be nonnegative, got {ncp}"
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!(
            "chi-squared statistic must be nonnegative, got {t}"
        )));
    }
    if ncp == 0.0 {
        return chisq_cdf(t, df);
    }
    let half = ncp / 2.0;
    let log_half = half.ln();
    let mode = half.floor();
    let mut acc = 0.0;
    let mut j = 0usize;
    loop {
        // Poisson weight in log space to survive large ncp
        let log_w = -half + j as f64 * log_half - ln_gamma(j as f64 + 1.0);
        let w = log_w.exp();
        let term = w * chisq_cdf(t, df + 2 * j)?;
        acc += term;
        let past_mode = j as f64 >= mode;
        if past_mode && (term <= 1e-12 * acc.max(1e-300) || w < 1e-18) {
            break;
        }
        j += 1;
        if j > 100_000 {
            return Err(Error::Numeric(
                "noncentral chi-squared series did not converge".into(),
            ));
        }
    }
    Ok(acc.min(1.0))
}

pub fn noncentral_chisq_sf(t: f64, df: usize, ncp: f64) -> Result<f64> {
    Ok(1.0 - noncentral_chisq_cdf(t, df, ncp)?)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-(z * z) * 0.5).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}
