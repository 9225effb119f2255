//! Empirical `L_p` errors and log-log rate fits.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    pub error: f64,
    pub stderr: f64,
}

/// `(m^-1 sum |d_i|^p)^(1/p)` over the per-repetition differences.
pub fn empirical_error(final_diffs: &[DVector<f64>], p: f64) -> ErrorEstimate {
    let norms: Vec<f64> = final_diffs.iter().map(|d| d.norm()).collect();
    empirical_error_from_norms(&norms, p)
}

/// [`empirical_error`] on precomputed norms. The standard error is the
/// delta-method transform of the sample standard error of `|d|^p`.
/// Sums run in slice order, so the result is reproducible bit for bit.
pub fn empirical_error_from_norms(norms: &[f64], p: f64) -> ErrorEstimate {
    let m = norms.len();
    if m == 0 {
        return ErrorEstimate { error: 0.0, stderr: 0.0 };
    }
    let powered = norms.iter().map(|r| r.powf(p));
    let mean = powered.clone().sum::<f64>() / m as f64;
    let error = mean.powf(1.0 / p);
    if m < 2 || mean == 0.0 {
        return ErrorEstimate { error, stderr: 0.0 };
    }
    let var = powered.map(|y| (y - mean) * (y - mean)).sum::<f64>() / (m - 1) as f64;
    let se_mean = (var / m as f64).sqrt();
    let stderr = mean.powf(1.0 / p - 1.0) * se_mean / p;
    ErrorEstimate { error, stderr }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ~ slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 paired points, got {}", xs.len().min(ys.len()))));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).max(0.0) };
    Ok(LinearFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub p: f64,
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Negated least-squares slope of `log2 error` on `log2 n`. Needs at
/// least three points and strictly positive errors.
pub fn fit_log2_rate(ns: &[usize], errors: &[f64], p: f64) -> Result<RateFit> {
    if ns.len() < 3 {
        return Err(Error::DegenerateFit(format!("p = {p}: need at least 3 rows, got {}", ns.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::DegenerateFit(format!("p = {p}: error {e} has no logarithm")));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(RateFit { p, rate: -fit.slope, intercept: fit.intercept, r_squared: fit.r_squared })
}
