use serde::Serialize;

use crate::core::FitResult;
use crate::error::{Error, Result};

use super::nlls::{fit_nlls, ModelSpec};

/// Maximum-likelihood Poisson (or zero-truncated Poisson) estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonFit {
    pub lambda_hat: f64,
    pub stderr: f64,
    /// Zero-truncated variant (observations conditioned on n >= 1).
    pub truncated: bool,
    pub loglik: f64,
    /// Sample size.
    pub n: usize,
    /// All observations were zero: the estimate sits on the boundary λ = 0.
    pub degenerate: bool,
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Sum of `ln(x!)` over the sample, computed once per distinct value.
fn sum_ln_factorial(counts: &[u64]) -> f64 {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mut total = 0.0;
    let mut acc = 0.0;
    let mut last = 0;
    for &x in &sorted {
        for i in last + 1..=x {
            acc += (i as f64).ln();
        }
        last = last.max(x);
        total += acc;
    }
    debug_assert!(sorted.is_empty() || (acc - ln_factorial(last)).abs() < 1e-9 * acc.max(1.0));
    total
}

/// Plain Poisson MLE: `λ̂ = mean`, `se = sqrt(λ̂ / n)`.
pub fn poisson_mle(counts: &[u64]) -> Result<PoissonFit> {
    if counts.is_empty() {
        return Err(Error::invalid("poisson_mle: empty sample"));
    }
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    let lambda = total as f64 / n as f64;
    let loglik = if lambda > 0.0 {
        total as f64 * lambda.ln() - n as f64 * lambda - sum_ln_factorial(counts)
    } else {
        0.0
    };
    Ok(PoissonFit {
        lambda_hat: lambda,
        stderr: (lambda / n as f64).sqrt(),
        truncated: false,
        loglik,
        n,
        degenerate: total == 0,
    })
}

/// Mean of a zero-truncated Poisson: `λ / (1 - e^{-λ})`.
pub fn ztp_mean(lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    lambda / -(-lambda).exp_m1()
}

/// Invert [`ztp_mean`] by safeguarded Newton iteration (tolerance 1e-12).
///
/// The root is bracketed by `(max(0, m - 1), m)`; a Newton step leaving the bracket is
/// replaced by bisection.
pub fn ztp_lambda_from_mean(mean: f64) -> Result<f64> {
    if !(mean > 1.0) || !mean.is_finite() {
        return Err(Error::invalid(format!(
            "zero-truncated Poisson needs a sample mean > 1, got {mean}"
        )));
    }
    let f = |l: f64| ztp_mean(l) - mean;
    let df = |l: f64| {
        // d/dλ [λ / (1 - e^{-λ})] = (1 - e^{-λ} - λ e^{-λ}) / (1 - e^{-λ})²
        let q = -(-l).exp_m1();
        let e = (-l).exp();
        (q - l * e) / (q * q)
    };
    let (mut lo, mut hi) = ((mean - 1.0).max(0.0), mean);
    let mut l = mean - mean * (-mean).exp();
    if !(l > lo && l < hi) {
        l = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let v = f(l);
        if v == 0.0 {
            return Ok(l);
        }
        if v > 0.0 {
            hi = l;
        } else {
            lo = l;
        }
        let d = df(l);
        let mut next = l - v / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - l).abs() <= 1e-12 * l.max(1.0) {
            return Ok(next);
        }
        l = next;
    }
    Ok(l)
}

/// Zero-truncated Poisson MLE over observations that are all >= 1.
///
/// The likelihood equation reduces to `mean = λ / (1 - e^{-λ})`; the standard error
/// is from the expected Fisher information
/// `I(λ) = 1 / (λ (1 - e^{-λ})) - e^{-λ} / (1 - e^{-λ})²` per observation.
pub fn ztp_mle(nonzero_counts: &[u64]) -> Result<PoissonFit> {
    if nonzero_counts.is_empty() {
        return Err(Error::invalid("ztp_mle: empty sample"));
    }
    if nonzero_counts.contains(&0) {
        return Err(Error::invalid("ztp_mle: observations must all be >= 1"));
    }
    let n = nonzero_counts.len();
    let total: u64 = nonzero_counts.iter().sum();
    let mean = total as f64 / n as f64;
    let lambda = ztp_lambda_from_mean(mean)?;
    let q = -(-lambda).exp_m1();
    let info = 1.0 / (lambda * q) - (-lambda).exp() / (q * q);
    let loglik = total as f64 * lambda.ln()
        - n as f64 * lambda
        - n as f64 * q.ln()
        - sum_ln_factorial(nonzero_counts);
    Ok(PoissonFit {
        lambda_hat: lambda,
        stderr: 1.0 / (n as f64 * info).sqrt(),
        truncated: true,
        loglik,
        n,
        degenerate: false,
    })
}

/// Least-squares fit of the Poisson pmf to the normalized histogram of `counts`
/// (bar heights `#(n = k) / N` for `k = 0..=max`), the alternative to [`poisson_mle`].
pub fn poisson_lsq(counts: &[u64]) -> Result<FitResult> {
    if counts.is_empty() {
        return Err(Error::invalid("poisson_lsq: empty sample"));
    }
    let max = *counts.iter().max().expect("nonempty") as usize;
    let mut heights = vec![0.0; max + 2];
    for &c in counts {
        heights[c as usize] += 1.0 / counts.len() as f64;
    }
    let ks: Vec<f64> = (0..heights.len()).map(|k| k as f64).collect();
    let model = ModelSpec::new("poisson_pmf", &["lambda"], |p, k| {
        let l = p[0];
        (k * l.ln() - l - ln_gamma_int(k)).exp()
    })
    .with_bounds(vec![(1e-9, f64::INFINITY)]);
    let start = poisson_mle(counts)?.lambda_hat.max(1e-3);
    fit_nlls(&model, &[start], &ks, &heights, None)
}

/// `ln(k!)` for non-negative integral `k` given as a float.
fn ln_gamma_int(k: f64) -> f64 {
    ln_factorial(k.round() as u64)
}
