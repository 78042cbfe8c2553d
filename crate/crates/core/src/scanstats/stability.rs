use serde::Serialize;

use crate::error::{Error, Result};

/// BIC improvement a two-level model must exceed to call blinking.
pub const BIC_MARGIN: f64 = 10.0;
/// Required separation of the two levels in units of `√(mean count)`.
pub const LEVEL_SEPARATION: f64 = 5.0;

#[derive(Debug, Clone, Serialize)]
pub struct Photostability {
    pub mean_rate_cps: f64,
    pub mean_count: f64,
    pub fano: f64,
    pub blinking: bool,
    /// `BIC(one Gaussian) - BIC(two-component mixture)`.
    pub bic_gain: f64,
    /// Mixture component means, low first.
    pub levels: (f64, f64),
    pub n_bins: usize,
}

fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

fn ln_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Two-component 1D Gaussian mixture by EM; returns `(loglik, mean_lo, mean_hi)`.
fn mixture(xs: &[f64], var_floor: f64) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((n - 1.0) * f).round() as usize];
    let mean = xs.iter().sum::<f64>() / n;
    let var = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(var_floor);
    let mut mu = [q(0.25), q(0.75)];
    let mut s2 = [var, var];
    let mut w = [0.5f64, 0.5];
    let mut resp = vec![0.0; xs.len()];
    let mut last = f64::NEG_INFINITY;
    let mut ll = last;
    for _ in 0..500 {
        ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(xs) {
            let a = w[0].ln() + normal_ln_pdf(x, mu[0], s2[0]);
            let b = w[1].ln() + normal_ln_pdf(x, mu[1], s2[1]);
            let t = ln_sum_exp(a, b);
            *r = (a - t).exp();
            ll += t;
        }
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 < 1e-9 || n1 < 1e-9 {
            break;
        }
        w = [n0 / n, n1 / n];
        mu = [
            resp.iter().zip(xs).map(|(r, x)| r * x).sum::<f64>() / n0,
            resp.iter().zip(xs).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n1,
        ];
        s2 = [
            (resp
                .iter()
                .zip(xs)
                .map(|(r, x)| r * (x - mu[0]).powi(2))
                .sum::<f64>()
                / n0)
                .max(var_floor),
            (resp
                .iter()
                .zip(xs)
                .map(|(r, x)| (1.0 - r) * (x - mu[1]).powi(2))
                .sum::<f64>()
                / n1)
                .max(var_floor),
        ];
        if (ll - last).abs() < 1e-10 * ll.abs().max(1.0) {
            break;
        }
        last = ll;
    }
    (ll, mu[0].min(mu[1]), mu[0].max(mu[1]))
}

/// Fano factor and blinking test of a binned intensity trace.
///
/// Blinking is flagged when a two-component Gaussian mixture beats a single Gaussian by
/// more than [`BIC_MARGIN`] and its two means differ by more than
/// [`LEVEL_SEPARATION`]` · √mean`. Variances are floored at 1/12 (count quantization).
pub fn photostability(trace: &[u64], bin_ms: f64) -> Result<Photostability> {
    if trace.len() < 100 {
        return Err(Error::invalid("photostability needs at least 100 bins"));
    }
    if !(bin_ms > 0.0) {
        return Err(Error::invalid("bin width must be positive"));
    }
    let xs: Vec<f64> = trace.iter().map(|&c| c as f64).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let fano = if mean > 0.0 { var / mean } else { f64::NAN };

    let floor = 1.0 / 12.0;
    let var_ml = (var * (n - 1.0) / n).max(floor);
    let ll1: f64 = xs.iter().map(|&x| normal_ln_pdf(x, mean, var_ml)).sum();
    let (ll2, lo, hi) = mixture(&xs, floor);
    let bic1 = -2.0 * ll1 + 2.0 * n.ln();
    let bic2 = -2.0 * ll2 + 5.0 * n.ln();
    let gain = bic1 - bic2;
    let blinking = gain > BIC_MARGIN && hi - lo > LEVEL_SEPARATION * mean.sqrt();
    Ok(Photostability {
        mean_rate_cps: mean / (bin_ms * 1e-3),
        mean_count: mean,
        fano,
        blinking,
        bic_gain: gain,
        levels: (lo, hi),
        n_bins: trace.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RngSpec;
    use crate::sim::{poisson_trace, telegraph_trace};

    #[test]
    fn poisson_trace_is_stable() {
        for seed in 0..5 {
            let tr = poisson_trace(7400.0, 100.0, 600, RngSpec::new(seed, 0)).unwrap();
            let s = photostability(&tr, 100.0).unwrap();
            assert!(!s.blinking, "seed {seed}: {s:?}");
            // sd of the sample Fano factor is about sqrt(2/n)
            assert!(
                (s.fano - 1.0).abs() < 4.0 * (2.0f64 / 600.0).sqrt(),
                "{}",
                s.fano
            );
            assert!((s.mean_rate_cps - 7400.0).abs() < 50.0);
        }
    }

    #[test]
    fn low_count_trace_is_stable() {
        let tr = poisson_trace(30.0, 100.0, 600, RngSpec::new(1, 0)).unwrap();
        assert!(!photostability(&tr, 100.0).unwrap().blinking);
    }

    #[test]
    fn telegraph_trace_blinks() {
        let tr = telegraph_trace(1000.0, 5000.0, 2.0, 100.0, 60.0, RngSpec::new(2, 0)).unwrap();
        let s = photostability(&tr, 100.0).unwrap();
        assert!(s.blinking, "{s:?}");
        assert!((s.levels.0 - 100.0).abs() < 10.0 && (s.levels.1 - 500.0).abs() < 20.0);
    }

    #[test]
    fn short_trace_rejected() {
        assert!(photostability(&[1; 99], 100.0).is_err());
    }
}
