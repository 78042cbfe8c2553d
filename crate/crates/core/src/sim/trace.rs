//! Binned intensity traces for photostability analysis.

use rand_distr::{Distribution, Poisson};

use crate::core::{RngSpec, TimeTagStream, PS_PER_S};
use crate::error::{Error, Result};

fn bin_ps(bin_ms: f64) -> Result<u64> {
    if !(bin_ms > 0.0) || !bin_ms.is_finite() {
        return Err(Error::invalid("bin width must be positive"));
    }
    let ps = (bin_ms * 1e9).round() as u64;
    if ps == 0 {
        return Err(Error::invalid("bin width below 1 ps"));
    }
    Ok(ps)
}

/// Counts per bin of width `bin_ms`; a trailing partial bin is dropped.
pub fn bin_counts(stream: &TimeTagStream, bin_ms: f64) -> Result<Vec<u64>> {
    let w = bin_ps(bin_ms)?;
    let n = (stream.duration() / w) as usize;
    let mut out = vec![0u64; n];
    for tag in stream.tags() {
        let i = (tag.t / w) as usize;
        if i < n {
            out[i] += 1;
        }
    }
    Ok(out)
}

fn poisson(mean: f64, rng: &mut crate::core::SimRng) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    } else {
        0
    }
}

/// Shot-noise-limited trace of a constant rate.
pub fn poisson_trace(rate_cps: f64, bin_ms: f64, n_bins: usize, rng: RngSpec) -> Result<Vec<u64>> {
    bin_ps(bin_ms)?;
    if !(rate_cps >= 0.0) {
        return Err(Error::invalid("rate must be >= 0"));
    }
    let mean = rate_cps * bin_ms * 1e-3;
    let mut gen = rng.rng();
    Ok((0..n_bins).map(|_| poisson(mean, &mut gen)).collect())
}

/// Blinking emitter: the rate alternates between `low_cps` and `high_cps` every
/// `switch_s` seconds, starting low. Bins straddling a switch get the time-weighted
/// mean rate.
pub fn telegraph_trace(
    low_cps: f64,
    high_cps: f64,
    switch_s: f64,
    bin_ms: f64,
    duration_s: f64,
    rng: RngSpec,
) -> Result<Vec<u64>> {
    let w = bin_ps(bin_ms)?;
    if !(switch_s > 0.0) || !(duration_s > 0.0) || !(low_cps >= 0.0) || !(high_cps >= 0.0) {
        return Err(Error::invalid(
            "telegraph trace needs positive times and rates",
        ));
    }
    let period = (switch_s * PS_PER_S).round() as u64;
    let n = ((duration_s * PS_PER_S).round() as u64 / w) as usize;
    let rate_at = |seg: u64| if seg % 2 == 0 { low_cps } else { high_cps };
    let mut gen = rng.rng();
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let (start, end) = (i * w, (i + 1) * w);
        let mut expected = 0.0;
        let mut t = start;
        while t < end {
            let seg = t / period;
            let seg_end = ((seg + 1) * period).min(end);
            expected += rate_at(seg) * (seg_end - t) as f64 / PS_PER_S;
            t = seg_end;
        }
        out.push(poisson(expected, &mut gen));
    }
    Ok(out)
}
