//! Coincidence histograms, background correction, g² fitting and emitter counting.

use rayon::prelude::*;
use serde::Serialize;

use crate::core::{CorrelationHistogram, FitResult, TimeTagStream};
use crate::error::{Error, Result};
use crate::numfit::{fit_nlls, g2_model, g2_two_level_model};
use crate::parallel::thread_budget;

pub const DEFAULT_BIN_PS: u64 = 1_000;
pub const DEFAULT_WINDOW_PS: u64 = 500_000;

/// Corrected g²(0) at or below which the g² rule counts emitters.
pub const G2_RULE_THRESHOLD: f64 = 0.75;
/// Sites dimmer than this fraction of the single-emitter reference count as empty.
pub const EMPTY_SITE_FRACTION: f64 = 0.5;
/// Corrected g²(0) below which a site is classified as a single emitter.
pub const SINGLE_THRESHOLD: f64 = 0.5;

/// Signed bin index of an integer delay; bin `j` is centered at `j · w`.
///
/// Bin 0 holds `|τ| ≤ w/2`, bin `j ≥ 1` holds `j·w - w/2 < τ ≤ j·w + w/2` (mirrored for
/// negative `j`), so `τ` and `-τ` always land in mirrored bins.
#[inline]
fn bin_of(tau: i64, w: u64) -> i64 {
    let mag = ((2 * tau.unsigned_abs() + w - 1) / (2 * w)) as i64;
    if tau < 0 {
        -mag
    } else {
        mag
    }
}

fn accumulate(t0: &[u64], t1: &[u64], w: u64, k: i64, reach: u64, hist: &mut [u64]) {
    if t0.is_empty() {
        return;
    }
    let mut lo = t1.partition_point(|&t| t + reach < t0[0]);
    for &a in t0 {
        while lo < t1.len() && t1[lo] + reach < a {
            lo += 1;
        }
        for &b in &t1[lo..] {
            if b > a + reach {
                break;
            }
            let j = bin_of(b as i64 - a as i64, w);
            if j.abs() <= k {
                hist[(j + k) as usize] += 1;
            }
        }
    }
}

/// Full cross-correlation of `ch0` and `ch1`: every pair with delay `τ = t1 - t0` inside
/// the window is counted, normalized by `n0 · n1 · bin_width / duration` so that
/// uncorrelated streams give 1.
///
/// The window is rounded down to a whole number of bins. Work is split over
/// [`thread_budget`] threads by partitioning channel 0.
pub fn correlate(
    ch0: &TimeTagStream,
    ch1: &TimeTagStream,
    bin_width_ps: u64,
    window_ps: u64,
) -> Result<CorrelationHistogram> {
    if ch0.duration() != ch1.duration() {
        return Err(Error::DurationMismatch(ch0.duration(), ch1.duration()));
    }
    if bin_width_ps == 0 || window_ps < bin_width_ps {
        return Err(Error::invalid("need bin width > 0 and window >= bin width"));
    }
    let k = (window_ps / bin_width_ps) as i64;
    let nbins = (2 * k + 1) as usize;
    // largest |τ| that still falls in bin k
    let reach = k as u64 * bin_width_ps + bin_width_ps / 2;
    let t0: Vec<u64> = ch0.times().collect();
    let t1: Vec<u64> = ch1.times().collect();

    let threads = thread_budget();
    let chunk = t0.len().div_ceil(threads).max(4096);
    let accumulate_chunk = |c: &[u64]| {
        let mut h = vec![0u64; nbins];
        accumulate(c, &t1, bin_width_ps, k, reach, &mut h);
        h
    };
    let merge = |mut a: Vec<u64>, b: Vec<u64>| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    };
    let raw_pairs = if threads > 1 && t0.len() > chunk {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Numerical(e.to_string()))?;
        pool.install(|| {
            t0.par_chunks(chunk)
                .map(accumulate_chunk)
                .reduce(|| vec![0u64; nbins], merge)
        })
    } else {
        accumulate_chunk(&t0)
    };

    let norm = t0.len() as f64 * t1.len() as f64 * bin_width_ps as f64 / ch0.duration() as f64;
    let bins = if norm > 0.0 {
        raw_pairs.iter().map(|&n| n as f64 / norm).collect()
    } else {
        vec![0.0; nbins]
    };
    Ok(CorrelationHistogram {
        bin_width: bin_width_ps,
        window: k as u64 * bin_width_ps,
        bins,
        raw_pairs,
        // an empty channel leaves nothing to normalize; keep the invariant norm > 0
        norm_factor: if norm > 0.0 { norm } else { 1.0 },
        corrected_rho: None,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::invalid(format!(
            "signal fraction rho must be in (0, 1], got {rho}"
        )));
    }
    Ok(())
}

/// `v -> (v - (1 - ρ²)) / ρ²` on every bin.
pub fn background_correct(h: &CorrelationHistogram, rho: f64) -> Result<CorrelationHistogram> {
    check_rho(rho)?;
    if h.corrected_rho.is_some() {
        return Err(Error::invalid("histogram is already background corrected"));
    }
    let r2 = rho * rho;
    let mut out = h.clone();
    out.bins
        .iter_mut()
        .for_each(|v| *v = (*v - (1.0 - r2)) / r2);
    out.corrected_rho = Some(rho);
    Ok(out)
}

/// Inverse of [`background_correct`].
pub fn background_uncorrect(h: &CorrelationHistogram) -> Result<CorrelationHistogram> {
    let rho = h
        .corrected_rho
        .ok_or_else(|| Error::invalid("histogram is not background corrected"))?;
    let r2 = rho * rho;
    let mut out = h.clone();
    out.bins.iter_mut().for_each(|v| *v = *v * r2 + (1.0 - r2));
    out.corrected_rho = None;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Antibunching {
    /// Corrected g²(0) below 0.5.
    Single,
    /// Significant dip that does not reach 0.5.
    Multiple,
    /// Zero-delay bin consistent with 1.
    None,
}

impl Antibunching {
    pub fn label(self) -> &'static str {
        match self {
            Antibunching::Single => "single",
            Antibunching::Multiple => "multiple",
            Antibunching::None => "no antibunching",
        }
    }
}

/// Three-level fit of a background-corrected histogram.
#[derive(Debug, Clone, Serialize)]
pub struct G2Fit {
    pub a: f64,
    pub tau1_ns: f64,
    /// `None` when the data carry no shelving shoulder.
    pub tau2_ns: Option<f64>,
    pub tau2_identifiable: bool,
    /// Model value at zero delay; zero by construction of the model.
    pub g2_zero: f64,
    /// Corrected zero-delay bin.
    pub g2_zero_measured: f64,
    pub g2_zero_stderr: f64,
    pub rho: f64,
    pub classification: Antibunching,
    pub fit: FitResult,
}

fn classify(g0: f64, err: f64) -> Antibunching {
    if g0 < SINGLE_THRESHOLD {
        Antibunching::Single
    } else if g0 < 1.0 - 3.0 * err {
        Antibunching::Multiple
    } else {
        Antibunching::None
    }
}

/// Mirror-averaged (τ ≥ 0) values and errors.
fn fold(h: &CorrelationHistogram) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = h.center_index();
    let err = h.bin_errors();
    let mut taus = Vec::with_capacity(c + 1);
    let mut vals = Vec::with_capacity(c + 1);
    let mut errs = Vec::with_capacity(c + 1);
    for j in 0..=c {
        taus.push(j as f64 * h.bin_width as f64 * 1e-3);
        if j == 0 {
            vals.push(h.bins[c]);
            errs.push(err[c]);
        } else {
            vals.push(0.5 * (h.bins[c + j] + h.bins[c - j]));
            errs.push(0.5 * (err[c + j].powi(2) + err[c - j].powi(2)).sqrt());
        }
    }
    (taus, vals, errs)
}

/// Starting point `(a, tau1, tau2)` from the folded, corrected curve.
fn initial_guess(taus: &[f64], vals: &[f64], errs: &[f64]) -> (f64, f64, Option<f64>) {
    let bin_ns = taus.get(1).copied().unwrap_or(1.0);
    // delay of the first upward crossing of 0.5
    let tau1 = vals
        .windows(2)
        .enumerate()
        .find(|(_, w)| w[0] < 0.5 && w[1] >= 0.5)
        .map(|(i, w)| {
            let f = (0.5 - w[0]) / (w[1] - w[0]);
            (taus[i] + f * bin_ns) / std::f64::consts::LN_2
        })
        .unwrap_or(bin_ns)
        .max(0.1 * bin_ns);

    // shoulder height from a 5-bin running mean
    let smooth: Vec<f64> = (0..vals.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(vals.len());
            vals[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let a = (smooth.iter().cloned().fold(f64::MIN, f64::max) - 1.0).max(0.0);

    // log-linear fit of the shoulder beyond the fast dip
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for i in 0..taus.len() {
        let excess = vals[i] - 1.0;
        if taus[i] > 3.0 * tau1 && excess > 3.0 * errs[i] {
            let y = excess.ln();
            let wgt = (excess / errs[i]).powi(2);
            sw += wgt;
            sx += wgt * taus[i];
            sy += wgt * y;
            sxx += wgt * taus[i] * taus[i];
            sxy += wgt * taus[i] * y;
            used += 1;
        }
    }
    let tau2 = if used >= 3 {
        let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
        (slope < 0.0).then(|| -1.0 / slope)
    } else {
        None
    };
    (a, tau1, tau2)
}

fn two_level_fit(x: &[f64], y: &[f64], s: &[f64], tau1: f64) -> Result<FitResult> {
    fit_nlls(&g2_two_level_model(), &[tau1], x, y, Some(s))
}

/// Background-correct `h` with `rho` (unless it already is) and fit the three-level
/// model `1 - (1+a) e^{-|τ|/τ1} + a e^{-|τ|/τ2}` with Poisson weights.
///
/// When the shoulder is absent or not resolved (no tail to seed τ2, or fitted `a` within
/// two standard errors of 0) the two-level model `1 - e^{-|τ|/τ1}` is fitted instead and
/// τ2 is reported as unidentifiable.
pub fn fit_g2(h: &CorrelationHistogram, rho: f64) -> Result<G2Fit> {
    let corrected = match h.corrected_rho {
        Some(r) if (r - rho).abs() > 1e-12 => {
            return Err(Error::invalid(format!(
                "histogram was corrected with rho = {r}, not {rho}"
            )))
        }
        Some(_) => h.clone(),
        None => background_correct(h, rho)?,
    };
    let x = corrected.taus_ns();
    let y = corrected.bins.clone();
    let s = corrected.bin_errors();
    let (taus, vals, errs) = fold(&corrected);
    let (a0, tau1_0, tau2_0) = initial_guess(&taus, &vals, &errs);

    let three = match tau2_0 {
        Some(t2) if a0 > 0.0 => {
            let t2 = t2.max(2.0 * tau1_0);
            Some(fit_nlls(&g2_model(), &[a0, tau1_0, t2], &x, &y, Some(&s))?)
        }
        _ => None,
    };
    let resolved = three.as_ref().filter(|f| {
        let (a, sa) = (f.get("a"), f.stderr_of("a"));
        f.converged && sa.is_finite() && a > 2.0 * sa && f.get("tau2") > f.get("tau1")
    });
    let (a, tau1, tau2, fit) = match resolved {
        Some(f) => (f.get("a"), f.get("tau1"), Some(f.get("tau2")), f.clone()),
        None => {
            let f = two_level_fit(&x, &y, &s, tau1_0)?;
            (0.0, f.get("tau1"), None, f)
        }
    };
    let c = corrected.center_index();
    let g0 = corrected.bins[c];
    let g0_err = corrected.bin_errors()[c];
    Ok(G2Fit {
        a,
        tau1_ns: tau1,
        tau2_ns: tau2,
        tau2_identifiable: tau2.is_some(),
        g2_zero: 1.0 - (1.0 + a) + a,
        g2_zero_measured: g0,
        g2_zero_stderr: g0_err,
        rho,
        classification: classify(g0, g0_err),
        fit,
    })
}

/// Emitters at a site from its corrected g²(0) and brightness relative to a single
/// emitter.
///
/// Sites below half the reference are empty. Otherwise `round(1/(1 - g²(0)))` is used
/// when g²(0) ≤ 0.75 and it gives at most 2; beyond that (or for g²(0) ≥ 1) the
/// brightness ratio is rounded.
pub fn estimate_emitter_count(
    measured_g2_zero: f64,
    site_intensity: f64,
    single_ref_intensity: f64,
) -> Result<u32> {
    if !(single_ref_intensity > 0.0) {
        return Err(Error::invalid(
            "single-emitter reference intensity must be > 0",
        ));
    }
    if !(site_intensity >= 0.0) || !measured_g2_zero.is_finite() {
        return Err(Error::invalid(
            "site intensity must be >= 0 and g2(0) finite",
        ));
    }
    let ratio = site_intensity / single_ref_intensity;
    if ratio < EMPTY_SITE_FRACTION {
        return Ok(0);
    }
    let n_int = ratio.round() as u32;
    if measured_g2_zero <= G2_RULE_THRESHOLD {
        let n_g2 = (1.0 / (1.0 - measured_g2_zero.max(0.0))).round() as u32;
        if n_g2 <= 2 {
            return Ok(n_g2);
        }
    }
    Ok(n_int)
}
