use std::fs;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::core::{FitResult, RngSpec};
use crate::error::{Error, Result};
use crate::format::fmt_sig;
use crate::numfit::{fit_nlls, lorentzian, lorentzian_model};

use super::spin::{transition_frequencies, SpinSystem};

/// Gated acquisition: each frequency is measured `repetitions` times per scan with
/// microwave-on and microwave-off gates of `gate_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrProtocol {
    pub gate_ms: f64,
    pub repetitions: u64,
    pub scans: u64,
}

impl Default for OdmrProtocol {
    fn default() -> Self {
        Self {
            gate_ms: 2.8,
            repetitions: 20_000,
            scans: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub f_lo_mhz: f64,
    pub f_hi_mhz: f64,
    pub n_points: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            f_lo_mhz: 40.0,
            f_hi_mhz: 100.0,
            n_points: 61,
        }
    }
}

impl SweepSpec {
    pub fn freqs(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|i| {
                if n == 1 {
                    self.f_lo_mhz
                } else {
                    self.f_lo_mhz + (self.f_hi_mhz - self.f_lo_mhz) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Lorentzian resonance with full width `width_mhz` and fractional PL drop
/// `peak_contrast` at its center. Every allowed transition gets the same line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineShape {
    pub width_mhz: f64,
    pub peak_contrast: f64,
}

impl Default for LineShape {
    fn default() -> Self {
        Self {
            width_mhz: 8.0,
            peak_contrast: 0.01,
        }
    }
}

/// Default emitter count rate for ODMR simulation, counts/s.
pub const DEFAULT_ODMR_RATE_CPS: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdmrSweep {
    pub freqs_mhz: Vec<f64>,
    /// `ΔPL`; `None` where no on-gate counts were collected.
    pub contrast: Vec<Option<f64>>,
    pub counts_on: Vec<u64>,
    pub counts_off: Vec<u64>,
    pub protocol: Option<OdmrProtocol>,
}

/// `ΔPL = (Σ off − Σ on) / Σ on` per point; points without on-counts are `None`.
pub fn odmr_contrast(counts_on: &[u64], counts_off: &[u64]) -> Result<Vec<Option<f64>>> {
    if counts_on.len() != counts_off.len() {
        return Err(Error::invalid("on and off count arrays differ in length"));
    }
    Ok(counts_on
        .iter()
        .zip(counts_off)
        .map(|(&on, &off)| (on > 0).then(|| (off as f64 - on as f64) / on as f64))
        .collect())
}

/// Poisson-sampled gated sweep. Point `i` draws from `rng.child(i)`; each scan adds one
/// Poisson draw per gate type whose mean covers all repetitions (the sum of independent
/// per-repetition Poisson counts).
pub fn simulate_odmr(
    sys: &SpinSystem,
    sweep: &SweepSpec,
    line: &LineShape,
    rate_cps: f64,
    protocol: &OdmrProtocol,
    rng: RngSpec,
) -> Result<OdmrSweep> {
    if !(sweep.f_lo_mhz < sweep.f_hi_mhz) || sweep.n_points < 2 {
        return Err(Error::invalid(
            "sweep needs f_lo < f_hi and at least 2 points",
        ));
    }
    if !(protocol.gate_ms > 0.0) || protocol.repetitions == 0 || protocol.scans == 0 {
        return Err(Error::invalid("protocol values must be positive"));
    }
    if !(rate_cps >= 0.0) || !(line.width_mhz > 0.0) || !(0.0..=1.0).contains(&line.peak_contrast) {
        return Err(Error::invalid(
            "need rate >= 0, width > 0 and contrast in [0, 1]",
        ));
    }
    let resonances = transition_frequencies(sys);
    let off_mean = rate_cps * protocol.gate_ms * 1e-3 * protocol.repetitions as f64;
    let freqs = sweep.freqs();
    let mut on = Vec::with_capacity(freqs.len());
    let mut off = Vec::with_capacity(freqs.len());
    for (i, &f) in freqs.iter().enumerate() {
        let dip: f64 = resonances
            .iter()
            .map(|&f0| lorentzian(f, f0, line.width_mhz))
            .sum::<f64>()
            * line.peak_contrast;
        let on_mean = off_mean * (1.0 - dip).max(0.0);
        let mut g = rng.child(i as u64).rng();
        let mut draw = |mean: f64| {
            if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut g) as u64
            } else {
                0
            }
        };
        let (mut n_on, mut n_off) = (0, 0);
        for _ in 0..protocol.scans {
            n_on += draw(on_mean);
            n_off += draw(off_mean);
        }
        on.push(n_on);
        off.push(n_off);
    }
    Ok(OdmrSweep {
        contrast: odmr_contrast(&on, &off)?,
        freqs_mhz: freqs,
        counts_on: on,
        counts_off: off,
        protocol: Some(*protocol),
    })
}

impl OdmrSweep {
    /// `freq_mhz,contrast,counts_on,counts_off`; missing contrast is an empty field.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "freq_mhz,contrast,counts_on,counts_off")?;
        for i in 0..self.freqs_mhz.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_sig(self.freqs_mhz[i]),
                self.contrast[i].map(fmt_sig).unwrap_or_default(),
                self.counts_on[i],
                self.counts_off[i]
            )?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads the CSV written by [`OdmrSweep::write_csv`]. Contrast is recomputed from
    /// the integer counts.
    pub fn read_csv(path: &Path) -> Result<OdmrSweep> {
        let err = |line: u64, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| err(0, e.to_string()))?;
        let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["freq_mhz", "contrast", "counts_on", "counts_off"]
        {
            return Err(err(
                1,
                "expected header `freq_mhz,contrast,counts_on,counts_off`".into(),
            ));
        }
        let (mut f, mut on, mut off) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).ok_or_else(|| err(line, "missing field".into()));
            f.push(
                field(0)?
                    .parse::<f64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
            on.push(
                field(2)?
                    .parse::<u64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
            off.push(
                field(3)?
                    .parse::<u64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
        }
        Ok(OdmrSweep {
            contrast: odmr_contrast(&on, &off)?,
            freqs_mhz: f,
            counts_on: on,
            counts_off: off,
            protocol: None,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OdmrFit {
    pub center_mhz: f64,
    pub width_mhz: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Converged with amplitude above three standard errors and width inside the span.
    pub detected: bool,
    pub fit: FitResult,
}

/// Lorentzian fit to `ΔPL(f)`, started at the largest contrast point with width = span/10
/// and offset = median contrast.
pub fn fit_odmr(sweep: &OdmrSweep) -> Result<OdmrFit> {
    let pts: Vec<(f64, f64)> = sweep
        .freqs_mhz
        .iter()
        .zip(&sweep.contrast)
        .filter_map(|(&f, c)| c.map(|c| (f, c)))
        .collect();
    fit_contrast(&pts)
}

/// Lorentzian fit to `(freq_mhz, ΔPL)` points.
pub fn fit_contrast(pts: &[(f64, f64)]) -> Result<OdmrFit> {
    if pts.len() < 8 {
        return Err(Error::invalid(
            "ODMR fit needs at least 8 valid frequency points",
        ));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let peak = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let mut sorted = ys.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let p0 = [ys[peak] - median, xs[peak], span / 10.0, median];
    let fit = fit_nlls(&lorentzian_model(), &p0, &xs, &ys, None)?;
    let (a, sa) = (fit.get("A"), fit.stderr_of("A"));
    let w = fit.get("w");
    Ok(OdmrFit {
        center_mhz: fit.get("f0"),
        width_mhz: w,
        amplitude: a,
        offset: fit.get("c"),
        detected: fit.converged && sa.is_finite() && a > 3.0 * sa && w < span,
        fit,
    })
}
