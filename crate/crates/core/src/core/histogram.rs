use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::fmt_sig;

/// Binned coincidence counts over delays `[-window, +window]`.
///
/// Bin `k` (for `k` in `-K..=K`, `K = window / bin_width`) is centered at `k * bin_width`.
/// `bins[k + K] = raw_pairs[k + K] / norm_factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width: u64,
    pub window: u64,
    pub bins: Vec<f64>,
    pub raw_pairs: Vec<u64>,
    pub norm_factor: f64,
    /// Signal fraction used if `bins` have been background corrected.
    pub corrected_rho: Option<f64>,
}

impl CorrelationHistogram {
    /// Half-width of the bin index range.
    pub fn half_bins(&self) -> usize {
        self.bins.len() / 2
    }

    pub fn center_index(&self) -> usize {
        self.half_bins()
    }

    /// Delay at the center of bin `i`, in picoseconds.
    pub fn tau_ps(&self, i: usize) -> i64 {
        (i as i64 - self.half_bins() as i64) * self.bin_width as i64
    }

    pub fn taus_ps(&self) -> Vec<i64> {
        (0..self.bins.len()).map(|i| self.tau_ps(i)).collect()
    }

    pub fn taus_ns(&self) -> Vec<f64> {
        (0..self.bins.len())
            .map(|i| self.tau_ps(i) as f64 * 1e-3)
            .collect()
    }

    /// Normalized value at τ = 0.
    pub fn zero_delay(&self) -> f64 {
        self.bins[self.center_index()]
    }

    /// One-sigma Poisson error of each normalized bin (in the units of `bins`,
    /// including any background-correction scaling).
    pub fn bin_errors(&self) -> Vec<f64> {
        let scale = self.corrected_rho.map_or(1.0, |r| 1.0 / (r * r));
        self.raw_pairs
            .iter()
            .map(|&n| (n.max(1) as f64).sqrt() / self.norm_factor * scale)
            .collect()
    }

    /// `tau_ps,N_norm,raw_pairs`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "tau_ps,N_norm,raw_pairs")?;
        for i in 0..self.bins.len() {
            writeln!(
                out,
                "{},{},{}",
                self.tau_ps(i),
                fmt_sig(self.bins[i]),
                self.raw_pairs[i]
            )?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Read a histogram CSV. `norm_factor` is recovered from the first bin with pairs.
    pub fn read_csv(path: &Path) -> Result<Self> {
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
        if headers.iter().collect::<Vec<_>>() != ["tau_ps", "N_norm", "raw_pairs"] {
            return Err(err(1, "expected header `tau_ps,N_norm,raw_pairs`".into()));
        }
        let mut taus = Vec::new();
        let mut bins = Vec::new();
        let mut raw = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| rec.get(i).ok_or_else(|| err(line, "missing field".into()));
            taus.push(
                field(0)?
                    .parse::<i64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
            bins.push(
                field(1)?
                    .parse::<f64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
            raw.push(
                field(2)?
                    .parse::<u64>()
                    .map_err(|e| err(line, e.to_string()))?,
            );
        }
        if taus.len() < 3 || taus.len() % 2 == 0 {
            return Err(err(
                0,
                "histogram needs an odd number (>= 3) of bins".into(),
            ));
        }
        let bin_width = (taus[1] - taus[0]) as u64;
        let half = taus.len() / 2;
        if taus[half] != 0 || bin_width == 0 {
            return Err(err(0, "histogram is not centered on tau = 0".into()));
        }
        let norm_factor = raw
            .iter()
            .zip(&bins)
            .find(|(&r, &b)| r > 0 && b > 0.0)
            .map(|(&r, &b)| r as f64 / b)
            .unwrap_or(1.0);
        Ok(Self {
            bin_width,
            window: bin_width * half as u64,
            bins,
            raw_pairs: raw,
            norm_factor,
            corrected_rho: None,
        })
    }
}
