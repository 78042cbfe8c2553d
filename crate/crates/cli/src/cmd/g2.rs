use std::path::{Path, PathBuf};

use defect_foundry::hbt::{
    background_correct, correlate, fit_g2, G2Fit, DEFAULT_BIN_PS, DEFAULT_WINDOW_PS,
};
use defect_foundry::{CorrelationHistogram, TimeTagStream};
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, Run};
use crate::Pipeline;

/// Either both channel files or a raw `histogram_path`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Config {
    pub ch0_path: Option<PathBuf>,
    pub ch1_path: Option<PathBuf>,
    pub histogram_path: Option<PathBuf>,
    pub bin_ps: u64,
    pub window_ps: u64,
    /// Signal fraction; 1 leaves the histogram uncorrected.
    pub rho: f64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for G2Config {
    fn default() -> Self {
        Self {
            ch0_path: None,
            ch1_path: None,
            histogram_path: None,
            bin_ps: DEFAULT_BIN_PS,
            window_ps: DEFAULT_WINDOW_PS,
            rho: 1.0,
            out_dir: None,
        }
    }
}

impl Pipeline for G2Config {
    const NAME: &'static str = "g2";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
}

#[derive(Serialize)]
struct G2Report<'a> {
    /// `single`, `multiple` or `no antibunching`.
    verdict: &'static str,
    g2_zero_raw: f64,
    g2_zero_corrected: f64,
    fit: &'a G2Fit,
}

pub fn run(cfg: G2Config, mut run: Run) -> CliResult<()> {
    let raw = match (&cfg.histogram_path, &cfg.ch0_path, &cfg.ch1_path) {
        (Some(h), None, None) => CorrelationHistogram::read_csv(h)?,
        (None, Some(a), Some(b)) => {
            let a = TimeTagStream::load(a)?;
            let b = TimeTagStream::load(b)?;
            correlate(&a, &b, cfg.bin_ps, cfg.window_ps)?
        }
        _ => {
            return Err(CliError::input(
                "give either two channel files or a histogram, not both",
            ))
        }
    };
    raw.write_csv(&run.path("g2_raw.csv"))?;
    run.record("g2_raw.csv");
    let corrected = background_correct(&raw, cfg.rho)?;
    corrected.write_csv(&run.path("g2_corrected.csv"))?;
    run.record("g2_corrected.csv");

    let outcome = fit_g2(&corrected, cfg.rho);
    let result = match &outcome {
        Ok(fit) => {
            let report = G2Report {
                verdict: fit.classification.label(),
                g2_zero_raw: raw.zero_delay(),
                g2_zero_corrected: corrected.zero_delay(),
                fit,
            };
            let name = run.report("g2_fit", &report)?;
            println!(
                "g2(0) = {:.4} corrected ({:.4} raw), tau1 = {:.3} ns: {} -> {name}",
                report.g2_zero_corrected, report.g2_zero_raw, fit.tau1_ns, report.verdict
            );
            Ok(())
        }
        Err(e) => Err(CliError::analysis(format!("g2 fit: {e}"))),
    };
    run.finish(&cfg, None)?;
    result
}
