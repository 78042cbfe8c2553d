use std::path::{Path, PathBuf};

use defect_foundry::format::fmt_sig;
use defect_foundry::odmr::{
    fit_odmr, simulate_odmr, transition_frequencies, LineShape, OdmrProtocol, OdmrSweep,
    SpinSystem, SweepSpec, DEFAULT_ODMR_RATE_CPS,
};
use defect_foundry::{FitResult, RngSpec};
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, Run};
use crate::Pipeline;

/// Defaults reproduce the gated protocol around a 68.4 MHz zero-field line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrConfig {
    pub spin: SpinSystem,
    pub sweep: SweepSpec,
    pub line: LineShape,
    pub rate_cps: f64,
    pub protocol: OdmrProtocol,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for OdmrConfig {
    fn default() -> Self {
        Self {
            spin: SpinSystem::new(34.2, [0.0; 3]),
            sweep: SweepSpec::default(),
            line: LineShape::default(),
            rate_cps: DEFAULT_ODMR_RATE_CPS,
            protocol: OdmrProtocol::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

impl Pipeline for OdmrConfig {
    const NAME: &'static str = "odmr";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdmrFitConfig {
    pub input_path: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Pipeline for OdmrFitConfig {
    const NAME: &'static str = "odmr-fit";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
}

#[derive(Serialize)]
struct OdmrReport {
    detected: bool,
    center_mhz: f64,
    width_mhz: f64,
    amplitude: f64,
    amplitude_stderr: f64,
    offset: f64,
    n_points: usize,
    fit: FitResult,
}

/// Fit and write `odmr_fit`; both subcommands go through here so a refit of the
/// written CSV reproduces the report exactly.
fn fit_and_report(sweep: &OdmrSweep, run: &mut Run) -> CliResult<()> {
    let f = fit_odmr(sweep).map_err(CliError::analysis)?;
    let report = OdmrReport {
        detected: f.detected,
        center_mhz: f.center_mhz,
        width_mhz: f.width_mhz,
        amplitude: f.amplitude,
        amplitude_stderr: f.fit.stderr_of("A"),
        offset: f.offset,
        n_points: sweep.contrast.iter().filter(|c| c.is_some()).count(),
        fit: f.fit,
    };
    let name = run.report("odmr_fit", &report)?;
    if report.detected {
        println!(
            "resonance at {:.3} MHz, width {:.2} MHz -> {name}",
            report.center_mhz, report.width_mhz
        );
    } else {
        println!("no resonance detected -> {name}");
    }
    Ok(())
}

pub fn run(cfg: OdmrConfig, mut run: Run) -> CliResult<()> {
    let sweep = simulate_odmr(
        &cfg.spin,
        &cfg.sweep,
        &cfg.line,
        cfg.rate_cps,
        &cfg.protocol,
        RngSpec::new(cfg.seed, 0),
    )?;
    let path = run.path("odmr_sweep.csv");
    sweep.write_csv(&path)?;
    run.record("odmr_sweep.csv");
    let mut lines = String::from("freq_mhz\n");
    for f in transition_frequencies(&cfg.spin) {
        lines.push_str(&format!("{}\n", fmt_sig(f)));
    }
    run.write("odmr_transitions.csv", &lines)?;
    let result = fit_and_report(&OdmrSweep::read_csv(&path)?, &mut run);
    run.finish(&cfg, Some(cfg.seed))?;
    result
}

pub fn run_fit(cfg: OdmrFitConfig, mut run: Run) -> CliResult<()> {
    let path = cfg
        .input_path
        .as_ref()
        .ok_or_else(|| CliError::input("need a sweep CSV (`input_path` or argument)"))?;
    let result = fit_and_report(&OdmrSweep::read_csv(path)?, &mut run);
    run.finish(&cfg, None)?;
    result
}
