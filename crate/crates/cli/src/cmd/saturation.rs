use std::path::{Path, PathBuf};

use defect_foundry::format::fmt_sig;
use defect_foundry::scanstats::fit_saturation;
use defect_foundry::sim::presets::saturation_preset;
use defect_foundry::RngSpec;
use serde::{Deserialize, Serialize};

use crate::io::{read_columns, CliError, CliResult, Run};
use crate::Pipeline;

/// Measured points from `input_path`, or a curve synthesized from the `paper` preset
/// at `powers_mw` with relative Gaussian noise `noise_rel`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationConfig {
    pub input_path: Option<PathBuf>,
    pub preset: String,
    pub powers_mw: Vec<f64>,
    pub noise_rel: f64,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            preset: "paper".to_string(),
            powers_mw: vec![0.05, 0.1, 0.2, 0.3, 0.43, 0.6, 0.8, 1.0, 1.5, 2.0, 3.0, 5.0],
            noise_rel: 0.0,
            seed: 0,
            out_dir: None,
        }
    }
}

impl Pipeline for SaturationConfig {
    const NAME: &'static str = "saturation";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

pub fn run(cfg: SaturationConfig, mut run: Run) -> CliResult<()> {
    let points: Vec<(f64, f64)> = match &cfg.input_path {
        Some(p) => read_columns(p, &["power_mw", "counts_cps"])?
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect(),
        None => {
            if cfg.preset != "paper" {
                return Err(CliError::input(format!(
                    "unknown saturation preset {:?}; known: paper",
                    cfg.preset
                )));
            }
            let (model, eta) = saturation_preset()?;
            model.curve(
                eta,
                &cfg.powers_mw,
                cfg.noise_rel,
                RngSpec::new(cfg.seed, 0),
            )?
        }
    };
    let fit = fit_saturation(&points)?;
    if !fit.fit.converged {
        return Err(CliError::analysis(format!(
            "saturation fit did not converge: {}",
            fit.fit.message
        )));
    }
    let mut curve = String::from("power_mw,counts_cps,fit_cps\n");
    for &(p, i) in &points {
        curve.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(p),
            fmt_sig(i),
            fmt_sig(fit.intensity_at(p))
        ));
    }
    run.write("saturation_curve.csv", &curve)?;
    let name = run.report("saturation_fit", &fit)?;
    println!(
        "I_s = {:.1} cps, P0 = {:.4} mW -> {name}",
        fit.i_s_cps, fit.p0_mw
    );
    let seed = cfg.input_path.is_none().then_some(cfg.seed);
    run.finish(&cfg, seed)
}
