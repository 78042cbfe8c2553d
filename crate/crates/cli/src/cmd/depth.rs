use std::path::{Path, PathBuf};

use defect_foundry::format::fmt_sig;
use defect_foundry::scanstats::{depth_stats, read_depth_csv};
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, Run};
use crate::Pipeline;

/// Gaussian of the given mean and width, cut at zero depth and sampled every `step_nm`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthSynth {
    pub mean_nm: f64,
    pub sigma_nm: f64,
    pub step_nm: f64,
    pub max_nm: f64,
}

impl Default for DepthSynth {
    fn default() -> Self {
        Self {
            mean_nm: 42.0,
            sigma_nm: 35.0,
            step_nm: 0.25,
            max_nm: 400.0,
        }
    }
}

impl DepthSynth {
    pub fn profile(&self) -> CliResult<Vec<(f64, f64)>> {
        if !(self.step_nm > 0.0 && self.sigma_nm > 0.0 && self.max_nm > self.step_nm) {
            return Err(CliError::input(
                "need step_nm > 0, sigma_nm > 0, max_nm > step_nm",
            ));
        }
        let n = (self.max_nm / self.step_nm).floor() as usize;
        Ok((0..=n)
            .map(|i| {
                let z = i as f64 * self.step_nm;
                let u = (z - self.mean_nm) / self.sigma_nm;
                // trapezoid end weights keep the sampled moments second-order accurate
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                (z, w * (-0.5 * u * u).exp())
            })
            .collect())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthConfig {
    pub input_path: Option<PathBuf>,
    pub synth: Option<DepthSynth>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Pipeline for DepthConfig {
    const NAME: &'static str = "depth";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
}

#[derive(Serialize)]
struct DepthReport {
    mean_depth_nm: f64,
    straggle_nm: f64,
    total_weight: f64,
    n_rows: usize,
}

pub fn run(cfg: DepthConfig, mut run: Run) -> CliResult<()> {
    let profile = match (&cfg.input_path, &cfg.synth) {
        (Some(p), None) => read_depth_csv(p)?,
        (None, Some(s)) => {
            let prof = s.profile()?;
            let mut csv = String::from("depth_nm,weight\n");
            for (z, w) in &prof {
                csv.push_str(&format!("{},{}\n", fmt_sig(*z), fmt_sig(*w)));
            }
            run.write("profile.csv", &csv)?;
            prof
        }
        _ => {
            return Err(CliError::input(
                "give exactly one of `input_path` or `synth`",
            ))
        }
    };
    let s = depth_stats(&profile)?;
    let report = DepthReport {
        mean_depth_nm: s.mean_depth_nm,
        straggle_nm: s.straggle_nm,
        total_weight: s.total_weight,
        n_rows: profile.len(),
    };
    let name = run.report("depth", &report)?;
    println!(
        "mean depth {:.2} nm, straggle {:.2} nm -> {name}",
        report.mean_depth_nm, report.straggle_nm
    );
    run.finish(&cfg, None)
}
