use std::fs;
use std::path::{Path, PathBuf};

use defect_foundry::format::fmt_sig;
use defect_foundry::scanstats::photostability;
use defect_foundry::sim::{bin_counts, poisson_trace, telegraph_trace};
use defect_foundry::{RngSpec, TimeTagStream};
use serde::{Deserialize, Serialize};

use crate::io::{read_columns, CliError, CliResult, Run};
use crate::Pipeline;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSynth {
    Poisson {
        rate_cps: f64,
        duration_s: f64,
    },
    /// Alternates between two rates every `switch_s`, starting low.
    Telegraph {
        low_cps: f64,
        high_cps: f64,
        switch_s: f64,
        duration_s: f64,
    },
}

/// `input_path` is a trace CSV with a `counts` column (bins of `bin_ms`) or a time-tag
/// CSV (`channel,t_ps` with sidecar) that gets binned; otherwise `synth` is simulated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub input_path: Option<PathBuf>,
    pub bin_ms: f64,
    pub synth: Option<TraceSynth>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            bin_ms: 10.0,
            synth: None,
            seed: 0,
            out_dir: None,
        }
    }
}

impl Pipeline for StabilityConfig {
    const NAME: &'static str = "stability";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

fn load_trace(path: &Path, bin_ms: f64) -> CliResult<Vec<u64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if text.lines().next().map(str::trim) == Some("channel,t_ps") {
        return Ok(bin_counts(&TimeTagStream::load(path)?, bin_ms)?);
    }
    read_columns(path, &["counts"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let c = r[0];
            if c >= 0.0 && c.fract() == 0.0 {
                Ok(c as u64)
            } else {
                Err(CliError::input(format!(
                    "{}:{}: counts must be non-negative integers",
                    path.display(),
                    i + 2
                )))
            }
        })
        .collect()
}

pub fn run(cfg: StabilityConfig, mut run: Run) -> CliResult<()> {
    let rng = RngSpec::new(cfg.seed, 0);
    let trace = match (&cfg.input_path, &cfg.synth) {
        (Some(p), None) => load_trace(p, cfg.bin_ms)?,
        (
            None,
            Some(TraceSynth::Poisson {
                rate_cps,
                duration_s,
            }),
        ) => {
            let n = (duration_s * 1e3 / cfg.bin_ms).floor() as usize;
            poisson_trace(*rate_cps, cfg.bin_ms, n, rng)?
        }
        (
            None,
            Some(TraceSynth::Telegraph {
                low_cps,
                high_cps,
                switch_s,
                duration_s,
            }),
        ) => telegraph_trace(*low_cps, *high_cps, *switch_s, cfg.bin_ms, *duration_s, rng)?,
        (None, None) => return Err(CliError::input("config needs `input_path` or `synth`")),
        (Some(_), Some(_)) => {
            return Err(CliError::input("give `input_path` or `synth`, not both"))
        }
    };
    let mut csv = String::from("t_s,counts\n");
    for (i, c) in trace.iter().enumerate() {
        csv.push_str(&format!("{},{c}\n", fmt_sig(i as f64 * cfg.bin_ms * 1e-3)));
    }
    run.write("trace.csv", &csv)?;
    let stats = photostability(&trace, cfg.bin_ms)?;
    let name = run.report("stability", &stats)?;
    println!(
        "fano = {:.4}, blinking = {} -> {name}",
        stats.fano, stats.blinking
    );
    let seed = cfg.synth.is_some().then_some(cfg.seed);
    run.finish(&cfg, seed)
}
