use std::path::{Path, PathBuf};

use defect_foundry::sim::presets::hbt_preset;
use defect_foundry::sim::{
    signal_rate, simulate_ensemble, simulate_stream, DetectionModel, EmitterRates,
};
use defect_foundry::{count_rate, RngSpec};
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, Run};
use crate::Pipeline;

/// Explicit `rates` and `detection` override the preset's; with neither a preset nor
/// rates, `paper-0.5mW` is used.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub preset: Option<String>,
    pub rates: Option<EmitterRates>,
    pub detection: Option<DetectionModel>,
    pub power_mw: Option<f64>,
    /// Defaults to 60 s with a preset, 1 s otherwise.
    pub duration_s: Option<f64>,
    /// Independent emitters merged into the same channels.
    pub n_emitters: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Pipeline for SimulateConfig {
    const NAME: &'static str = "simulate";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

#[derive(Serialize)]
struct SimulateReport {
    preset: Option<String>,
    rates: EmitterRates,
    detection: DetectionModel,
    power_mw: f64,
    duration_s: f64,
    n_emitters: usize,
    counts: [usize; 2],
    rate_cps: [f64; 2],
    /// Expected detected emitter rate, both channels.
    signal_cps: f64,
    /// Expected signal fraction `S / (S + B)`, the `rho` for g2 correction.
    rho: f64,
}

pub fn run(mut cfg: SimulateConfig, mut run: Run) -> CliResult<()> {
    if cfg.preset.is_none() && cfg.rates.is_none() {
        cfg.preset = Some("paper-0.5mW".to_string());
    }
    let preset = cfg.preset.as_deref().map(hbt_preset).transpose()?;
    let rates = cfg
        .rates
        .or(preset.as_ref().map(|p| p.rates))
        .ok_or_else(|| CliError::input("config needs `rates` or `preset`"))?;
    let detection = cfg
        .detection
        .or(preset.as_ref().map(|p| p.detection))
        .ok_or_else(|| CliError::input("config needs `detection` when `rates` are given"))?;
    let duration_s = cfg
        .duration_s
        .unwrap_or(preset.as_ref().map_or(1.0, |p| p.duration_s));
    let power_mw = cfg
        .power_mw
        .unwrap_or(preset.as_ref().map_or(0.0, |p| p.power_mw));
    let n = cfg.n_emitters.unwrap_or(1);
    if n == 0 {
        return Err(CliError::input("n_emitters must be >= 1"));
    }
    let rng = RngSpec::new(cfg.seed, 0);
    let (a, b) = if n == 1 {
        simulate_stream(&rates, &detection, duration_s, rng)?
    } else {
        simulate_ensemble(&rates, &detection, n, duration_s, rng)?
    };
    let mut rate_cps = [0.0; 2];
    let mut counts = [0; 2];
    for (c, s) in [a, b].into_iter().enumerate() {
        let mut meta = s.meta.clone();
        meta.power_mw = power_mw;
        let s = s.with_meta(meta);
        rate_cps[c] = count_rate(&s);
        counts[c] = s.len();
        let stem = format!("ch{c}");
        s.save(&run.path(&stem))?;
        run.record(&format!("{stem}.csv"));
        run.record(&format!("{stem}.json"));
    }
    let signal_cps = n as f64 * signal_rate(&rates, &detection)?;
    let report = SimulateReport {
        preset: cfg.preset.clone(),
        rates,
        detection,
        power_mw,
        duration_s,
        n_emitters: n,
        counts,
        rate_cps,
        signal_cps,
        rho: signal_cps / (signal_cps + detection.background_rate),
    };
    let name = run.report("simulate", &report)?;
    println!(
        "simulated {duration_s} s: {:.0} + {:.0} cps, rho {:.4} -> {name}",
        rate_cps[0], rate_cps[1], report.rho
    );
    let seed = cfg.seed;
    run.finish(&cfg, Some(seed))
}
