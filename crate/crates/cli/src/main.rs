//! `defect-foundry` command-line pipelines.
//!
//! Every subcommand reads one strict JSON config (`--config`), applies flag overrides,
//! writes its outputs plus `manifest.json` into `--out`, and exits with 0 on success,
//! 1 on bad input and 2 when the analysis fails.

mod cmd;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::io::{load_config, CliResult, Format, Run};

#[derive(Parser)]
#[command(
    name = "defect-foundry",
    version,
    about = "Color-center simulation and analysis pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config for the command (unknown keys are rejected)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config `out_dir`; default `.`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a two-channel HBT acquisition
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Named rate preset (paper-0.5mW, paper-2mW)
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Correlate two channel files (or load a histogram) and fit g²(τ)
    G2 {
        #[command(flatten)]
        common: Common,
        ch0: Option<PathBuf>,
        ch1: Option<PathBuf>,
        /// Raw histogram CSV instead of time-tag streams
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long)]
        bin_ps: Option<u64>,
        #[arg(long)]
        window_ps: Option<u64>,
        /// Signal fraction for background correction
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Fit a saturation curve
    Saturation {
        #[command(flatten)]
        common: Common,
        /// CSV with `power_mw,counts_cps`
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fano factor and blinking test of an intensity trace
    Stability {
        #[command(flatten)]
        common: Common,
        /// Trace CSV (`counts` column) or time-tag CSV
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        bin_ms: Option<f64>,
    },
    /// Spot detection and lattice registration of a confocal scan
    Scan {
        #[command(flatten)]
        common: Common,
        /// Image as CSV matrix or 16-bit PGM
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        pixel_um: Option<f64>,
        #[arg(long)]
        pitch_um: Option<f64>,
    },
    /// Poisson conversion-yield report
    Yield {
        #[command(flatten)]
        common: Common,
        /// Site table CSV with an `n_emitters` column
        #[arg(long)]
        input: Option<PathBuf>,
        /// Implantation fluence, ions/cm²
        #[arg(long)]
        fluence: Option<f64>,
        #[arg(long)]
        aperture_nm: Option<f64>,
    },
    /// Weighted mean depth and straggle of an implantation profile
    Depth {
        #[command(flatten)]
        common: Common,
        /// CSV with `depth_nm,weight`
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Simulate and fit a gated ODMR sweep
    Odmr {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a previously written ODMR sweep CSV
    OdmrFit {
        #[command(flatten)]
        common: Common,
        input: Option<PathBuf>,
    },
}

/// A command's config document.
pub trait Pipeline: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;
    fn out_dir(&self) -> Option<&Path>;
    fn seed_mut(&mut self) -> Option<&mut u64> {
        None
    }
}

fn prepare<C: Pipeline>(common: &Common) -> CliResult<(C, Run)> {
    let mut cfg: C = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        match cfg.seed_mut() {
            Some(s) => *s = seed,
            None => eprintln!("note: --seed has no effect on `{}`", C::NAME),
        }
    }
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.out_dir().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let run = Run::new(C::NAME, &dir, common.format)?;
    Ok((cfg, run))
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate {
            common,
            preset,
            duration_s,
        } => {
            let (mut cfg, run) = prepare::<cmd::simulate::SimulateConfig>(&common)?;
            set_opt(&mut cfg.preset, preset);
            set_opt(&mut cfg.duration_s, duration_s);
            cmd::simulate::run(cfg, run)
        }
        Command::G2 {
            common,
            ch0,
            ch1,
            histogram,
            bin_ps,
            window_ps,
            rho,
        } => {
            let (mut cfg, run) = prepare::<cmd::g2::G2Config>(&common)?;
            set_opt(&mut cfg.ch0_path, ch0);
            set_opt(&mut cfg.ch1_path, ch1);
            set_opt(&mut cfg.histogram_path, histogram);
            set(&mut cfg.bin_ps, bin_ps);
            set(&mut cfg.window_ps, window_ps);
            set(&mut cfg.rho, rho);
            cmd::g2::run(cfg, run)
        }
        Command::Saturation { common, input } => {
            let (mut cfg, run) = prepare::<cmd::saturation::SaturationConfig>(&common)?;
            set_opt(&mut cfg.input_path, input);
            cmd::saturation::run(cfg, run)
        }
        Command::Stability {
            common,
            input,
            bin_ms,
        } => {
            let (mut cfg, run) = prepare::<cmd::stability::StabilityConfig>(&common)?;
            set_opt(&mut cfg.input_path, input);
            set(&mut cfg.bin_ms, bin_ms);
            cmd::stability::run(cfg, run)
        }
        Command::Scan {
            common,
            input,
            pixel_um,
            pitch_um,
        } => {
            let (mut cfg, run) = prepare::<cmd::scan::ScanConfig>(&common)?;
            set_opt(&mut cfg.image_path, input);
            set_opt(&mut cfg.pixel_um, pixel_um);
            set(&mut cfg.pitch_um, pitch_um);
            cmd::scan::run(cfg, run)
        }
        Command::Yield {
            common,
            input,
            fluence,
            aperture_nm,
        } => {
            let (mut cfg, run) = prepare::<cmd::yields::YieldConfig>(&common)?;
            set_opt(&mut cfg.sites_path, input);
            set_opt(&mut cfg.fluence_per_cm2, fluence);
            set_opt(&mut cfg.aperture_nm, aperture_nm);
            cmd::yields::run(cfg, run)
        }
        Command::Depth { common, input } => {
            let (mut cfg, run) = prepare::<cmd::depth::DepthConfig>(&common)?;
            set_opt(&mut cfg.input_path, input);
            cmd::depth::run(cfg, run)
        }
        Command::Odmr { common } => {
            let (cfg, run) = prepare::<cmd::odmr::OdmrConfig>(&common)?;
            cmd::odmr::run(cfg, run)
        }
        Command::OdmrFit { common, input } => {
            let (mut cfg, run) = prepare::<cmd::odmr::OdmrFitConfig>(&common)?;
            set_opt(&mut cfg.input_path, input);
            cmd::odmr::run_fit(cfg, run)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
