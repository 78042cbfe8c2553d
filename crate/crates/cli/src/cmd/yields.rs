use std::path::{Path, PathBuf};

use defect_foundry::scanstats::{
    ions_per_aperture, ions_per_aperture_interval, yield_from_counts, APERTURE_TOLERANCE_NM,
};
use serde::{Deserialize, Serialize};

use super::scan::{analyze, ScanConfig};
use crate::io::{read_columns, CliError, CliResult, Run};
use crate::Pipeline;

/// Emitter counts come from exactly one of `sites_path` (CSV with an `n_emitters`
/// column), `n_emitters`, or a `scan` pipeline. The `paper` preset supplies
/// fluence 2.6e11 cm⁻², a 65 nm aperture and its ±10 nm tolerance.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YieldConfig {
    pub preset: Option<String>,
    pub sites_path: Option<PathBuf>,
    pub n_emitters: Option<Vec<u64>>,
    pub scan: Option<ScanConfig>,
    pub fluence_per_cm2: Option<f64>,
    pub aperture_nm: Option<f64>,
    pub aperture_tolerance_nm: Option<f64>,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Pipeline for YieldConfig {
    const NAME: &'static str = "yield";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
}

fn counts_from_table(path: &Path) -> CliResult<Vec<u64>> {
    read_columns(path, &["n_emitters"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r[0] >= 0.0 && r[0].fract() == 0.0 {
                Ok(r[0] as u64)
            } else {
                Err(CliError::input(format!(
                    "{}:{}: n_emitters must be a non-negative integer",
                    path.display(),
                    i + 2
                )))
            }
        })
        .collect()
}

pub fn run(mut cfg: YieldConfig, mut run: Run) -> CliResult<()> {
    match cfg.preset.as_deref() {
        None => {}
        Some("paper") => {
            cfg.fluence_per_cm2.get_or_insert(2.6e11);
            cfg.aperture_nm.get_or_insert(65.0);
            cfg.aperture_tolerance_nm
                .get_or_insert(APERTURE_TOLERANCE_NM);
        }
        Some(other) => {
            return Err(CliError::input(format!(
                "unknown yield preset {other:?}; known: paper"
            )))
        }
    }
    let fluence = cfg
        .fluence_per_cm2
        .ok_or_else(|| CliError::input("need `fluence_per_cm2` (or --fluence)"))?;
    let aperture = cfg
        .aperture_nm
        .ok_or_else(|| CliError::input("need `aperture_nm` (or --aperture-nm)"))?;
    let sources =
        cfg.sites_path.is_some() as u8 + cfg.n_emitters.is_some() as u8 + cfg.scan.is_some() as u8;
    if sources != 1 {
        return Err(CliError::input(
            "give exactly one of `sites_path`, `n_emitters` or `scan`",
        ));
    }
    let counts = if let Some(p) = &cfg.sites_path {
        counts_from_table(p)?
    } else if let Some(c) = &cfg.n_emitters {
        c.clone()
    } else {
        let scan = cfg.scan.as_ref().expect("checked above");
        let o = analyze(scan)?;
        run.write("sites.csv", &super::scan::sites_csv(&o.grid))?;
        o.grid.sites.iter().map(|s| s.n_emitters as u64).collect()
    };
    if counts.is_empty() {
        return Err(CliError::analysis("site table is empty"));
    }
    let ions = ions_per_aperture(fluence, aperture)?;
    let mut report = yield_from_counts(&counts, ions).map_err(CliError::analysis)?;
    if let Some(tol) = cfg.aperture_tolerance_nm {
        let (lo, _, hi) = ions_per_aperture_interval(fluence, aperture, tol)?;
        report.ions_per_aperture_range = Some((lo, hi));
    }
    let name = run.report("yield", &report)?;
    println!(
        "lambda = {:.4} over {} sites, {:.3} ions/aperture, conversion {:.4} -> {name}",
        report.lambda_hat, report.n_sites, report.ions_per_aperture, report.conversion_yield
    );
    let seed = cfg.scan.as_ref().map(|s| s.seed);
    run.finish(&cfg, seed)
}
