use std::path::{Path, PathBuf};

use defect_foundry::format::fmt_sig;
use defect_foundry::scanstats::{detect_spots, register_grid, GridRegistration, Spot};
use defect_foundry::sim::{synth_scan, Image, ScanSpec};
use defect_foundry::RngSpec;
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, Run};
use crate::Pipeline;

/// Square-lattice scan; site brightness is set so the peak pixel sits `peak_snr`
/// background levels above the background.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSynth {
    pub extent_um: f64,
    pub pixel_um: f64,
    pub pitch_um: f64,
    pub rotation_deg: f64,
    pub psf_sigma_um: f64,
    pub peak_snr: f64,
    pub background_per_px: f64,
}

impl Default for ScanSynth {
    fn default() -> Self {
        Self {
            extent_um: 16.0,
            pixel_um: 0.1,
            pitch_um: 2.0,
            rotation_deg: 0.0,
            psf_sigma_um: 0.15,
            peak_snr: 4.0,
            background_per_px: 50.0,
        }
    }
}

impl ScanSynth {
    pub fn spec(&self) -> ScanSpec {
        let s = self.psf_sigma_um;
        let counts = self.peak_snr * self.background_per_px * 2.0 * std::f64::consts::PI * s * s
            / (self.pixel_um * self.pixel_um);
        ScanSpec::square_lattice(
            self.extent_um,
            self.pixel_um,
            self.pitch_um,
            self.rotation_deg,
            s,
            counts,
            self.background_per_px,
        )
    }
}

/// Image from `image_path` (CSV matrix, or `.pgm`; needs `pixel_um`), else `synth`
/// (defaults when absent).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub image_path: Option<PathBuf>,
    pub pixel_um: Option<f64>,
    pub synth: Option<ScanSynth>,
    pub min_sep_px: usize,
    pub snr_threshold: f64,
    pub pitch_um: f64,
    /// Intensity of one emitter; defaults to the median spot intensity.
    pub single_ref_counts: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            image_path: None,
            pixel_um: None,
            synth: None,
            min_sep_px: 5,
            snr_threshold: 5.0,
            pitch_um: 2.0,
            single_ref_counts: None,
            seed: 0,
            out_dir: None,
        }
    }
}

impl Pipeline for ScanConfig {
    const NAME: &'static str = "scan";
    fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }
    fn seed_mut(&mut self) -> Option<&mut u64> {
        Some(&mut self.seed)
    }
}

pub struct ScanOutcome {
    pub image: Image,
    pub synthesized: bool,
    pub spots: Vec<Spot>,
    pub grid: GridRegistration,
    pub single_ref_counts: f64,
}

#[derive(Serialize)]
struct ScanReport<'a> {
    n_spots: usize,
    n_sites: usize,
    n_occupied: usize,
    origin_um: (f64, f64),
    rotation_deg: f64,
    pitch_um: f64,
    residual_um: f64,
    single_ref_counts: f64,
    warnings: &'a [String],
}

pub fn analyze(cfg: &ScanConfig) -> CliResult<ScanOutcome> {
    let (image, synthesized) = match &cfg.image_path {
        Some(p) => {
            if cfg.synth.is_some() {
                return Err(CliError::input("give `image_path` or `synth`, not both"));
            }
            let pixel = cfg
                .pixel_um
                .ok_or_else(|| CliError::input("`pixel_um` is required with an image file"))?;
            let pgm = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            let img = if pgm {
                Image::read_pgm(p, pixel)?
            } else {
                Image::read_csv(p, pixel)?
            };
            (img, false)
        }
        None => {
            let spec = cfg.synth.clone().unwrap_or_default().spec();
            (synth_scan(&spec, RngSpec::new(cfg.seed, 0))?, true)
        }
    };
    let spots = detect_spots(&image, cfg.min_sep_px, cfg.snr_threshold);
    let mut grid = register_grid(&spots, cfg.pitch_um).map_err(CliError::analysis)?;
    let single_ref_counts = match cfg.single_ref_counts {
        Some(r) => r,
        None => {
            let mut v: Vec<f64> = spots.iter().map(|s| s.intensity).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        }
    };
    for site in grid.sites.iter_mut().filter(|s| s.intensity > 0.0) {
        site.classify(single_ref_counts)?;
    }
    Ok(ScanOutcome {
        image,
        synthesized,
        spots,
        grid,
        single_ref_counts,
    })
}

pub fn sites_csv(grid: &GridRegistration) -> String {
    let mut out = String::from("i,j,x_um,y_um,intensity,g2_zero,n_emitters\n");
    for s in &grid.sites {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.lattice_index.0,
            s.lattice_index.1,
            fmt_sig(s.position_um.0),
            fmt_sig(s.position_um.1),
            fmt_sig(s.intensity),
            s.g2_zero.map(fmt_sig).unwrap_or_default(),
            s.n_emitters
        ));
    }
    out
}

pub fn run(cfg: ScanConfig, mut run: Run) -> CliResult<()> {
    let o = analyze(&cfg)?;
    if o.synthesized {
        o.image.write_csv(&run.path("image.csv"))?;
        run.record("image.csv");
    }
    let mut spots = String::from("x_px,y_px,x_um,y_um,intensity\n");
    for s in &o.spots {
        spots.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig(s.x_px),
            fmt_sig(s.y_px),
            fmt_sig(s.x_um),
            fmt_sig(s.y_um),
            fmt_sig(s.intensity)
        ));
    }
    run.write("spots.csv", &spots)?;
    run.write("sites.csv", &sites_csv(&o.grid))?;
    let g = &o.grid;
    let report = ScanReport {
        n_spots: o.spots.len(),
        n_sites: g.sites.len(),
        n_occupied: g.sites.iter().filter(|s| s.n_emitters > 0).count(),
        origin_um: g.origin_um,
        rotation_deg: g.rotation_deg,
        pitch_um: g.pitch_um,
        residual_um: g.residual_um,
        single_ref_counts: o.single_ref_counts,
        warnings: &g.warnings,
    };
    let name = run.report("scan", &report)?;
    println!(
        "{} spots on a {:.3} deg lattice, residual {:.3} um -> {name}",
        report.n_spots, report.rotation_deg, report.residual_um
    );
    let seed = o.synthesized.then_some(cfg.seed);
    run.finish(&cfg, seed)
}
