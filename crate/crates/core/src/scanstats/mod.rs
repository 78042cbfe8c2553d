//! Per-site and per-sample statistics: spots and lattice registration on scan maps,
//! saturation curves, photostability, implantation yield and depth profiles.

mod depth;
mod grid;
mod implant;
mod saturation;
mod spots;
mod stability;

pub use depth::{depth_stats, read_depth_csv, DepthStats};
pub use grid::{register_grid, GridRegistration, SiteRecord};
pub use implant::{
    ions_per_aperture, ions_per_aperture_interval, lateral_uncertainty_nm, yield_from_counts,
    yield_report, TruncatedYield, YieldReport, APERTURE_TOLERANCE_NM,
};
pub use saturation::{fit_saturation, SaturationFit};
pub use spots::{detect_spots, median_background, Spot};
pub use stability::{photostability, Photostability, BIC_MARGIN, LEVEL_SEPARATION};
