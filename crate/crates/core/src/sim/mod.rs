//! Ground-truth generators: three-level emitter kinetics, photon streams, the
//! rate-equation g² oracle, intensity traces and synthetic confocal scans.

mod kmc;
mod oracle;
pub mod presets;
mod rates;
mod scan;
mod trace;

pub use kmc::{
    emitter_detections, simulate_ensemble, simulate_stream, time_average_occupation, Gillespie,
    Jump, Level,
};
pub use oracle::g2_oracle;
pub use rates::{signal_rate, steady_state, DetectionModel, EmitterRates, PowerModel, SteadyState};
pub use scan::{synth_scan, Image, ScanSite, ScanSpec};
pub use trace::{bin_counts, poisson_trace, telegraph_trace};
