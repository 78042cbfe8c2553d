//! Shared containers: time-tag streams, correlation histograms, fit results and RNG seeds.

mod fit;
mod histogram;
mod rng;
mod timetag;

pub use fit::FitResult;
pub use histogram::CorrelationHistogram;
pub use rng::{RngSpec, SimRng};
pub use timetag::{count_rate, merge_streams, StreamMeta, TimeTag, TimeTagStream, PS_PER_S};
