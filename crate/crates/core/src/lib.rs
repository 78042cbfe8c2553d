//! Simulation and analysis toolkit for single color-center characterization.
//!
//! The crate is split by stage of the measurement chain:
//!
//! * [`core`]: time tags, correlation histograms, fit results and the seeded RNG contract
//! * [`numfit`]: damped Gauss–Newton least squares and Poisson estimators
//! * [`sim`]: three-level emitter kinetics, photon streams and synthetic confocal scans
//! * [`hbt`]: coincidence histograms, background correction and g² fitting
//! * [`scanstats`]: spot finding, lattice registration, saturation, photostability,
//!   yield and depth statistics
//! * [`odmr`]: spin-3/2 Hamiltonian, transition frequencies and ODMR sweeps
//!
//! Units are fixed throughout: integer picoseconds for time tags, nanoseconds for
//! kinetic rates (1/ns), mW for optical power, counts/s for count rates, MHz for
//! frequencies and gauss for magnetic fields.

pub mod core;
pub mod hbt;
pub mod numfit;
pub mod odmr;
pub mod scanstats;
pub mod sim;

mod error;
pub mod format;
pub mod parallel;

pub use crate::core::{
    count_rate, merge_streams, CorrelationHistogram, FitResult, RngSpec, StreamMeta, TimeTag,
    TimeTagStream,
};
pub use crate::error::{Error, Result};
