//! Spin-3/2 Hamiltonian, transition frequencies and gated ODMR sweeps.

mod spin;
mod sweep;

pub use spin::{
    axial_transitions, eigenenergies, hermitian_eigen, numeric_transitions, spin_matrices,
    transition_frequencies, CMat4, SpinSystem, BOHR_MHZ_PER_G,
};
pub use sweep::{
    fit_contrast, fit_odmr, odmr_contrast, simulate_odmr, LineShape, OdmrFit, OdmrProtocol,
    OdmrSweep, SweepSpec, DEFAULT_ODMR_RATE_CPS,
};
