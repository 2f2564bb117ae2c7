//! Simulation toolkit for entangled photon holes: two coherent beams whose
//! joint amplitude vanishes whenever the detection positions coincide to
//! within a hole width, together with the field/oscillator dynamics that
//! describe how absorbing and amplifying media act on such states.
//!
//! Natural units are used throughout: hbar = 1, c = 1, and the dispersion is
//! linear (omega_k = k), so a packet's temporal and spatial widths coincide
//! (sigma_t = sigma_p).

pub mod chain;
pub mod decoherence;
pub mod dynamics;
pub mod error;
pub mod holestate;
pub mod wavepacket;

pub use error::SimError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SimError>;
