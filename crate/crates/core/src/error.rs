//! Error type shared by every module in the crate.

use thiserror::Error;

/// Everything that can go wrong while building states or running dynamics.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("n_modes must be at least 16 (got {n_modes})")]
    TooFewModes { n_modes: usize },

    #[error("mode grid reaches non-positive wave numbers (k_min = {k_min:.6}); raise k0 or narrow the packet")]
    NonPositiveWaveNumber { k_min: f64 },

    #[error("{name} must be positive (got {value})")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("mode grid is not uniformly spaced and ascending")]
    IrregularGrid,

    #[error("mode grid spans only {span:.4} below/above k0; packets of width sigma_p = {sigma_p} need at least 8/sigma_p = {required:.4} on each side")]
    GridSpanTooNarrow {
        span: f64,
        sigma_p: f64,
        required: f64,
    },

    #[error("x = {x:.4} lies outside the window resolvable by the grid (|x - {center:.4}| <= {window:.4}); evaluation would alias")]
    OutOfWindow { x: f64, center: f64, window: f64 },

    #[error("hole width d = {d} violates the wide-hole regime d >= 10 sigma_p = {min:.4}")]
    HoleTooNarrow { d: f64, min: f64 },

    #[error("quadrature nodes must be ascending and uniformly spaced")]
    IrregularNodes,

    #[error("node spacing {spacing:.4} is coarser than sigma_p/2 = {max:.4}; the overlap kernel would be under-resolved")]
    NodesTooCoarse { spacing: f64, max: f64 },

    #[error("norm quadrature returned {value:.6e}; the envelope vanishes on the grid or the grid is degenerate")]
    DegenerateNorm { value: f64 },

    #[error("hole state is not normalized; call normalize() first")]
    NotNormalized,

    #[error("detector window around x = {x:.4} extends past the quadrature nodes; shrink the scan range or enlarge the box")]
    DetectorOutOfRange { x: f64 },

    #[error("dt = {dt:.3e} exceeds the phase-resolution bound 0.05/max(omega) = {max_dt:.3e}")]
    StepTooLarge { dt: f64, max_dt: f64 },

    #[error("integration produced a non-finite state at t = {t:.4}")]
    Diverged { t: f64 },

    #[error("packet centered at {x1:.4} has not fully passed the oscillator at {x_i:.4} by t = {t:.4} (arrival factor {arrival:.10} < 1 - 1e-8)")]
    PacketNotPassed {
        x1: f64,
        x_i: f64,
        t: f64,
        arrival: f64,
    },

    #[error("Fock truncation {truncation} leaks: top-level population {leakage:.3e} exceeds 1e-10; raise the truncation")]
    TruncationLeak { truncation: usize, leakage: f64 },

    #[error("Fock truncation must be at least 2 (got {truncation})")]
    TruncationTooSmall { truncation: usize },

    #[error("overlap magnitude {magnitude:.12} exceeds 1; single-atom overlaps must be contractive")]
    UnphysicalOverlap { magnitude: f64 },

    #[error("{kind} power factor {value} is out of range {range}")]
    BadPowerFactor {
        kind: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("oscillator bank is empty")]
    EmptyBank,

    #[error("segment list is empty")]
    EmptyChain,

    #[error("per-oscillator excitation estimate |beta|^2 = {excitation:.3e} breaks the perturbative bound 0.01; reduce epsilon or alpha")]
    PerturbativeBound { excitation: f64 },
}
