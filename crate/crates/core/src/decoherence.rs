//! Visibility loss from photons absorbed by atoms versus photons removed by
//! beam splitters.
//!
//! When a lost photon excites an atom, the record it leaves decays with the
//! atom's coherence time: the interference amplitude after `n_L` absorbed
//! photons falls as `exp(-n_L dt / tau_D)`, where `dt` is the interferometer
//! imbalance and `tau_D` the atomic coherence time. A beam-splitter tap, by
//! contrast, diverts a permanent coherent record and suppresses visibility
//! by `exp(-n_bar_s)` regardless of any coherence time, so the two loss
//! mechanisms differ by the enormous factor `exp(n (1 - dt/tau_D))` at equal
//! mean photons removed. This module evaluates both formulas, the photon
//! budget they imply, and the atomic inner products underneath them.

use num_complex::Complex64;

use crate::{Result, SimError};

/// Tolerance on single-atom overlap magnitudes: values above `1 + MAG_SLOP`
/// are rejected as unphysical.
pub const MAG_SLOP: f64 = 1e-12;

/// Interferometer-plus-atoms decoherence parameters.
#[derive(Debug, Clone, Copy)]
pub struct DecoherenceModel {
    tau_d: f64,
    delta_t: f64,
    n_lost: u64,
    contrast: f64,
}

impl DecoherenceModel {
    /// Builds a model with the interferometer constant left at its default
    /// of 1.
    pub fn new(tau_d: f64, delta_t: f64, n_lost: u64) -> Result<Self> {
        Self::with_contrast(tau_d, delta_t, n_lost, 1.0)
    }

    /// Builds a model with an explicit interferometer constant `c_i`.
    pub fn with_contrast(tau_d: f64, delta_t: f64, n_lost: u64, contrast: f64) -> Result<Self> {
        if !(tau_d > 0.0) {
            return Err(SimError::NonPositiveParameter {
                name: "tau_d",
                value: tau_d,
            });
        }
        if !(delta_t >= 0.0) {
            return Err(SimError::NonPositiveParameter {
                name: "delta_t",
                value: delta_t,
            });
        }
        if !(contrast > 0.0) {
            return Err(SimError::NonPositiveParameter {
                name: "contrast",
                value: contrast,
            });
        }
        Ok(Self {
            tau_d,
            delta_t,
            n_lost,
            contrast,
        })
    }

    /// Atomic coherence time.
    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    /// Interferometer path imbalance.
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    /// Number of photons absorbed along the way.
    pub fn n_lost(&self) -> u64 {
        self.n_lost
    }

    /// Interferometer constant `c_i`.
    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// The dimensionless decay ratio `R = delta_t / tau_d` per lost photon.
    pub fn loss_ratio(&self) -> f64 {
        self.delta_t / self.tau_d
    }

    /// Amplitude overlap a single excited atom retains across the
    /// interferometer imbalance: `exp(-delta_t / 2 tau_d)`. Its square is
    /// the population decay `exp(-delta_t / tau_d)` of the excited state.
    pub fn per_atom_overlap(&self) -> f64 {
        (-self.delta_t / (2.0 * self.tau_d)).exp()
    }
}

/// Interference-fringe amplitude after `n_lost` photons have been absorbed:
/// `c_i * exp(-n_lost * delta_t / tau_d)`.
pub fn visibility_amplitude(model: &DecoherenceModel) -> f64 {
    let exponent = (model.n_lost as f64 * model.delta_t) / model.tau_d;
    model.contrast * (-exponent).exp()
}

/// Largest number of absorbed photons that keeps `exp(-n R)` at or above
/// `visibility_floor`: `floor(-ln(floor) / R)`, adjusted so the defining
/// inequality holds exactly in floating point.
pub fn loss_budget(loss_ratio: f64, visibility_floor: f64) -> Result<u64> {
    if !(loss_ratio > 0.0) {
        return Err(SimError::NonPositiveParameter {
            name: "loss_ratio",
            value: loss_ratio,
        });
    }
    if !(visibility_floor > 0.0 && visibility_floor < 1.0) {
        return Err(SimError::BadPowerFactor {
            kind: "visibility floor",
            value: visibility_floor,
            range: "(0, 1)",
        });
    }
    let keeps = |n: u64| (-(n as f64) * loss_ratio).exp() >= visibility_floor;
    let mut n = (-visibility_floor.ln() / loss_ratio).floor().max(0.0) as u64;
    while keeps(n + 1) {
        n += 1;
    }
    while n > 0 && !keeps(n) {
        n -= 1;
    }
    Ok(n)
}

/// Product of single-atom overlaps `<psi_i(t + dt) | psi_i(t)>`. An empty
/// list (no excited atoms) gives 1; any factor with magnitude beyond
/// `1 + MAG_SLOP` is rejected as unphysical.
pub fn atomic_inner_product(per_atom_overlaps: &[Complex64]) -> Result<Complex64> {
    let mut product = Complex64::new(1.0, 0.0);
    for &m in per_atom_overlaps {
        let mag = m.norm();
        if mag > 1.0 + MAG_SLOP {
            return Err(SimError::UnphysicalOverlap { magnitude: mag });
        }
        product *= m;
    }
    Ok(product)
}

/// Overlap of two coherent states,
/// `exp(conj(a) b - |a|^2 / 2 - |b|^2 / 2)`; used to turn oscillator
/// amplitudes from the dynamics module into single-atom overlap factors.
pub fn coherent_state_overlap(a: Complex64, b: Complex64) -> Complex64 {
    let exponent = a.conj() * b - Complex64::new(0.5 * (a.norm_sqr() + b.norm_sqr()), 0.0);
    exponent.exp()
}

/// A beam splitter diverting a coherent amplitude `alpha_s` out of the
/// channel.
#[derive(Debug, Clone, Copy)]
pub struct BeamSplitterTap {
    alpha_s: Complex64,
    n_bar_s: f64,
}

impl BeamSplitterTap {
    /// Tap defined by the diverted coherent amplitude.
    pub fn new(alpha_s: Complex64) -> Self {
        Self {
            alpha_s,
            n_bar_s: alpha_s.norm_sqr(),
        }
    }

    /// Tap defined by its mean diverted photon number (real amplitude).
    pub fn from_mean_photons(n_bar_s: f64) -> Result<Self> {
        if !(n_bar_s >= 0.0) {
            return Err(SimError::NonPositiveParameter {
                name: "n_bar_s",
                value: n_bar_s,
            });
        }
        Ok(Self {
            alpha_s: Complex64::new(n_bar_s.sqrt(), 0.0),
            n_bar_s,
        })
    }

    pub fn alpha_s(&self) -> Complex64 {
        self.alpha_s
    }

    /// Mean number of photons diverted, `|alpha_s|^2`.
    pub fn n_bar_s(&self) -> f64 {
        self.n_bar_s
    }
}

/// Visibility surviving a beam-splitter tap: `exp(-n_bar_s)`.
pub fn beamsplitter_visibility(tap: &BeamSplitterTap) -> f64 {
    (-tap.n_bar_s).exp()
}
