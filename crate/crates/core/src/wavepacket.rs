//! Discretized Gaussian wave packets on a uniform wave-number grid.
//!
//! A packet centered at `x1` is the mode superposition
//! `sum_k c_k(x1) e^{ikx} = c0 e^{ik0 x} e^{-(x-x1)^2 / 2 sigma_p^2}`,
//! i.e. a fixed carrier `e^{ik0 x}` under a translatable Gaussian envelope.
//! The mode coefficients are
//! `c_k(x1) = c0' e^{-i(k-k0)x1} e^{-sigma_p^2 (k-k0)^2 / 2}`
//! with `c0'` real and fixed by the discrete norm `sum_k |c_k|^2 = 1`.
//! Only the envelope carries the center: packets formed at different `x1`
//! share the carrier phase, the way pulses carved from one continuous-wave
//! beam do. This is what makes absorption amplitudes independent of `x1`.

use num_complex::Complex64;

use crate::{Result, SimError};

/// Half-width of the wave-number window in units of 1/sigma_p. At 8/sigma_p
/// the clipped Gaussian tail is exp(-32) ~ 1e-14 in amplitude.
pub const GRID_HALF_SPAN_SIGMAS: f64 = 8.0;

/// Minimum number of grid points accepted by [`make_mode_grid`].
pub const MIN_MODES: usize = 16;

/// Uniform grid of wave numbers `k` carrying a packet family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    k_values: Vec<f64>,
    delta_k: f64,
    k0: f64,
}

impl ModeGrid {
    pub fn k_values(&self) -> &[f64] {
        &self.k_values
    }

    pub fn delta_k(&self) -> f64 {
        self.delta_k
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn n_modes(&self) -> usize {
        self.k_values.len()
    }

    /// Largest mode frequency on the grid (omega_k = k).
    pub fn max_omega(&self) -> f64 {
        *self.k_values.last().expect("grid is non-empty")
    }

    /// Half-width of the spatial window the grid can represent without
    /// aliasing. Structure further than this from a packet center wraps
    /// around (the grid is effectively a periodic box of length 2pi/delta_k).
    pub fn spatial_window(&self) -> f64 {
        std::f64::consts::PI / self.delta_k
    }

    /// Checks uniform ascending spacing, positivity, and that the span covers
    /// at least [`GRID_HALF_SPAN_SIGMAS`]`/sigma_p` on each side of k0.
    pub fn validate_for(&self, sigma_p: f64) -> Result<()> {
        if sigma_p <= 0.0 {
            return Err(SimError::NonPositiveParameter {
                name: "sigma_p",
                value: sigma_p,
            });
        }
        if self.k_values.len() < MIN_MODES {
            return Err(SimError::TooFewModes {
                n_modes: self.k_values.len(),
            });
        }
        let k_min = self.k_values[0];
        if k_min <= 0.0 {
            return Err(SimError::NonPositiveWaveNumber { k_min });
        }
        let tol = 1e-9 * self.delta_k;
        for pair in self.k_values.windows(2) {
            if (pair[1] - pair[0] - self.delta_k).abs() > tol {
                return Err(SimError::IrregularGrid);
            }
        }
        let required = GRID_HALF_SPAN_SIGMAS / sigma_p;
        let span = (self.k0 - k_min).min(self.max_omega() - self.k0);
        if span < required * (1.0 - 1e-9) {
            return Err(SimError::GridSpanTooNarrow {
                span,
                sigma_p,
                required,
            });
        }
        Ok(())
    }
}

/// Builds the uniform grid spanning `k0 - 8/sigma_p ..= k0 + 8/sigma_p`.
///
/// Errors if the span would reach non-positive wave numbers or if fewer than
/// [`MIN_MODES`] points are requested.
pub fn make_mode_grid(k0: f64, sigma_p: f64, n_modes: usize) -> Result<ModeGrid> {
    if sigma_p <= 0.0 {
        return Err(SimError::NonPositiveParameter {
            name: "sigma_p",
            value: sigma_p,
        });
    }
    if k0 <= 0.0 {
        return Err(SimError::NonPositiveParameter {
            name: "k0",
            value: k0,
        });
    }
    if n_modes < MIN_MODES {
        return Err(SimError::TooFewModes { n_modes });
    }
    let half_span = GRID_HALF_SPAN_SIGMAS / sigma_p;
    let k_min = k0 - half_span;
    if k_min <= 0.0 {
        return Err(SimError::NonPositiveWaveNumber { k_min });
    }
    let delta_k = 2.0 * half_span / (n_modes - 1) as f64;
    let k_values = (0..n_modes).map(|j| k_min + j as f64 * delta_k).collect();
    Ok(ModeGrid {
        k_values,
        delta_k,
        k0,
    })
}

/// A normalized Gaussian packet on a [`ModeGrid`].
#[derive(Debug, Clone)]
pub struct WavePacket {
    grid: ModeGrid,
    center: f64,
    sigma_p: f64,
    /// Real peak amplitude: `packet_envelope` at the center is `c0 e^{ik0 x}`.
    c0: f64,
    coeffs: Vec<Complex64>,
}

impl WavePacket {
    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `sum_k |c_k|^2`; equals 1 by construction.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Builds the normalized coefficient vector of a packet centered at `x1`.
pub fn gaussian_coefficients(grid: &ModeGrid, x1: f64, sigma_p: f64) -> Result<WavePacket> {
    grid.validate_for(sigma_p)?;
    let k0 = grid.k0();
    let gauss: Vec<f64> = grid
        .k_values()
        .iter()
        .map(|&k| {
            let q = (k - k0) * sigma_p;
            (-0.5 * q * q).exp()
        })
        .collect();
    let norm: f64 = gauss.iter().map(|g| g * g).sum();
    let c0_prime = 1.0 / norm.sqrt();
    let coeffs = grid
        .k_values()
        .iter()
        .zip(&gauss)
        .map(|(&k, &g)| {
            let phase = -(k - k0) * x1;
            Complex64::from_polar(c0_prime * g, phase)
        })
        .collect();
    let c0 = c0_prime * gauss.iter().sum::<f64>();
    Ok(WavePacket {
        grid: grid.clone(),
        center: x1,
        sigma_p,
        c0,
        coeffs,
    })
}

/// Evaluates `sum_k c_k e^{ikx}` at position `x`.
///
/// Errors when `x` falls outside the grid's alias-free window around the
/// packet center.
pub fn packet_envelope(packet: &WavePacket, x: f64) -> Result<Complex64> {
    let window = packet.grid.spatial_window();
    if (x - packet.center).abs() > window {
        return Err(SimError::OutOfWindow {
            x,
            center: packet.center,
            window,
        });
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for (&k, c) in packet.grid.k_values().iter().zip(&packet.coeffs) {
        sum += c * Complex64::from_polar(1.0, k * x);
    }
    Ok(sum)
}

/// `sum_k c_k^*(a) c_k(b)` for two packets on identical grids.
pub fn mode_overlap(a: &WavePacket, b: &WavePacket) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(SimError::IrregularGrid);
    }
    Ok(a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(ca, cb)| ca.conj() * cb)
        .sum())
}

/// Precomputed evaluator for the packet-center overlap
/// `O(delta) = sum_k c_k^*(x) c_k(x + delta)`, which for this packet family
/// is real, even, and depends on the separation only:
/// `O(delta) ~= e^{-delta^2 / 4 sigma_p^2}`.
#[derive(Debug, Clone)]
pub struct PacketOverlap {
    q: Vec<f64>,
    w: Vec<f64>,
}

impl PacketOverlap {
    pub fn new(grid: &ModeGrid, sigma_p: f64) -> Result<Self> {
        let packet = gaussian_coefficients(grid, 0.0, sigma_p)?;
        let q = grid.k_values().iter().map(|&k| k - grid.k0()).collect();
        let w = packet.coeffs.iter().map(|c| c.norm_sqr()).collect();
        Ok(Self { q, w })
    }

    /// Overlap of two packet centers separated by `delta`.
    pub fn eval(&self, delta: f64) -> f64 {
        self.q
            .iter()
            .zip(&self.w)
            .map(|(&q, &w)| w * (q * delta).cos())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn grid_spans_eight_sigma_inverse_each_side() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        assert_eq!(grid.n_modes(), 65);
        assert_relative_eq!(grid.k_values()[0], 92.0, max_relative = 1e-12);
        assert_relative_eq!(grid.max_omega(), 108.0, max_relative = 1e-12);
        assert_relative_eq!(grid.delta_k(), 0.25, max_relative = 1e-12);
        // k0 sits on the grid for odd point counts.
        assert_relative_eq!(grid.k_values()[32], 100.0, max_relative = 1e-12);
    }

    #[test]
    fn sixteen_point_grid_is_accepted() {
        let grid = make_mode_grid(100.0, 1.0, 16).unwrap();
        assert_eq!(grid.n_modes(), 16);
        assert_relative_eq!(grid.delta_k(), 16.0 / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn low_carrier_reaches_negative_wave_numbers() {
        let err = make_mode_grid(4.0, 1.0, 65).unwrap_err();
        assert!(matches!(err, SimError::NonPositiveWaveNumber { .. }));
    }

    #[test]
    fn too_few_modes_is_rejected() {
        let err = make_mode_grid(100.0, 1.0, 15).unwrap_err();
        assert!(matches!(err, SimError::TooFewModes { n_modes: 15 }));
    }

    #[test]
    fn coefficients_are_unit_norm() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let packet = gaussian_coefficients(&grid, 3.7, 1.0).unwrap();
        assert_abs_diff_eq!(packet.norm_sq(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn envelope_peak_carries_the_carrier_phase() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let x1 = 1.3;
        let packet = gaussian_coefficients(&grid, x1, 1.0).unwrap();
        let peak = packet_envelope(&packet, x1).unwrap();
        let expected = Complex64::from_polar(packet.c0(), grid.k0() * x1);
        assert_abs_diff_eq!(peak.re, expected.re, epsilon = 1e-10 * packet.c0());
        assert_abs_diff_eq!(peak.im, expected.im, epsilon = 1e-10 * packet.c0());
        // Peak magnitude matches |c0| to the stated 1e-8.
        assert_relative_eq!(peak.norm(), packet.c0(), max_relative = 1e-8);
    }

    #[test]
    fn envelope_falls_like_a_gaussian() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let packet = gaussian_coefficients(&grid, 0.0, 1.0).unwrap();
        let at_sigma = packet_envelope(&packet, 1.0).unwrap().norm();
        // e^{-1/2} = 0.60653065971263342...
        assert_relative_eq!(
            at_sigma / packet.c0(),
            0.6065306597126334,
            max_relative = 1e-9
        );
        let at_five_sigma = packet_envelope(&packet, 5.0).unwrap().norm();
        assert!(at_five_sigma < 1e-5 * packet.c0());
        // e^{-12.5} = 3.7266e-6 up to grid residue.
        assert_relative_eq!(
            at_five_sigma / packet.c0(),
            (-12.5f64).exp(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn envelope_outside_window_errors() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let packet = gaussian_coefficients(&grid, 0.0, 1.0).unwrap();
        let window = grid.spatial_window();
        assert!(packet_envelope(&packet, window * 0.99).is_ok());
        let err = packet_envelope(&packet, window + 0.1).unwrap_err();
        assert!(matches!(err, SimError::OutOfWindow { .. }));
    }

    #[test]
    fn center_overlap_is_a_real_gaussian_in_the_separation() {
        let grid = make_mode_grid(100.0, 1.0, 129).unwrap();
        let a = gaussian_coefficients(&grid, 0.0, 1.0).unwrap();
        for delta in [0.25, 1.0, 2.5, 5.0] {
            let b = gaussian_coefficients(&grid, delta, 1.0).unwrap();
            let overlap = mode_overlap(&a, &b).unwrap();
            let expected = (-delta * delta / 4.0).exp();
            assert_abs_diff_eq!(overlap.re, expected, epsilon = 1e-6);
            assert_abs_diff_eq!(overlap.im, 0.0, epsilon = 1e-12);
            // The precomputed table agrees with the explicit mode sum.
            let table = PacketOverlap::new(&grid, 1.0).unwrap();
            assert_abs_diff_eq!(table.eval(delta), overlap.re, epsilon = 1e-12);
        }
    }

    #[test]
    fn narrow_grid_span_is_rejected_for_wide_packets() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        // sigma_p = 0.5 needs +-16 of span; this grid only has +-8.
        let err = gaussian_coefficients(&grid, 0.0, 0.5).unwrap_err();
        assert!(matches!(err, SimError::GridSpanTooNarrow { .. }));
    }
}
