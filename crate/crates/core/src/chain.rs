//! Cascades of lossy and amplifying segments: amplitude bookkeeping, the
//! spontaneous-emission noise budget, and dispersion-sign accounting.
//!
//! A channel is an ordered list of segments, each scaling the field power by
//! a factor below 1 (loss) or above 1 (gain). Amplitude multiplies by the
//! square root of each power factor. Every phase-insensitive amplifier with
//! power gain `G` injects `G - 1` noise photons, and noise injected earlier
//! is attenuated or amplified by everything downstream — which is exactly
//! why one lumped amplifier of gain `g` costs `g - 1` photons while `n`
//! distributed amplifiers of gain `g^(1/n)` interleaved with matching loss
//! cost only `n (g^(1/n) - 1)`, falling toward `ln g` as the chain is
//! subdivided. Dispersion is tracked as a signed scalar (`+|ln pf|` per
//! loss, `-|ln pf|` per gain) at chain level, with an exact mode-resolved
//! check delegated to the second-order field drift from the dynamics module.

use num_complex::Complex64;

use crate::dynamics::{field_drift_second_order, OscillatorBank};
use crate::wavepacket::WavePacket;
use crate::{Result, SimError};

/// Whether a segment attenuates or amplifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Loss,
    Gain,
}

/// One loss or gain element of a channel.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    kind: SegmentKind,
    power_factor: f64,
    dispersion_tag: f64,
}

impl Segment {
    /// Attenuating segment with power factor in (0, 1].
    pub fn loss(power_factor: f64) -> Result<Self> {
        if !(power_factor > 0.0 && power_factor <= 1.0) {
            return Err(SimError::BadPowerFactor {
                kind: "loss segment",
                value: power_factor,
                range: "(0, 1]",
            });
        }
        Ok(Self {
            kind: SegmentKind::Loss,
            power_factor,
            dispersion_tag: power_factor.ln().abs(),
        })
    }

    /// Amplifying segment with power factor in [1, inf).
    pub fn gain(power_factor: f64) -> Result<Self> {
        if !(power_factor >= 1.0 && power_factor.is_finite()) {
            return Err(SimError::BadPowerFactor {
                kind: "gain segment",
                value: power_factor,
                range: "[1, inf)",
            });
        }
        Ok(Self {
            kind: SegmentKind::Gain,
            power_factor,
            dispersion_tag: -power_factor.ln().abs(),
        })
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn power_factor(&self) -> f64 {
        self.power_factor
    }

    /// Signed dispersion contribution: `+|ln pf|` for loss, `-|ln pf|` for
    /// gain.
    pub fn dispersion_tag(&self) -> f64 {
        self.dispersion_tag
    }
}

/// Totals accumulated by [`run_chain`].
#[derive(Debug, Clone, Copy)]
pub struct ChainReport {
    /// Product of `sqrt(power_factor)` over all segments.
    pub final_amplitude_factor: f64,
    /// Spontaneous-emission photons reaching the output.
    pub added_noise_photons: f64,
    /// Sum of the segments' dispersion tags.
    pub net_dispersion: f64,
    /// Number of segments traversed.
    pub segment_count: usize,
    /// The input amplitude scaled by the chain.
    pub output_amplitude: Complex64,
}

/// Propagates an amplitude through the segments, cascading the noise budget
/// (each amplifier adds `G - 1` photons; earlier noise scales by every
/// later power factor) and summing dispersion tags.
pub fn run_chain(segments: &[Segment], input_amplitude: Complex64) -> Result<ChainReport> {
    if segments.is_empty() {
        return Err(SimError::EmptyChain);
    }
    let mut amplitude_factor = 1.0f64;
    let mut noise = 0.0f64;
    let mut dispersion = 0.0f64;
    for seg in segments {
        amplitude_factor *= seg.power_factor.sqrt();
        noise *= seg.power_factor;
        if seg.kind == SegmentKind::Gain {
            noise += seg.power_factor - 1.0;
        }
        dispersion += seg.dispersion_tag;
    }
    Ok(ChainReport {
        final_amplitude_factor: amplitude_factor,
        added_noise_photons: noise,
        net_dispersion: dispersion,
        segment_count: segments.len(),
        output_amplitude: input_amplitude * amplitude_factor,
    })
}

/// Builds the balanced repeater chain for a total gain `g` split over
/// `n_amplifiers` stages: each stage is a loss of `g^(-1/n)` followed by an
/// amplifier of `g^(1/n)`, so the chain has no net loss or gain.
pub fn balanced_chain(total_gain: f64, n_amplifiers: usize) -> Result<Vec<Segment>> {
    if !(total_gain >= 1.0 && total_gain.is_finite()) {
        return Err(SimError::BadPowerFactor {
            kind: "total gain",
            value: total_gain,
            range: "[1, inf)",
        });
    }
    if n_amplifiers == 0 {
        return Err(SimError::EmptyChain);
    }
    let per_gain = total_gain.powf(1.0 / n_amplifiers as f64);
    let per_loss = 1.0 / per_gain;
    let mut segments = Vec::with_capacity(2 * n_amplifiers);
    for _ in 0..n_amplifiers {
        segments.push(Segment::loss(per_loss)?);
        segments.push(Segment::gain(per_gain)?);
    }
    Ok(segments)
}

/// Noise reaching the output of the balanced chain for each amplifier count
/// in `n_values`. The output noise is `n (g^(1/n) - 1)`, which is strictly
/// decreasing in `n` toward `ln g`; both facts are asserted on the computed
/// table whenever `g > 1`.
pub fn noise_scaling_scan(total_gain: f64, n_values: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut table = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let segments = balanced_chain(total_gain, n)?;
        let report = run_chain(&segments, Complex64::new(1.0, 0.0))?;
        table.push((n, report.added_noise_photons));
    }
    if total_gain > 1.0 {
        let limit = total_gain.ln();
        let mut sorted = table.clone();
        sorted.sort_by_key(|&(n, _)| n);
        for pair in sorted.windows(2) {
            assert!(
                pair[1].1 < pair[0].1,
                "noise must fall strictly as amplifiers are subdivided: {:?} then {:?}",
                pair[0],
                pair[1]
            );
        }
        for &(n, noise) in &sorted {
            assert!(
                noise > limit,
                "distributed noise {noise} at n = {n} must stay above ln(g) = {limit}"
            );
        }
    }
    Ok(table)
}

/// Signed dispersion of a loss element against a gain element, given the
/// two strengths `|ln power_factor|`: positive when loss dominates, zero
/// when matched.
pub fn dispersion_cancellation(loss_strength: f64, gain_strength: f64) -> Result<f64> {
    for (name, v) in [
        ("loss_strength", loss_strength),
        ("gain_strength", gain_strength),
    ] {
        if !(v >= 0.0) {
            return Err(SimError::NonPositiveParameter { name, value: v });
        }
    }
    Ok(loss_strength - gain_strength)
}

/// Exact mode-resolved dispersion cancellation: evaluates the second-order
/// field drift of every mode for an absorbing bank and for an identically
/// parameterized inverted bank, and returns the largest per-mode residual
/// `|drift_loss + drift_gain|`. Matched media cancel mode by mode.
pub fn mode_resolved_cancellation(
    packet: &WavePacket,
    positions: &[f64],
    omega0: f64,
    epsilon: f64,
    t: f64,
) -> Result<f64> {
    let absorber = OscillatorBank::absorber(positions.to_vec(), omega0, epsilon)?;
    let amplifier = OscillatorBank::amplifier(positions.to_vec(), omega0, epsilon)?;
    let mut worst = 0.0f64;
    for &k in packet.grid().k_values() {
        let d_loss = field_drift_second_order(k, packet, &absorber, t);
        let d_gain = field_drift_second_order(k, packet, &amplifier, t);
        worst = worst.max((d_loss + d_gain).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavepacket::{gaussian_coefficients, make_mode_grid};
    use approx::assert_abs_diff_eq;

    fn unit_input() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn identity_segment_changes_nothing() {
        let segments = vec![Segment::loss(1.0).unwrap()];
        let report = run_chain(&segments, Complex64::new(0.3, -0.7)).unwrap();
        assert_eq!(report.final_amplitude_factor, 1.0);
        assert_eq!(report.added_noise_photons, 0.0);
        assert_eq!(report.net_dispersion, 0.0);
        assert_eq!(report.segment_count, 1);
        assert_eq!(report.output_amplitude, Complex64::new(0.3, -0.7));
    }

    #[test]
    fn lumped_amplifier_noise_grows_exponentially_with_gain() {
        let g = (2.0f64).exp(); // e^2
        let segments = vec![Segment::loss(1.0 / g).unwrap(), Segment::gain(g).unwrap()];
        let report = run_chain(&segments, unit_input()).unwrap();
        assert_abs_diff_eq!(
            report.added_noise_photons,
            6.3890560989306495,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(report.final_amplitude_factor, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn distributed_amplifiers_pay_only_linearly() {
        let segments = balanced_chain((2.0f64).exp(), 20).unwrap();
        let report = run_chain(&segments, unit_input()).unwrap();
        // 20 (e^0.1 - 1): every amplifier's photons cross balanced pairs.
        assert_abs_diff_eq!(
            report.added_noise_photons,
            2.1034183615129542,
            epsilon = 1e-12
        );
        assert!(report.added_noise_photons < 6.389);
        assert_abs_diff_eq!(report.final_amplitude_factor, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.net_dispersion, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn subdividing_the_gain_walks_the_noise_down_to_the_log() {
        let g = (2.0f64).exp();
        let g2 = g * g; // e^2
        let table = noise_scaling_scan(g2, &[1, 2, 5, 10, 20, 50, 100]).unwrap();
        assert_abs_diff_eq!(table[0].1, g2 - 1.0, epsilon = 1e-12);
        let (n_last, noise_last) = *table.last().unwrap();
        assert_eq!(n_last, 100);
        let limit = g2.ln(); // 2
        assert!(
            (noise_last - limit).abs() / limit < 0.05,
            "noise {noise_last} at n = 100 should sit within 5% of {limit}"
        );
    }

    #[test]
    fn unit_total_gain_adds_no_noise_at_any_subdivision() {
        let table = noise_scaling_scan(1.0, &[1, 3, 17]).unwrap();
        for (_, noise) in table {
            assert_eq!(noise, 0.0);
        }
    }

    #[test]
    fn balanced_chains_preserve_the_amplitude_exactly() {
        let chains = [
            vec![
                Segment::loss(0.5).unwrap(),
                Segment::gain(4.0).unwrap(),
                Segment::loss(0.5).unwrap(),
            ],
            balanced_chain(7.3, 9).unwrap(),
            vec![
                Segment::gain(3.0).unwrap(),
                Segment::loss(1.0 / 3.0).unwrap(),
            ],
        ];
        for segments in &chains {
            let report = run_chain(segments, Complex64::new(0.2, 0.9)).unwrap();
            assert_abs_diff_eq!(report.final_amplitude_factor, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chains_compose_associatively() {
        let front = vec![
            Segment::loss((-0.3f64).exp()).unwrap(),
            Segment::gain((0.5f64).exp()).unwrap(),
        ];
        let back = vec![
            Segment::gain((0.2f64).exp()).unwrap(),
            Segment::loss((-0.4f64).exp()).unwrap(),
        ];
        let whole: Vec<Segment> = front.iter().chain(&back).copied().collect();
        let input = Complex64::new(0.8, -0.1);

        let joined = run_chain(&whole, input).unwrap();
        let first = run_chain(&front, input).unwrap();
        let second = run_chain(&back, first.output_amplitude).unwrap();

        let back_power = second.final_amplitude_factor.powi(2);
        let composed_noise = first.added_noise_photons * back_power + second.added_noise_photons;
        assert_abs_diff_eq!(
            joined.added_noise_photons,
            composed_noise,
            epsilon = 1e-12
        );
        assert!((joined.output_amplitude - second.output_amplitude).norm() < 1e-12);
        assert_abs_diff_eq!(
            joined.net_dispersion,
            first.net_dispersion + second.net_dispersion,
            epsilon = 1e-12
        );
    }

    #[test]
    fn swapping_loss_and_gain_negates_the_dispersion() {
        let factors = [0.3, 0.92, 0.5];
        let forward: Vec<Segment> = factors
            .iter()
            .map(|&pf| Segment::loss(pf).unwrap())
            .collect();
        let swapped: Vec<Segment> = factors
            .iter()
            .map(|&pf| Segment::gain(1.0 / pf).unwrap())
            .collect();
        let d_fwd = run_chain(&forward, unit_input()).unwrap().net_dispersion;
        let d_swp = run_chain(&swapped, unit_input()).unwrap().net_dispersion;
        // |ln(1/pf)| = |ln pf| exactly only up to the reciprocal's rounding;
        // allow an ulp-scale slack.
        assert_abs_diff_eq!(d_swp, -d_fwd, epsilon = 1e-14);
    }

    #[test]
    fn matched_strengths_cancel_and_loss_is_positive() {
        assert_eq!(dispersion_cancellation(0.7, 0.7).unwrap(), 0.0);
        assert!(dispersion_cancellation(0.7, 0.0).unwrap() > 0.0);
        let err = dispersion_cancellation(-0.1, 0.0).unwrap_err();
        assert!(matches!(err, SimError::NonPositiveParameter { .. }));
    }

    #[test]
    fn matched_media_cancel_mode_by_mode() {
        let grid = make_mode_grid(40.0, 1.0, 65).unwrap();
        let packet = gaussian_coefficients(&grid, -13.0, 1.0).unwrap();
        let worst =
            mode_resolved_cancellation(&packet, &[-1.0, 0.0, 2.0], 40.0, 1e-3, 25.0).unwrap();
        assert!(worst < 1e-10, "worst per-mode residual {worst:.3e}");
    }

    #[test]
    fn out_of_range_power_factors_are_rejected() {
        assert!(matches!(
            Segment::loss(1.2).unwrap_err(),
            SimError::BadPowerFactor { .. }
        ));
        assert!(matches!(
            Segment::loss(0.0).unwrap_err(),
            SimError::BadPowerFactor { .. }
        ));
        assert!(matches!(
            Segment::gain(0.8).unwrap_err(),
            SimError::BadPowerFactor { .. }
        ));
        assert!(matches!(
            run_chain(&[], unit_input()).unwrap_err(),
            SimError::EmptyChain
        ));
        assert!(matches!(
            noise_scaling_scan(0.5, &[1]).unwrap_err(),
            SimError::BadPowerFactor { .. }
        ));
    }
}
