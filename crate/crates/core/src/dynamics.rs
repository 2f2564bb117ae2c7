//! Coherent-amplitude dynamics of field modes coupled to banks of two-level
//! oscillators, for both absorbing and amplifying (inverted) media.
//!
//! Because the coupling Hamiltonian is linear in mode operators, an initial
//! product of coherent states stays a product of coherent states and the
//! whole problem reduces to linear ODEs for the amplitudes: for an absorber,
//!
//! ```text
//! d alpha_k / dt = -i w_k alpha_k - i eps sum_i exp(-i k x_i) beta_i
//! d beta_i / dt  = -i w_0 beta_i  - i eps sum_k exp(+i k x_i) alpha_k
//! ```
//!
//! conserving `sum |alpha|^2 + sum |beta|^2`. An inverted bank couples
//! through the conjugate oscillator mode: the `beta` equation flips the
//! sign of its drive term, the field equation is unchanged, and the
//! conserved quantity becomes the difference `sum |alpha|^2 - sum |beta|^2`.
//! All computations run in the lab frame with explicit `exp(-i w t)` phases.
//! Units: hbar = 1, c = 1, so `w_k = k` and `sigma_t = sigma_p`.
//!
//! The module also houses the closed-form perturbative absorption amplitude
//! (a Gaussian cumulative turn-on that forgets the packet's launch point),
//! the which-path deviation measure built on it, the second-order field
//! drift used by `chain` for dispersion bookkeeping, and a truncated-Fock
//! Schrödinger oracle that verifies the product-of-coherent-states
//! factorization against brute-force quantum evolution.

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::wavepacket::{gaussian_coefficients, ModeGrid, WavePacket};
use crate::{Result, SimError};

/// Hard ceiling on the integrator step: `dt <= MAX_PHASE_PER_STEP / max(w_k)`.
pub const MAX_PHASE_PER_STEP: f64 = 0.05;

/// A packet has "fully passed" an oscillator once the cumulative Gaussian
/// exceeds `1 - PASSAGE_TAIL`.
pub const PASSAGE_TAIL: f64 = 1e-8;

/// Soft bound on per-oscillator excitation probability for the perturbative
/// closed forms to be trustworthy.
pub const PERTURBATIVE_EXCITATION_BOUND: f64 = 0.01;

/// Standard normal cumulative distribution function.
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// A bank of identical two-level oscillators at fixed positions, all sharing
/// one transition frequency and one coupling matrix element.
#[derive(Debug, Clone)]
pub struct OscillatorBank {
    positions: Vec<f64>,
    omega0: f64,
    epsilon: f64,
    inverted: bool,
}

impl OscillatorBank {
    fn build(positions: Vec<f64>, omega0: f64, epsilon: f64, inverted: bool) -> Result<Self> {
        if positions.is_empty() {
            return Err(SimError::EmptyBank);
        }
        if omega0 <= 0.0 {
            return Err(SimError::NonPositiveParameter {
                name: "omega0",
                value: omega0,
            });
        }
        if epsilon < 0.0 {
            return Err(SimError::NonPositiveParameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        Ok(Self {
            positions,
            omega0,
            epsilon,
            inverted,
        })
    }

    /// Ground-state (absorbing) bank.
    pub fn absorber(positions: Vec<f64>, omega0: f64, epsilon: f64) -> Result<Self> {
        Self::build(positions, omega0, epsilon, false)
    }

    /// Inverted (amplifying) bank.
    pub fn amplifier(positions: Vec<f64>, omega0: f64, epsilon: f64) -> Result<Self> {
        Self::build(positions, omega0, epsilon, true)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    /// Long-time per-oscillator excitation probability predicted by the
    /// first-order closed form for a resonant packet with background
    /// amplitude `scale`.
    pub fn predicted_excitation(&self, packet: &WavePacket, scale: Complex64) -> f64 {
        let amp = self.epsilon
            * scale.norm()
            * packet.c0()
            * (2.0 * std::f64::consts::PI).sqrt()
            * packet.sigma_p();
        amp * amp
    }

    /// Checks the perturbative-regime assumption, returning the predicted
    /// excitation probability or an error when it exceeds the soft bound.
    pub fn check_perturbative(&self, packet: &WavePacket, scale: Complex64) -> Result<f64> {
        let p = self.predicted_excitation(packet, scale);
        if p > PERTURBATIVE_EXCITATION_BOUND {
            return Err(SimError::PerturbativeBound { excitation: p });
        }
        Ok(p)
    }
}

/// Field modes coupled to an oscillator bank, with precomputed coupling
/// phases `exp(i k x_i)`.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    omegas: Vec<f64>,
    bank: OscillatorBank,
    /// phases[i][k] = exp(i k x_i)
    phases: Vec<Vec<Complex64>>,
}

impl CoupledSystem {
    /// Couples the bank to the modes of a validated grid (`w_k = k`).
    pub fn new(grid: &ModeGrid, bank: OscillatorBank) -> Result<Self> {
        Self::from_frequencies(grid.k_values().to_vec(), bank)
    }

    /// Couples the bank to explicitly listed mode frequencies. In these
    /// dispersionless units the wave number equals the frequency, which is
    /// what the coupling phases use.
    pub fn from_frequencies(omegas: Vec<f64>, bank: OscillatorBank) -> Result<Self> {
        if omegas.is_empty() {
            return Err(SimError::EmptyBank);
        }
        for &w in &omegas {
            if w <= 0.0 {
                return Err(SimError::NonPositiveParameter {
                    name: "omega",
                    value: w,
                });
            }
        }
        let phases = bank
            .positions()
            .iter()
            .map(|&x| {
                omegas
                    .iter()
                    .map(|&k| Complex64::from_polar(1.0, k * x))
                    .collect()
            })
            .collect();
        Ok(Self {
            omegas,
            bank,
            phases,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn n_oscillators(&self) -> usize {
        self.bank.len()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn bank(&self) -> &OscillatorBank {
        &self.bank
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas.iter().cloned().fold(0.0, f64::max)
    }
}

/// Instantaneous coherent amplitudes of every mode and oscillator.
#[derive(Debug, Clone)]
pub struct DynamicState {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub t: f64,
}

impl DynamicState {
    pub fn new(alpha: Vec<Complex64>, beta: Vec<Complex64>, t: f64) -> Self {
        Self { alpha, beta, t }
    }

    /// Background field `scale * c_k` with all oscillators unexcited.
    pub fn from_background(packet: &WavePacket, scale: Complex64, n_oscillators: usize) -> Self {
        Self {
            alpha: packet.coeffs().iter().map(|c| scale * c).collect(),
            beta: vec![Complex64::new(0.0, 0.0); n_oscillators],
            t: 0.0,
        }
    }

    pub fn field_norm_sq(&self) -> f64 {
        self.alpha.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn oscillator_norm_sq(&self) -> f64 {
        self.beta.iter().map(|b| b.norm_sqr()).sum()
    }
}

/// The quantity conserved by the coupled equations: total excitation for an
/// absorbing bank, field-minus-oscillator excitation for an inverted one.
pub fn conserved_quantity(system: &CoupledSystem, state: &DynamicState) -> f64 {
    if system.bank.is_inverted() {
        state.field_norm_sq() - state.oscillator_norm_sq()
    } else {
        state.field_norm_sq() + state.oscillator_norm_sq()
    }
}

/// In-place right-hand side shared by both media; `sign` is -1 for an
/// absorbing bank and +1 for an inverted one.
fn rhs_into(
    system: &CoupledSystem,
    alpha: &[Complex64],
    beta: &[Complex64],
    dalpha: &mut [Complex64],
    dbeta: &mut [Complex64],
) {
    let eps = system.bank.epsilon();
    let omega0 = system.bank.omega0();
    let minus_i = Complex64::new(0.0, -1.0);
    let drive = if system.bank.is_inverted() {
        Complex64::new(0.0, 1.0)
    } else {
        minus_i
    };
    for (k, da) in dalpha.iter_mut().enumerate() {
        *da = minus_i * system.omegas[k] * alpha[k];
    }
    for (i, db) in dbeta.iter_mut().enumerate() {
        let phases = &system.phases[i];
        let mut field_sum = Complex64::new(0.0, 0.0);
        for (k, &a) in alpha.iter().enumerate() {
            field_sum += phases[k] * a;
        }
        *db = minus_i * omega0 * beta[i] + drive * eps * field_sum;
        let feed = minus_i * eps * beta[i];
        for (k, da) in dalpha.iter_mut().enumerate() {
            *da += feed * phases[k].conj();
        }
    }
}

/// Time-derivatives of an absorber configuration.
pub fn absorber_rhs(
    system: &CoupledSystem,
    state: &DynamicState,
) -> (Vec<Complex64>, Vec<Complex64>) {
    debug_assert!(!system.bank.is_inverted());
    let mut da = vec![Complex64::new(0.0, 0.0); state.alpha.len()];
    let mut db = vec![Complex64::new(0.0, 0.0); state.beta.len()];
    rhs_into(system, &state.alpha, &state.beta, &mut da, &mut db);
    (da, db)
}

/// Time-derivatives of an amplifier configuration (conjugate-mode oscillator
/// amplitudes; only the oscillator drive term changes sign).
pub fn amplifier_rhs(
    system: &CoupledSystem,
    state: &DynamicState,
) -> (Vec<Complex64>, Vec<Complex64>) {
    debug_assert!(system.bank.is_inverted());
    let mut da = vec![Complex64::new(0.0, 0.0); state.alpha.len()];
    let mut db = vec![Complex64::new(0.0, 0.0); state.beta.len()];
    rhs_into(system, &state.alpha, &state.beta, &mut da, &mut db);
    (da, db)
}

/// Result of [`integrate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sampled states; the first entry is the initial state and the last is
    /// the final state.
    pub samples: Vec<DynamicState>,
    /// Largest observed relative drift of the conserved quantity, normalized
    /// by the initial total excitation.
    pub relative_drift: f64,
    /// Largest observed per-oscillator excitation `|beta_i|^2`.
    pub max_oscillator_excitation: f64,
    /// The actual uniform step used (the requested `dt` rounded down so the
    /// span divides evenly).
    pub dt: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &DynamicState {
        self.samples.last().expect("trajectory has samples")
    }
}

/// Largest step that keeps the relative drift of the conserved quantity
/// below `drift_target` over `duration`, based on the classical fourth-order
/// stability function's amplitude defect `(w dt)^6 / 144` per step, with a
/// 0.7 safety factor, capped at the integrator's hard phase ceiling.
pub fn stable_dt(omega_max: f64, duration: f64, drift_target: f64) -> f64 {
    let from_drift = 0.7 * (144.0 * drift_target / (duration * omega_max.powi(6))).powf(0.2);
    from_drift.min(MAX_PHASE_PER_STEP / omega_max)
}

/// Fixed-step classical fourth-order Runge-Kutta integration from
/// `initial.t` to `t_end`.
///
/// `sample_stride` > 0 stores every that-many-th step in the trajectory;
/// 0 stores only the initial and final states. The conserved quantity and
/// per-oscillator excitation are tracked along the way.
pub fn integrate(
    system: &CoupledSystem,
    initial: &DynamicState,
    t_end: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<Trajectory> {
    let span = t_end - initial.t;
    if dt <= 0.0 || span <= 0.0 {
        return Err(SimError::NonPositiveParameter {
            name: "dt or span",
            value: dt.min(span),
        });
    }
    let max_dt = MAX_PHASE_PER_STEP / system.max_omega();
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(SimError::StepTooLarge { dt, max_dt });
    }
    let n_steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;

    let nm = system.n_modes();
    let no = system.n_oscillators();
    assert_eq!(initial.alpha.len(), nm, "alpha length mismatch");
    assert_eq!(initial.beta.len(), no, "beta length mismatch");

    let mut alpha = initial.alpha.clone();
    let mut beta = initial.beta.clone();
    let zero = Complex64::new(0.0, 0.0);
    let mut ka = [vec![zero; nm], vec![zero; nm], vec![zero; nm], vec![zero; nm]];
    let mut kb = [vec![zero; no], vec![zero; no], vec![zero; no], vec![zero; no]];
    let mut ta = vec![zero; nm];
    let mut tb = vec![zero; no];

    let q0 = conserved_quantity(system, initial);
    let scale0 = (initial.field_norm_sq() + initial.oscillator_norm_sq()).max(f64::MIN_POSITIVE);
    let mut drift = 0.0f64;
    let mut max_exc = initial
        .beta
        .iter()
        .map(|b| b.norm_sqr())
        .fold(0.0, f64::max);
    let mut samples = vec![initial.clone()];

    for step in 0..n_steps {
        let stage = |a_in: &[Complex64],
                     b_in: &[Complex64],
                     ka_out: &mut Vec<Complex64>,
                     kb_out: &mut Vec<Complex64>| {
            rhs_into(system, a_in, b_in, ka_out, kb_out);
        };
        let (k1a, rest) = ka.split_at_mut(1);
        let (k2a, rest2) = rest.split_at_mut(1);
        let (k3a, k4a) = rest2.split_at_mut(1);
        let (k1b, restb) = kb.split_at_mut(1);
        let (k2b, rest2b) = restb.split_at_mut(1);
        let (k3b, k4b) = rest2b.split_at_mut(1);

        stage(&alpha, &beta, &mut k1a[0], &mut k1b[0]);
        for k in 0..nm {
            ta[k] = alpha[k] + 0.5 * h * k1a[0][k];
        }
        for i in 0..no {
            tb[i] = beta[i] + 0.5 * h * k1b[0][i];
        }
        stage(&ta, &tb, &mut k2a[0], &mut k2b[0]);
        for k in 0..nm {
            ta[k] = alpha[k] + 0.5 * h * k2a[0][k];
        }
        for i in 0..no {
            tb[i] = beta[i] + 0.5 * h * k2b[0][i];
        }
        stage(&ta, &tb, &mut k3a[0], &mut k3b[0]);
        for k in 0..nm {
            ta[k] = alpha[k] + h * k3a[0][k];
        }
        for i in 0..no {
            tb[i] = beta[i] + h * k3b[0][i];
        }
        stage(&ta, &tb, &mut k4a[0], &mut k4b[0]);

        let w = h / 6.0;
        for k in 0..nm {
            alpha[k] += w * (k1a[0][k] + 2.0 * (k2a[0][k] + k3a[0][k]) + k4a[0][k]);
        }
        for i in 0..no {
            beta[i] += w * (k1b[0][i] + 2.0 * (k2b[0][i] + k3b[0][i]) + k4b[0][i]);
        }

        let t_now = initial.t + (step + 1) as f64 * h;
        let last = step + 1 == n_steps;
        if step % 32 == 0 || last {
            let mut field = 0.0;
            for a in &alpha {
                field += a.norm_sqr();
            }
            let mut osc = 0.0;
            for b in &beta {
                let e = b.norm_sqr();
                osc += e;
                if e > max_exc {
                    max_exc = e;
                }
            }
            if !field.is_finite() || !osc.is_finite() {
                return Err(SimError::Diverged { t: t_now });
            }
            let q = if system.bank.is_inverted() {
                field - osc
            } else {
                field + osc
            };
            let d = (q - q0).abs() / scale0;
            if d > drift {
                drift = d;
            }
        }
        if (sample_stride > 0 && (step + 1) % sample_stride == 0 && !last) || last {
            samples.push(DynamicState {
                alpha: alpha.clone(),
                beta: beta.clone(),
                t: t_now,
            });
        }
    }

    Ok(Trajectory {
        samples,
        relative_drift: drift,
        max_oscillator_excitation: max_exc,
        dt: h,
    })
}

/// Cumulative passage fraction of a packet launched at `packet.center()`
/// past position `x_i` at time `t` (in units where the group speed is 1).
pub fn passage_fraction(packet: &WavePacket, x_i: f64, t: f64) -> f64 {
    normal_cdf((t - (x_i - packet.center())) / packet.sigma_p())
}

/// First-order absorbed amplitude of an oscillator at `x_i` while a resonant
/// background packet (scaled by `scale`) sweeps past: the amplitude builds
/// as the cumulative Gaussian of the packet envelope.
///
/// The closed form assumes the oscillator is resonant with the carrier, so
/// its free phase advances at the carrier frequency `k0`.
pub fn analytic_beta(
    packet: &WavePacket,
    x_i: f64,
    scale: Complex64,
    epsilon: f64,
    t: f64,
) -> Complex64 {
    let k0 = packet.grid().k0();
    let prefactor = Complex64::new(0.0, -1.0)
        * epsilon
        * scale
        * packet.c0()
        * (2.0 * std::f64::consts::PI).sqrt()
        * packet.sigma_p();
    let phase = Complex64::from_polar(1.0, k0 * x_i - k0 * t);
    prefactor * phase * passage_fraction(packet, x_i, t)
}

/// Final (post-passage) absorbed amplitude; the passage fraction is locked
/// at 1, so the result no longer depends on where the packet was launched.
///
/// Errors if the packet has not yet fully passed `x_i` at time `t`.
pub fn analytic_beta_final(
    packet: &WavePacket,
    x_i: f64,
    scale: Complex64,
    epsilon: f64,
    t: f64,
) -> Result<Complex64> {
    let arrival = passage_fraction(packet, x_i, t);
    if arrival < 1.0 - PASSAGE_TAIL {
        return Err(SimError::PacketNotPassed {
            x1: packet.center(),
            x_i,
            t,
            arrival,
        });
    }
    let k0 = packet.grid().k0();
    let prefactor = Complex64::new(0.0, -1.0)
        * epsilon
        * scale
        * packet.c0()
        * (2.0 * std::f64::consts::PI).sqrt()
        * packet.sigma_p();
    Ok(prefactor * Complex64::from_polar(1.0, k0 * x_i - k0 * t))
}

/// Final amplified-oscillator amplitude in the conjugate-mode convention:
/// the same magnitude as the absorber result with the phase structure
/// conjugated (`exp(-i k0 x_i) exp(+i k0 t)`), and the background amplitude
/// entering conjugated as well.
///
/// The time-domain integrator evolves the amplified oscillator in the direct
/// convention instead (its amplitude is the negative of [`analytic_beta`]'s
/// value); the two conventions agree in magnitude.
pub fn analytic_bdagger_final(
    packet: &WavePacket,
    x_i: f64,
    scale: Complex64,
    epsilon: f64,
    t: f64,
) -> Result<Complex64> {
    Ok(analytic_beta_final(packet, x_i, scale, epsilon, t)?.conj())
}

/// Second-order drift of mode `k`'s amplitude per unit background amplitude,
/// accumulated while the packet sweeps the bank: attenuation ("-") for an
/// absorbing bank, growth ("+") for an inverted one. Used by the chain
/// bookkeeping to show the two media cancel mode by mode.
pub fn field_drift_second_order(
    k: f64,
    packet: &WavePacket,
    bank: &OscillatorBank,
    t: f64,
) -> Complex64 {
    let sign = if bank.is_inverted() { 1.0 } else { -1.0 };
    let k0 = packet.grid().k0();
    let eps = bank.epsilon();
    let prefactor = sign
        * eps
        * eps
        * (2.0 * std::f64::consts::PI).sqrt()
        * packet.c0()
        * packet.sigma_p();
    let mut sum = Complex64::new(0.0, 0.0);
    for &x_i in bank.positions() {
        sum += Complex64::from_polar(passage_fraction(packet, x_i, t), (k0 - k) * x_i);
    }
    prefactor * sum * Complex64::from_polar(1.0, -k * t)
}

/// One launch-point branch of a which-path run.
#[derive(Debug, Clone)]
pub struct BranchResult {
    pub x1: f64,
    pub final_alpha: Vec<Complex64>,
    pub final_beta: Vec<Complex64>,
    /// Relative drift of the conserved quantity over this branch.
    pub relative_drift: f64,
}

/// Integrates one branch per launch point and returns the final amplitudes.
///
/// Every packet must fully pass every oscillator by `t_end`.
pub fn which_path_branches(
    grid: &ModeGrid,
    sigma_p: f64,
    scale: Complex64,
    bank: &OscillatorBank,
    x1_list: &[f64],
    t_end: f64,
) -> Result<Vec<BranchResult>> {
    for &x1 in x1_list {
        let packet = gaussian_coefficients(grid, x1, sigma_p)?;
        for &x_i in bank.positions() {
            let arrival = passage_fraction(&packet, x_i, t_end);
            if arrival < 1.0 - PASSAGE_TAIL {
                return Err(SimError::PacketNotPassed {
                    x1,
                    x_i,
                    t: t_end,
                    arrival,
                });
            }
        }
    }
    let system = CoupledSystem::new(grid, bank.clone())?;
    let dt = stable_dt(system.max_omega(), t_end, 1e-9);
    let mut branches = Vec::with_capacity(x1_list.len());
    for &x1 in x1_list {
        let packet = gaussian_coefficients(grid, x1, sigma_p)?;
        let initial = DynamicState::from_background(&packet, scale, bank.len());
        let trajectory = integrate(&system, &initial, t_end, dt, 0)?;
        let last = trajectory.final_state();
        branches.push(BranchResult {
            x1,
            final_alpha: last.alpha.clone(),
            final_beta: last.beta.clone(),
            relative_drift: trajectory.relative_drift,
        });
    }
    Ok(branches)
}

/// Which-path residual of a set of branches: the largest difference between
/// any two branches' final amplitude on any oscillator, relative to the
/// largest oscillator amplitude observed. Near zero means the oscillators
/// keep no record of where the packet came from.
pub fn branch_deviation(branches: &[BranchResult]) -> f64 {
    let mut max_amp = 0.0f64;
    for b in branches {
        for v in &b.final_beta {
            max_amp = max_amp.max(v.norm());
        }
    }
    if max_amp <= f64::MIN_POSITIVE {
        return 0.0;
    }
    let mut max_diff = 0.0f64;
    for (ia, a) in branches.iter().enumerate() {
        for b in &branches[ia + 1..] {
            for (va, vb) in a.final_beta.iter().zip(&b.final_beta) {
                max_diff = max_diff.max((va - vb).norm());
            }
        }
    }
    max_diff / max_amp
}

/// Runs one branch per launch point and returns the which-path residual.
/// Fewer than two launch points trivially score zero.
pub fn which_path_deviation(
    grid: &ModeGrid,
    sigma_p: f64,
    scale: Complex64,
    bank: &OscillatorBank,
    x1_list: &[f64],
    t_end: f64,
) -> Result<f64> {
    if x1_list.len() < 2 {
        return Ok(0.0);
    }
    let branches = which_path_branches(grid, sigma_p, scale, bank, x1_list, t_end)?;
    Ok(branch_deviation(&branches))
}

/// Report from the truncated-Fock product-state oracle.
#[derive(Debug, Clone, Copy)]
pub struct FockReport {
    /// Fidelity of the brute-force quantum state against the product of
    /// coherent states built from the mean-field amplitudes.
    pub fidelity: f64,
    /// Fidelity against a deliberately corrupted target (oscillator
    /// amplitude sign-flipped); stays well below 1 whenever the oscillator
    /// is materially excited.
    pub control_fidelity: f64,
    /// Population of the highest retained Fock shell.
    pub top_level_population: f64,
    /// Mean-field field amplitude at the comparison time.
    pub mean_alpha: Complex64,
    /// Mean-field oscillator amplitude at the comparison time.
    pub mean_beta: Complex64,
}

/// Coherent-state coefficient vector in a truncated number basis,
/// renormalized over the kept levels.
fn truncated_coherent(amplitude: Complex64, n_levels: usize) -> Vec<Complex64> {
    let mut coeffs = Vec::with_capacity(n_levels);
    let mut c = Complex64::new(1.0, 0.0);
    coeffs.push(c);
    for n in 1..n_levels {
        c *= amplitude / (n as f64).sqrt();
        coeffs.push(c);
    }
    let norm = coeffs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    for v in &mut coeffs {
        *v /= norm;
    }
    coeffs
}

/// Brute-force Schrödinger evolution of one field mode and one oscillator in
/// a truncated joint number basis, compared against the product of coherent
/// states predicted by the mean-field amplitudes.
///
/// The exchange coupling preserves total quanta, so a coherent product with
/// small amplitudes stays far from the truncation edge; the top-shell
/// population is checked and the run aborts if it exceeds 1e-10.
pub fn fock_oracle(
    alpha0: Complex64,
    epsilon: f64,
    omega0: f64,
    t_end: f64,
    truncation: usize,
) -> Result<FockReport> {
    if truncation < 2 {
        return Err(SimError::TruncationTooSmall {
            truncation,
        });
    }
    let n_levels = truncation + 1;
    let dim = n_levels * n_levels;
    let idx = |na: usize, nb: usize| na * n_levels + nb;

    // Joint Hamiltonian: both modes at omega0 (resonant reduction) with a
    // real exchange coupling epsilon.
    let mut ham = DMatrix::<f64>::zeros(dim, dim);
    for na in 0..n_levels {
        for nb in 0..n_levels {
            let row = idx(na, nb);
            ham[(row, row)] = omega0 * (na + nb) as f64;
            // a^dagger b : |na+1, nb-1>
            if na + 1 < n_levels && nb >= 1 {
                let col = idx(na + 1, nb - 1);
                let v = epsilon * (((na + 1) * nb) as f64).sqrt();
                ham[(col, row)] = v;
                ham[(row, col)] = v;
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(ham);

    // Initial product state: field coherent, oscillator empty.
    let ca = truncated_coherent(alpha0, n_levels);
    let cb = truncated_coherent(Complex64::new(0.0, 0.0), n_levels);
    let mut psi0 = vec![Complex64::new(0.0, 0.0); dim];
    for na in 0..n_levels {
        for nb in 0..n_levels {
            psi0[idx(na, nb)] = ca[na] * cb[nb];
        }
    }

    // psi(t) = V exp(-i E t) V^T psi0 with real V.
    let mut projected = vec![Complex64::new(0.0, 0.0); dim];
    for (col, p) in projected.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for row in 0..dim {
            acc += eig.eigenvectors[(row, col)] * psi0[row];
        }
        *p = acc;
    }
    let mut psi_t = vec![Complex64::new(0.0, 0.0); dim];
    for (col, p) in projected.iter().enumerate() {
        let rotated = p * Complex64::from_polar(1.0, -eig.eigenvalues[col] * t_end);
        for row in 0..dim {
            psi_t[row] += eig.eigenvectors[(row, col)] * rotated;
        }
    }

    // Truncation health: population of the highest retained shell.
    let mut top = 0.0;
    for na in 0..n_levels {
        top += psi_t[idx(na, n_levels - 1)].norm_sqr();
    }
    for nb in 0..n_levels - 1 {
        top += psi_t[idx(n_levels - 1, nb)].norm_sqr();
    }
    if top > 1e-10 {
        return Err(SimError::TruncationLeak {
            truncation,
            leakage: top,
        });
    }

    // Mean-field amplitudes from the time-domain integrator on the matching
    // one-mode system (resonant, coupling phase 1 at x = 0).
    let bank = OscillatorBank::absorber(vec![0.0], omega0, epsilon)?;
    let system = CoupledSystem::from_frequencies(vec![omega0], bank)?;
    let initial = DynamicState::new(vec![alpha0], vec![Complex64::new(0.0, 0.0)], 0.0);
    let dt = stable_dt(omega0, t_end, 1e-10);
    let trajectory = integrate(&system, &initial, t_end, dt, 0)?;
    let final_state = trajectory.final_state();
    let mean_alpha = final_state.alpha[0];
    let mean_beta = final_state.beta[0];

    let fidelity_vs = |a: Complex64, b: Complex64| -> f64 {
        let ta = truncated_coherent(a, n_levels);
        let tb = truncated_coherent(b, n_levels);
        let mut inner = Complex64::new(0.0, 0.0);
        for na in 0..n_levels {
            for nb in 0..n_levels {
                inner += (ta[na] * tb[nb]).conj() * psi_t[idx(na, nb)];
            }
        }
        inner.norm_sqr()
    };

    Ok(FockReport {
        fidelity: fidelity_vs(mean_alpha, mean_beta),
        control_fidelity: fidelity_vs(mean_alpha, -mean_beta),
        top_level_population: top,
        mean_alpha,
        mean_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavepacket::make_mode_grid;
    use approx::assert_abs_diff_eq;

    fn two_by_two(epsilon: f64, inverted: bool) -> CoupledSystem {
        let bank = if inverted {
            OscillatorBank::amplifier(vec![0.0], 1.0, epsilon).unwrap()
        } else {
            OscillatorBank::absorber(vec![0.0], 1.0, epsilon).unwrap()
        };
        CoupledSystem::from_frequencies(vec![1.0], bank).unwrap()
    }

    #[test]
    fn free_evolution_rotates_each_mode() {
        let system = two_by_two(0.0, false);
        let initial = DynamicState::new(
            vec![Complex64::new(0.8, -0.3)],
            vec![Complex64::new(0.0, 0.0)],
            0.0,
        );
        let t_end = 10.0;
        let trajectory = integrate(&system, &initial, t_end, 0.01, 0).unwrap();
        let expected = initial.alpha[0] * Complex64::from_polar(1.0, -t_end);
        let got = trajectory.final_state().alpha[0];
        // Fixed-step fourth-order phase truncation: ~(w dt)^5/120 per step.
        assert!((got - expected).norm() < 1e-8);
        assert_eq!(trajectory.final_state().beta[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn resonant_exchange_matches_rotation_oracle() {
        // Closed form for one resonant mode and one oscillator: in the frame
        // rotating at the common frequency the amplitudes trace a circle,
        // alpha = a0 cos(eps t), beta = -i a0 sin(eps t), with period
        // 2 pi / eps.
        let eps = 0.01;
        let system = two_by_two(eps, false);
        let a0 = Complex64::new(1.0, 0.0);
        let initial = DynamicState::new(vec![a0], vec![Complex64::new(0.0, 0.0)], 0.0);
        let period = 2.0 * std::f64::consts::PI / eps;
        let trajectory = integrate(&system, &initial, period, 0.005, 0).unwrap();
        let mut worst = 0.0f64;
        // Spot-check a handful of stored samples against the closed form.
        let check = |state: &DynamicState, worst: &mut f64| {
            let rot = Complex64::from_polar(1.0, -state.t);
            let alpha_ref = a0 * (eps * state.t).cos() * rot;
            let beta_ref = Complex64::new(0.0, -1.0) * a0 * (eps * state.t).sin() * rot;
            *worst = worst
                .max((state.alpha[0] - alpha_ref).norm())
                .max((state.beta[0] - beta_ref).norm());
        };
        let quarter = integrate(&system, &initial, period / 4.0, 0.005, 0).unwrap();
        check(quarter.final_state(), &mut worst);
        check(trajectory.final_state(), &mut worst);
        assert!(worst < 1e-8, "max deviation from closed form {worst}");
        // At a quarter period the exchange is complete.
        assert_abs_diff_eq!(
            quarter.final_state().beta[0].norm(),
            1.0,
            epsilon = 1e-9
        );
        assert!(trajectory.relative_drift < 1e-8);
    }

    #[test]
    fn inverted_bank_grows_hyperbolically() {
        let eps = 0.01;
        let system = two_by_two(eps, true);
        let a0 = Complex64::new(1.0, 0.0);
        let initial = DynamicState::new(vec![a0], vec![Complex64::new(0.0, 0.0)], 0.0);
        let t_end = 100.0;
        let trajectory = integrate(&system, &initial, t_end, 0.005, 0).unwrap();
        let rot = Complex64::from_polar(1.0, -t_end);
        let alpha_ref = a0 * (eps * t_end).cosh() * rot;
        let beta_ref = Complex64::new(0.0, 1.0) * a0 * (eps * t_end).sinh() * rot;
        let state = trajectory.final_state();
        assert!((state.alpha[0] - alpha_ref).norm() < 1e-8);
        assert!((state.beta[0] - beta_ref).norm() < 1e-8);
        // Manley-Rowe difference stays pinned at its initial value.
        assert!(trajectory.relative_drift < 1e-8);
        assert!(state.alpha[0].norm() > 1.0, "field must grow");
    }

    #[test]
    fn rhs_conserves_the_right_quadratic_form() {
        // The instantaneous derivative of the conserved quantity vanishes
        // identically, not just on integrated trajectories.
        let state = DynamicState::new(
            vec![Complex64::new(0.3, 0.4), Complex64::new(-0.2, 0.9)],
            vec![Complex64::new(0.1, -0.7)],
            0.0,
        );
        for inverted in [false, true] {
            let bank = if inverted {
                OscillatorBank::amplifier(vec![1.3], 1.1, 0.05).unwrap()
            } else {
                OscillatorBank::absorber(vec![1.3], 1.1, 0.05).unwrap()
            };
            let system = CoupledSystem::from_frequencies(vec![0.9, 1.4], bank).unwrap();
            let (da, db) = if inverted {
                amplifier_rhs(&system, &state)
            } else {
                absorber_rhs(&system, &state)
            };
            let field: f64 = state
                .alpha
                .iter()
                .zip(&da)
                .map(|(a, d)| 2.0 * (a.conj() * d).re)
                .sum();
            let osc: f64 = state
                .beta
                .iter()
                .zip(&db)
                .map(|(b, d)| 2.0 * (b.conj() * d).re)
                .sum();
            let rate = if inverted { field - osc } else { field + osc };
            assert!(
                rate.abs() < 1e-12,
                "conserved-quantity rate {rate} (inverted = {inverted})"
            );
        }
    }

    #[test]
    fn halving_dt_gains_fourth_order_accuracy() {
        let eps = 0.05;
        let system = two_by_two(eps, false);
        let initial = DynamicState::new(
            vec![Complex64::new(1.0, 0.0)],
            vec![Complex64::new(0.0, 0.0)],
            0.0,
        );
        let t_end = 10.0;
        let closed = |t: f64| {
            let rot = Complex64::from_polar(1.0, -t);
            (
                (eps * t).cos() * rot,
                Complex64::new(0.0, -1.0) * (eps * t).sin() * rot,
            )
        };
        let err = |dt: f64| {
            let state = integrate(&system, &initial, t_end, dt, 0)
                .unwrap()
                .samples
                .last()
                .unwrap()
                .clone();
            let (ar, br) = closed(t_end);
            (state.alpha[0] - ar).norm() + (state.beta[0] - br).norm()
        };
        let e1 = err(0.04);
        let e2 = err(0.02);
        let ratio = e1 / e2;
        assert!(
            (10.0..24.0).contains(&ratio),
            "convergence ratio {ratio} outside fourth-order band (e1 = {e1}, e2 = {e2})"
        );
    }

    #[test]
    fn oversized_step_is_rejected() {
        let system = two_by_two(0.01, false);
        let initial = DynamicState::new(
            vec![Complex64::new(1.0, 0.0)],
            vec![Complex64::new(0.0, 0.0)],
            0.0,
        );
        let err = integrate(&system, &initial, 1.0, 0.2, 0).unwrap_err();
        assert!(matches!(err, SimError::StepTooLarge { .. }));
    }

    fn absorption_setup(epsilon: f64, omega0: f64) -> (ModeGrid, WavePacket, OscillatorBank) {
        let grid = make_mode_grid(40.0, 1.0, 129).unwrap();
        let packet = gaussian_coefficients(&grid, -12.0, 1.0).unwrap();
        let bank = OscillatorBank::absorber(vec![0.0], omega0, epsilon).unwrap();
        (grid, packet, bank)
    }

    #[test]
    fn numeric_absorption_matches_the_cumulative_gaussian_form() {
        let eps = 1e-3;
        let (grid, packet, bank) = absorption_setup(eps, 40.0);
        let scale = Complex64::new(1.0, 0.0);
        let system = CoupledSystem::new(&grid, bank).unwrap();
        let t_end = 19.0;
        let dt = stable_dt(system.max_omega(), t_end, 1e-9);
        let initial = DynamicState::from_background(&packet, scale, 1);
        let trajectory = integrate(&system, &initial, t_end, dt, 0).unwrap();
        let numeric = trajectory.final_state().beta[0];
        let analytic = analytic_beta_final(&packet, 0.0, scale, eps, t_end).unwrap();
        let rel = (numeric - analytic).norm() / analytic.norm();
        assert!(rel < 0.01, "relative mismatch {rel:.3e}");
        assert!(trajectory.relative_drift < 1e-8);
    }

    #[test]
    fn partial_absorption_at_the_median_is_half_the_final_magnitude() {
        let eps = 1e-3;
        let (_, packet, _) = absorption_setup(eps, 40.0);
        let scale = Complex64::new(2.0, 1.0);
        // Packet center reaches the oscillator at t = 12.
        let half = analytic_beta(&packet, 0.0, scale, eps, 12.0);
        let full = analytic_beta_final(&packet, 0.0, scale, eps, 19.0).unwrap();
        assert_abs_diff_eq!(half.norm(), 0.5 * full.norm(), epsilon = 1e-12);
    }

    #[test]
    fn zero_coupling_absorbs_nothing() {
        let (_, packet, _) = absorption_setup(0.0, 40.0);
        let v = analytic_beta_final(&packet, 0.0, Complex64::new(1.0, 0.0), 0.0, 19.0).unwrap();
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn early_final_query_reports_packet_not_passed() {
        let (_, packet, _) = absorption_setup(1e-3, 40.0);
        let err = analytic_beta_final(&packet, 0.0, Complex64::new(1.0, 0.0), 1e-3, 13.0)
            .unwrap_err();
        assert!(matches!(err, SimError::PacketNotPassed { .. }));
    }

    #[test]
    fn amplified_amplitude_mirrors_the_absorbed_one() {
        let (_, packet, _) = absorption_setup(1e-3, 40.0);
        let scale = Complex64::new(1.0, 2.0);
        let b = analytic_beta_final(&packet, 3.0, scale, 1e-3, 25.0).unwrap();
        let bd = analytic_bdagger_final(&packet, 3.0, scale, 1e-3, 25.0).unwrap();
        assert_abs_diff_eq!(b.norm(), bd.norm(), epsilon = 1e-14);
        // Conjugate phase structure: the arguments are negatives.
        assert_abs_diff_eq!(b.arg(), -bd.arg(), epsilon = 1e-12);
    }

    #[test]
    fn which_path_residual_is_small_on_resonance_and_large_detuned() {
        let grid = make_mode_grid(40.0, 1.0, 65).unwrap();
        let scale = Complex64::new(1.0, 0.0);
        let launches = [-16.0, -13.0];
        let t_end = 22.0;
        let resonant = OscillatorBank::absorber(vec![0.0], 40.0, 1e-3).unwrap();
        let dev_res =
            which_path_deviation(&grid, 1.0, scale, &resonant, &launches, t_end).unwrap();
        assert!(dev_res < 2e-4, "resonant which-path residual {dev_res:.3e}");

        let detuned = OscillatorBank::absorber(vec![0.0], 43.0, 1e-3).unwrap();
        let dev_det =
            which_path_deviation(&grid, 1.0, scale, &detuned, &launches, t_end).unwrap();
        assert!(
            dev_det > 10.0 * dev_res,
            "detuned residual {dev_det:.3e} vs resonant {dev_res:.3e}"
        );
    }

    #[test]
    fn single_launch_point_carries_no_which_path_signal() {
        let grid = make_mode_grid(40.0, 1.0, 65).unwrap();
        let bank = OscillatorBank::absorber(vec![0.0], 40.0, 1e-3).unwrap();
        let dev = which_path_deviation(
            &grid,
            1.0,
            Complex64::new(1.0, 0.0),
            &bank,
            &[-13.0],
            22.0,
        )
        .unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn unpassed_packet_fails_the_which_path_precondition() {
        let grid = make_mode_grid(40.0, 1.0, 65).unwrap();
        let bank = OscillatorBank::absorber(vec![0.0], 40.0, 1e-3).unwrap();
        let err = which_path_deviation(
            &grid,
            1.0,
            Complex64::new(1.0, 0.0),
            &bank,
            &[-13.0, -25.0],
            22.0,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::PacketNotPassed { .. }));
    }

    #[test]
    fn field_drift_is_coherent_at_the_carrier_and_antisymmetric() {
        let grid = make_mode_grid(40.0, 1.0, 65).unwrap();
        let packet = gaussian_coefficients(&grid, -13.0, 1.0).unwrap();
        let eps = 1e-3;
        let positions = vec![-1.0, 0.0, 2.5];
        let absorber = OscillatorBank::absorber(positions.clone(), 40.0, eps).unwrap();
        let amplifier = OscillatorBank::amplifier(positions.clone(), 40.0, eps).unwrap();
        let t = 25.0;

        // At the carrier the oscillator phases all align: pure attenuation.
        let at_carrier = field_drift_second_order(40.0, &packet, &absorber, t);
        let scalar = eps * eps
            * (2.0 * std::f64::consts::PI).sqrt()
            * packet.c0()
            * positions.len() as f64;
        assert_abs_diff_eq!(at_carrier.norm(), scalar, epsilon = 1e-9 * scalar);

        // Absorber and amplifier drifts are exact negatives mode by mode.
        for &k in grid.k_values() {
            let d_abs = field_drift_second_order(k, &packet, &absorber, t);
            let d_amp = field_drift_second_order(k, &packet, &amplifier, t);
            assert!((d_abs + d_amp).norm() < 1e-15);
        }

        // Scaling: quadratic in the coupling, linear in the bank size at the
        // carrier.
        let double_eps = OscillatorBank::absorber(positions, 40.0, 2.0 * eps).unwrap();
        let d2 = field_drift_second_order(40.0, &packet, &double_eps, t);
        assert_abs_diff_eq!(d2.norm(), 4.0 * at_carrier.norm(), epsilon = 1e-12);
        let one = OscillatorBank::absorber(vec![0.0], 40.0, eps).unwrap();
        let d1 = field_drift_second_order(40.0, &packet, &one, t);
        assert_abs_diff_eq!(3.0 * d1.norm(), at_carrier.norm(), epsilon = 1e-12);
    }

    #[test]
    fn fock_oracle_confirms_the_product_state_factorization() {
        let eps = 0.05;
        let t_end = std::f64::consts::FRAC_PI_2 / eps;
        let report = fock_oracle(Complex64::new(0.5, 0.0), eps, 1.0, t_end, 12).unwrap();
        assert!(
            report.fidelity > 1.0 - 1e-6,
            "fidelity {:.12}",
            report.fidelity
        );
        assert!(
            report.control_fidelity < 0.999,
            "control fidelity {:.6} should expose the corruption",
            report.control_fidelity
        );
        // Full transfer: the oscillator holds the whole excitation.
        assert!(report.mean_alpha.norm() < 1e-6);
        assert_abs_diff_eq!(report.mean_beta.norm(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn vacuum_is_stationary_in_the_fock_oracle() {
        let report = fock_oracle(Complex64::new(0.0, 0.0), 0.05, 1.0, 10.0, 4).unwrap();
        assert!((report.fidelity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overfilled_truncation_is_detected() {
        // alpha = 2.2 has non-negligible weight above n = 6.
        let err = fock_oracle(Complex64::new(2.2, 0.0), 0.01, 1.0, 1.0, 6).unwrap_err();
        assert!(matches!(err, SimError::TruncationLeak { .. }));
    }

    #[test]
    fn perturbative_check_flags_strong_backgrounds() {
        let grid = make_mode_grid(40.0, 1.0, 129).unwrap();
        let packet = gaussian_coefficients(&grid, -12.0, 1.0).unwrap();
        let bank = OscillatorBank::absorber(vec![0.0], 40.0, 1e-3).unwrap();
        assert!(bank
            .check_perturbative(&packet, Complex64::new(1.0, 0.0))
            .is_ok());
        let strong = bank
            .check_perturbative(&packet, Complex64::new(30.0, 0.0))
            .unwrap_err();
        assert!(matches!(strong, SimError::PerturbativeBound { .. }));
    }

    #[test]
    fn strong_background_absorption_still_tracks_the_closed_form_loosely() {
        // Large background amplitude: the closed form stays within a few
        // percent because depletion is relative to the (huge) field norm.
        let eps = 1e-3;
        let (grid, packet, bank) = absorption_setup(eps, 40.0);
        let scale = Complex64::new(30.0, 0.0);
        let system = CoupledSystem::new(&grid, bank).unwrap();
        let t_end = 19.0;
        let dt = stable_dt(system.max_omega(), t_end, 1e-9);
        let initial = DynamicState::from_background(&packet, scale, 1);
        let trajectory = integrate(&system, &initial, t_end, dt, 0).unwrap();
        let numeric = trajectory.final_state().beta[0];
        let analytic = analytic_beta_final(&packet, 0.0, scale, eps, t_end).unwrap();
        let rel = (numeric - analytic).norm() / analytic.norm();
        assert!(rel < 0.05, "relative mismatch {rel:.3e}");
        let expected_mag =
            eps * 30.0 * (2.0 * std::f64::consts::PI).sqrt() * packet.c0() * packet.sigma_p();
        assert_abs_diff_eq!(analytic.norm(), expected_mag, epsilon = 1e-12);
    }
}
