//! Two-beam entangled photon-hole states on coherent backgrounds.
//!
//! The state is a continuum superposition of product coherent packets,
//! `chi * integral dx1 dx2 f(x1,x2) |alpha(x1)> |alpha(x2)>`, where the hole
//! envelope `f` vanishes whenever the two packet centers coincide to within
//! the hole width `d`. All observables reduce to quadratures over the packet
//! centers weighted by coherent-state overlap kernels
//! `K(a,b) = exp(|alpha|^2 (O(a,b) - 1))`, with `O` the mode overlap of two
//! displaced packets. `K` is a narrow peak of width ~sigma_p on a constant
//! floor `exp(-|alpha|^2)`, which the quadrature exploits: the floor term
//! factorizes and the peak is summed over a band `|a-b| <= 8 sigma_p`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::wavepacket::{gaussian_coefficients, mode_overlap, ModeGrid, PacketOverlap};
use crate::{Result, SimError};

/// Beyond this many sigma_p of separation the mode overlap (exp(-16) ~ 1e-7)
/// no longer moves the kernel at the tolerances used here.
pub const KERNEL_BAND_SIGMAS: f64 = 8.0;

/// Half-width, in units of sigma_p, of the node window kept around each
/// detector when evaluating joint detection rates. Contributions outside are
/// suppressed by at least exp(-50).
pub const DETECTOR_WINDOW_SIGMAS: f64 = 10.0;

/// Hard floor of the wide-hole regime: the hole must be at least this many
/// packet widths across for the dip analysis to be meaningful.
pub const MIN_HOLE_WIDTHS: f64 = 10.0;

/// Cubic smoothstep, clamped to [0, 1].
fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * (3.0 - 2.0 * u)
    }
}

/// Shape of the pair envelope `f(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeProfile {
    /// Zero inside the hole, cubic smoothstep ramp over `d..4d`, then 1.
    Smoothstep,
    /// Identically 1; the separable control with no hole at all.
    Flat,
}

/// Pair envelope with hole width `d`.
#[derive(Debug, Clone, Copy)]
pub struct HoleEnvelope {
    d: f64,
    profile: EnvelopeProfile,
}

impl HoleEnvelope {
    pub fn new(d: f64, profile: EnvelopeProfile) -> Result<Self> {
        if d <= 0.0 {
            return Err(SimError::NonPositiveParameter { name: "d", value: d });
        }
        Ok(Self { d, profile })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn profile(&self) -> EnvelopeProfile {
        self.profile
    }

    /// Envelope value for packet centers `x1`, `x2`.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self.profile {
            EnvelopeProfile::Flat => 1.0,
            EnvelopeProfile::Smoothstep => {
                let sep = (x1 - x2).abs();
                smoothstep((sep - self.d) / (3.0 * self.d))
            }
        }
    }
}

/// Overlap of the multimode coherent states built on packets centered at `a`
/// and `b`: `exp(|alpha|^2 (O(a,b) - 1))`.
///
/// Errors if the separation exceeds the grid's alias-free window.
pub fn coherent_overlap(
    alpha: Complex64,
    a: f64,
    b: f64,
    grid: &ModeGrid,
    sigma_p: f64,
) -> Result<Complex64> {
    let window = grid.spatial_window();
    if (a - b).abs() > window {
        return Err(SimError::OutOfWindow {
            x: b,
            center: a,
            window,
        });
    }
    let pa = gaussian_coefficients(grid, a, sigma_p)?;
    let pb = gaussian_coefficients(grid, b, sigma_p)?;
    let o = mode_overlap(&pa, &pb)?;
    let alpha_sq = alpha.norm_sqr();
    Ok((alpha_sq * (o - 1.0)).exp())
}

/// Uniformly spaced quadrature nodes spanning `min..=max`.
pub fn uniform_nodes(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (min + max)];
    }
    let h = (max - min) / (n - 1) as f64;
    (0..n).map(|i| min + i as f64 * h).collect()
}

fn validate_nodes(nodes: &[f64], sigma_p: f64) -> Result<f64> {
    if nodes.is_empty() {
        return Err(SimError::IrregularNodes);
    }
    if nodes.len() == 1 {
        // Degenerate single-node quadrature; unit weight.
        return Ok(1.0);
    }
    let h = nodes[1] - nodes[0];
    if h <= 0.0 {
        return Err(SimError::IrregularNodes);
    }
    for pair in nodes.windows(2) {
        if (pair[1] - pair[0] - h).abs() > 1e-9 * h {
            return Err(SimError::IrregularNodes);
        }
    }
    let max = sigma_p / 2.0;
    if h > max * (1.0 + 1e-9) {
        return Err(SimError::NodesTooCoarse { spacing: h, max });
    }
    Ok(h)
}

/// Normalized (or not-yet-normalized) two-beam hole state on quadrature grids.
#[derive(Debug, Clone)]
pub struct HoleState {
    envelope: HoleEnvelope,
    alpha: Complex64,
    grid: ModeGrid,
    sigma_p: f64,
    c0: f64,
    x1_nodes: Vec<f64>,
    x2_nodes: Vec<f64>,
    h: f64,
    chi: Option<f64>,
    /// Kernel floor exp(-|alpha|^2).
    floor: f64,
    /// Mode-overlap evaluator for the banded kernel peak.
    overlap: PacketOverlap,
    /// f at node separations, indexed by i - j + (n2 - 1).
    f_diff: Vec<f64>,
}

/// chi together with the Monte-Carlo standard error, from [`monte_carlo_chi`].
#[derive(Debug, Clone, Copy)]
pub struct McChi {
    pub chi: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl HoleState {
    pub fn new(
        envelope: HoleEnvelope,
        alpha: Complex64,
        grid: ModeGrid,
        sigma_p: f64,
        x1_nodes: Vec<f64>,
        x2_nodes: Vec<f64>,
    ) -> Result<Self> {
        grid.validate_for(sigma_p)?;
        if envelope.profile() == EnvelopeProfile::Smoothstep
            && envelope.d() < MIN_HOLE_WIDTHS * sigma_p
        {
            return Err(SimError::HoleTooNarrow {
                d: envelope.d(),
                min: MIN_HOLE_WIDTHS * sigma_p,
            });
        }
        let h1 = validate_nodes(&x1_nodes, sigma_p)?;
        let h2 = validate_nodes(&x2_nodes, sigma_p)?;
        if x1_nodes.len() > 1 && x2_nodes.len() > 1 && (h1 - h2).abs() > 1e-9 * h1 {
            return Err(SimError::IrregularNodes);
        }
        let h = if x1_nodes.len() > 1 { h1 } else { h2 };
        let overlap = PacketOverlap::new(&grid, sigma_p)?;
        let c0 = gaussian_coefficients(&grid, 0.0, sigma_p)?.c0();
        let n1 = x1_nodes.len();
        let n2 = x2_nodes.len();
        // x1[i] - x2[j] = base + (i - j) h; tabulate f over the i - j range.
        let base = x1_nodes[0] - x2_nodes[0];
        let f_diff = (0..n1 + n2 - 1)
            .map(|m| {
                let diff = base + (m as f64 - (n2 - 1) as f64) * h;
                envelope.eval(diff, 0.0)
            })
            .collect();
        let floor = (-alpha.norm_sqr()).exp();
        Ok(Self {
            envelope,
            alpha,
            grid,
            sigma_p,
            c0,
            x1_nodes,
            x2_nodes,
            h,
            chi: None,
            floor,
            overlap,
            f_diff,
        })
    }

    /// Desk-scale default: sigma_p = 1, d = 10, 201 nodes spanning [-50, 50]
    /// (spacing sigma_p/2), |alpha|^2 = 10, 129 modes around k0 = 100.
    pub fn desk_default() -> Result<Self> {
        let grid = crate::wavepacket::make_mode_grid(100.0, 1.0, 129)?;
        let envelope = HoleEnvelope::new(10.0, EnvelopeProfile::Smoothstep)?;
        let nodes = uniform_nodes(-50.0, 50.0, 201);
        HoleState::new(
            envelope,
            Complex64::new(10.0f64.sqrt(), 0.0),
            grid,
            1.0,
            nodes.clone(),
            nodes,
        )
    }

    pub fn envelope(&self) -> &HoleEnvelope {
        &self.envelope
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    pub fn grid(&self) -> &ModeGrid {
        &self.grid
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn x1_nodes(&self) -> &[f64] {
        &self.x1_nodes
    }

    pub fn x2_nodes(&self) -> &[f64] {
        &self.x2_nodes
    }

    pub fn chi(&self) -> Option<f64> {
        self.chi
    }

    /// Coherent overlap kernel as a function of center separation.
    pub fn kernel(&self, delta: f64) -> f64 {
        if delta.abs() > KERNEL_BAND_SIGMAS * self.sigma_p {
            self.floor
        } else {
            let o = self.overlap.eval(delta);
            (self.alpha.norm_sqr() * (o - 1.0)).exp()
        }
    }

    /// Banded peak part of the kernel: `kernel(delta) - floor`.
    fn kernel_peak(&self, delta: f64) -> f64 {
        if delta.abs() > KERNEL_BAND_SIGMAS * self.sigma_p {
            0.0
        } else {
            self.kernel(delta) - self.floor
        }
    }

    /// Trapezoid unit weight of node `i` on an `n`-node beam.
    fn unit_weight(i: usize, n: usize) -> f64 {
        if n > 1 && (i == 0 || i == n - 1) {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid estimate of the norm quadrature on the given node vectors,
    /// using the floor/peak kernel split so the peak only enters through a
    /// band of near-diagonal pairs.
    fn trapezoid_q(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let n1 = x1.len();
        let n2 = x2.len();
        let h = if n1 > 1 {
            x1[1] - x1[0]
        } else if n2 > 1 {
            x2[1] - x2[0]
        } else {
            1.0
        };
        let u1: Vec<f64> = (0..n1).map(|i| Self::unit_weight(i, n1)).collect();
        let u2: Vec<f64> = (0..n2).map(|j| Self::unit_weight(j, n2)).collect();
        let bw = ((KERNEL_BAND_SIGMAS * self.sigma_p) / h).floor() as isize;
        let b_tab: Vec<f64> = (0..=bw as usize)
            .map(|m| self.kernel_peak(m as f64 * h))
            .collect();
        let base = x1[0] - x2[0];
        let off = n2 - 1;
        let f_diff: Vec<f64> = (0..n1 + n2 - 1)
            .map(|m| {
                let diff = base + (m as f64 - off as f64) * h;
                self.envelope.eval(diff, 0.0)
            })
            .collect();

        // S = sum of f over both beams; F1, F2 = partial sums over one beam.
        let mut s = 0.0;
        let mut f1 = vec![0.0; n1];
        let mut f2 = vec![0.0; n2];
        for i in 0..n1 {
            let mut row = 0.0;
            for j in 0..n2 {
                let v = f_diff[i + off - j];
                row += u2[j] * v;
                f2[j] += u1[i] * v;
            }
            f1[i] = row;
            s += u1[i] * row;
        }

        // Single-peak cross terms.
        let mut t1 = 0.0;
        for i in 0..n1 {
            let lo = (i as isize - bw).max(0) as usize;
            let hi = (i as isize + bw).min(n1 as isize - 1) as usize;
            for i2 in lo..=hi {
                let b = b_tab[(i2 as isize - i as isize).unsigned_abs()];
                t1 += u1[i] * u1[i2] * b * f1[i] * f1[i2];
            }
        }
        let mut t2 = 0.0;
        for j in 0..n2 {
            let lo = (j as isize - bw).max(0) as usize;
            let hi = (j as isize + bw).min(n2 as isize - 1) as usize;
            for j2 in lo..=hi {
                let b = b_tab[(j2 as isize - j as isize).unsigned_abs()];
                t2 += u2[j] * u2[j2] * b * f2[j] * f2[j2];
            }
        }

        // Double-peak term: both beams inside the kernel band.
        let mut t3 = 0.0;
        for i in 0..n1 {
            let ilo = (i as isize - bw).max(0) as usize;
            let ihi = (i as isize + bw).min(n1 as isize - 1) as usize;
            for i2 in ilo..=ihi {
                let b1 = b_tab[(i2 as isize - i as isize).unsigned_abs()];
                let ci = u1[i] * u1[i2] * b1;
                let mut inner = 0.0;
                for j in 0..n2 {
                    let jlo = (j as isize - bw).max(0) as usize;
                    let jhi = (j as isize + bw).min(n2 as isize - 1) as usize;
                    let fij = f_diff[i + off - j] * u2[j];
                    if fij == 0.0 {
                        continue;
                    }
                    let mut jrow = 0.0;
                    for j2 in jlo..=jhi {
                        let b2 = b_tab[(j2 as isize - j as isize).unsigned_abs()];
                        jrow += u2[j2] * b2 * f_diff[i2 + off - j2];
                    }
                    inner += fij * jrow;
                }
                t3 += ci * inner;
            }
        }

        let c = self.floor;
        let h4 = h * h * h * h;
        h4 * (c * c * s * s + c * (t1 + t2) + t3)
    }

    /// Computes the normalization constant so that `<psi|psi> = 1`.
    ///
    /// The coherent-overlap peak narrows as `sigma_p / |alpha|`, so a plain
    /// trapezoid at the stored node spacing carries an O(h^2) error that can
    /// reach ~1e-3 at the default scale. A second pass on the midpoint-refined
    /// mesh cancels that term by mesh-halving extrapolation,
    /// `Q = (4 Q_{h/2} - Q_h) / 3`, leaving errors well below 1e-4.
    pub fn normalize(mut self) -> Result<Self> {
        let densify = |nodes: &[f64]| -> Vec<f64> {
            if nodes.len() < 2 {
                return nodes.to_vec();
            }
            let mut out = Vec::with_capacity(2 * nodes.len() - 1);
            for pair in nodes.windows(2) {
                out.push(pair[0]);
                out.push(0.5 * (pair[0] + pair[1]));
            }
            out.push(nodes[nodes.len() - 1]);
            out
        };
        let coarse = self.trapezoid_q(&self.x1_nodes, &self.x2_nodes);
        let q = if self.x1_nodes.len() > 1 || self.x2_nodes.len() > 1 {
            let fine = self.trapezoid_q(&densify(&self.x1_nodes), &densify(&self.x2_nodes));
            (4.0 * fine - coarse) / 3.0
        } else {
            coarse
        };
        if !(q.is_finite() && q > 0.0) {
            return Err(SimError::DegenerateNorm { value: q });
        }
        self.chi = Some(1.0 / q.sqrt());
        Ok(self)
    }

    /// Unnormalized joint detection rate `G2(x_a, x_b)`: the diagonal
    /// fourth-order field moment of the state, evaluated by substituting the
    /// coherent eigenvalues of the detection operators and integrating the
    /// packet-center amplitudes over windows around each detector.
    pub fn joint_detection(&self, x_a: f64, x_b: f64) -> Result<f64> {
        let chi = self.chi.ok_or(SimError::NotNormalized)?;
        let w_half = DETECTOR_WINDOW_SIGMAS * self.sigma_p;
        let wa = self.window(&self.x1_nodes, x_a, w_half)?;
        let wb = self.window(&self.x2_nodes, x_b, w_half)?;
        let n1 = self.x1_nodes.len();
        let n2 = self.x2_nodes.len();
        let inv_two_sigma_sq = 1.0 / (2.0 * self.sigma_p * self.sigma_p);
        let ga: Vec<f64> = wa
            .clone()
            .map(|i| {
                let dx = self.x1_nodes[i] - x_a;
                Self::unit_weight(i, n1) * (-dx * dx * inv_two_sigma_sq).exp()
            })
            .collect();
        let gb: Vec<f64> = wb
            .clone()
            .map(|j| {
                let dx = self.x2_nodes[j] - x_b;
                Self::unit_weight(j, n2) * (-dx * dx * inv_two_sigma_sq).exp()
            })
            .collect();
        let (a0, b0) = (*wa.start(), *wb.start());
        let na = ga.len();
        let nb = gb.len();
        let k_tab: Vec<f64> = (0..na.max(nb))
            .map(|m| self.kernel(m as f64 * self.h))
            .collect();

        let off = n2 - 1;
        let mut acc = 0.0;
        for ia in 0..na {
            for ia2 in 0..na {
                let c12 = ga[ia] * ga[ia2] * k_tab[ia.abs_diff(ia2)];
                let i = a0 + ia;
                let i2 = a0 + ia2;
                let mut inner = 0.0;
                for jb in 0..nb {
                    let f1 = self.f_diff[i + off - (b0 + jb)];
                    if f1 == 0.0 {
                        continue;
                    }
                    let gj = gb[jb] * f1;
                    let mut jrow = 0.0;
                    for jb2 in 0..nb {
                        jrow += gb[jb2]
                            * k_tab[jb.abs_diff(jb2)]
                            * self.f_diff[i2 + off - (b0 + jb2)];
                    }
                    inner += gj * jrow;
                }
                acc += c12 * inner;
            }
        }
        let h4 = self.h.powi(4);
        let scale = self.alpha.norm_sqr().powi(2) * self.c0.powi(4) * chi * chi;
        Ok(scale * h4 * acc)
    }

    fn window(&self, nodes: &[f64], x: f64, w_half: f64) -> Result<std::ops::RangeInclusive<usize>> {
        let (lo, hi) = (x - w_half, x + w_half);
        if lo < nodes[0] || hi > nodes[nodes.len() - 1] {
            return Err(SimError::DetectorOutOfRange { x });
        }
        let start = nodes.partition_point(|&v| v < lo);
        let end = nodes.partition_point(|&v| v <= hi) - 1;
        Ok(start..=end)
    }

    /// Detector separation scan of the joint detection rate, with both
    /// detectors straddling the midpoint of the quadrature box.
    pub fn correlation_scan(&self, delta_max: f64, n_samples: usize) -> Result<CorrelationMap> {
        let chi = self.chi.ok_or(SimError::NotNormalized)?;
        let _ = chi;
        if n_samples < 2 {
            return Err(SimError::IrregularNodes);
        }
        let mid1 = 0.5 * (self.x1_nodes[0] + self.x1_nodes[self.x1_nodes.len() - 1]);
        let mid2 = 0.5 * (self.x2_nodes[0] + self.x2_nodes[self.x2_nodes.len() - 1]);
        let step = 2.0 * delta_max / (n_samples - 1) as f64;
        let mut delta_x = Vec::with_capacity(n_samples);
        let mut g2 = Vec::with_capacity(n_samples);
        for s in 0..n_samples {
            let dx = -delta_max + s as f64 * step;
            let value = self.joint_detection(mid1 + 0.5 * dx, mid2 - 0.5 * dx)?;
            delta_x.push(dx);
            g2.push(value);
        }
        Ok(CorrelationMap {
            delta_x,
            g2,
            d: self.envelope.d(),
        })
    }
}

/// Result of [`HoleState::correlation_scan`].
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    pub delta_x: Vec<f64>,
    pub g2: Vec<f64>,
    pub d: f64,
}

/// Plateau statistics over `|delta_x| >= 4d`.
#[derive(Debug, Clone, Copy)]
pub struct PlateauStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl CorrelationMap {
    /// Minimum of the map near zero separation (`|delta_x| <= d/2`), or the
    /// global minimum if the scan does not sample that region.
    pub fn dip_value(&self) -> f64 {
        let near: Vec<f64> = self
            .delta_x
            .iter()
            .zip(&self.g2)
            .filter(|(dx, _)| dx.abs() <= 0.5 * self.d)
            .map(|(_, &g)| g)
            .collect();
        let candidates = if near.is_empty() { &self.g2 } else { &near };
        candidates.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn plateau(&self) -> Option<PlateauStats> {
        let vals: Vec<f64> = self
            .delta_x
            .iter()
            .zip(&self.g2)
            .filter(|(dx, _)| dx.abs() >= 4.0 * self.d)
            .map(|(_, &g)| g)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(PlateauStats {
            mean,
            min,
            max,
            count: vals.len(),
        })
    }

    /// Relative plateau spread `(max - min) / mean`.
    pub fn plateau_flatness(&self) -> Option<f64> {
        self.plateau().map(|p| (p.max - p.min) / p.mean)
    }

    /// Distance from zero separation at which the map first recovers to half
    /// of the dip depth, averaged over the two scan directions.
    pub fn half_depth_radius(&self) -> Option<f64> {
        let plateau = self.plateau()?.mean;
        let dip = self.dip_value();
        let level = dip + 0.5 * (plateau - dip);
        let center = self
            .delta_x
            .iter()
            .position(|dx| dx.abs() == self.delta_x.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
            .unwrap_or(self.delta_x.len() / 2);
        let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
            let mut prev: Option<usize> = None;
            for idx in range {
                if let Some(p) = prev {
                    let (g0, g1) = (self.g2[p], self.g2[idx]);
                    if (g0 < level) != (g1 < level) {
                        let t = (level - g0) / (g1 - g0);
                        return Some(
                            (self.delta_x[p] + t * (self.delta_x[idx] - self.delta_x[p])).abs(),
                        );
                    }
                }
                prev = Some(idx);
            }
            None
        };
        let right = crossing(&mut (center..self.delta_x.len()));
        let left = crossing(&mut (0..=center).rev());
        match (left, right) {
            (Some(l), Some(r)) => Some(0.5 * (l + r)),
            (Some(v), None) | (None, Some(v)) => Some(v),
            (None, None) => None,
        }
    }
}

/// Piecewise-constant importance table for the kernel peak, sampling
/// separations with density proportional to `|kernel(d) - floor|`.
struct PeakTable {
    edges: Vec<f64>,
    cumulative: Vec<f64>,
    densities: Vec<f64>,
}

impl PeakTable {
    fn build(state: &HoleState, bins: usize) -> Self {
        let band = KERNEL_BAND_SIGMAS * state.sigma_p();
        let width = 2.0 * band / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|b| -band + b as f64 * width).collect();
        let masses: Vec<f64> = edges
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (state.kernel(mid) - state.floor).abs() * (w[1] - w[0])
            })
            .collect();
        let total: f64 = masses.iter().sum();
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        let densities = masses.iter().map(|m| m / total / width).collect();
        Self {
            edges,
            cumulative,
            densities,
        }
    }

    /// Draws a separation and returns it with its sampling density.
    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let r = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let bin = self
            .cumulative
            .partition_point(|&c| c < r)
            .min(self.densities.len() - 1);
        let delta = self.edges[bin] + rng.gen::<f64>() * (self.edges[bin + 1] - self.edges[bin]);
        (delta, self.densities[bin])
    }
}

/// Stratified mean of `draw` over a `dims`-dimensional unit cube, split into
/// `n_side^dims` cells with two draws each. Returns `(mean, variance of the
/// mean)` where `draw` receives the cell's lower corner offsets in `[0,1)`.
fn stratified_mean(
    rng: &mut ChaCha8Rng,
    dims: usize,
    n_side: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng, &[f64]) -> f64,
) -> (f64, f64) {
    let cells = n_side.pow(dims as u32);
    let mut corner = vec![0.0f64; dims];
    let mut grand = 0.0;
    let mut var = 0.0;
    for c in 0..cells {
        let mut rem = c;
        for corner_d in corner.iter_mut() {
            *corner_d = (rem % n_side) as f64 / n_side as f64;
            rem /= n_side;
        }
        let a = draw(rng, &corner);
        let b = draw(rng, &corner);
        grand += a + b;
        let m = 0.5 * (a + b);
        var += (a - m) * (a - m) + (b - m) * (b - m);
    }
    let mean = grand / (2 * cells) as f64;
    // Unbiased within-cell variance (n-1 = 1), propagated to the mean.
    let var_mean = var / (cells * cells) as f64 / 2.0;
    (mean, var_mean)
}

/// Independent Monte-Carlo estimate of the normalization constant.
///
/// The norm quadrature is split by the kernel floor/peak decomposition into
/// a separable floor term, two single-peak cross terms, and a double-peak
/// term. Each is estimated by stratified sampling over the quadrature box,
/// with peak separations importance-sampled from a table proportional to the
/// kernel peak (antithetic in sign for the double-peak term). Only the kernel
/// and envelope definitions are shared with [`HoleState::normalize`]; the
/// integration machinery is disjoint.
pub fn monte_carlo_chi(state: &HoleState, samples: usize, seed: u64) -> Result<McChi> {
    if samples < 64 {
        return Err(SimError::DegenerateNorm { value: 0.0 });
    }
    let x1 = state.x1_nodes();
    let x2 = state.x2_nodes();
    let (lo1, hi1) = (x1[0], x1[x1.len() - 1]);
    let (lo2, hi2) = (x2[0], x2[x2.len() - 1]);
    let len1 = hi1 - lo1;
    let len2 = hi2 - lo2;
    if len1 <= 0.0 || len2 <= 0.0 {
        return Err(SimError::DegenerateNorm { value: 0.0 });
    }
    let area = len1 * len2;
    let envelope = state.envelope();
    let floor = state.floor;
    let alpha_sq = state.alpha.norm_sqr();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = 0usize;

    // Separable floor term: (floor * integral of f)^2.
    let side_s = (((samples / 4) / 2) as f64).sqrt().floor().max(1.0) as usize;
    let (s_mean, s_var) = stratified_mean(&mut rng, 2, side_s, |rng, corner| {
        let u1 = lo1 + (corner[0] + rng.gen::<f64>() / side_s as f64) * len1;
        let u2 = lo2 + (corner[1] + rng.gen::<f64>() / side_s as f64) * len2;
        envelope.eval(u1, u2)
    });
    used += 2 * side_s * side_s;
    let s_hat = area * s_mean;
    let s_se = area * s_var.sqrt();
    let term_s = floor * floor * s_hat * s_hat;
    let term_s_var = (2.0 * floor * floor * s_hat * s_se).powi(2);

    // Peak terms vanish without a background.
    if alpha_sq < 1e-12 {
        let q_hat = term_s;
        if !(q_hat.is_finite() && q_hat > 0.0) {
            return Err(SimError::DegenerateNorm { value: q_hat });
        }
        let se_q = term_s_var.sqrt();
        let chi = 1.0 / q_hat.sqrt();
        return Ok(McChi {
            chi,
            std_err: 0.5 * chi * se_q / q_hat,
            samples: used,
        });
    }

    let table = PeakTable::build(state, 4000);
    let peak = |d: f64| state.kernel(d) - floor;

    // Single-peak cross terms: peak on one beam, floor on the other, so one
    // center on the floor beam ranges freely.
    let side_t = (((samples / 8) / 2) as f64).cbrt().floor().max(1.0) as usize;
    let mut cross = |on_first: bool| -> (f64, f64) {
        let (mean, var) = stratified_mean(&mut rng, 3, side_t, |rng, corner| {
            let u1 = lo1 + (corner[0] + rng.gen::<f64>() / side_t as f64) * len1;
            let u2 = lo2 + (corner[1] + rng.gen::<f64>() / side_t as f64) * len2;
            let (d, q) = table.draw(rng);
            if on_first {
                let v1 = u1 + d;
                let v2 = lo2 + (corner[2] + rng.gen::<f64>() / side_t as f64) * len2;
                if v1 < lo1 || v1 > hi1 {
                    0.0
                } else {
                    envelope.eval(u1, u2) * envelope.eval(v1, v2) * peak(d) / q
                }
            } else {
                let v2 = u2 + d;
                let v1 = lo1 + (corner[2] + rng.gen::<f64>() / side_t as f64) * len1;
                if v2 < lo2 || v2 > hi2 {
                    0.0
                } else {
                    envelope.eval(u1, u2) * envelope.eval(v1, v2) * peak(d) / q
                }
            }
        });
        let vol = area * if on_first { len2 } else { len1 };
        (floor * vol * mean, (floor * vol).powi(2) * var)
    };
    let (term_t1, term_t1_var) = cross(true);
    let (term_t2, term_t2_var) = cross(false);
    used += 2 * 2 * side_t.pow(3);

    // Double-peak term, antithetic in the separation signs.
    let side_p = (((samples / 2) / 2) as f64).sqrt().floor().max(1.0) as usize;
    let (p_mean, p_var) = stratified_mean(&mut rng, 2, side_p, |rng, corner| {
        let u1 = lo1 + (corner[0] + rng.gen::<f64>() / side_p as f64) * len1;
        let u2 = lo2 + (corner[1] + rng.gen::<f64>() / side_p as f64) * len2;
        let (d1, q1) = table.draw(rng);
        let (d2, q2) = table.draw(rng);
        let fu = envelope.eval(u1, u2);
        // The kernel is even in the separation, so both antithetic branches
        // share the peak values.
        let pk = peak(d1) * peak(d2) / (2.0 * q1 * q2);
        let mut acc = 0.0;
        for sign in [1.0, -1.0] {
            let v1 = u1 + sign * d1;
            let v2 = u2 + sign * d2;
            if v1 >= lo1 && v1 <= hi1 && v2 >= lo2 && v2 <= hi2 {
                acc += fu * envelope.eval(v1, v2) * pk;
            }
        }
        acc
    });
    used += 2 * side_p * side_p;
    let term_p = area * p_mean;
    let term_p_var = area * area * p_var;

    let q_hat = term_s + term_t1 + term_t2 + term_p;
    if !(q_hat.is_finite() && q_hat > 0.0) {
        return Err(SimError::DegenerateNorm { value: q_hat });
    }
    let se_q = (term_s_var + term_t1_var + term_t2_var + term_p_var).sqrt();
    let chi = 1.0 / q_hat.sqrt();
    Ok(McChi {
        chi,
        std_err: 0.5 * chi * se_q / q_hat,
        samples: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavepacket::make_mode_grid;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn small_state(alpha_sq: f64) -> HoleState {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let envelope = HoleEnvelope::new(10.0, EnvelopeProfile::Smoothstep).unwrap();
        let nodes = uniform_nodes(-60.0, 60.0, 241);
        HoleState::new(
            envelope,
            Complex64::new(alpha_sq.sqrt(), 0.0),
            grid,
            1.0,
            nodes.clone(),
            nodes,
        )
        .unwrap()
    }

    #[test]
    fn envelope_profile_has_hole_ramp_and_plateau() {
        let env = HoleEnvelope::new(10.0, EnvelopeProfile::Smoothstep).unwrap();
        assert_eq!(env.eval(0.0, 0.0), 0.0);
        assert_eq!(env.eval(9.9, 0.0), 0.0);
        assert_eq!(env.eval(10.0, 0.0), 0.0);
        assert_relative_eq!(env.eval(25.0, 0.0), 0.5, max_relative = 1e-12);
        assert_eq!(env.eval(40.0, 0.0), 1.0);
        assert_eq!(env.eval(-173.0, 0.0), 1.0);
        let flat = HoleEnvelope::new(10.0, EnvelopeProfile::Flat).unwrap();
        assert_eq!(flat.eval(0.0, 0.0), 1.0);
    }

    #[test]
    fn coherent_overlap_of_identical_centers_is_one() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let alpha = Complex64::new(3.0, 1.0);
        let o = coherent_overlap(alpha, 2.0, 2.0, &grid, 1.0).unwrap();
        assert_abs_diff_eq!(o.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn distant_coherent_overlap_hits_the_floor() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let alpha = Complex64::new(10.0f64.sqrt(), 0.0);
        let o = coherent_overlap(alpha, -5.0, 5.0, &grid, 1.0).unwrap();
        // exp(-10) = 4.5399929762484854e-5
        assert_abs_diff_eq!(o.norm(), 4.5399929762484854e-5, epsilon = 1e-7);
    }

    #[test]
    fn vacuum_background_overlap_is_unity() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let o = coherent_overlap(Complex64::new(0.0, 0.0), -5.0, 7.0, &grid, 1.0).unwrap();
        assert_abs_diff_eq!(o.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_normalization_reduces_to_envelope_area() {
        let state = small_state(0.0).normalize().unwrap();
        // With no background the kernel is identically 1 and the norm is the
        // squared envelope integral; reproduce the mesh-halving extrapolation
        // with plain double loops written independently.
        let trapezoid = |nodes: &[f64]| -> f64 {
            let h = nodes[1] - nodes[0];
            let mut s = 0.0;
            for (i, &a) in nodes.iter().enumerate() {
                for (j, &b) in nodes.iter().enumerate() {
                    let w = HoleState::unit_weight(i, nodes.len())
                        * HoleState::unit_weight(j, nodes.len());
                    s += w * state.envelope().eval(a, b);
                }
            }
            s * h * h
        };
        let nodes = state.x1_nodes().to_vec();
        let fine = uniform_nodes(nodes[0], nodes[nodes.len() - 1], 2 * nodes.len() - 1);
        let s_c = trapezoid(&nodes);
        let s_f = trapezoid(&fine);
        let q = (4.0 * s_f * s_f - s_c * s_c) / 3.0;
        assert_relative_eq!(state.chi().unwrap(), 1.0 / q.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn degenerate_grid_fails_normalization() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let envelope = HoleEnvelope::new(10.0, EnvelopeProfile::Smoothstep).unwrap();
        let state = HoleState::new(
            envelope,
            Complex64::new(1.0, 0.0),
            grid,
            1.0,
            vec![0.0],
            vec![0.0],
        )
        .unwrap();
        let err = state.normalize().unwrap_err();
        assert!(matches!(err, SimError::DegenerateNorm { .. }));
    }

    #[test]
    fn narrow_hole_is_rejected() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let envelope = HoleEnvelope::new(5.0, EnvelopeProfile::Smoothstep).unwrap();
        let err = HoleState::new(
            envelope,
            Complex64::new(1.0, 0.0),
            grid,
            1.0,
            uniform_nodes(-60.0, 60.0, 241),
            uniform_nodes(-60.0, 60.0, 241),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::HoleTooNarrow { .. }));
    }

    #[test]
    fn joint_detection_requires_normalization() {
        let state = small_state(10.0);
        let err = state.joint_detection(0.0, 0.0).unwrap_err();
        assert!(matches!(err, SimError::NotNormalized));
    }

    #[test]
    fn joint_detection_vanishes_without_background() {
        let state = small_state(0.0).normalize().unwrap();
        let g2 = state.joint_detection(10.0, -10.0).unwrap();
        assert_eq!(g2, 0.0);
    }

    #[test]
    fn detector_window_must_fit_in_the_box() {
        let state = small_state(10.0).normalize().unwrap();
        let err = state.joint_detection(55.0, 0.0).unwrap_err();
        assert!(matches!(err, SimError::DetectorOutOfRange { .. }));
    }

    #[test]
    fn coarse_nodes_are_rejected() {
        let grid = make_mode_grid(100.0, 1.0, 65).unwrap();
        let envelope = HoleEnvelope::new(10.0, EnvelopeProfile::Smoothstep).unwrap();
        let err = HoleState::new(
            envelope,
            Complex64::new(1.0, 0.0),
            grid,
            1.0,
            uniform_nodes(-60.0, 60.0, 61),
            uniform_nodes(-60.0, 60.0, 61),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::NodesTooCoarse { .. }));
    }
}
