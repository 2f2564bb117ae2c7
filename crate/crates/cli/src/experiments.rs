//! Experiment runners: each takes resolved scenario parameters, drives the
//! core library, writes CSV/SVG artifacts, and returns summary lines plus
//! pass/fail checks against the experiment's invariants.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;

use holesim_core::chain::{
    balanced_chain, dispersion_cancellation, mode_resolved_cancellation, noise_scaling_scan,
    run_chain,
};
use holesim_core::decoherence::{
    beamsplitter_visibility, loss_budget, visibility_amplitude, BeamSplitterTap, DecoherenceModel,
};
use holesim_core::dynamics::{
    branch_deviation, field_drift_second_order, fock_oracle, passage_fraction,
    which_path_branches, OscillatorBank,
};
use holesim_core::holestate::{
    monte_carlo_chi, uniform_nodes, EnvelopeProfile, HoleEnvelope, HoleState,
};
use holesim_core::wavepacket::{gaussian_coefficients, make_mode_grid};

use crate::output::{write_csv, write_svg, Cell, Check, Plot, Series};
use crate::scenario::{
    BudgetParams, ChainParams, DispersionParams, Fig3Params, FockParams, Params, Scenario,
    VisibilityParams, WhichPathParams,
};

/// Everything a runner produced: human-readable lines, pass/fail checks,
/// and the artifact files it wrote.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Dispatches to the runner for the scenario's experiment.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    match &scenario.params {
        Params::Fig3(p) => run_fig3(p, scenario.seed, out_dir),
        Params::WhichPath(p) => run_which_path(p, out_dir),
        Params::Fock(p) => run_fock(p, out_dir),
        Params::Visibility(p) => run_visibility(p, out_dir),
        Params::Budget(p) => run_budget(p, out_dir),
        Params::Chain(p) => run_chain_scan(p, out_dir),
        Params::Dispersion(p) => run_dispersion(p, out_dir),
    }
}

/// Cheap validation pass: builds every validating core object the runner
/// would build, without running quadratures or integrations.
pub fn preflight(scenario: &Scenario) -> Result<()> {
    match &scenario.params {
        Params::Fig3(p) => {
            build_hole_state(p).map(|_| ())?;
            if p.scan_samples < 2 {
                bail!("key 'scan_samples': a scan needs at least 2 samples");
            }
            Ok(())
        }
        Params::WhichPath(p) => {
            let (grid, bank) = which_path_system(p)?;
            let _ = &bank;
            for &off in &p.offsets {
                let x1 = p.launch_base + off;
                let packet = gaussian_coefficients(&grid, x1, p.sigma_p)
                    .context("scenario keys 'launch_base', 'offsets', 'sigma_p'")?;
                let fraction = passage_fraction(&packet, p.osc_x, p.t_end);
                if fraction < 1.0 - 1e-8 {
                    bail!(
                        "keys 't_end', 'launch_base', 'offsets': the packet launched at \
                         {x1} has not fully passed the oscillator at {} by t = {} \
                         (passage fraction {fraction:.10})",
                        p.osc_x,
                        p.t_end
                    );
                }
            }
            Ok(())
        }
        Params::Fock(p) => {
            if p.truncation < 2 {
                bail!(
                    "key 'truncation': the joint number basis needs at least 2 levels, \
                     got {}",
                    p.truncation
                );
            }
            OscillatorBank::absorber(vec![0.0], p.omega0, p.epsilon)
                .context("scenario keys 'omega0', 'epsilon'")?;
            Ok(())
        }
        Params::Visibility(p) => {
            for &r in &p.ratios {
                DecoherenceModel::with_contrast(1.0, r, 0, p.contrast)
                    .context("scenario keys 'ratios', 'contrast'")?;
            }
            Ok(())
        }
        Params::Budget(p) => {
            for &r in &p.ratios {
                loss_budget(r, p.floor).context("scenario keys 'ratios', 'floor'")?;
            }
            Ok(())
        }
        Params::Chain(p) => {
            for &n in &p.amplifier_counts {
                balanced_chain(p.total_gain, n)
                    .context("scenario keys 'total_gain', 'amplifier_counts'")?;
            }
            Ok(())
        }
        Params::Dispersion(p) => {
            dispersion_cancellation(p.loss_strength, p.gain_strength)
                .context("scenario keys 'loss_strength', 'gain_strength'")?;
            let grid = make_mode_grid(p.k0, p.sigma_p, p.n_modes)
                .context("scenario keys 'k0', 'sigma_p', 'n_modes'")?;
            gaussian_coefficients(&grid, p.x1, p.sigma_p).context("scenario key 'x1'")?;
            OscillatorBank::absorber(p.positions.clone(), p.omega0, p.epsilon)
                .context("scenario keys 'positions', 'omega0', 'epsilon'")?;
            Ok(())
        }
    }
}

fn build_hole_state(p: &Fig3Params) -> Result<HoleState> {
    if !(p.alpha_sq >= 0.0) {
        bail!("key 'alpha_sq': the background photon number must be non-negative");
    }
    let grid = make_mode_grid(p.k0, p.sigma_p, p.n_modes)
        .context("scenario keys 'k0', 'sigma_p', 'n_modes'")?;
    let envelope = HoleEnvelope::new(p.hole_width, EnvelopeProfile::Smoothstep)
        .context("scenario key 'hole_width'")?;
    let nodes = uniform_nodes(-p.box_half, p.box_half, p.n_nodes);
    HoleState::new(
        envelope,
        Complex64::new(p.alpha_sq.sqrt(), 0.0),
        grid,
        p.sigma_p,
        nodes.clone(),
        nodes,
    )
    .context("scenario keys 'hole_width', 'box_half', 'n_nodes', 'sigma_p'")
}

fn build_control_state(p: &Fig3Params) -> Result<HoleState> {
    let grid = make_mode_grid(p.k0, p.sigma_p, p.n_modes)
        .context("scenario keys 'k0', 'sigma_p', 'n_modes'")?;
    let envelope = HoleEnvelope::new(p.hole_width, EnvelopeProfile::Flat)
        .context("scenario key 'hole_width'")?;
    let nodes = uniform_nodes(-p.box_half, p.box_half, p.n_nodes);
    HoleState::new(
        envelope,
        Complex64::new(p.alpha_sq.sqrt(), 0.0),
        grid,
        p.sigma_p,
        nodes.clone(),
        nodes,
    )
    .context("scenario keys 'box_half', 'n_nodes', 'sigma_p'")
}

fn run_fig3(p: &Fig3Params, seed: u64, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();

    let state = build_hole_state(p)?
        .normalize()
        .context("normalizing the hole state")?;
    let chi = state.chi().expect("normalized state has chi");
    outcome
        .lines
        .push(format!("normalization chi = {chi:.12e}"));

    let map = state
        .correlation_scan(p.scan_half, p.scan_samples)
        .context("scenario keys 'scan_half', 'scan_samples'")?;
    let Some(plateau) = map.plateau() else {
        bail!(
            "keys 'scan_half', 'hole_width': the scan never reaches the plateau \
             (|delta_x| >= 4 hole widths); widen scan_half"
        );
    };

    let dip = map.dip_value();
    let dip_threshold = 1e-3 * plateau.mean;
    outcome.lines.push(format!(
        "plateau mean = {:.12e} over {} samples",
        plateau.mean, plateau.count
    ));
    outcome.checks.push(Check::new(
        format!("central dip = {dip:.6e} (threshold {dip_threshold:.6e} = 1e-3 of plateau)"),
        dip < dip_threshold,
    ));
    let flatness = map.plateau_flatness().unwrap_or(f64::INFINITY);
    outcome.checks.push(Check::new(
        format!("plateau flatness = {flatness:.6e} (threshold 2e-2)"),
        flatness < 0.02,
    ));
    if let Some(radius) = map.half_depth_radius() {
        let d = p.hole_width;
        outcome.checks.push(Check::new(
            format!(
                "half-depth recovery radius = {radius:.6} (must lie within ({d}, {}))",
                4.0 * d
            ),
            radius > d && radius < 4.0 * d,
        ));
    }

    let mut control_g2: Option<Vec<f64>> = None;
    if p.control {
        let control = build_control_state(p)?
            .normalize()
            .context("normalizing the flat-envelope control")?;
        let control_map = control
            .correlation_scan(p.scan_half, p.scan_samples)
            .context("scenario keys 'scan_half', 'scan_samples'")?;
        let mean = control_map.g2.iter().sum::<f64>() / control_map.g2.len() as f64;
        let min = control_map.g2.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = control_map
            .g2
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = (max - min) / mean;
        outcome.checks.push(Check::new(
            format!("flat-envelope control span = {span:.6e} (threshold 1e-6)"),
            span < 1e-6,
        ));
        control_g2 = Some(control_map.g2);
    }

    if p.mc_check {
        let mc = monte_carlo_chi(&state, p.mc_samples, seed)
            .context("scenario keys 'mc_samples', 'seed'")?;
        let gap = (mc.chi - chi).abs() / chi;
        let se_rel = mc.std_err / chi;
        let threshold = (5.0 * se_rel).max(1e-3);
        outcome.lines.push(format!(
            "monte carlo chi = {:.12e} +- {:.3e} ({} samples, seed {seed})",
            mc.chi, mc.std_err, mc.samples
        ));
        outcome.checks.push(Check::new(
            format!(
                "monte carlo vs quadrature gap = {gap:.6e} \
                 (threshold {threshold:.6e} = max(1e-3, 5 standard errors))"
            ),
            gap < threshold,
        ));
    }

    // CSV.
    let csv_path = out.join("fig3_scan.csv");
    let mut header = vec!["delta_x (position)", "g2_hole (dimensionless)"];
    if control_g2.is_some() {
        header.push("g2_control (dimensionless)");
    }
    let rows: Vec<Vec<Cell>> = map
        .delta_x
        .iter()
        .enumerate()
        .map(|(i, &dx)| {
            let mut row = vec![Cell::Num(dx), Cell::Num(map.g2[i])];
            if let Some(cg) = &control_g2 {
                row.push(Cell::Num(cg[i]));
            }
            row
        })
        .collect();
    write_csv(&csv_path, &header, &rows)?;
    outcome.files.push(csv_path);

    // SVG.
    let mut series = vec![Series {
        label: "hole envelope".into(),
        points: map
            .delta_x
            .iter()
            .zip(&map.g2)
            .map(|(&x, &y)| (x, y))
            .collect(),
        dashed: false,
    }];
    if let Some(cg) = &control_g2 {
        series.push(Series {
            label: "flat control".into(),
            points: map.delta_x.iter().zip(cg).map(|(&x, &y)| (x, y)).collect(),
            dashed: true,
        });
    }
    let svg_path = out.join("fig3_scan.svg");
    write_svg(
        &svg_path,
        &Plot {
            title: "Joint detection vs detector separation".into(),
            x_label: "detector separation".into(),
            y_label: "joint detection rate".into(),
            series,
        },
    )?;
    outcome.files.push(svg_path);

    Ok(outcome)
}

fn which_path_system(p: &WhichPathParams) -> Result<(holesim_core::wavepacket::ModeGrid, OscillatorBank)> {
    let grid = make_mode_grid(p.k0, p.sigma_p, p.n_modes)
        .context("scenario keys 'k0', 'sigma_p', 'n_modes'")?;
    let bank = OscillatorBank::absorber(vec![p.osc_x], p.omega0, p.epsilon)
        .context("scenario keys 'osc_x', 'omega0', 'epsilon'")?;
    Ok((grid, bank))
}

fn run_which_path(p: &WhichPathParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let (grid, bank) = which_path_system(p)?;
    let x1_list: Vec<f64> = p.offsets.iter().map(|off| p.launch_base + off).collect();
    let scale = Complex64::new(1.0, 0.0);

    let branches = which_path_branches(&grid, p.sigma_p, scale, &bank, &x1_list, p.t_end)
        .context("scenario keys 'launch_base', 'offsets', 't_end'")?;
    let deviation = branch_deviation(&branches);
    let max_drift = branches
        .iter()
        .map(|b| b.relative_drift)
        .fold(0.0, f64::max);

    outcome.checks.push(Check::new(
        format!("max deviation = {deviation:.6e} (threshold {:e})", p.threshold),
        deviation < p.threshold,
    ));
    outcome.checks.push(Check::new(
        format!("max conservation drift = {max_drift:.6e} (threshold 1e-8)"),
        max_drift < 1e-8,
    ));

    let mut halved: Option<Vec<holesim_core::dynamics::BranchResult>> = None;
    if p.check_halving {
        let bank_half = OscillatorBank::absorber(vec![p.osc_x], p.omega0, 0.5 * p.epsilon)
            .context("scenario keys 'osc_x', 'omega0', 'epsilon'")?;
        let branches_half =
            which_path_branches(&grid, p.sigma_p, scale, &bank_half, &x1_list, p.t_end)
                .context("scenario keys 'launch_base', 'offsets', 't_end'")?;
        let dev_half = branch_deviation(&branches_half);
        outcome.checks.push(Check::new(
            format!(
                "halved-coupling deviation = {dev_half:.6e} (must fall below {deviation:.6e})"
            ),
            dev_half < deviation,
        ));
        halved = Some(branches_half);
    }

    let amp = branches
        .iter()
        .map(|b| b.final_beta[0].norm())
        .fold(0.0, f64::max);
    outcome.lines.push(format!(
        "largest absorbed amplitude |beta| = {amp:.6e} across {} launch points",
        branches.len()
    ));

    let csv_path = out.join("which_path.csv");
    let rows: Vec<Vec<Cell>> = branches
        .iter()
        .map(|b| {
            vec![
                Cell::Num(b.x1),
                Cell::Num(b.final_beta[0].re),
                Cell::Num(b.final_beta[0].im),
                Cell::Num(b.final_beta[0].norm()),
            ]
        })
        .collect();
    write_csv(
        &csv_path,
        &[
            "x1 (position)",
            "beta_re (dimensionless)",
            "beta_im (dimensionless)",
            "beta_abs (dimensionless)",
        ],
        &rows,
    )?;
    outcome.files.push(csv_path);

    let mut series = vec![Series {
        label: "full coupling".into(),
        points: branches
            .iter()
            .map(|b| (b.x1, b.final_beta[0].norm()))
            .collect(),
        dashed: false,
    }];
    if let Some(bh) = &halved {
        series.push(Series {
            label: "halved coupling".into(),
            points: bh.iter().map(|b| (b.x1, b.final_beta[0].norm())).collect(),
            dashed: true,
        });
    }
    let svg_path = out.join("which_path.svg");
    write_svg(
        &svg_path,
        &Plot {
            title: "Absorbed amplitude vs launch point".into(),
            x_label: "packet launch point".into(),
            y_label: "|beta| after passage".into(),
            series,
        },
    )?;
    outcome.files.push(svg_path);

    Ok(outcome)
}

fn run_fock(p: &FockParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let report = fock_oracle(
        Complex64::new(p.alpha0, 0.0),
        p.epsilon,
        p.omega0,
        p.t_end,
        p.truncation,
    )
    .context("scenario keys 'alpha0', 'epsilon', 'omega0', 't_end', 'truncation'")?;

    outcome.lines.push(format!(
        "mean-field amplitudes: alpha = {:.6e}{:+.6e}i, beta = {:.6e}{:+.6e}i",
        report.mean_alpha.re, report.mean_alpha.im, report.mean_beta.re, report.mean_beta.im
    ));
    outcome.lines.push(format!(
        "top retained Fock shell population = {:.3e}",
        report.top_level_population
    ));
    outcome.checks.push(Check::new(
        format!(
            "product-state fidelity = {:.12} (threshold 1 - 1e-6)",
            report.fidelity
        ),
        report.fidelity > 1.0 - 1e-6,
    ));
    outcome.checks.push(Check::new(
        format!(
            "corrupted-target control fidelity = {:.6} (must stay below 0.999)",
            report.control_fidelity
        ),
        report.control_fidelity < 0.999,
    ));

    let csv_path = out.join("fock_oracle.csv");
    write_csv(
        &csv_path,
        &[
            "fidelity (dimensionless)",
            "control_fidelity (dimensionless)",
            "top_level_population (dimensionless)",
            "mean_alpha_re (dimensionless)",
            "mean_alpha_im (dimensionless)",
            "mean_beta_re (dimensionless)",
            "mean_beta_im (dimensionless)",
        ],
        &[vec![
            Cell::Num(report.fidelity),
            Cell::Num(report.control_fidelity),
            Cell::Num(report.top_level_population),
            Cell::Num(report.mean_alpha.re),
            Cell::Num(report.mean_alpha.im),
            Cell::Num(report.mean_beta.re),
            Cell::Num(report.mean_beta.im),
        ]],
    )?;
    outcome.files.push(csv_path);
    Ok(outcome)
}

fn run_visibility(p: &VisibilityParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut worst_contrast_gap = 0.0f64;
    let mut e_fold_row: Option<f64> = None;

    for &ratio in &p.ratios {
        for &n in &p.losses {
            let model = DecoherenceModel::with_contrast(1.0, ratio, n, p.contrast)
                .context("scenario keys 'ratios', 'contrast'")?;
            let atomic = visibility_amplitude(&model);
            let tap = BeamSplitterTap::from_mean_photons(n as f64)
                .context("scenario key 'losses'")?;
            let splitter = beamsplitter_visibility(&tap);
            let contrast_log = n as f64 * (1.0 - ratio);
            rows.push(vec![
                Cell::Num(ratio),
                Cell::Int(n as i64),
                Cell::Num(atomic),
                Cell::Num(splitter),
                Cell::Num(contrast_log),
            ]);
            if n <= 300 && splitter > 0.0 {
                let measured = atomic / splitter;
                let predicted = p.contrast * contrast_log.exp();
                let gap = (measured - predicted).abs() / predicted;
                worst_contrast_gap = worst_contrast_gap.max(gap);
            }
            if (ratio - 1e-3).abs() < 1e-15 && n == 1000 && (p.contrast - 1.0).abs() < 1e-15 {
                e_fold_row = Some(atomic);
            }
        }
    }

    if let Some(vis) = e_fold_row {
        let gap = (vis - (-1.0f64).exp()).abs();
        outcome.checks.push(Check::new(
            format!(
                "visibility at ratio 1e-3 with 1000 losses = {vis:.15} \
                 (e^-1 within 1e-12, gap {gap:.3e})"
            ),
            gap < 1e-12,
        ));
    }
    let single = beamsplitter_visibility(&BeamSplitterTap::from_mean_photons(1.0)?);
    let single_gap = (single - (-1.0f64).exp()).abs();
    outcome.checks.push(Check::new(
        format!(
            "beam-splitter visibility at one tapped photon = {single:.15} \
             (e^-1 within 1e-12, gap {single_gap:.3e})"
        ),
        single_gap < 1e-12,
    ));
    outcome.checks.push(Check::new(
        format!(
            "mechanism contrast matches exp(n (1 - R)) over the table \
             (worst relative gap = {worst_contrast_gap:.3e}, threshold 1e-12)"
        ),
        worst_contrast_gap < 1e-12,
    ));

    let csv_path = out.join("visibility_table.csv");
    write_csv(
        &csv_path,
        &[
            "loss_ratio (dimensionless)",
            "n_lost (count)",
            "atomic_visibility (dimensionless)",
            "beamsplitter_visibility (dimensionless)",
            "contrast_log (dimensionless)",
        ],
        &rows,
    )?;
    outcome.files.push(csv_path);
    Ok(outcome)
}

fn run_budget(p: &BudgetParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut all_consistent = true;
    let mut golden: Option<u64> = None;

    for &ratio in &p.ratios {
        let n = loss_budget(ratio, p.floor).context("scenario keys 'ratios', 'floor'")?;
        let keeps = |m: u64| (-(m as f64) * ratio).exp() >= p.floor;
        all_consistent &= keeps(n) && !keeps(n + 1);
        if (ratio - 1e-3).abs() < 1e-15 && (p.floor - (-1.0f64).exp()).abs() < 1e-12 {
            golden = Some(n);
        }
        rows.push(vec![
            Cell::Num(ratio),
            Cell::Num(p.floor),
            Cell::Int(n as i64),
        ]);
    }

    outcome.checks.push(Check::new(
        "every budget row satisfies exp(-n R) >= floor > exp(-(n+1) R)".to_string(),
        all_consistent,
    ));
    if let Some(n) = golden {
        outcome.checks.push(Check::new(
            format!("budget at ratio 1e-3 with an e-fold floor = {n} (expected 1000)"),
            n == 1000,
        ));
    }

    let csv_path = out.join("loss_budget.csv");
    write_csv(
        &csv_path,
        &[
            "loss_ratio (dimensionless)",
            "visibility_floor (dimensionless)",
            "max_lost_photons (count)",
        ],
        &rows,
    )?;
    outcome.files.push(csv_path);
    Ok(outcome)
}

fn run_chain_scan(p: &ChainParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let table = noise_scaling_scan(p.total_gain, &p.amplifier_counts)
        .context("scenario keys 'total_gain', 'amplifier_counts'")?;

    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut worst_formula_gap = 0.0f64;
    let mut worst_amplitude_gap = 0.0f64;
    for &(n, noise) in &table {
        let segments = balanced_chain(p.total_gain, n)?;
        let report = run_chain(&segments, Complex64::new(1.0, 0.0))?;
        let closed_form = n as f64 * (p.total_gain.powf(1.0 / n as f64) - 1.0);
        worst_formula_gap =
            worst_formula_gap.max((noise - closed_form).abs() / (1.0 + closed_form));
        worst_amplitude_gap =
            worst_amplitude_gap.max((report.final_amplitude_factor - 1.0).abs());
        rows.push(vec![
            Cell::Int(n as i64),
            Cell::Num(noise),
            Cell::Num(report.final_amplitude_factor),
            Cell::Num(report.net_dispersion),
        ]);
    }

    let mut sorted = table.clone();
    sorted.sort_by_key(|&(n, _)| n);
    let monotone = p.total_gain <= 1.0
        || sorted.windows(2).all(|w| w[1].1 < w[0].1);
    outcome.checks.push(Check::new(
        "added noise falls strictly as the gain is subdivided".to_string(),
        monotone,
    ));
    outcome.checks.push(Check::new(
        format!(
            "cascade noise matches n (g^(1/n) - 1) \
             (worst relative gap = {worst_formula_gap:.3e}, threshold 1e-12)"
        ),
        worst_formula_gap < 1e-12,
    ));
    outcome.checks.push(Check::new(
        format!(
            "balanced chains hold amplitude 1 \
             (worst gap = {worst_amplitude_gap:.3e}, threshold 1e-12)"
        ),
        worst_amplitude_gap < 1e-12,
    ));
    if p.total_gain > 1.0 {
        let limit = p.total_gain.ln();
        if let Some(&(n_max, noise_last)) = sorted.last() {
            if n_max >= 100 {
                let rel = (noise_last - limit).abs() / limit;
                outcome.checks.push(Check::new(
                    format!(
                        "noise at n = {n_max} sits within 5% of ln(g) = {limit:.6} \
                         (relative gap = {rel:.4})"
                    ),
                    rel < 0.05,
                ));
            } else {
                outcome.lines.push(format!(
                    "noise at n = {n_max} is {noise_last:.6}; ln(g) limit is {limit:.6}"
                ));
            }
        }
    }

    let csv_path = out.join("chain_scan.csv");
    write_csv(
        &csv_path,
        &[
            "n_amplifiers (count)",
            "added_noise (photons)",
            "amplitude_factor (dimensionless)",
            "net_dispersion (dimensionless)",
        ],
        &rows,
    )?;
    outcome.files.push(csv_path.clone());

    let mut series = vec![Series {
        label: "added noise".into(),
        points: sorted.iter().map(|&(n, v)| (n as f64, v)).collect(),
        dashed: false,
    }];
    if p.total_gain > 1.0 && sorted.len() > 1 {
        let limit = p.total_gain.ln();
        series.push(Series {
            label: "ln(g) floor".into(),
            points: vec![
                (sorted[0].0 as f64, limit),
                (sorted[sorted.len() - 1].0 as f64, limit),
            ],
            dashed: true,
        });
    }
    let svg_path = out.join("chain_scan.svg");
    write_svg(
        &svg_path,
        &Plot {
            title: "Spontaneous-emission noise vs amplifier count".into(),
            x_label: "number of amplifiers".into(),
            y_label: "added noise photons".into(),
            series,
        },
    )?;
    outcome.files.push(svg_path);
    Ok(outcome)
}

fn run_dispersion(p: &DispersionParams, out: &Path) -> Result<RunOutcome> {
    let mut outcome = RunOutcome::default();
    let net = dispersion_cancellation(p.loss_strength, p.gain_strength)
        .context("scenario keys 'loss_strength', 'gain_strength'")?;
    if p.loss_strength == p.gain_strength {
        outcome.checks.push(Check::new(
            format!("matched scalar strengths cancel exactly (net = {net:e})"),
            net == 0.0,
        ));
    } else {
        outcome
            .lines
            .push(format!("net scalar dispersion = {net:e} (loss minus gain)"));
    }

    let grid = make_mode_grid(p.k0, p.sigma_p, p.n_modes)
        .context("scenario keys 'k0', 'sigma_p', 'n_modes'")?;
    let packet = gaussian_coefficients(&grid, p.x1, p.sigma_p).context("scenario key 'x1'")?;
    let worst = mode_resolved_cancellation(&packet, &p.positions, p.omega0, p.epsilon, p.t)
        .context("scenario keys 'positions', 'omega0', 'epsilon', 't'")?;
    outcome.checks.push(Check::new(
        format!("max mode-resolved residual = {worst:.3e} (threshold 1e-10)"),
        worst < 1e-10,
    ));

    let absorber = OscillatorBank::absorber(p.positions.clone(), p.omega0, p.epsilon)?;
    let amplifier = OscillatorBank::amplifier(p.positions.clone(), p.omega0, p.epsilon)?;
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut loss_mag: Vec<(f64, f64)> = Vec::new();
    let mut residual_pts: Vec<(f64, f64)> = Vec::new();
    for &k in packet.grid().k_values() {
        let d_loss = field_drift_second_order(k, &packet, &absorber, p.t);
        let d_gain = field_drift_second_order(k, &packet, &amplifier, p.t);
        let residual = (d_loss + d_gain).norm();
        rows.push(vec![
            Cell::Num(k),
            Cell::Num(d_loss.re),
            Cell::Num(d_loss.im),
            Cell::Num(d_gain.re),
            Cell::Num(d_gain.im),
            Cell::Num(residual),
        ]);
        loss_mag.push((k, d_loss.norm()));
        residual_pts.push((k, residual));
    }

    let csv_path = out.join("dispersion_check.csv");
    write_csv(
        &csv_path,
        &[
            "k (wave number)",
            "drift_loss_re (dimensionless)",
            "drift_loss_im (dimensionless)",
            "drift_gain_re (dimensionless)",
            "drift_gain_im (dimensionless)",
            "residual (dimensionless)",
        ],
        &rows,
    )?;
    outcome.files.push(csv_path);

    let svg_path = out.join("dispersion_check.svg");
    write_svg(
        &svg_path,
        &Plot {
            title: "Second-order field drift per mode".into(),
            x_label: "wave number k".into(),
            y_label: "drift magnitude".into(),
            series: vec![
                Series {
                    label: "|absorber drift|".into(),
                    points: loss_mag,
                    dashed: false,
                },
                Series {
                    label: "|absorber + amplifier|".into(),
                    points: residual_pts,
                    dashed: true,
                },
            ],
        },
    )?;
    outcome.files.push(svg_path);
    Ok(outcome)
}
