//! `sim` — command-line front end for the photon-hole simulation library.
//!
//! Exit status: 0 when every check passes, 2 when the run completes but at
//! least one check fails, 1 on any error (unreadable scenario, bad key,
//! rejected parameter, I/O failure).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use holesim_cli::experiments::{preflight, run_scenario};
use holesim_cli::output::{verify_manifest, write_manifest};
use holesim_cli::scenario::{self, Experiment, Scenario};

#[derive(Parser)]
#[command(
    name = "sim",
    version,
    about = "Simulations of entangled photon holes under loss and amplification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write CSV/SVG artifacts plus a manifest
    Run {
        /// Path to the scenario file
        scenario: PathBuf,
        /// Output directory (overrides SIM_OUT_DIR and the scenario's out_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Random seed (overrides the scenario's seed)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse a scenario file and check its parameters without running it
    Validate {
        /// Path to the scenario file
        scenario: PathBuf,
    },
    /// List the built-in experiments
    ListExperiments,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
        } => cmd_run(&scenario, out, seed),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::ListExperiments => cmd_list(),
    }
}

fn cmd_run(path: &Path, out_flag: Option<PathBuf>, seed_flag: Option<u64>) -> Result<ExitCode> {
    let mut scenario = scenario::load(path)?;
    if let Some(seed) = seed_flag {
        scenario.seed = seed;
    }
    let out_dir = resolve_out_dir(&scenario, out_flag);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    println!("experiment: {}", scenario.experiment.name());
    println!("output directory: {}", out_dir.display());

    let started = Instant::now();
    let outcome = run_scenario(&scenario, &out_dir)?;
    let wall = started.elapsed().as_secs_f64();

    let mut summary = String::new();
    for line in &outcome.lines {
        summary.push_str(line);
        summary.push('\n');
    }
    for check in &outcome.checks {
        summary.push_str(&check.render());
        summary.push('\n');
    }
    print!("{summary}");

    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, &summary)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let mut files = outcome.files.clone();
    files.push(summary_path);
    let mut kv = scenario.echo();
    kv.push(("tool_version".into(), env!("CARGO_PKG_VERSION").into()));
    let manifest_path = write_manifest(&out_dir, &kv, &files)?;
    let verified = verify_manifest(&manifest_path)?;
    println!(
        "manifest: {} ({verified} files verified)",
        manifest_path.display()
    );
    println!("wall time: {wall:.2} s");

    if outcome.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = outcome.checks.iter().filter(|c| !c.passed).count();
        println!("{failed} check(s) failed");
        Ok(ExitCode::from(2))
    }
}

fn cmd_validate(path: &Path) -> Result<ExitCode> {
    let scenario = scenario::load(path)?;
    preflight(&scenario)?;
    println!(
        "scenario OK: experiment '{}' with resolved parameters:",
        scenario.experiment.name()
    );
    for (key, value) in scenario.echo() {
        println!("  {key} = {value}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_list() -> Result<ExitCode> {
    for experiment in Experiment::ALL {
        println!("{:<18} {}", experiment.name(), experiment.describe());
    }
    Ok(ExitCode::SUCCESS)
}

/// Output directory precedence: `--out` flag, then the SIM_OUT_DIR
/// environment variable, then the scenario's own `out_dir`, then
/// `runs/<experiment>`.
fn resolve_out_dir(scenario: &Scenario, flag: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Ok(dir) = std::env::var("SIM_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = &scenario.out_dir {
        return dir.clone();
    }
    PathBuf::from("runs").join(scenario.experiment.name())
}
