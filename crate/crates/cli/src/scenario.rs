//! Scenario files: a flat, line-oriented `key = value` format with `#`
//! comments. Every experiment has a strict typed schema; unknown keys are
//! rejected with the offending line number, and every parameter falls back
//! to the documented desk-scale default when omitted.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// The experiments the binary knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Fig3Scan,
    WhichPath,
    FockOracle,
    VisibilityTable,
    LossBudget,
    ChainScan,
    DispersionCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Fig3Scan,
        Experiment::WhichPath,
        Experiment::FockOracle,
        Experiment::VisibilityTable,
        Experiment::LossBudget,
        Experiment::ChainScan,
        Experiment::DispersionCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Fig3Scan => "fig3_scan",
            Experiment::WhichPath => "which_path",
            Experiment::FockOracle => "fock_oracle",
            Experiment::VisibilityTable => "visibility_table",
            Experiment::LossBudget => "loss_budget",
            Experiment::ChainScan => "chain_scan",
            Experiment::DispersionCheck => "dispersion_check",
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            Experiment::Fig3Scan => {
                "joint-detection correlation scan across the hole: dip, plateau, \
                 optional flat-envelope control and Monte-Carlo normalization check"
            }
            Experiment::WhichPath => {
                "runs one absorption branch per packet launch point and measures how \
                 much the final oscillator amplitudes depend on the launch point"
            }
            Experiment::FockOracle => {
                "brute-force truncated-Fock evolution of one mode and one oscillator \
                 compared against the coherent product state"
            }
            Experiment::VisibilityTable => {
                "interference visibility after n lost photons: atomic absorption vs \
                 beam-splitter tap, with the mechanism-contrast check"
            }
            Experiment::LossBudget => {
                "largest photon loss count that keeps visibility above a floor, per \
                 loss ratio"
            }
            Experiment::ChainScan => {
                "balanced loss/gain chains at fixed total gain: added noise vs the \
                 number of amplifiers, walking down to ln(g)"
            }
            Experiment::DispersionCheck => {
                "scalar and mode-resolved cancellation of absorber vs amplifier \
                 second-order field drift"
            }
        }
    }

    fn from_key(value: &str, line: usize) -> Result<Self> {
        for exp in Self::ALL {
            if exp.name() == value {
                return Ok(exp);
            }
        }
        bail!(
            "key 'experiment' (line {line}): unknown experiment '{value}'; expected one of {}",
            Self::ALL
                .iter()
                .map(|e| e.name())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully parsed and defaulted scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub experiment: Experiment,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub params: Params,
}

/// Per-experiment parameters with defaults applied.
#[derive(Debug, Clone)]
pub enum Params {
    Fig3(Fig3Params),
    WhichPath(WhichPathParams),
    Fock(FockParams),
    Visibility(VisibilityParams),
    Budget(BudgetParams),
    Chain(ChainParams),
    Dispersion(DispersionParams),
}

#[derive(Debug, Clone)]
pub struct Fig3Params {
    pub sigma_p: f64,
    pub hole_width: f64,
    pub alpha_sq: f64,
    pub n_nodes: usize,
    pub box_half: f64,
    pub n_modes: usize,
    pub k0: f64,
    pub scan_half: f64,
    pub scan_samples: usize,
    pub control: bool,
    pub mc_check: bool,
    pub mc_samples: usize,
}

#[derive(Debug, Clone)]
pub struct WhichPathParams {
    pub epsilon: f64,
    pub n_modes: usize,
    pub k0: f64,
    pub sigma_p: f64,
    pub omega0: f64,
    pub osc_x: f64,
    pub launch_base: f64,
    pub offsets: Vec<f64>,
    pub t_end: f64,
    pub threshold: f64,
    pub check_halving: bool,
}

#[derive(Debug, Clone)]
pub struct FockParams {
    pub alpha0: f64,
    pub epsilon: f64,
    pub omega0: f64,
    pub t_end: f64,
    pub truncation: usize,
}

#[derive(Debug, Clone)]
pub struct VisibilityParams {
    pub ratios: Vec<f64>,
    pub losses: Vec<u64>,
    pub contrast: f64,
}

#[derive(Debug, Clone)]
pub struct BudgetParams {
    pub ratios: Vec<f64>,
    pub floor: f64,
}

#[derive(Debug, Clone)]
pub struct ChainParams {
    pub total_gain: f64,
    pub amplifier_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DispersionParams {
    pub loss_strength: f64,
    pub gain_strength: f64,
    pub n_modes: usize,
    pub k0: f64,
    pub sigma_p: f64,
    pub x1: f64,
    pub positions: Vec<f64>,
    pub omega0: f64,
    pub epsilon: f64,
    pub t: f64,
}

impl Scenario {
    /// Resolved parameters as `(key, value)` pairs for the manifest echo.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("experiment".into(), self.experiment.name().into()),
            ("seed".into(), self.seed.to_string()),
        ];
        if let Some(dir) = &self.out_dir {
            kv.push(("out_dir".into(), dir.display().to_string()));
        }
        let pair = |k: &str, v: String| (k.to_string(), v);
        let num = |v: f64| v.to_string();
        let list_f = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.params {
            Params::Fig3(p) => {
                kv.push(pair("sigma_p", num(p.sigma_p)));
                kv.push(pair("hole_width", num(p.hole_width)));
                kv.push(pair("alpha_sq", num(p.alpha_sq)));
                kv.push(pair("n_nodes", p.n_nodes.to_string()));
                kv.push(pair("box_half", num(p.box_half)));
                kv.push(pair("n_modes", p.n_modes.to_string()));
                kv.push(pair("k0", num(p.k0)));
                kv.push(pair("scan_half", num(p.scan_half)));
                kv.push(pair("scan_samples", p.scan_samples.to_string()));
                kv.push(pair("control", p.control.to_string()));
                kv.push(pair("mc_check", p.mc_check.to_string()));
                kv.push(pair("mc_samples", p.mc_samples.to_string()));
            }
            Params::WhichPath(p) => {
                kv.push(pair("epsilon", num(p.epsilon)));
                kv.push(pair("n_modes", p.n_modes.to_string()));
                kv.push(pair("k0", num(p.k0)));
                kv.push(pair("sigma_p", num(p.sigma_p)));
                kv.push(pair("omega0", num(p.omega0)));
                kv.push(pair("osc_x", num(p.osc_x)));
                kv.push(pair("launch_base", num(p.launch_base)));
                kv.push(pair("offsets", list_f(&p.offsets)));
                kv.push(pair("t_end", num(p.t_end)));
                kv.push(pair("threshold", num(p.threshold)));
                kv.push(pair("check_halving", p.check_halving.to_string()));
            }
            Params::Fock(p) => {
                kv.push(pair("alpha0", num(p.alpha0)));
                kv.push(pair("epsilon", num(p.epsilon)));
                kv.push(pair("omega0", num(p.omega0)));
                kv.push(pair("t_end", num(p.t_end)));
                kv.push(pair("truncation", p.truncation.to_string()));
            }
            Params::Visibility(p) => {
                kv.push(pair("ratios", list_f(&p.ratios)));
                kv.push(pair(
                    "losses",
                    p.losses
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                ));
                kv.push(pair("contrast", num(p.contrast)));
            }
            Params::Budget(p) => {
                kv.push(pair("ratios", list_f(&p.ratios)));
                kv.push(pair("floor", num(p.floor)));
            }
            Params::Chain(p) => {
                kv.push(pair("total_gain", num(p.total_gain)));
                kv.push(pair(
                    "amplifier_counts",
                    p.amplifier_counts
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                ));
            }
            Params::Dispersion(p) => {
                kv.push(pair("loss_strength", num(p.loss_strength)));
                kv.push(pair("gain_strength", num(p.gain_strength)));
                kv.push(pair("n_modes", p.n_modes.to_string()));
                kv.push(pair("k0", num(p.k0)));
                kv.push(pair("sigma_p", num(p.sigma_p)));
                kv.push(pair("x1", num(p.x1)));
                kv.push(pair("positions", list_f(&p.positions)));
                kv.push(pair("omega0", num(p.omega0)));
                kv.push(pair("epsilon", num(p.epsilon)));
                kv.push(pair("t", num(p.t)));
            }
        }
        kv
    }
}

/// One `key = value` line.
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Tracks which entries each schema consumed so leftovers can be rejected.
struct Reader {
    entries: Vec<Entry>,
    used: Vec<bool>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        for (i, e) in self.entries.iter().enumerate() {
            if !self.used[i] && e.key == key {
                self.used[i] = true;
                return Some((e.value.clone(), e.line));
            }
        }
        None
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<f64>().map_err(|_| {
                anyhow::anyhow!("key '{key}' (line {line}): expected a number, got '{v}'")
            }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<usize>().map_err(|_| {
                anyhow::anyhow!(
                    "key '{key}' (line {line}): expected a non-negative integer, got '{v}'"
                )
            }),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => v.parse::<u64>().map_err(|_| {
                anyhow::anyhow!(
                    "key '{key}' (line {line}): expected a non-negative integer, got '{v}'"
                )
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => bail!("key '{key}' (line {line}): expected true or false, got '{v}'"),
            },
        }
    }

    fn list_f64(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        anyhow::anyhow!(
                            "key '{key}' (line {line}): expected comma-separated numbers, \
                             got '{v}'"
                        )
                    })
                })
                .collect(),
        }
    }

    fn list_usize(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        anyhow::anyhow!(
                            "key '{key}' (line {line}): expected comma-separated \
                             non-negative integers, got '{v}'"
                        )
                    })
                })
                .collect(),
        }
    }

    fn list_u64(&mut self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<u64>().map_err(|_| {
                        anyhow::anyhow!(
                            "key '{key}' (line {line}): expected comma-separated \
                             non-negative integers, got '{v}'"
                        )
                    })
                })
                .collect(),
        }
    }

    fn finish(self, experiment: &str) -> Result<()> {
        let leftovers: Vec<String> = self
            .entries
            .iter()
            .zip(&self.used)
            .filter(|(_, &used)| !used)
            .map(|(e, _)| format!("'{}' (line {})", e.key, e.line))
            .collect();
        if leftovers.is_empty() {
            Ok(())
        } else {
            bail!(
                "unknown key{} for experiment {experiment}: {}",
                if leftovers.len() == 1 { "" } else { "s" },
                leftovers.join(", ")
            );
        }
    }
}

/// Loads a scenario file; a missing file is reported distinctly from
/// malformed content.
pub fn load(path: &Path) -> Result<Scenario> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => {
            bail!("scenario file not found: {}", path.display());
        }
        Err(err) => {
            return Err(err)
                .with_context(|| format!("scenario file unreadable: {}", path.display()));
        }
    };
    parse(&text).with_context(|| format!("malformed scenario {}", path.display()))
}

/// Parses scenario text into a validated, fully defaulted [`Scenario`].
pub fn parse(text: &str) -> Result<Scenario> {
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            bail!("line {line}: expected 'key = value', got '{}'", raw.trim());
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            bail!("line {line}: empty key");
        }
        if value.is_empty() {
            bail!("line {line}: key '{key}' has an empty value");
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            bail!(
                "duplicate key '{key}' (lines {} and {line})",
                prev.line
            );
        }
        entries.push(Entry { key, value, line });
    }

    let used = vec![false; entries.len()];
    let mut reader = Reader { entries, used };

    let Some((exp_value, exp_line)) = reader.take("experiment") else {
        bail!("missing required key 'experiment'");
    };
    let experiment = Experiment::from_key(&exp_value, exp_line)?;
    let out_dir = reader.take("out_dir").map(|(v, _)| PathBuf::from(v));
    let seed = reader.u64("seed", 42)?;

    let params = match experiment {
        Experiment::Fig3Scan => Params::Fig3(Fig3Params {
            sigma_p: reader.f64("sigma_p", 1.0)?,
            hole_width: reader.f64("hole_width", 10.0)?,
            alpha_sq: reader.f64("alpha_sq", 10.0)?,
            n_nodes: reader.usize("n_nodes", 201)?,
            box_half: reader.f64("box_half", 50.0)?,
            n_modes: reader.usize("n_modes", 129)?,
            k0: reader.f64("k0", 100.0)?,
            scan_half: reader.f64("scan_half", 48.0)?,
            scan_samples: reader.usize("scan_samples", 121)?,
            control: reader.bool("control", true)?,
            mc_check: reader.bool("mc_check", false)?,
            mc_samples: reader.usize("mc_samples", 1_000_000)?,
        }),
        Experiment::WhichPath => {
            let k0 = reader.f64("k0", 40.0)?;
            Params::WhichPath(WhichPathParams {
                epsilon: reader.f64("epsilon", 1e-3)?,
                n_modes: reader.usize("n_modes", 129)?,
                k0,
                sigma_p: reader.f64("sigma_p", 1.0)?,
                omega0: reader.f64("omega0", k0)?,
                osc_x: reader.f64("osc_x", 0.0)?,
                launch_base: reader.f64("launch_base", -27.0)?,
                offsets: reader.list_f64("offsets", &[0.0, 5.0, 10.0, 15.0, 20.0])?,
                t_end: reader.f64("t_end", 33.0)?,
                threshold: reader.f64("threshold", 1e-3)?,
                check_halving: reader.bool("check_halving", true)?,
            })
        }
        Experiment::FockOracle => {
            let epsilon = reader.f64("epsilon", 0.05)?;
            let default_t = if epsilon > 0.0 {
                std::f64::consts::FRAC_PI_2 / epsilon
            } else {
                1.0
            };
            Params::Fock(FockParams {
                alpha0: reader.f64("alpha0", 0.5)?,
                epsilon,
                omega0: reader.f64("omega0", 1.0)?,
                t_end: reader.f64("t_end", default_t)?,
                truncation: reader.usize("truncation", 12)?,
            })
        }
        Experiment::VisibilityTable => Params::Visibility(VisibilityParams {
            ratios: reader.list_f64("ratios", &[1e-4, 1e-3, 1e-2])?,
            losses: reader.list_u64("losses", &[1, 10, 100, 1000])?,
            contrast: reader.f64("contrast", 1.0)?,
        }),
        Experiment::LossBudget => Params::Budget(BudgetParams {
            ratios: reader.list_f64("ratios", &[1e-4, 1e-3, 1e-2])?,
            floor: reader.f64("floor", (-1.0f64).exp())?,
        }),
        Experiment::ChainScan => Params::Chain(ChainParams {
            total_gain: reader.f64("total_gain", (2.0f64).exp())?,
            amplifier_counts: reader
                .list_usize("amplifier_counts", &[1, 2, 5, 10, 20, 50, 100])?,
        }),
        Experiment::DispersionCheck => Params::Dispersion(DispersionParams {
            loss_strength: reader.f64("loss_strength", 0.5)?,
            gain_strength: reader.f64("gain_strength", 0.5)?,
            n_modes: reader.usize("n_modes", 65)?,
            k0: reader.f64("k0", 40.0)?,
            sigma_p: reader.f64("sigma_p", 1.0)?,
            x1: reader.f64("x1", -13.0)?,
            positions: reader.list_f64("positions", &[-1.0, 0.0, 2.0])?,
            omega0: reader.f64("omega0", 40.0)?,
            epsilon: reader.f64("epsilon", 1e-3)?,
            t: reader.f64("t", 25.0)?,
        }),
    };

    reader.finish(experiment.name())?;
    Ok(Scenario {
        experiment,
        out_dir,
        seed,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scan_gets_the_documented_defaults() {
        let scenario = parse("experiment = fig3_scan\n").unwrap();
        let Params::Fig3(p) = &scenario.params else {
            panic!("wrong params variant");
        };
        assert_eq!(p.sigma_p, 1.0);
        assert_eq!(p.hole_width, 10.0);
        assert_eq!(p.alpha_sq, 10.0);
        assert_eq!(p.n_nodes, 201);
        assert_eq!(p.box_half, 50.0);
        assert_eq!(p.n_modes, 129);
        assert_eq!(scenario.seed, 42);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let err = parse("experiment = fig3_scan\nsigma_q = 2\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("sigma_q"), "message was: {msg}");
        assert!(msg.contains("line 2"), "message was: {msg}");
    }

    #[test]
    fn type_errors_cite_key_and_line() {
        let err = parse("experiment = fig3_scan\n\nn_nodes = many\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("n_nodes"), "message was: {msg}");
        assert!(msg.contains("line 3"), "message was: {msg}");
        assert!(msg.contains("integer"), "message was: {msg}");
    }

    #[test]
    fn duplicate_keys_cite_both_lines() {
        let err = parse("experiment = fig3_scan\nk0 = 10\nk0 = 20\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("duplicate key 'k0'"), "message was: {msg}");
        assert!(msg.contains("lines 2 and 3"), "message was: {msg}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# scenario\nexperiment = chain_scan # inline comment\n\n\
                    total_gain = 4.0\n";
        let scenario = parse(text).unwrap();
        let Params::Chain(p) = &scenario.params else {
            panic!("wrong params variant");
        };
        assert_eq!(p.total_gain, 4.0);
    }

    #[test]
    fn which_path_resonance_follows_the_carrier_default() {
        let scenario = parse("experiment = which_path\nk0 = 55\n").unwrap();
        let Params::WhichPath(p) = &scenario.params else {
            panic!("wrong params variant");
        };
        assert_eq!(p.omega0, 55.0);
        assert_eq!(p.offsets, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    }

    #[test]
    fn fock_default_time_is_a_quarter_exchange_period() {
        let scenario = parse("experiment = fock_oracle\n").unwrap();
        let Params::Fock(p) = &scenario.params else {
            panic!("wrong params variant");
        };
        assert!((p.t_end - std::f64::consts::FRAC_PI_2 / 0.05).abs() < 1e-12);
    }

    #[test]
    fn lines_without_equals_are_malformed() {
        let err = parse("experiment = loss_budget\njust words\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 2"), "message was: {msg}");
        assert!(msg.contains("key = value"), "message was: {msg}");
    }
}
