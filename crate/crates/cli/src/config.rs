//! Experiment configuration: a single TOML file with an `[experiment]`
//! section, an `[environment]` section and one or more `[[policies]]`
//! tables.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use distbandit::context::load_group_dir;
use distbandit::policies::{ConfidenceMode, LSchedule, PolicyConfig, PolicyVariant};
use distbandit::sim::{
    EmpiricalScenario, KernelChoice, LowerBoundScenario, PolicySpec, Scenario, SyntheticScenario,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: RawExperiment,
    pub environment: RawEnvironment,
    #[serde(default)]
    pub policies: Vec<RawPolicy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    pub horizon: usize,
    pub trials: u64,
    pub delta: f64,
    pub seed: u64,
    pub out: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnvironment {
    pub kind: String,
    pub context_dim: Option<usize>,
    pub actions: Option<usize>,
    /// Raw-unit observation-noise standard deviation.
    pub noise: Option<f64>,
    /// Directory of group CSVs (empirical environments).
    pub path: Option<String>,
    /// Optional CSV of `group,weight` pick frequencies.
    pub frequency: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPolicy {
    pub name: String,
    /// hidden | observed | exact (linear policies).
    pub variant: Option<String>,
    /// expected | sampled.
    pub features: Option<String>,
    /// Sample count for sampled features: a number, or "t" for the
    /// round-index schedule.
    pub l: Option<toml::Value>,
    /// "theoretical" or a tuned constant.
    pub beta: Option<toml::Value>,
    pub lambda: Option<f64>,
    /// Kernelized policy when set: "linear" or "rbf:<lengthscale>".
    pub kernel: Option<String>,
}

/// Fully validated experiment.
pub struct Experiment {
    pub horizon: usize,
    pub trials: u64,
    pub delta: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub scenario: ScenarioChoice,
    pub policies: Vec<NamedPolicy>,
}

pub struct NamedPolicy {
    pub name: String,
    pub spec: PolicySpec,
}

pub enum ScenarioChoice {
    Synthetic(SyntheticScenario),
    Empirical(EmpiricalScenario),
    LowerBound(LowerBoundScenario),
}

impl ScenarioChoice {
    pub fn as_scenario(&self) -> &(dyn Scenario + Sync) {
        match self {
            ScenarioChoice::Synthetic(s) => s,
            ScenarioChoice::Empirical(s) => s,
            ScenarioChoice::LowerBound(s) => s,
        }
    }

    /// Observation-noise level in model units, as consumed by theoretical
    /// confidence radii.
    pub fn model_noise(&self) -> f64 {
        match self {
            ScenarioChoice::Synthetic(s) => s.noise_stddev(),
            ScenarioChoice::Empirical(s) => s.noise_stddev_raw / s.reward_scale(),
            ScenarioChoice::LowerBound(s) => s.noise_stddev,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    // TOML parse errors carry line/column positions in their display form.
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    validate(path, raw, overrides)
}

fn validate(path: &Path, raw: RawConfig, overrides: &Overrides) -> Result<Experiment, CliError> {
    let at = |section: &str, msg: String| {
        CliError::validation(format!("{}: [{section}] {msg}", path.display()))
    };

    let exp = &raw.experiment;
    if exp.horizon == 0 {
        return Err(at("experiment", "horizon must be >= 1".into()));
    }
    let trials = overrides.trials.unwrap_or(exp.trials);
    if trials == 0 {
        return Err(at("experiment", "trials must be >= 1".into()));
    }
    if !(exp.delta > 0.0 && exp.delta < 1.0) {
        return Err(at("experiment", "delta must lie in (0, 1)".into()));
    }
    let seed = overrides.seed.unwrap_or(exp.seed);
    // The config's own `out` resolves relative to the config file; the
    // --out override resolves relative to the working directory.
    let out = overrides
        .out
        .clone()
        .or_else(|| exp.out.as_ref().map(|o| resolve(path, o)))
        .ok_or_else(|| at("experiment", "missing output directory (out or --out)".into()))?;

    let scenario = build_scenario(path, &raw.environment)?;

    if raw.policies.is_empty() {
        return Err(at("policies", "at least one policy is required".into()));
    }
    let mut names = std::collections::HashSet::new();
    let mut policies = Vec::new();
    for (i, p) in raw.policies.iter().enumerate() {
        let section = format!("policies[{i}]");
        if p.name.is_empty()
            || !p
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(at(
                &section,
                format!("name `{}` must be nonempty [A-Za-z0-9._-]", p.name),
            ));
        }
        if !names.insert(p.name.clone()) {
            return Err(at(&section, format!("duplicate policy name `{}`", p.name)));
        }
        let spec = build_policy(&section, path, p, &raw, &scenario, exp, trials)?;
        policies.push(NamedPolicy {
            name: p.name.clone(),
            spec,
        });
    }

    Ok(Experiment {
        horizon: exp.horizon,
        trials,
        delta: exp.delta,
        seed,
        out,
        scenario,
        policies,
    })
}

fn build_scenario(path: &Path, env: &RawEnvironment) -> Result<ScenarioChoice, CliError> {
    let at =
        |msg: String| CliError::validation(format!("{}: [environment] {msg}", path.display()));
    match env.kind.as_str() {
        "synthetic" => {
            let mut scen = SyntheticScenario::default();
            if let Some(m) = env.context_dim {
                if m == 0 {
                    return Err(at("context_dim must be >= 1".into()));
                }
                scen.context_dim = m;
            }
            if let Some(k) = env.actions {
                if k == 0 {
                    return Err(at("actions must be >= 1".into()));
                }
                scen.n_actions = k;
            }
            if let Some(sigma) = env.noise {
                if !(sigma >= 0.0) {
                    return Err(at("noise must be nonnegative".into()));
                }
                scen.noise_stddev_raw = sigma;
            }
            Ok(ScenarioChoice::Synthetic(scen))
        }
        "empirical" => {
            let dir = env
                .path
                .as_ref()
                .ok_or_else(|| at("empirical environments need `path`".into()))?;
            let dir = resolve(path, dir);
            let groups = load_group_dir(&dir)
                .map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
            let n_actions = env.actions.unwrap_or(50);
            if n_actions == 0 {
                return Err(at("actions must be >= 1".into()));
            }
            let mut scen = EmpiricalScenario::new(groups, n_actions)
                .map_err(|e| at(e.to_string()))?;
            if let Some(sigma) = env.noise {
                if !(sigma >= 0.0) {
                    return Err(at("noise must be nonnegative".into()));
                }
                scen.noise_stddev_raw = sigma;
            }
            if let Some(freq_file) = &env.frequency {
                let freq_path = resolve(path, freq_file);
                let freqs = load_frequencies(&freq_path, &scen)?;
                scen = scen
                    .with_frequencies(freqs)
                    .map_err(|e| at(e.to_string()))?;
            }
            if env.context_dim.is_some() {
                return Err(at(
                    "context_dim is read from the data for empirical environments".into(),
                ));
            }
            Ok(ScenarioChoice::Empirical(scen))
        }
        "lower-bound" => {
            let mut scen = LowerBoundScenario::default();
            if let Some(sigma) = env.noise {
                scen.noise_stddev = sigma;
            }
            for (field, set) in [
                ("context_dim", env.context_dim.is_some()),
                ("actions", env.actions.is_some()),
                ("path", env.path.is_some()),
            ] {
                if set {
                    return Err(at(format!(
                        "`{field}` does not apply to the lower-bound demo"
                    )));
                }
            }
            Ok(ScenarioChoice::LowerBound(scen))
        }
        other => Err(at(format!(
            "unknown kind `{other}` (expected synthetic | empirical | lower-bound)"
        ))),
    }
}

/// Frequency file: CSV `group,weight`, one row per group key.
fn load_frequencies(path: &Path, scen: &EmpiricalScenario) -> Result<Vec<f64>, CliError> {
    let at = |msg: String| CliError::validation(format!("{}: {msg}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| at(e.to_string()))?;
    let mut by_key = std::collections::HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "group,weight" {
                return Err(at(format!(
                    "line 1: expected header `group,weight`, found `{line}`"
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (key, weight) = line
            .split_once(',')
            .ok_or_else(|| at(format!("line {}: expected `group,weight`", lineno + 1)))?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| at(format!("line {}: non-numeric weight", lineno + 1)))?;
        by_key.insert(key.trim().to_string(), weight);
    }
    scen.groups
        .groups
        .iter()
        .map(|(key, _)| {
            by_key
                .get(key)
                .copied()
                .ok_or_else(|| at(format!("missing frequency for group `{key}`")))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn build_policy(
    section: &str,
    path: &Path,
    p: &RawPolicy,
    _raw: &RawConfig,
    scenario: &ScenarioChoice,
    exp: &RawExperiment,
    _trials: u64,
) -> Result<PolicySpec, CliError> {
    let at = |msg: String| CliError::validation(format!("{}: [{section}] {msg}", path.display()));
    let lambda = p.lambda.unwrap_or(1.0);
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(at("lambda must be finite and positive".into()));
    }

    let schedule = match &p.l {
        None => None,
        Some(toml::Value::String(s)) if s == "t" => Some(LSchedule::RoundIndex),
        Some(toml::Value::Integer(l)) if *l >= 1 => Some(LSchedule::Constant(*l as usize)),
        Some(other) => {
            return Err(at(format!(
                "l must be a positive integer or \"t\", found {other}"
            )))
        }
    };

    let features = p.features.as_deref().unwrap_or("expected");
    let sampled = match features {
        "expected" => false,
        "sampled" => true,
        other => return Err(at(format!("features must be expected | sampled, found `{other}`"))),
    };
    if sampled && schedule.is_none() {
        return Err(at("sampled features need `l` (a count or \"t\")".into()));
    }
    if !sampled && schedule.is_some() {
        return Err(at("`l` only applies to sampled features".into()));
    }

    enum BetaChoice {
        Theoretical,
        Tuned(f64),
    }
    let beta = match &p.beta {
        None | Some(toml::Value::String(_)) => {
            match p.beta.as_ref().and_then(|b| b.as_str()).unwrap_or("theoretical") {
                "theoretical" => BetaChoice::Theoretical,
                other => {
                    return Err(at(format!(
                        "beta must be \"theoretical\" or a number, found `{other}`"
                    )))
                }
            }
        }
        Some(toml::Value::Float(b)) => BetaChoice::Tuned(*b),
        Some(toml::Value::Integer(b)) => BetaChoice::Tuned(*b as f64),
        Some(other) => {
            return Err(at(format!(
                "beta must be \"theoretical\" or a number, found {other}"
            )))
        }
    };
    if let BetaChoice::Tuned(b) = beta {
        if !(b.is_finite() && b >= 0.0) {
            return Err(at("tuned beta must be finite and nonnegative".into()));
        }
    }

    if let Some(kernel) = &p.kernel {
        if p.variant.is_some() {
            return Err(at("`variant` does not apply to kernelized policies".into()));
        }
        let choice = parse_kernel(kernel).map_err(at)?;
        let confidence = match beta {
            BetaChoice::Tuned(b) => distbandit::kernel::KernelConfidence::Tuned(b),
            BetaChoice::Theoretical => distbandit::kernel::KernelConfidence::Theoretical {
                delta: exp.delta,
                f_norm_bound: 1.0,
            },
        };
        return Ok(PolicySpec::Kernel {
            kernel: choice,
            config: distbandit::kernel::KernelPolicyConfig {
                sampled: if sampled { schedule } else { None },
                confidence,
                lambda,
                sigma: scenario.model_noise(),
            },
        });
    }

    let variant = match (p.variant.as_deref(), sampled) {
        (Some("hidden"), false) => PolicyVariant::HiddenExpected,
        (Some("hidden"), true) => PolicyVariant::HiddenSampled(schedule.unwrap()),
        (Some("observed"), false) => PolicyVariant::ObservedExpected,
        (Some("observed"), true) => PolicyVariant::ObservedSampled(schedule.unwrap()),
        (Some("exact"), false) => PolicyVariant::ExactBaseline,
        (Some("exact"), true) => {
            return Err(at("the exact baseline observes realizations; `features` does not apply".into()))
        }
        (Some(other), _) => {
            return Err(at(format!(
                "variant must be hidden | observed | exact, found `{other}`"
            )))
        }
        (None, _) => return Err(at("linear policies need `variant`".into())),
    };

    let confidence = match beta {
        BetaChoice::Tuned(b) => ConfidenceMode::Tuned(b),
        BetaChoice::Theoretical => ConfidenceMode::Theoretical {
            sigma: scenario.model_noise(),
            delta: exp.delta,
            s_bound: 1.0,
        },
    };
    Ok(PolicySpec::Linear(PolicyConfig {
        variant,
        confidence,
        lambda,
        horizon: exp.horizon,
    }))
}

fn parse_kernel(spec: &str) -> Result<KernelChoice, String> {
    if spec == "linear" {
        return Ok(KernelChoice::Linear);
    }
    if let Some(ls) = spec.strip_prefix("rbf:") {
        let lengthscale: f64 = ls
            .parse()
            .map_err(|_| format!("bad rbf lengthscale `{ls}`"))?;
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err("rbf lengthscale must be finite and positive".into());
        }
        return Ok(KernelChoice::Rbf { lengthscale });
    }
    Err(format!(
        "unknown kernel `{spec}` (expected `linear` or `rbf:<lengthscale>`)"
    ))
}

/// Paths inside the config resolve relative to the config file.
fn resolve(config_path: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

/// Shared handle used by sweep to rebuild policies with substituted values.
pub fn with_beta(spec: &PolicySpec, beta: f64) -> PolicySpec {
    match spec {
        PolicySpec::Linear(cfg) => PolicySpec::Linear(PolicyConfig {
            confidence: ConfidenceMode::Tuned(beta),
            ..*cfg
        }),
        PolicySpec::Kernel { kernel, config } => PolicySpec::Kernel {
            kernel: *kernel,
            config: distbandit::kernel::KernelPolicyConfig {
                confidence: distbandit::kernel::KernelConfidence::Tuned(beta),
                ..*config
            },
        },
        PolicySpec::OraclePlay => PolicySpec::OraclePlay,
    }
}

/// Substitute the sample count of a sampled policy; errors for policies
/// without a sampling schedule.
pub fn with_l(spec: &PolicySpec, l: usize) -> Result<PolicySpec, String> {
    match spec {
        PolicySpec::Linear(cfg) => {
            let variant = match cfg.variant {
                PolicyVariant::HiddenSampled(_) => {
                    PolicyVariant::HiddenSampled(LSchedule::Constant(l))
                }
                PolicyVariant::ObservedSampled(_) => {
                    PolicyVariant::ObservedSampled(LSchedule::Constant(l))
                }
                _ => return Err("policy has no sample schedule to sweep".into()),
            };
            Ok(PolicySpec::Linear(PolicyConfig { variant, ..*cfg }))
        }
        PolicySpec::Kernel { kernel, config } => {
            if config.sampled.is_none() {
                return Err("kernel policy uses exact embeddings; no `l` to sweep".into());
            }
            Ok(PolicySpec::Kernel {
                kernel: *kernel,
                config: distbandit::kernel::KernelPolicyConfig {
                    sampled: Some(LSchedule::Constant(l)),
                    ..*config
                },
            })
        }
        PolicySpec::OraclePlay => Err("oracle stub has no sample schedule".into()),
    }
}
