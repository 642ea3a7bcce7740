//! Experiment configuration: a TOML document with a versioned schema.
//!
//! Unknown keys are rejected everywhere. Defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `sim.t0` | 0 |
//! | `sim.dt` | 1e-3 |
//! | `sim.horizon` | 1 |
//! | `sim.n_particles` | 10000 |
//! | `sim.seed` | 0 |
//! | `sim.record_every` | 1 |
//! | `init` | constant 0 in the model dimension |
//! | `model_b`, `init_b` | `model`, `init` |
//! | `output.dir` | `.` |
//!
//! Task defaults are listed on each task struct.

use mvlab_core::bihari::ModulusFunction;
use mvlab_core::coefficients::{LipschitzProfile, PowerEnvelope};
use mvlab_core::models::{lipschitz_profile_of, LinearMeanField, ModelSpec, PowerDrift};
use mvlab_core::verify::ComparisonProfile;
use mvlab_core::{InitialLaw, SimConfig, TimeFunction, TimeGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid configuration ({rule}): {detail}")]
    Invariant { rule: &'static str, detail: String },
}

fn invariant(rule: &'static str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invariant {
        rule,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_b: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_b: Option<InitialLaw>,
    #[serde(default)]
    pub sim: SimSection,
    pub task: TaskConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            dt: default_dt(),
            horizon: default_horizon(),
            n_particles: default_particles(),
            seed: 0,
            record_every: 1,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    1.0
}
fn default_particles() -> usize {
    10_000
}
fn one_usize() -> usize {
    1
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    LinearMeanfield(LinearMeanField),
    /// Integral maps are configured through the power-drift kernel family.
    IntegralMap {
        #[serde(default = "one_usize")]
        dim: usize,
        power_drift: PowerDrift,
    },
    /// Callable coefficients; only constructible through the library.
    Custom {},
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, ConfigError> {
        match self {
            Self::LinearMeanfield(p) => {
                let vals = [p.a, p.b_mf, p.c0, p.c1, p.c2];
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(invariant("model coefficients must be finite", format!("{p:?}")));
                }
                Ok(ModelSpec::linear(*p))
            }
            Self::IntegralMap { dim, power_drift } => {
                ModelSpec::power_drift(power_drift.clone(), *dim).map_err(|e| invariant("power drift parameters", e.to_string()))
            }
            Self::Custom {} => Err(invariant(
                "custom models need the library API",
                "callable coefficients cannot be read from a document",
            )),
        }
    }
}

/// `mu0` of the Picard task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialFlow {
    /// The constant flow of the sampled initial law.
    #[default]
    InitialLaw,
    /// The constant flow `δ_0`.
    DiracZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Simulate(SimulateTask),
    Picard(PicardTask),
    Certify(CertifyTask),
    VerifyMoment(VerifyMomentTask),
    VerifyPathwise(VerifyPathwiseTask),
    Bihari(BihariTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Picard(_) => "picard",
            Self::Certify(_) => "certify",
            Self::VerifyMoment(_) => "verify-moment",
            Self::VerifyPathwise(_) => "verify-pathwise",
            Self::Bihari(_) => "bihari",
        }
    }
}

/// Defaults: `p = 2`, no ensemble dump, no growth check, `tolerance = 0.02`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub write_ensemble: bool,
    /// Confront the moment curve with the growth bound of the model.
    #[serde(default)]
    pub check_growth: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

/// Defaults: `n_max = 10`, `tol = 1e-3`, `p = 2`, `mu0 = "initial_law"`,
/// profile derived from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardTask {
    #[serde(default = "ten")]
    pub n_max: usize,
    #[serde(default = "milli")]
    pub tol: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default)]
    pub mu0: InitialFlow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<LipschitzProfile>,
}

fn ten() -> usize {
    10
}
fn milli() -> f64 {
    1e-3
}

/// Defaults: `p = q = 2`, profile derived from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyTask {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    pub envelope: PowerEnvelope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<LipschitzProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    pub lambda: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub c: f64,
}

/// Defaults: `p = 2`, `tolerance = 0.02`, Lipschitz profile derived from
/// the model, no exponential-stability check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyMomentTask {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ComparisonProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySpec>,
}

/// Defaults: `p = q = 2`, window `[T/2, T]`, profile derived from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPathwiseTask {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    pub envelope: PowerEnvelope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<LipschitzProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusConfig {
    Linear {},
    Power { theta: f64 },
    LogModulus { alpha_hat: f64 },
}

impl ModulusConfig {
    pub fn build(&self) -> Result<ModulusFunction, ConfigError> {
        let r = match self {
            Self::Linear {} => Ok(ModulusFunction::linear()),
            Self::Power { theta } => ModulusFunction::power(*theta),
            Self::LogModulus { alpha_hat } => ModulusFunction::log_modulus(*alpha_hat),
        };
        r.map_err(|e| invariant("modulus parameters", e.to_string()))
    }
}

/// Second-moment Bihari bound `Ψ_ρ(initial + ∫ additive, ∫ gain)` on the
/// simulation grid. Defaults: `additive = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BihariTask {
    pub modulus: ModulusConfig,
    pub initial: f64,
    #[serde(default)]
    pub additive: TimeFunction,
    pub gain: TimeFunction,
}

/// A configuration with every cross-field rule checked and the library
/// objects built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub model_b: ModelSpec,
    pub init: InitialLaw,
    pub init_b: InitialLaw,
    pub sim: SimConfig,
}

/// Parses and validates a document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema {
            path,
            message: e.into_inner().message().trim().to_string(),
        }
    })?;
    resolve(&config)?;
    Ok(config)
}

/// TOML text that [`parse_config`] reads back to an equal configuration.
pub fn to_document(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configurations always serialize")
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved, ConfigError> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(invariant("schema_version must be 1", format!("got {}", config.schema_version)));
    }
    let model = config.model.build()?;
    let model_b = match &config.model_b {
        Some(m) => m.build()?,
        None => model.clone(),
    };
    if model_b.dim_state != model.dim_state || model_b.dim_noise != model.dim_noise {
        return Err(invariant("model_b must match the dimensions of model", ""));
    }
    let zero = InitialLaw::Constant {
        value: vec![0.0; model.dim_state],
    };
    let init = config.init.clone().unwrap_or(zero);
    let init_b = config.init_b.clone().unwrap_or_else(|| init.clone());
    for (name, law) in [("init", &init), ("init_b", &init_b)] {
        law.validate().map_err(|e| invariant("initial law", format!("{name}: {e}")))?;
        if law.dim() != model.dim_state {
            return Err(invariant(
                "initial law dimension must match the model",
                format!("{name} has dimension {}", law.dim()),
            ));
        }
    }
    let s = &config.sim;
    let grid = TimeGrid::with_horizon(s.t0, s.dt, s.horizon).map_err(|e| invariant("sim grid", e.to_string()))?;
    if s.record_every == 0 || !grid.steps.is_multiple_of(s.record_every) {
        return Err(invariant(
            "record_every must divide the number of steps",
            format!("{} steps, record_every = {}", grid.steps, s.record_every),
        ));
    }
    let interacting = !model.is_measure_free() || !model_b.is_measure_free();
    if s.n_particles == 0 || (interacting && s.n_particles < 2) {
        return Err(invariant(
            "n_particles >= 2 for interacting models",
            format!("got {}", s.n_particles),
        ));
    }
    let sim = SimConfig::new(grid, s.n_particles, s.seed).recording_every(s.record_every);
    check_task(&config.task, &model, &sim)?;
    Ok(Resolved {
        config: config.clone(),
        model,
        model_b,
        init,
        init_b,
        sim,
    })
}

fn check_order(p: f64) -> Result<(), ConfigError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invariant("p >= 2", format!("got {p}")));
    }
    Ok(())
}

fn check_envelope(env: &PowerEnvelope) -> Result<(), ConfigError> {
    if env.lambda_hat.last().is_some_and(|l| !(*l < 0.0)) {
        return Err(invariant(
            "envelope lambda_hat_l < 0",
            format!("got {}", env.lambda_hat.last().unwrap()),
        ));
    }
    env.validate().map_err(|e| invariant("envelope shape", e.to_string()))
}

fn check_task(task: &TaskConfig, model: &ModelSpec, sim: &SimConfig) -> Result<(), ConfigError> {
    let tolerance = |t: f64| {
        if t >= 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(invariant("tolerance >= 0", format!("got {t}")))
        }
    };
    match task {
        TaskConfig::Simulate(t) => {
            if !(t.p >= 1.0 && t.p.is_finite()) {
                return Err(invariant("p >= 1", format!("got {}", t.p)));
            }
            if t.check_growth {
                check_order(t.p)?;
            }
            tolerance(t.tolerance)
        }
        TaskConfig::Picard(t) => {
            if sim.record_every != 1 {
                return Err(invariant("picard needs record_every = 1", format!("got {}", sim.record_every)));
            }
            if t.n_max == 0 {
                return Err(invariant("n_max >= 1", "got 0"));
            }
            tolerance(t.tol)?;
            if t.profile.is_some() || lipschitz_profile_of(model, t.p).is_ok() {
                check_order(t.p)?;
            } else if !(t.p >= 1.0) {
                return Err(invariant("p >= 1", format!("got {}", t.p)));
            }
            Ok(())
        }
        TaskConfig::Certify(t) => {
            check_order(t.p)?;
            check_q(t.q)?;
            check_envelope(&t.envelope)
        }
        TaskConfig::VerifyMoment(t) => {
            check_order(t.p)?;
            tolerance(t.tolerance)?;
            if let Some(profile) = &t.profile {
                if profile.p() != t.p {
                    return Err(invariant("profile p must equal task p", format!("{} vs {}", profile.p(), t.p)));
                }
            }
            if let Some(s) = &t.stability {
                if !(s.lambda < 0.0) {
                    return Err(invariant("stability lambda < 0", format!("got {}", s.lambda)));
                }
                if !(s.alpha > 0.0 && s.c > 0.0) {
                    return Err(invariant(
                        "stability alpha > 0 and c > 0",
                        format!("alpha = {}, c = {}", s.alpha, s.c),
                    ));
                }
            }
            Ok(())
        }
        TaskConfig::VerifyPathwise(t) => {
            check_order(t.p)?;
            check_q(t.q)?;
            check_envelope(&t.envelope)?;
            if let Some([lo, hi]) = t.window {
                let g = sim.grid;
                if !(lo < hi && lo >= g.t0 && hi <= g.end() + 1e-9 && hi > 0.0) {
                    return Err(invariant("window must lie inside the grid", format!("[{lo}, {hi}]")));
                }
            }
            Ok(())
        }
        TaskConfig::Bihari(t) => {
            t.modulus.build()?;
            if !(t.initial >= 0.0 && t.initial.is_finite()) {
                return Err(invariant("initial >= 0", format!("got {}", t.initial)));
            }
            Ok(())
        }
    }
}

fn check_q(q: f64) -> Result<(), ConfigError> {
    if !(q >= 2.0 && q.is_finite()) {
        return Err(invariant("q >= 2", format!("got {q}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[model]
kind = "linear_meanfield"
a = -1.0

[task]
kind = "simulate"
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.sim.dt, 1e-3);
        assert_eq!(c.sim.n_particles, 10_000);
        assert_eq!(
            c.task,
            TaskConfig::Simulate(SimulateTask {
                p: 2.0,
                write_ensemble: false,
                check_growth: false,
                tolerance: 0.02
            })
        );
    }

    #[test]
    fn missing_model_is_named() {
        let err = parse_config("schema_version = 1\n[task]\nkind = \"simulate\"\n").unwrap_err();
        assert!(
            matches!(&err, ConfigError::Schema { message, .. } if message.contains("model")),
            "{err}"
        );
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = parse_config(&MINIMAL.replace("a = -1.0", "a = -1.0\nbogus = 2")).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Schema { path, message } if path.contains("model") && message.contains("bogus")),
            "{err}"
        );
    }

    #[test]
    fn syntax_errors_carry_a_position() {
        let err = parse_config("schema_version = \n").unwrap_err();
        assert!(matches!(&err, ConfigError::Syntax(m) if m.contains("line 1")), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&to_document(&c)).unwrap(), c);
    }

    #[test]
    fn nonnegative_rate_names_the_rule() {
        let doc = MINIMAL.replace(
            "kind = \"simulate\"",
            "kind = \"certify\"\n[task.envelope]\nalpha = [1.0]\nlambda_hat = [0.5]\ns = [0.0]\nt1 = 0.0",
        );
        let err = parse_config(&doc).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Invariant { rule, .. } if rule.contains("lambda_hat_l < 0")),
            "{err}"
        );
    }
}
