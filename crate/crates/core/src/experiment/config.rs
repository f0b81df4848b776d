//! Experiment documents: strict parsing, defaults and whole-document
//! validation.

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::dynamics::{DomainSpec, MorphologySpec, RewardMode, Task};
use crate::error::{Error, Result};
use crate::trajopt::RlConfig;
use crate::transfer::{AlignmentMode, Budgets, Decay, MethodConfigs, TransferConfig};

/// Named morphology presets accepted in experiment documents.
pub const MORPHOLOGIES: [&str; 3] = ["three_link", "four_link", "tendon_three_link"];

pub fn morphology_preset(name: &str) -> Option<MorphologySpec> {
    match name {
        "three_link" => Some(MorphologySpec::three_link()),
        "four_link" => Some(MorphologySpec::four_link()),
        "tendon_three_link" => Some(MorphologySpec::tendon_three_link()),
        _ => None,
    }
}

/// One side of the transfer. The reward mode is fixed by the side: the
/// source learns with the shaped cost and the target with the sparse one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub morphology: String,
    pub task: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_horizon() -> usize {
    100
}

fn default_dt() -> f64 {
    0.05
}

impl DomainSection {
    fn check(&self, side: &str, errs: &mut Vec<String>) {
        if morphology_preset(&self.morphology).is_none() {
            errs.push(format!(
                "{side}.morphology: unknown morphology `{}` (expected one of {})",
                self.morphology,
                MORPHOLOGIES.join(", ")
            ));
        }
        if Task::from_name(&self.task).is_none() {
            errs.push(format!("{side}.task: unknown task `{}`", self.task));
        }
        if self.horizon == 0 {
            errs.push(format!("{side}.horizon must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("{side}.dt must be positive"));
        }
    }

    /// The domain this section describes; only valid after validation.
    fn spec(&self, mode: RewardMode) -> Result<DomainSpec> {
        let morph = morphology_preset(&self.morphology).ok_or_else(|| {
            Error::Validation(vec![format!("unknown morphology `{}`", self.morphology)])
        })?;
        let task = Task::from_name(&self.task)
            .ok_or_else(|| Error::Validation(vec![format!("unknown task `{}`", self.task)]))?;
        let mut spec = DomainSpec::new(morph, task, mode);
        spec.horizon = self.horizon;
        spec.dt = self.dt;
        Ok(spec)
    }
}

/// Tracking-term settings shared by every method of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSection {
    pub alpha0: f64,
    pub decay: Decay,
    pub decay_horizon: usize,
    pub curvature_floor: f64,
}

impl Default for TransferSection {
    fn default() -> Self {
        let t = TransferConfig::default();
        TransferSection {
            alpha0: t.alpha0,
            decay: t.decay,
            decay_horizon: t.decay_horizon,
            curvature_floor: t.curvature_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory; `runs/<id>` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub source: DomainSection,
    pub target: DomainSection,
    #[serde(default)]
    pub proxies: Vec<String>,
    #[serde(default)]
    pub alignment: AlignmentMode,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default = "experiment_rl")]
    pub rl: RlConfig,
    #[serde(default)]
    pub models: MethodConfigs,
}

fn default_methods() -> Vec<String> {
    vec![
        Method::NoTransfer.name().into(),
        Method::Invariant.name().into(),
    ]
}

/// RL defaults for experiments: the library defaults with an exploration
/// floor, so the per-iteration samples keep informing the dynamics fit.
pub fn experiment_rl() -> RlConfig {
    RlConfig {
        min_variance: 0.03,
        ..RlConfig::default()
    }
}

impl ExperimentConfig {
    /// Every violation in the document, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            errs.push("id must be non-empty and use only letters, digits, `_` and `-`".into());
        }
        self.source.check("source", &mut errs);
        self.target.check("target", &mut errs);
        if self.source.horizon != self.target.horizon {
            errs.push(format!(
                "source.horizon ({}) and target.horizon ({}) must match",
                self.source.horizon, self.target.horizon
            ));
        }
        if let (Some(s), Some(t)) = (
            Task::from_name(&self.source.task),
            Task::from_name(&self.target.task),
        ) {
            if s.default_conditions().len() != t.default_conditions().len() {
                errs.push(
                    "source.task and target.task must have the same number of conditions".into(),
                );
            }
        }
        for (i, p) in self.proxies.iter().enumerate() {
            if Task::from_name(p).is_none() {
                errs.push(format!("proxies[{i}]: unknown task `{p}`"));
            }
        }
        if self.methods.is_empty() {
            errs.push("methods must name at least one method".into());
        }
        let mut seen = Vec::new();
        for (i, m) in self.methods.iter().enumerate() {
            match m.parse::<Method>() {
                Ok(m) if seen.contains(&m) => {
                    errs.push(format!("methods[{i}]: `{m}` listed twice"))
                }
                Ok(m) => seen.push(m),
                Err(e) => errs.push(format!("methods[{i}]: {}", strip_prefix(&e))),
            }
        }
        if self.proxies.is_empty() && seen.iter().any(|&m| m != Method::NoTransfer) {
            errs.push("proxies must name at least one task unless methods is [no_transfer]".into());
        }
        let t = self.transfer_config(Method::Invariant);
        errs.extend(t.validate());
        errs.extend(self.rl.validate());
        errs.extend(self.models.validate());
        if self.budgets.target_iterations == 0 {
            errs.push("budgets.target_iterations must be positive".into());
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn proxy_tasks(&self) -> Result<Vec<Task>> {
        self.proxies
            .iter()
            .map(|p| {
                Task::from_name(p)
                    .ok_or_else(|| Error::Validation(vec![format!("unknown task `{p}`")]))
            })
            .collect()
    }

    pub fn source_spec(&self) -> Result<DomainSpec> {
        self.source.spec(RewardMode::Shaped)
    }

    pub fn target_spec(&self) -> Result<DomainSpec> {
        self.target.spec(RewardMode::Sparse)
    }

    pub fn transfer_config(&self, method: Method) -> TransferConfig {
        TransferConfig {
            alpha0: self.transfer.alpha0,
            decay: self.transfer.decay,
            decay_horizon: self.transfer.decay_horizon,
            method,
            curvature_floor: self.transfer.curvature_floor,
        }
    }

    pub fn output_dir(&self) -> String {
        self.output_dir
            .clone()
            .unwrap_or_else(|| format!("runs/{}", self.id))
    }

    /// JSON form written as `config.snapshot`; [`parse_config`] reads it back.
    pub fn snapshot(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("experiment config serializes");
        s.push('\n');
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Argument(m) => m.clone(),
        other => other.to_string(),
    }
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// Parses a TOML document, or JSON when the first non-blank character is
/// `{`, and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?
    };
    cfg.validate()?;
    Ok(cfg)
}
