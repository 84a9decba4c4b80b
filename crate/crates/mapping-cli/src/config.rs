//! Run configuration: a TOML file with environment, policy, evaluation,
//! training, and output blocks. Unknown keys are rejected so typos fail
//! loudly instead of silently falling back to defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use mapping_core::env::EnvConfig;
use mapping_core::policy::MotionModel;
use mapping_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Which policy to run. The learned variant carries its weights path.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyName {
    Random,
    Frontier,
    Myopic,
    Learned(PathBuf),
}

impl FromStr for PolicyName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PolicyName::Random),
            "frontier" => Ok(PolicyName::Frontier),
            "myopic" => Ok(PolicyName::Myopic),
            other => {
                if let Some(path) = other.strip_prefix("learned:") {
                    if path.is_empty() {
                        bail!("learned policy needs a weights path: learned:<path>");
                    }
                    Ok(PolicyName::Learned(PathBuf::from(path)))
                } else {
                    bail!(
                        "unknown policy {other:?}; expected random, frontier, myopic, \
                         or learned:<weights-path>"
                    )
                }
            }
        }
    }
}

impl TryFrom<String> for PolicyName {
    type Error = anyhow::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicyName> for String {
    fn from(p: PolicyName) -> String {
        p.to_string()
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyName::Random => write!(f, "random"),
            PolicyName::Frontier => write!(f, "frontier"),
            PolicyName::Myopic => write!(f, "myopic"),
            PolicyName::Learned(path) => write!(f, "learned:{}", path.display()),
        }
    }
}

fn default_unknown_entropy_threshold() -> f64 {
    0.6
}

fn default_replan_interval() -> usize {
    20
}

/// Policy selection plus per-policy tuning knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: PolicyName,
    /// Myopic only: how unverifiable moves are weighted.
    pub myopic_motion: MotionModel,
    /// Frontier only: entropy (nats) above which a cell counts as unknown.
    pub unknown_entropy_threshold: f64,
    /// Frontier only: forced replan after this many steps.
    pub replan_interval: usize,
    /// Learned only: argmax instead of sampling from the softmax.
    pub greedy: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: PolicyName::Random,
            myopic_motion: MotionModel::default(),
            unknown_entropy_threshold: default_unknown_entropy_threshold(),
            replan_interval: default_replan_interval(),
            greedy: false,
        }
    }
}

impl PolicyConfig {
    pub fn named(name: PolicyName) -> Self {
        PolicyConfig {
            name,
            ..PolicyConfig::default()
        }
    }

    /// Display name, with the non-default variants spelled out so report
    /// rows stay distinguishable.
    pub fn label(&self) -> String {
        match &self.name {
            PolicyName::Myopic if self.myopic_motion == MotionModel::Optimistic => {
                "myopic[optimistic]".into()
            }
            PolicyName::Learned(_) if self.greedy => format!("{}[greedy]", self.name),
            name => name.to_string(),
        }
    }
}

fn default_eval_episodes() -> usize {
    300
}

/// Batch evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: default_eval_episodes(),
            seed: 0,
            workers: 0,
        }
    }
}

/// Where results land. Empty paths mean "do not write that artifact".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub plot: Option<PathBuf>,
}

/// The full run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvConfig,
    pub policy: PolicyConfig,
    pub evaluation: EvalConfig,
    pub training: TrainConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment
            .validate()
            .context("invalid [environment] block")?;
        self.training
            .validate()
            .context("invalid [training] block")?;
        if self.evaluation.episodes == 0 {
            bail!("evaluation.episodes must be positive");
        }
        if self.unknown_threshold_out_of_range() {
            bail!("policy.unknown_entropy_threshold must lie in (0, ln 2]");
        }
        Ok(())
    }

    fn unknown_threshold_out_of_range(&self) -> bool {
        let t = self.policy.unknown_entropy_threshold;
        !(t > 0.0 && t <= std::f64::consts::LN_2)
    }
}
