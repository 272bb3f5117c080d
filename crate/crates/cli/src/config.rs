//! Experiment configuration files (TOML). Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fmgrid::backend::{MockSpec, OpenAiConfig, RetryPolicy};
use fmgrid::eval::Support;
use fmgrid::fa::Fallback;
use fmgrid::pg::{CoordinateCode, PolicyKind, TrainConfig};
use fmgrid::prompt::{Strategy, TemplateId};
use fmgrid::GridConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Root of every per-job seed.
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub grid: GridSection,
    pub backend: Option<BackendConfig>,
    pub fidelity: Option<FidelitySection>,
    pub distribution: Option<DistributionSection>,
    pub train: Option<TrainSection>,
    pub fa: Option<FaSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Reward fixed in the top-right corner and visible.
    Deterministic,
    /// Reward redrawn every episode and hidden.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: i32,
    pub setting: Setting,
    pub max_steps: Option<u32>,
}

impl GridSection {
    pub fn config(&self) -> GridConfig {
        let g = match self.setting {
            Setting::Deterministic => GridConfig::deterministic(self.n),
            Setting::Stochastic => GridConfig::stochastic(self.n),
        };
        match self.max_steps {
            Some(m) => g.with_max_steps(m),
            None => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Mock {
        spec: MockSpec,
    },
    Openai {
        api: OpenAiConfig,
        #[serde(default)]
        retry: RetryPolicy,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_in_flight() -> usize {
    4
}

impl BackendConfig {
    fn validate(&self) -> Result<()> {
        match self {
            BackendConfig::Mock { spec } => spec.validate().map_err(anyhow::Error::msg),
            BackendConfig::Openai { max_in_flight, .. } => {
                if *max_in_flight == 0 {
                    bail!("backend.max_in_flight must be positive");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelitySection {
    #[serde(default = "all_transition_templates")]
    pub templates: Vec<TemplateId>,
}

fn all_transition_templates() -> Vec<TemplateId> {
    TemplateId::TRANSITION.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerSource {
    /// Prompt the backend for samples.
    Backend,
    /// Audit the grid's own reward draw.
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "yes")]
    pub location: bool,
    #[serde(default = "default_source")]
    pub source: SamplerSource,
    /// Defaults to all cells for the backend and to the non-start cells for the grid.
    pub support: Option<Support>,
    #[serde(default)]
    pub binary: Vec<f64>,
    #[serde(default = "yes")]
    pub reference_rows: bool,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_samples() -> usize {
    fmgrid::eval::DEFAULT_SAMPLES
}
fn default_alpha() -> f64 {
    fmgrid::eval::DEFAULT_ALPHA
}
fn yes() -> bool {
    true
}
fn default_source() -> SamplerSource {
    SamplerSource::Backend
}
fn default_retries() -> u32 {
    5
}

impl DistributionSection {
    pub fn support(&self) -> Support {
        self.support.unwrap_or(match self.source {
            SamplerSource::Backend => Support::AllCells,
            SamplerSource::Environment => Support::ExcludeStart,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Scratch,
    Pretrained,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub policy: PolicyKind,
    /// True-environment steps for scratch and fine-tune runs.
    pub total_steps: u64,
    /// World-model steps before fine-tuning.
    #[serde(default)]
    pub pretrain_steps: u64,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_template")]
    pub template: TemplateId,
    /// Separate sampler for the world model's reward location.
    pub reward_backend: Option<BackendConfig>,
    pub learning_rate: Option<f64>,
    pub rollout_length: Option<usize>,
    pub eval_every: Option<u64>,
    pub eval_episodes: Option<u32>,
    pub coordinates: Option<CoordinateCode>,
}

fn default_mode() -> TrainMode {
    TrainMode::Both
}
fn default_seeds() -> usize {
    5
}
fn default_template() -> TemplateId {
    TemplateId::TPlusR
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        let mut c = match self.policy {
            PolicyKind::FeedForward => TrainConfig::feed_forward(self.total_steps),
            PolicyKind::Recurrent => TrainConfig::recurrent(self.total_steps),
        };
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.rollout_length {
            c.rollout_length = v;
        }
        if let Some(v) = self.eval_every {
            c.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            c.eval_episodes = v;
        }
        if let Some(v) = self.coordinates {
            c.coordinates = v;
        }
        c
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        self.train_config().with_total_steps(self.pretrain_steps)
    }

    pub fn needs_model(&self) -> bool {
        self.mode != TrainMode::Scratch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSetting {
    Fixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    Optimal,
    Sweep,
    AlwaysUp,
    AlwaysLeft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaSection {
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "both_settings")]
    pub settings: Vec<RewardSetting>,
    /// Label in the summary table; defaults to the backend's model id.
    pub model: Option<String>,
    /// Replace the backend with a scripted agent.
    pub script: Option<Script>,
    pub max_memory_lines: Option<usize>,
    #[serde(default)]
    pub fallback: Fallback,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_episodes() -> usize {
    100
}
fn both_settings() -> Vec<RewardSetting> {
    vec![RewardSetting::Fixed, RewardSetting::Random]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("name must be a non-empty path component");
        }
        self.grid.config().validate()?;
        if let Some(b) = &self.backend {
            b.validate()?;
        }
        if let Some(f) = &self.fidelity {
            if self.grid.setting != Setting::Deterministic {
                bail!("fidelity probes need grid.setting = \"deterministic\"");
            }
            if f.templates.is_empty() {
                bail!("fidelity.templates is empty");
            }
            if let Some(t) = f.templates.iter().find(|t| !TemplateId::TRANSITION.contains(t)) {
                bail!("fidelity.templates: {t} is not a transition template");
            }
            self.require_backend("fidelity")?;
        }
        if let Some(d) = &self.distribution {
            if d.samples == 0 || !(d.alpha > 0.0 && d.alpha < 1.0) {
                bail!("distribution needs samples > 0 and alpha in (0, 1)");
            }
            if let Some(p) = d.binary.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                bail!("distribution.binary: probability {p} outside (0, 1)");
            }
            if d.source == SamplerSource::Environment && !d.binary.is_empty() {
                bail!("binary audits need source = \"backend\"");
            }
            if d.source == SamplerSource::Backend {
                self.require_backend("distribution")?;
            }
        }
        if let Some(t) = &self.train {
            if t.seeds == 0 {
                bail!("train.seeds must be positive");
            }
            t.train_config().validate()?;
            if t.needs_model() {
                t.pretrain_config().validate()?;
                if !TemplateId::TRANSITION.contains(&t.template) {
                    bail!("train.template: {} is not a transition template", t.template);
                }
                self.require_backend("train (pretraining)")?;
            }
            if let Some(b) = &t.reward_backend {
                b.validate()?;
            }
        }
        if let Some(f) = &self.fa {
            if f.strategies.is_empty() || f.settings.is_empty() || f.episodes == 0 {
                bail!("fa needs at least one strategy, one setting and one episode");
            }
            if f.script.is_none() {
                self.require_backend("fa")?;
            }
        }
        Ok(())
    }

    fn require_backend(&self, what: &str) -> Result<()> {
        if self.backend.is_none() {
            bail!("{what} needs a [backend] table");
        }
        Ok(())
    }
}
