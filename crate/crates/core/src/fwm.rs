//! Foundation world model: the grid's reset/step interface answered by a language
//! model through the transition templates.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{query, sample_location, SharedBackend, DETERMINISTIC_TEMPERATURE};
use crate::grid::{sample_reward_cell, Action, Cell, ConfigError, GridConfig, Observation, StepResult, World};
use crate::prompt::{parse_transition, Binding, ParseError, ParsedTransition, TemplateId, TemplateSet};
use crate::WorldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    /// Reward read from the model's `[x, y], r` answer.
    FromTemplateR,
    /// Reward computed locally from the believed position and the sampled reward cell.
    OracleReward,
}

/// What to do when the model's answer cannot be parsed after all retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultPolicy {
    /// Keep the agent where it is and record a fault.
    Stay,
    /// Fail the step.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwmConfig {
    pub grid: GridConfig,
    pub transition_template: TemplateId,
    pub reward_source: RewardSource,
    /// Sample the reward location from the model at the start of every episode.
    pub stochastic_reward: bool,
    pub parse_retries: u32,
    pub reward_sample_retries: u32,
    pub fault_policy: FaultPolicy,
    pub record_transcript: bool,
}

impl FwmConfig {
    pub fn new(grid: GridConfig, transition_template: TemplateId) -> Self {
        let stochastic_reward = grid.reward_mode == crate::grid::RewardMode::RandomPerEpisode;
        FwmConfig {
            grid,
            transition_template,
            reward_source: if transition_template.includes_reward() {
                RewardSource::FromTemplateR
            } else {
                RewardSource::OracleReward
            },
            stochastic_reward,
            parse_retries: 3,
            reward_sample_retries: 5,
            fault_policy: FaultPolicy::Stay,
            record_transcript: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid.validate()?;
        if !TemplateId::TRANSITION.contains(&self.transition_template) {
            return Err(ConfigError::Unsupported(format!(
                "{} is not a transition template",
                self.transition_template
            )));
        }
        if self.reward_source == RewardSource::FromTemplateR && !self.transition_template.includes_reward() {
            return Err(ConfigError::Unsupported(format!(
                "reward_source from_template_r needs a template with R, got {}",
                self.transition_template
            )));
        }
        if self.grid.key_enabled() || self.grid.sticky_prob > 0.0 {
            return Err(ConfigError::Unsupported(
                "the world model simulates the plain grid only (no key, no sticky actions)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FwmEpisodeState {
    pub believed_agent: Cell,
    pub sampled_reward: Cell,
    pub steps_taken: u32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultCounters {
    pub parse_failures: u64,
    pub out_of_bounds: u64,
    pub reward_fallbacks: u64,
}

impl FaultCounters {
    pub fn total(&self) -> u64 {
        self.parse_failures + self.out_of_bounds + self.reward_fallbacks
    }
}

/// One model query for a single transition, after retries.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub prompt_digest: String,
    pub raw: String,
    pub attempts: u32,
    pub cached: bool,
    pub parsed: Result<ParsedTransition, ParseError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub episode: u64,
    pub step: u32,
    pub prompt_digest: String,
    pub raw_response: String,
    pub parsed: Option<ParsedTransition>,
    pub parse_failure: bool,
    pub out_of_bounds: bool,
    pub cached: bool,
}

pub struct FoundationWorldModel {
    config: FwmConfig,
    backend: SharedBackend,
    reward_backend: SharedBackend,
    templates: Arc<TemplateSet>,
    state: Option<FwmEpisodeState>,
    fallback_rng: ChaCha8Rng,
    faults: FaultCounters,
    episode: u64,
    transcript: Vec<TranscriptRecord>,
}

impl FoundationWorldModel {
    pub fn new(config: FwmConfig, backend: SharedBackend) -> Result<Self, ConfigError> {
        let reward_backend = Arc::clone(&backend);
        Self::with_reward_backend(config, backend, reward_backend)
    }

    /// Uses a separate backend for the per-episode reward-location samples.
    pub fn with_reward_backend(
        config: FwmConfig,
        backend: SharedBackend,
        reward_backend: SharedBackend,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(FoundationWorldModel {
            config,
            backend,
            reward_backend,
            templates: Arc::new(TemplateSet::default()),
            state: None,
            fallback_rng: ChaCha8Rng::seed_from_u64(0),
            faults: FaultCounters::default(),
            episode: 0,
            transcript: Vec::new(),
        })
    }

    pub fn with_templates(mut self, templates: Arc<TemplateSet>) -> Self {
        self.templates = templates;
        self
    }

    pub fn fwm_config(&self) -> &FwmConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&FwmEpisodeState> {
        self.state.as_ref()
    }

    pub fn faults(&self) -> FaultCounters {
        self.faults
    }

    pub fn take_transcript(&mut self) -> Vec<TranscriptRecord> {
        std::mem::take(&mut self.transcript)
    }

    /// Renders the transition prompt for `(from, action)` with the given reward cell.
    pub fn render(&self, from: Cell, action: Action, reward: Cell) -> Result<String, WorldError> {
        let binding = Binding::new()
            .n(self.config.grid.n)
            .observation(from)
            .action(action)
            .reward_location(reward);
        self.templates
            .render(self.config.transition_template, &binding)
            .map_err(|e| WorldError::ModelFault(e.to_string()))
    }

    /// Queries the model for one transition at τ = 0, retrying unparsable answers.
    pub fn predict(&self, from: Cell, action: Action, reward: Cell) -> Result<Prediction, WorldError> {
        let prompt = self.render(from, action, reward)?;
        let prompt_digest = hex::encode(Sha256::digest(prompt.as_bytes()));
        let expects_reward = self.config.transition_template.includes_reward();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let resp = query(&*self.backend, prompt.clone(), DETERMINISTIC_TEMPERATURE)?;
            let parsed = parse_transition(&resp.text, expects_reward);
            if parsed.is_ok() || attempts > self.config.parse_retries {
                return Ok(Prediction {
                    prompt_digest,
                    raw: resp.text,
                    attempts,
                    cached: resp.cached,
                    parsed,
                });
            }
        }
    }

    /// Starts an episode with a known reward location, bypassing the sampler.
    pub fn reset_with_reward(&mut self, seed: u64, reward: Cell) -> Observation {
        self.fallback_rng = ChaCha8Rng::seed_from_u64(seed);
        self.begin(reward)
    }

    fn begin(&mut self, reward: Cell) -> Observation {
        self.episode += 1;
        self.transcript.clear();
        let state = FwmEpisodeState {
            believed_agent: Cell::new(0, 0),
            sampled_reward: reward,
            steps_taken: 0,
            done: false,
        };
        self.state = Some(state);
        self.observe(&state)
    }

    fn observe(&self, state: &FwmEpisodeState) -> Observation {
        Observation {
            agent: state.believed_agent,
            reward: self.config.grid.observe_reward.then_some(state.sampled_reward),
            has_key: None,
        }
    }

    fn draw_reward(&mut self) -> Cell {
        if !self.config.stochastic_reward {
            return self.config.grid.top_right();
        }
        match sample_location(
            &*self.reward_backend,
            &self.templates,
            self.config.grid.n,
            self.config.reward_sample_retries,
        ) {
            Ok(cell) => cell,
            Err(_) => {
                self.faults.reward_fallbacks += 1;
                sample_reward_cell(self.config.grid.n, &mut self.fallback_rng)
            }
        }
    }
}

impl World for FoundationWorldModel {
    fn config(&self) -> &GridConfig {
        &self.config.grid
    }

    fn reset(&mut self, seed: u64) -> Result<Observation, WorldError> {
        self.fallback_rng = ChaCha8Rng::seed_from_u64(seed);
        let reward = self.draw_reward();
        Ok(self.begin(reward))
    }

    fn step(&mut self, action: Action) -> Result<StepResult, WorldError> {
        let state = self.state.ok_or(crate::grid::EnvError::NotReset)?;
        if state.done {
            return Err(crate::grid::EnvError::EpisodeFinished.into());
        }
        let n = self.config.grid.n;
        let prediction = self.predict(state.believed_agent, action, state.sampled_reward)?;
        let mut out_of_bounds = false;
        let (next, model_reward) = match &prediction.parsed {
            Ok(p) => {
                let mut cell = p.next_cell;
                if !cell.in_bounds(n) {
                    out_of_bounds = true;
                    self.faults.out_of_bounds += 1;
                    cell = cell.clamped(n);
                }
                (cell, p.reward.unwrap_or(0))
            }
            Err(e) => {
                self.faults.parse_failures += 1;
                if self.config.fault_policy == FaultPolicy::Abort {
                    return Err(WorldError::ModelFault(e.to_string()));
                }
                (state.believed_agent, 0)
            }
        };
        let reward = match self.config.reward_source {
            RewardSource::FromTemplateR => model_reward,
            RewardSource::OracleReward => u8::from(next == state.sampled_reward),
        };
        if self.config.record_transcript {
            self.transcript.push(TranscriptRecord {
                episode: self.episode,
                step: state.steps_taken + 1,
                prompt_digest: prediction.prompt_digest.clone(),
                raw_response: prediction.raw.clone(),
                parsed: prediction.parsed.as_ref().ok().copied(),
                parse_failure: prediction.parsed.is_err(),
                out_of_bounds,
                cached: prediction.cached,
            });
        }
        let steps_taken = state.steps_taken + 1;
        let terminated = reward == 1;
        let truncated = !terminated && steps_taken >= self.config.grid.max_steps();
        let next_state = FwmEpisodeState {
            believed_agent: next,
            sampled_reward: state.sampled_reward,
            steps_taken,
            done: terminated || truncated,
        };
        self.state = Some(next_state);
        Ok(StepResult {
            observation: self.observe(&next_state),
            reward,
            terminated,
            truncated,
        })
    }
}

/// Writes transcript records as JSON lines.
pub fn write_transcript<W: Write>(records: &[TranscriptRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
