use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::{argmax, log_softmax, softmax, ActorCritic};
use crate::grid::{Action, Cell, GridConfig, Observation, World};
use crate::seed::derive_seed;
use crate::WorldError;

/// How a coordinate is presented to the network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateCode {
    /// One indicator per column followed by one per row (`2n` values).
    #[default]
    OneHot,
    /// `x / (n − 1)` and `y / (n − 1)`.
    Scaled,
}

/// Maps observations to network inputs: the agent cell, then the reward cell when
/// observed, then the key bit when the key variant is on. Every value lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub n: i32,
    pub reward: bool,
    pub key: bool,
    pub code: CoordinateCode,
}

impl FeatureEncoding {
    pub fn for_grid(config: &GridConfig, code: CoordinateCode) -> Self {
        FeatureEncoding {
            n: config.n,
            reward: config.observe_reward,
            key: config.key_enabled(),
            code,
        }
    }

    fn cell_dim(&self) -> usize {
        match self.code {
            CoordinateCode::OneHot => 2 * self.n as usize,
            CoordinateCode::Scaled => 2,
        }
    }

    pub fn dim(&self) -> usize {
        self.cell_dim() * (1 + usize::from(self.reward)) + usize::from(self.key)
    }

    fn push_cell(&self, f: &mut Vec<f64>, c: Cell) {
        match self.code {
            CoordinateCode::OneHot => {
                f.extend((0..self.n).map(|i| if i == c.x { 1.0 } else { 0.0 }));
                f.extend((0..self.n).map(|i| if i == c.y { 1.0 } else { 0.0 }));
            }
            CoordinateCode::Scaled => {
                let scale = f64::from(self.n - 1);
                f.push(f64::from(c.x) / scale);
                f.push(f64::from(c.y) / scale);
            }
        }
    }

    pub fn encode(&self, obs: &Observation) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim());
        self.push_cell(&mut f, obs.agent);
        if self.reward {
            let r = obs.reward.expect("observation lacks the reward location the encoding expects");
            self.push_cell(&mut f, r);
        }
        if self.key {
            f.push(if obs.has_key == Some(true) { 1.0 } else { 0.0 });
        }
        f
    }
}

/// Fixed-length batch of environment interaction. `states[t]` is the recurrent state fed
/// into step `t` (empty for feed-forward networks); `dones[t]` marks that the episode
/// ended (terminated or truncated) at step `t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub episode_starts: Vec<bool>,
    pub states: Vec<Vec<f64>>,
    /// Value estimate of the observation following the last step (0 when it ended an episode).
    pub bootstrap_value: f64,
    pub finished_episodes: Vec<EpisodeStats>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub length: u32,
    pub total_reward: f64,
    pub success: bool,
}

#[derive(Debug, Error)]
#[error("world failed after {} collected steps: {source}", partial.len())]
pub struct RolloutError {
    #[source]
    pub source: WorldError,
    pub partial: Box<Trajectory>,
}

/// Carries an in-progress episode across consecutive rollouts.
#[derive(Debug, Clone)]
pub struct Collector {
    encoding: FeatureEncoding,
    seed: u64,
    episodes_started: u64,
    current: Option<Observation>,
    state: Vec<f64>,
    episode_len: u32,
    episode_reward: f64,
}

impl Collector {
    pub fn new(encoding: FeatureEncoding, seed: u64) -> Self {
        Collector {
            encoding,
            seed,
            episodes_started: 0,
            current: None,
            state: Vec::new(),
            episode_len: 0,
            episode_reward: 0.0,
        }
    }

    pub fn encoding(&self) -> &FeatureEncoding {
        &self.encoding
    }

    /// Collects exactly `length` transitions, sampling actions from `policy`.
    pub fn collect<R: Rng + ?Sized>(
        &mut self,
        policy: &ActorCritic,
        world: &mut dyn World,
        length: usize,
        rng: &mut R,
    ) -> Result<Trajectory, RolloutError> {
        let mut traj = Trajectory::default();
        while traj.len() < length {
            let fresh = self.current.is_none();
            let obs = match self.current {
                Some(obs) => obs,
                None => {
                    let seed = derive_seed(self.seed, "episode", self.episodes_started);
                    let obs = world.reset(seed).map_err(|source| RolloutError {
                        source,
                        partial: Box::new(traj.clone()),
                    })?;
                    self.episodes_started += 1;
                    self.state = policy.initial_state();
                    self.episode_len = 0;
                    self.episode_reward = 0.0;
                    obs
                }
            };
            let features = self.encoding.encode(&obs);
            let out = policy.step(&features, &self.state);
            let probs = softmax(&out.logits);
            let action = WeightedIndex::new(&probs).expect("softmax yields a valid distribution").sample(rng);
            let log_prob = log_softmax(&out.logits)[action];
            let result = match world.step(Action::from_index(action)) {
                Ok(r) => r,
                Err(source) => {
                    return Err(RolloutError {
                        source,
                        partial: Box::new(traj),
                    })
                }
            };
            let done = result.done();
            traj.features.push(features);
            traj.actions.push(action);
            traj.log_probs.push(log_prob);
            traj.values.push(out.value);
            traj.rewards.push(f64::from(result.reward));
            traj.dones.push(done);
            traj.episode_starts.push(fresh);
            traj.states.push(std::mem::replace(&mut self.state, out.next_state));
            self.episode_len += 1;
            self.episode_reward += f64::from(result.reward);
            if done {
                traj.finished_episodes.push(EpisodeStats {
                    length: self.episode_len,
                    total_reward: self.episode_reward,
                    success: result.terminated,
                });
                self.current = None;
            } else {
                self.current = Some(result.observation);
            }
        }
        traj.bootstrap_value = match self.current {
            Some(obs) => policy.step(&self.encoding.encode(&obs), &self.state).value,
            None => 0.0,
        };
        Ok(traj)
    }
}

/// One-shot rollout from a fresh episode.
pub fn collect_rollout<R: Rng + ?Sized>(
    policy: &ActorCritic,
    world: &mut dyn World,
    encoding: FeatureEncoding,
    length: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Trajectory, RolloutError> {
    Collector::new(encoding, seed).collect(policy, world, length, rng)
}

/// Generalized advantage estimates and value targets:
/// `δ_t = r_t + γ(1 − d_t)V_{t+1} − V_t`, `A_t = δ_t + γλ(1 − d_t)A_{t+1}`, target `A_t + V_t`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let len = rewards.len();
    let mut adv = vec![0.0; len];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Outcome of one greedy evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub success: bool,
    pub total_reward: f64,
    pub length: u32,
}

/// Runs one episode acting on the most probable action.
pub fn evaluate_greedy(
    policy: &ActorCritic,
    encoding: &FeatureEncoding,
    world: &mut dyn World,
    seed: u64,
) -> Result<EvalOutcome, WorldError> {
    let mut obs = world.reset(seed)?;
    let mut state = policy.initial_state();
    let mut total_reward = 0.0;
    let mut length = 0;
    loop {
        let out = policy.step(&encoding.encode(&obs), &state);
        state = out.next_state;
        let r = world.step(Action::from_index(argmax(&out.logits)))?;
        length += 1;
        total_reward += f64::from(r.reward);
        if r.done() {
            return Ok(EvalOutcome {
                success: r.terminated,
                total_reward,
                length,
            });
        }
        obs = r.observation;
    }
}
