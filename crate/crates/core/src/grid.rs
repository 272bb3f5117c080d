//! Reference grid world.
//!
//! Coordinates are 0-indexed with the origin at the bottom-left corner: `x` grows
//! rightward, `y` grows upward. The agent always starts at `[0, 0]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("grid side length must be at least 2, got {0}")]
    GridTooSmall(i32),
    #[error("sticky probability must lie in [0, 1), got {0}")]
    StickyOutOfRange(f64),
    #[error("key location {key} lies outside the {n}x{n} grid")]
    KeyOutOfBounds { key: Cell, n: i32 },
    #[error("max_steps must be positive")]
    ZeroMaxSteps,
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid grid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("step called on a finished episode (terminated or truncated); call reset first")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
}

/// A grid coordinate. Signed so that out-of-range model predictions can be represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn in_bounds(&self, n: i32) -> bool {
        (0..n).contains(&self.x) && (0..n).contains(&self.y)
    }

    pub fn clamped(&self, n: i32) -> Cell {
        Cell::new(self.x.clamp(0, n - 1), self.y.clamp(0, n - 1))
    }

    pub fn on_boundary(&self, n: i32) -> bool {
        self.x == 0 || self.y == 0 || self.x == n - 1 || self.y == n - 1
    }

    /// Row-major index (`y * n + x`).
    pub fn index(&self, n: i32) -> usize {
        (self.y * n + self.x) as usize
    }

    pub fn from_index(index: usize, n: i32) -> Cell {
        Cell::new(index as i32 % n, index as i32 / n)
    }

    /// All cells of an `n`x`n` grid in row-major order.
    pub fn all(n: i32) -> impl Iterator<Item = Cell> {
        (0..n).flat_map(move |y| (0..n).map(move |x| Cell::new(x, y)))
    }
}

/// Serialized as `[x, y]`, the form used in every prompt and transcript.
impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Canonical order used for enumeration and for policy outputs.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn delta(&self) -> (i32, i32) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    /// Unclamped target of this action from `from`.
    pub fn target(&self, from: Cell) -> Cell {
        let (dx, dy) = self.delta();
        Cell::new(from.x + dx, from.y + dy)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown action word {0:?}")]
pub struct UnknownAction(pub String);

/// Case-insensitive match against the four action words.
impl FromStr for Action {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Action::Up),
            "down" => Ok(Action::Down),
            "left" => Ok(Action::Left),
            "right" => Ok(Action::Right),
            _ => Err(UnknownAction(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    FixedTopRight,
    RandomPerEpisode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: i32,
    pub reward_mode: RewardMode,
    pub observe_reward: bool,
    pub key_location: Option<Cell>,
    pub sticky_prob: f64,
    max_steps: Option<u32>,
}

impl GridConfig {
    /// Fully observable grid with the reward fixed in the top-right corner.
    pub fn deterministic(n: i32) -> Self {
        GridConfig {
            n,
            reward_mode: RewardMode::FixedTopRight,
            observe_reward: true,
            key_location: None,
            sticky_prob: 0.0,
            max_steps: None,
        }
    }

    /// Partially observable grid with a reward location drawn every episode.
    pub fn stochastic(n: i32) -> Self {
        GridConfig {
            n,
            reward_mode: RewardMode::RandomPerEpisode,
            observe_reward: false,
            key_location: None,
            sticky_prob: 0.0,
            max_steps: None,
        }
    }

    pub fn with_key(mut self, key: Cell) -> Self {
        self.key_location = Some(key);
        self
    }

    pub fn with_sticky(mut self, eps: f64) -> Self {
        self.sticky_prob = eps;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        self.max_steps = Some(max_steps);
        self
    }

    pub fn with_observe_reward(mut self, observe: bool) -> Self {
        self.observe_reward = observe;
        self
    }

    /// Episode cap; `2n²` unless set explicitly.
    pub fn max_steps(&self) -> u32 {
        self.max_steps.unwrap_or((2 * self.n * self.n) as u32)
    }

    pub fn key_enabled(&self) -> bool {
        self.key_location.is_some()
    }

    pub fn is_deterministic(&self) -> bool {
        self.sticky_prob == 0.0
            && self.key_location.is_none()
            && self.reward_mode == RewardMode::FixedTopRight
    }

    pub fn top_right(&self) -> Cell {
        Cell::new(self.n - 1, self.n - 1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError::GridTooSmall(self.n));
        }
        if !(0.0..1.0).contains(&self.sticky_prob) {
            return Err(ConfigError::StickyOutOfRange(self.sticky_prob));
        }
        if let Some(key) = self.key_location {
            if !key.in_bounds(self.n) {
                return Err(ConfigError::KeyOutOfBounds { key, n: self.n });
            }
        }
        if self.max_steps == Some(0) {
            return Err(ConfigError::ZeroMaxSteps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridState {
    pub agent: Cell,
    pub reward: Cell,
    pub has_key: bool,
    pub steps_taken: u32,
    pub prev_action: Option<Action>,
    pub done: bool,
}

/// What an agent sees. Field presence depends only on the [`GridConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub agent: Cell,
    pub reward: Option<Cell>,
    pub has_key: Option<bool>,
}

impl Observation {
    pub fn of(state: &GridState, config: &GridConfig) -> Self {
        Observation {
            agent: state.agent,
            reward: config.observe_reward.then_some(state.reward),
            has_key: config.key_enabled().then_some(state.has_key),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: u8,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Draws a reward location uniformly from every cell except the start cell.
pub fn sample_reward_cell<R: Rng + ?Sized>(n: i32, rng: &mut R) -> Cell {
    let k = rng.random_range(1..(n * n) as usize);
    Cell::from_index(k, n)
}

/// Starts an episode. The seed drives the reward draw.
pub fn reset(config: &GridConfig, seed: u64) -> Result<(GridState, Observation), EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reset_with_rng(config, &mut rng)
}

pub fn reset_with_rng<R: Rng + ?Sized>(
    config: &GridConfig,
    rng: &mut R,
) -> Result<(GridState, Observation), EnvError> {
    config.validate()?;
    let reward = match config.reward_mode {
        RewardMode::FixedTopRight => config.top_right(),
        RewardMode::RandomPerEpisode => sample_reward_cell(config.n, rng),
    };
    Ok(start_state(config, reward))
}

/// Initial state with a given reward location.
pub fn start_state(config: &GridConfig, reward: Cell) -> (GridState, Observation) {
    let state = GridState {
        agent: Cell::new(0, 0),
        reward,
        has_key: !config.key_enabled(),
        steps_taken: 0,
        prev_action: None,
        done: false,
    };
    let obs = Observation::of(&state, config);
    (state, obs)
}

/// Position after `action` from `from`, with out-of-grid moves having no effect.
pub fn next_cell(from: Cell, action: Action, n: i32) -> Cell {
    let target = action.target(from);
    if target.in_bounds(n) {
        target
    } else {
        from
    }
}

/// Advances one step. `rng` supplies the sticky-action coin.
pub fn step<R: Rng + ?Sized>(
    state: &GridState,
    action: Action,
    config: &GridConfig,
    rng: &mut R,
) -> Result<(GridState, StepResult), EnvError> {
    if state.done {
        return Err(EnvError::EpisodeFinished);
    }
    let effective = match state.prev_action {
        Some(prev) if config.sticky_prob > 0.0 && rng.random::<f64>() < config.sticky_prob => prev,
        _ => action,
    };
    let agent = next_cell(state.agent, effective, config.n);
    let has_key = state.has_key || config.key_location == Some(agent);
    let reward = u8::from(agent == state.reward && has_key);
    let steps_taken = state.steps_taken + 1;
    let terminated = reward == 1;
    let truncated = !terminated && steps_taken >= config.max_steps();
    let next = GridState {
        agent,
        reward: state.reward,
        has_key,
        steps_taken,
        prev_action: Some(effective),
        done: terminated || truncated,
    };
    let result = StepResult {
        observation: Observation::of(&next, config),
        reward,
        terminated,
        truncated,
    };
    Ok((next, result))
}

/// One oracle transition: `(from, action) -> (to, reward)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Cell,
    pub action: Action,
    pub to: Cell,
    pub reward: u8,
}

/// Every (cell, action) pair of a deterministic grid, row-major then Up/Down/Left/Right.
pub fn enumerate_transitions(config: &GridConfig) -> Result<Vec<Transition>, ConfigError> {
    config.validate()?;
    if !config.is_deterministic() {
        return Err(ConfigError::Unsupported(
            "transition enumeration needs a deterministic grid (no stickiness, no key, fixed reward)"
                .into(),
        ));
    }
    let reward_cell = config.top_right();
    Ok(Cell::all(config.n)
        .flat_map(|from| {
            Action::ALL.into_iter().map(move |action| {
                let to = next_cell(from, action, config.n);
                Transition {
                    from,
                    action,
                    to,
                    reward: u8::from(to == reward_cell),
                }
            })
        })
        .collect())
}

/// Shared reset/step interface implemented by the reference grid and by language-model
/// world models, so agents run unmodified against either.
pub trait World {
    fn config(&self) -> &GridConfig;
    fn reset(&mut self, seed: u64) -> Result<Observation, crate::WorldError>;
    fn step(&mut self, action: Action) -> Result<StepResult, crate::WorldError>;
}

/// Stateful wrapper around [`reset`] / [`step`].
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    state: Option<GridState>,
    rng: ChaCha8Rng,
}

impl GridEnv {
    pub fn new(config: GridConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(GridEnv {
            config,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn state(&self) -> Option<&GridState> {
        self.state.as_ref()
    }

    /// Starts an episode with a caller-chosen reward location.
    pub fn reset_with_reward(&mut self, seed: u64, reward: Cell) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, obs) = start_state(&self.config, reward);
        self.state = Some(state);
        obs
    }
}

impl World for GridEnv {
    fn config(&self) -> &GridConfig {
        &self.config
    }

    fn reset(&mut self, seed: u64) -> Result<Observation, crate::WorldError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, obs) = reset_with_rng(&self.config, &mut self.rng)?;
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: Action) -> Result<StepResult, crate::WorldError> {
        let state = self.state.as_ref().ok_or(EnvError::NotReset)?;
        let (next, result) = step(state, action, &self.config, &mut self.rng)?;
        self.state = Some(next);
        Ok(result)
    }
}
