//! Foundation agent: a language model choosing one low-level action per step from a
//! strategy prompt and a textual memory of the episode so far.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{query, BackendError, SharedBackend, DETERMINISTIC_TEMPERATURE};
use crate::grid::{Action, Cell, GridConfig, Observation, RewardMode, World};
use crate::prompt::{
    build_memory_line, build_plan_line, parse_agent_turn, Binding, Placeholder, Strategy, TemplateSet,
};
use crate::seed::derive_seed;

/// Text bound to `<REWARD LOCATION>` when the agent cannot know where the reward is.
pub const UNKNOWN_REWARD_TEXT: &str = "a random coordinate";

/// Plan text recorded when a turn fell back to a random action.
pub const FALLBACK_PLAN: &str = "none (response could not be parsed)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Uniformly random action; the fault is counted.
    #[default]
    UniformRandom,
    /// End the episode as failed.
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub temperature: f64,
    /// Only the most recent lines are shown to the model when set.
    #[serde(default)]
    pub max_memory_lines: Option<usize>,
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
    #[serde(default)]
    pub fallback: Fallback,
}

fn default_parse_retries() -> u32 {
    2
}

impl FaConfig {
    pub fn new(strategy: Strategy) -> Self {
        FaConfig {
            strategy,
            temperature: DETERMINISTIC_TEMPERATURE,
            max_memory_lines: None,
            parse_retries: default_parse_retries(),
            fallback: Fallback::UniformRandom,
        }
    }
}

/// Append-only memory of one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryLog {
    lines: Vec<String>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, line: String) {
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn clear(&mut self) {
        self.lines.clear();
    }

    /// Lines shown to the model, honoring an optional cap.
    pub fn visible(&self, cap: Option<usize>) -> &[String] {
        match cap {
            Some(c) if self.lines.len() > c => &self.lines[self.lines.len() - c..],
            _ => &self.lines,
        }
    }
}

/// Result of one agent turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub action: Action,
    pub plan: Option<String>,
    pub responses: Vec<String>,
    pub fallback: bool,
}

/// What the agent is told about the goal.
pub fn goal_text(config: &GridConfig, obs: &Observation) -> String {
    match (obs.reward, config.reward_mode) {
        (Some(cell), _) => cell.to_string(),
        (None, RewardMode::FixedTopRight) => config.top_right().to_string(),
        (None, RewardMode::RandomPerEpisode) => UNKNOWN_REWARD_TEXT.to_string(),
    }
}

/// Queries the backend for one action. Unparsable answers are retried `parse_retries`
/// times; after that the configured fallback applies. For plan strategies the plan line
/// (or a fallback placeholder) is appended to `memory`.
#[allow(clippy::too_many_arguments)]
pub fn fa_act<R: Rng + ?Sized>(
    config: &FaConfig,
    backend: &SharedBackend,
    templates: &TemplateSet,
    grid: &GridConfig,
    obs: &Observation,
    memory: &mut MemoryLog,
    rng: &mut R,
) -> Result<AgentTurn, FaError> {
    let binding = Binding::new()
        .n(grid.n)
        .set(Placeholder::RewardLocation, goal_text(grid, obs))
        .memory(memory.visible(config.max_memory_lines))
        .observation(obs.agent);
    let prompt = templates
        .render(config.strategy.template(), &binding)
        .map_err(|e| FaError::Template(e.to_string()))?;
    let mut responses = Vec::new();
    for _ in 0..=config.parse_retries {
        let text = query(&**backend, prompt.clone(), config.temperature)?.text;
        let parsed = parse_agent_turn(&text, config.strategy);
        responses.push(text);
        if let Ok(turn) = parsed {
            if let Some(plan) = &turn.plan {
                memory.push(build_plan_line(plan));
            }
            return Ok(AgentTurn {
                action: turn.action,
                plan: turn.plan,
                responses,
                fallback: false,
            });
        }
    }
    match config.fallback {
        Fallback::Abort => Err(FaError::Unparsable { responses }),
        Fallback::UniformRandom => {
            if config.strategy.has_plan() {
                memory.push(build_plan_line(FALLBACK_PLAN));
            }
            Ok(AgentTurn {
                action: Action::from_index(rng.random_range(0..4)),
                plan: None,
                responses,
                fallback: true,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("template: {0}")]
    Template(String),
    #[error("no parsable action in {} responses", responses.len())]
    Unparsable { responses: Vec<String> },
    #[error("environment: {0}")]
    World(#[from] crate::WorldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub strategy: Strategy,
    /// Cells occupied, starting with the reset position.
    pub trajectory: Vec<Cell>,
    pub actions: Vec<Action>,
    pub success: bool,
    pub steps_used: u32,
    pub faults: u32,
    pub responses: Vec<Vec<String>>,
    pub memory: Vec<String>,
    pub error: Option<String>,
}

/// Plays one episode on `world`, which is reset with `seed`.
pub fn fa_run_episode(
    config: &FaConfig,
    backend: &SharedBackend,
    templates: &TemplateSet,
    world: &mut dyn World,
    episode: u64,
    seed: u64,
) -> EpisodeRecord {
    let mut rec = EpisodeRecord {
        episode,
        seed,
        strategy: config.strategy,
        trajectory: Vec::new(),
        actions: Vec::new(),
        success: false,
        steps_used: 0,
        faults: 0,
        responses: Vec::new(),
        memory: Vec::new(),
        error: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "fa-fallback", 0));
    let mut memory = MemoryLog::new();
    let grid = world.config().clone();
    let mut obs = match world.reset(seed) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.trajectory.push(obs.agent);
    loop {
        let turn = match fa_act(config, backend, templates, &grid, &obs, &mut memory, &mut rng) {
            Ok(t) => t,
            Err(e) => {
                if let FaError::Unparsable { responses } = &e {
                    rec.responses.push(responses.clone());
                    rec.faults += 1;
                }
                rec.error = Some(e.to_string());
                break;
            }
        };
        rec.faults += u32::from(turn.fallback);
        rec.responses.push(turn.responses);
        let result = match world.step(turn.action) {
            Ok(r) => r,
            Err(e) => {
                rec.error = Some(e.to_string());
                break;
            }
        };
        memory.push(build_memory_line(turn.action, obs.agent, result.observation.agent, result.reward));
        rec.actions.push(turn.action);
        rec.trajectory.push(result.observation.agent);
        rec.steps_used += 1;
        if result.done() {
            rec.success = result.terminated;
            break;
        }
        obs = result.observation;
    }
    rec.memory = memory.lines().to_vec();
    rec
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub strategy: Strategy,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub faults: u32,
    pub errors: usize,
    pub records: Vec<EpisodeRecord>,
}

impl BenchmarkResult {
    pub fn success_percent(&self) -> f64 {
        100.0 * self.success_rate
    }
}

/// Runs `episodes` independent episodes. Each episode gets a fresh backend from
/// `backend_for` and a fresh world from `world_for`, and a seed derived from `seed`.
pub fn fa_benchmark<B, W>(
    config: &FaConfig,
    templates: &TemplateSet,
    backend_for: B,
    world_for: W,
    episodes: usize,
    seed: u64,
) -> BenchmarkResult
where
    B: Fn(u64) -> SharedBackend + Sync,
    W: Fn() -> Box<dyn World> + Sync,
{
    let records: Vec<EpisodeRecord> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let ep_seed = derive_seed(seed, "fa-episode", i);
            let backend = backend_for(ep_seed);
            let mut world = world_for();
            fa_run_episode(config, &backend, templates, world.as_mut(), i, ep_seed)
        })
        .collect();
    let n = records.len().max(1) as f64;
    BenchmarkResult {
        strategy: config.strategy,
        episodes: records.len(),
        success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
        mean_steps: records.iter().map(|r| f64::from(r.steps_used)).sum::<f64>() / n,
        faults: records.iter().map(|r| r.faults).sum(),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        records,
    }
}

/// Convenience for a backend shared by every episode.
pub fn shared(backend: SharedBackend) -> impl Fn(u64) -> SharedBackend + Sync {
    move |_| Arc::clone(&backend)
}

pub fn write_records<W: Write>(records: &[EpisodeRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One row of the benchmark summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: Strategy,
    pub fixed_percent: Option<f64>,
    pub random_percent: Option<f64>,
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    let pct = |v: Option<f64>| v.map(|p| format!("{p:.1}")).unwrap_or_default();
    writeln!(out, "model,strategy,fixed_reward_pct,random_reward_pct")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.model,
            r.strategy,
            pct(r.fixed_percent),
            pct(r.random_percent)
        )?;
    }
    Ok(())
}

/// Scripted response streams used to calibrate the harness.
pub mod scripts {
    use crate::grid::Action;

    pub fn turn(action: Action, plan: Option<&str>) -> String {
        match plan {
            Some(p) => serde_json::json!({ "plan": p, "action": action.as_str() }).to_string(),
            None => serde_json::json!({ "action": action.as_str() }).to_string(),
        }
    }

    /// Shortest path from `[0, 0]` to `[n−1, n−1]`: all ups, then all rights.
    pub fn optimal(n: i32) -> Vec<Action> {
        let k = (n - 1) as usize;
        let mut v = vec![Action::Up; k];
        v.extend(vec![Action::Right; k]);
        v
    }

    /// Serpentine sweep from `[0, 0]` covering every cell in `n² − 1` moves.
    pub fn boustrophedon(n: i32) -> Vec<Action> {
        let k = (n - 1) as usize;
        let mut v = Vec::new();
        for row in 0..n {
            v.extend(vec![if row % 2 == 0 { Action::Right } else { Action::Left }; k]);
            if row + 1 < n {
                v.push(Action::Up);
            }
        }
        v
    }

    /// Responses for a scripted action sequence; plan strategies get a generic plan.
    pub fn responses(actions: &[Action], with_plan: bool) -> Vec<String> {
        actions
            .iter()
            .map(|a| turn(*a, with_plan.then_some("follow the script")))
            .collect()
    }
}
