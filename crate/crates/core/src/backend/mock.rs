use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendRequest, BackendResponse, ModelBackend};
use crate::grid::{next_cell, Action, Cell};
use crate::prompt::anchors;

/// Failure classes for the noisy simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    /// Predicts no movement.
    Clamp,
    /// Predicts no movement, but only for agents on a boundary cell.
    EdgeClamp,
    /// Moves along the wrong axis.
    WrongAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MockSpec {
    /// Answers every simulation prompt exactly; sampling prompts are answered from
    /// the requested distribution.
    Oracle {},
    /// Oracle whose transition answers are corrupted with probability `error_rate`.
    /// Whether a given prompt is corrupted depends only on the prompt and the seed.
    Noisy { error_rate: f64, error_model: ErrorModel },
    /// Ignores the prompt and draws one of `answers` with the given weights.
    Distribution { answers: Vec<String>, weights: Vec<f64> },
    /// Replays `responses` in order, cycling.
    Scripted { responses: Vec<String> },
}

impl MockSpec {
    /// Uniform distribution over every cell of an `n`x`n` grid.
    pub fn uniform_cells(n: i32) -> Self {
        let answers: Vec<String> = Cell::all(n).map(|c| c.to_string()).collect();
        let weights = vec![1.0; answers.len()];
        MockSpec::Distribution { answers, weights }
    }

    pub fn point_mass(answer: impl Into<String>) -> Self {
        MockSpec::Distribution {
            answers: vec![answer.into()],
            weights: vec![1.0],
        }
    }

    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        MockSpec::Scripted {
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            MockSpec::Oracle {} => Ok(()),
            MockSpec::Noisy { error_rate, .. } => {
                if (0.0..1.0).contains(error_rate) {
                    Ok(())
                } else {
                    Err(format!("noisy error_rate must lie in [0, 1), got {error_rate}"))
                }
            }
            MockSpec::Distribution { answers, weights } => {
                if answers.is_empty() || answers.len() != weights.len() {
                    return Err("distribution mock needs one weight per answer".into());
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err("distribution weights must be finite and nonnegative".into());
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err("distribution weights must not all be zero".into());
                }
                Ok(())
            }
            MockSpec::Scripted { responses } => {
                if responses.is_empty() {
                    Err("scripted mock needs at least one response".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Offline backend driven by a [`MockSpec`]. `(spec, seed)` fixes the response stream.
pub struct MockBackend {
    model_id: String,
    spec: MockSpec,
    seed: u64,
    rng: Mutex<ChaCha8Rng>,
    weighted: Option<WeightedIndex<f64>>,
    cursor: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(spec: MockSpec, seed: u64) -> Result<Self, BackendError> {
        spec.validate().map_err(BackendError::InvalidRequest)?;
        let weighted = match &spec {
            MockSpec::Distribution { weights, .. } => Some(
                WeightedIndex::new(weights.iter().copied())
                    .map_err(|e| BackendError::InvalidRequest(e.to_string()))?,
            ),
            _ => None,
        };
        let model_id = match &spec {
            MockSpec::Oracle {} => "mock-oracle",
            MockSpec::Noisy { .. } => "mock-noisy",
            MockSpec::Distribution { .. } => "mock-distribution",
            MockSpec::Scripted { .. } => "mock-scripted",
        };
        Ok(MockBackend {
            model_id: model_id.to_string(),
            spec,
            seed,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            weighted,
            cursor: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }

    /// Number of `complete` calls that reached this backend.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn answer(&self, prompt: &str) -> Result<String, BackendError> {
        match &self.spec {
            MockSpec::Oracle {} => self.oracle_answer(prompt, None),
            MockSpec::Noisy { error_rate, error_model } => {
                let corrupt = prompt_uniform(self.seed, prompt) < *error_rate;
                self.oracle_answer(prompt, corrupt.then_some(*error_model))
            }
            MockSpec::Distribution { answers, .. } => {
                let idx = self
                    .weighted
                    .as_ref()
                    .expect("validated distribution")
                    .sample(&mut *self.rng.lock().unwrap());
                Ok(answers[idx].clone())
            }
            MockSpec::Scripted { responses } => {
                let i = self.cursor.fetch_add(1, Ordering::SeqCst);
                Ok(responses[i % responses.len()].clone())
            }
        }
    }

    fn oracle_answer(&self, prompt: &str, error: Option<ErrorModel>) -> Result<String, BackendError> {
        if let Some(query) = TransitionQuery::decode(prompt) {
            return Ok(query.answer(error));
        }
        if prompt.contains(anchors::REWARD_SAMPLE) {
            let n = grid_size(prompt)
                .ok_or_else(|| BackendError::Unsupported("reward prompt without grid size".into()))?;
            let mut rng = self.rng.lock().unwrap();
            let cell = Cell::new(rng.random_range(0..n), rng.random_range(0..n));
            return Ok(cell.to_string());
        }
        if prompt.contains(anchors::STICKY_SAMPLE) {
            let p1 = after_anchor(prompt, anchors::STICKY_P1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| BackendError::Unsupported("binary prompt without p1".into()))?;
            let one = self.rng.lock().unwrap().random::<f64>() < p1;
            return Ok(if one { "1" } else { "0" }.to_string());
        }
        Err(BackendError::Unsupported(
            "oracle mock only answers simulation and sampling prompts".into(),
        ))
    }
}

impl ModelBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        let start = Instant::now();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.answer(&request.prompt)?;
        Ok(BackendResponse {
            text,
            latency: start.elapsed().max(Duration::from_nanos(1)),
            cached: false,
        })
    }
}

/// Deterministic value in [0, 1) from `(seed, prompt)`.
fn prompt_uniform(seed: u64, prompt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

fn after_anchor<'a>(prompt: &'a str, anchor: &str) -> Option<&'a str> {
    prompt.find(anchor).map(|i| &prompt[i + anchor.len()..])
}

fn cell_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]").unwrap())
}

fn cell_after(prompt: &str, anchor: &str) -> Option<Cell> {
    let rest = after_anchor(prompt, anchor)?;
    let c = cell_re().captures(rest)?;
    Some(Cell::new(c[1].parse().ok()?, c[2].parse().ok()?))
}

fn grid_size(prompt: &str) -> Option<i32> {
    after_anchor(prompt, anchors::GRID_SIZE)?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

/// A transition question recovered from a rendered simulation prompt.
#[derive(Debug, Clone, PartialEq)]
struct TransitionQuery {
    n: i32,
    current: Cell,
    action: Action,
    reward: Option<Cell>,
    key: Option<Cell>,
    visited: Vec<Cell>,
}

impl TransitionQuery {
    fn decode(prompt: &str) -> Option<Self> {
        let current = cell_after(prompt, anchors::CURRENT_LOCATION)?;
        let action = after_anchor(prompt, anchors::ACTION_TAKEN)?
            .lines()
            .next()?
            .parse()
            .ok()?;
        let n = grid_size(prompt)?;
        let visited = after_anchor(prompt, anchors::VISITED)
            .map(|rest| {
                rest.lines()
                    .skip(1)
                    .take_while(|l| !l.trim().is_empty())
                    .filter_map(|l| cell_re().captures(l.trim()))
                    .filter_map(|c| Some(Cell::new(c[1].parse().ok()?, c[2].parse().ok()?)))
                    .collect()
            })
            .unwrap_or_default();
        Some(TransitionQuery {
            n,
            current,
            action,
            reward: cell_after(prompt, anchors::REWARD_AT),
            key: cell_after(prompt, anchors::KEY_AT),
            visited,
        })
    }

    fn answer(&self, error: Option<ErrorModel>) -> String {
        let truth = next_cell(self.current, self.action, self.n);
        let predicted = match error {
            None => truth,
            Some(ErrorModel::Clamp) => self.current,
            Some(ErrorModel::EdgeClamp) if self.current.on_boundary(self.n) => self.current,
            Some(ErrorModel::EdgeClamp) => truth,
            Some(ErrorModel::WrongAxis) => {
                let (dx, dy) = self.action.delta();
                Cell::new(self.current.x + dy, self.current.y + dx).clamped(self.n)
            }
        };
        match self.reward {
            None => predicted.to_string(),
            Some(reward_cell) => {
                let has_key = match self.key {
                    None => true,
                    Some(k) => k == predicted || k == self.current || self.visited.contains(&k),
                };
                let r = u8::from(predicted == reward_cell && has_key);
                format!("{predicted}, {r}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::query;
    use crate::grid::{enumerate_transitions, GridConfig};
    use crate::prompt::{Binding, TemplateId, TemplateSet};

    fn t_prompt(id: TemplateId, cell: Cell, action: Action) -> String {
        TemplateSet::default()
            .render(
                id,
                &Binding::new()
                    .n(5)
                    .observation(cell)
                    .action(action)
                    .reward_location(Cell::new(4, 4)),
            )
            .unwrap()
    }

    #[test]
    fn oracle_answers_transitions() {
        let m = MockBackend::new(MockSpec::Oracle {}, 0).unwrap();
        let r = query(&m, t_prompt(TemplateId::T, Cell::new(2, 3), Action::Up), 0.0).unwrap();
        assert_eq!(r.text, "[2, 4]");
        let r = query(&m, t_prompt(TemplateId::TMinimalPlusR, Cell::new(4, 3), Action::Up), 0.0).unwrap();
        assert_eq!(r.text, "[4, 4], 1");
    }

    #[test]
    fn oracle_answers_key_prompts() {
        let m = MockBackend::new(MockSpec::Oracle {}, 0).unwrap();
        let render = |memory: &[String]| {
            TemplateSet::default()
                .render(
                    TemplateId::KeyT,
                    &Binding::new()
                        .n(3)
                        .key_location(Cell::new(0, 2))
                        .reward_location(Cell::new(2, 2))
                        .memory(memory)
                        .observation(Cell::new(1, 2))
                        .action(Action::Right),
                )
                .unwrap()
        };
        let without = query(&m, render(&["[0, 0]".into(), "[1, 0]".into()]), 0.0).unwrap();
        assert_eq!(without.text, "[2, 2], 0");
        let with = query(&m, render(&["[0, 0]".into(), "[0, 1]".into(), "[0, 2]".into()]), 0.0).unwrap();
        assert_eq!(with.text, "[2, 2], 1");
    }

    #[test]
    fn noisy_is_prompt_deterministic_and_near_rate() {
        let cfg = GridConfig::deterministic(16);
        let spec = MockSpec::Noisy { error_rate: 0.1, error_model: ErrorModel::Clamp };
        let a = MockBackend::new(spec.clone(), 5).unwrap();
        let b = MockBackend::new(spec, 5).unwrap();
        let mut wrong = 0;
        for t in enumerate_transitions(&cfg).unwrap() {
            let prompt = TemplateSet::default()
                .render(TemplateId::T, &Binding::new().n(16).observation(t.from).action(t.action))
                .unwrap();
            let ra = query(&a, prompt.clone(), 0.0).unwrap().text;
            assert_eq!(ra, query(&b, prompt.clone(), 0.0).unwrap().text);
            assert_eq!(ra, query(&a, prompt, 0.0).unwrap().text);
            if ra != t.to.to_string() {
                wrong += 1;
            }
        }
        // expected wrong ≈ 0.1 * 960 non-trivial transitions
        assert!((50..150).contains(&wrong), "wrong = {wrong}");
    }

    #[test]
    fn edge_clamp_only_hits_boundary_cells() {
        let m = MockBackend::new(
            MockSpec::Noisy { error_rate: 0.999, error_model: ErrorModel::EdgeClamp },
            1,
        )
        .unwrap();
        let interior = query(&m, t_prompt(TemplateId::T, Cell::new(2, 2), Action::Left), 0.0).unwrap();
        assert_eq!(interior.text, "[1, 2]");
        let edge = query(&m, t_prompt(TemplateId::T, Cell::new(1, 0), Action::Left), 0.0).unwrap();
        assert_eq!(edge.text, "[1, 0]");
    }

    #[test]
    fn wrong_axis_moves_other_coordinate() {
        let m = MockBackend::new(
            MockSpec::Noisy { error_rate: 0.999, error_model: ErrorModel::WrongAxis },
            1,
        )
        .unwrap();
        let r = query(&m, t_prompt(TemplateId::T, Cell::new(2, 2), Action::Up), 0.0).unwrap();
        assert_eq!(r.text, "[3, 2]");
    }

    #[test]
    fn distribution_and_scripted_streams() {
        let m = MockBackend::new(MockSpec::point_mass("[2, 2]"), 3).unwrap();
        for _ in 0..20 {
            assert_eq!(query(&m, "anything", 1.8).unwrap().text, "[2, 2]");
        }
        let s = MockBackend::new(MockSpec::scripted(["a", "b"]), 0).unwrap();
        let got: Vec<_> = (0..3).map(|_| query(&s, "p", 0.0).unwrap().text).collect();
        assert_eq!(got, ["a", "b", "a"]);
        assert_eq!(s.calls(), 3);

        let x = MockBackend::new(MockSpec::uniform_cells(5), 9).unwrap();
        let y = MockBackend::new(MockSpec::uniform_cells(5), 9).unwrap();
        for _ in 0..50 {
            assert_eq!(query(&x, "p", 1.8).unwrap().text, query(&y, "p", 1.8).unwrap().text);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MockBackend::new(MockSpec::Noisy { error_rate: 1.0, error_model: ErrorModel::Clamp }, 0).is_err());
        assert!(MockBackend::new(
            MockSpec::Distribution { answers: vec!["a".into()], weights: vec![-1.0] },
            0
        )
        .is_err());
        assert!(MockBackend::new(MockSpec::Scripted { responses: vec![] }, 0).is_err());
    }

    #[test]
    fn oracle_rejects_agent_prompts() {
        let m = MockBackend::new(MockSpec::Oracle {}, 0).unwrap();
        assert!(matches!(query(&m, "hello", 0.0), Err(BackendError::Unsupported(_))));
    }

    #[test]
    fn spec_toml_shape() {
        let s: MockSpec = toml::from_str("kind = \"noisy\"\nerror_rate = 0.1\nerror_model = \"clamp\"").unwrap();
        assert_eq!(s, MockSpec::Noisy { error_rate: 0.1, error_model: ErrorModel::Clamp });
        assert!(toml::from_str::<MockSpec>("kind = \"oracle\"\nbogus = 1").is_err());
    }
}
