//! Prompt templates, rendering, and response parsing.
//!
//! Every template is a plain-text asset under `templates/`, compiled into the crate
//! and overridable from a directory at run time. Rendering substitutes `<TOKEN>`
//! placeholders and is byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Action, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placeholder {
    N,
    RewardLocation,
    Observation,
    Action,
    Memory,
    P1,
    P2,
    KeyLocation,
}

impl Placeholder {
    pub const ALL: [Placeholder; 8] = [
        Placeholder::N,
        Placeholder::RewardLocation,
        Placeholder::Observation,
        Placeholder::Action,
        Placeholder::Memory,
        Placeholder::P1,
        Placeholder::P2,
        Placeholder::KeyLocation,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Placeholder::N => "<n>",
            Placeholder::RewardLocation => "<REWARD LOCATION>",
            Placeholder::Observation => "<OBSERVATION>",
            Placeholder::Action => "<ACTION>",
            Placeholder::Memory => "<MEMORY>",
            Placeholder::P1 => "<P1>",
            Placeholder::P2 => "<P2>",
            Placeholder::KeyLocation => "<KEY LOCATION>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "T")]
    T,
    #[serde(rename = "T+R")]
    TPlusR,
    #[serde(rename = "T_minimal")]
    TMinimal,
    #[serde(rename = "T_minimal+R")]
    TMinimalPlusR,
    RewardSample,
    StickySample,
    #[serde(rename = "Key_T")]
    KeyT,
    #[serde(rename = "FA_AO")]
    FaAo,
    #[serde(rename = "FA_SP")]
    FaSp,
    #[serde(rename = "FA_FP")]
    FaFp,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::T,
        TemplateId::TPlusR,
        TemplateId::TMinimal,
        TemplateId::TMinimalPlusR,
        TemplateId::RewardSample,
        TemplateId::StickySample,
        TemplateId::KeyT,
        TemplateId::FaAo,
        TemplateId::FaSp,
        TemplateId::FaFp,
    ];

    /// The four transition-probe templates.
    pub const TRANSITION: [TemplateId; 4] = [
        TemplateId::T,
        TemplateId::TPlusR,
        TemplateId::TMinimal,
        TemplateId::TMinimalPlusR,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::T => "T",
            TemplateId::TPlusR => "T+R",
            TemplateId::TMinimal => "T_minimal",
            TemplateId::TMinimalPlusR => "T_minimal+R",
            TemplateId::RewardSample => "RewardSample",
            TemplateId::StickySample => "StickySample",
            TemplateId::KeyT => "Key_T",
            TemplateId::FaAo => "FA_AO",
            TemplateId::FaSp => "FA_SP",
            TemplateId::FaFp => "FA_FP",
        }
    }

    /// Asset file name under `templates/`.
    pub fn file_name(&self) -> &'static str {
        match self {
            TemplateId::T => "t.txt",
            TemplateId::TPlusR => "t_plus_r.txt",
            TemplateId::TMinimal => "t_minimal.txt",
            TemplateId::TMinimalPlusR => "t_minimal_plus_r.txt",
            TemplateId::RewardSample => "reward_sample.txt",
            TemplateId::StickySample => "sticky_sample.txt",
            TemplateId::KeyT => "key_t.txt",
            TemplateId::FaAo => "fa_ao.txt",
            TemplateId::FaSp => "fa_sp.txt",
            TemplateId::FaFp => "fa_fp.txt",
        }
    }

    fn builtin_body(&self) -> &'static str {
        match self {
            TemplateId::T => include_str!("../templates/t.txt"),
            TemplateId::TPlusR => include_str!("../templates/t_plus_r.txt"),
            TemplateId::TMinimal => include_str!("../templates/t_minimal.txt"),
            TemplateId::TMinimalPlusR => include_str!("../templates/t_minimal_plus_r.txt"),
            TemplateId::RewardSample => include_str!("../templates/reward_sample.txt"),
            TemplateId::StickySample => include_str!("../templates/sticky_sample.txt"),
            TemplateId::KeyT => include_str!("../templates/key_t.txt"),
            TemplateId::FaAo => include_str!("../templates/fa_ao.txt"),
            TemplateId::FaSp => include_str!("../templates/fa_sp.txt"),
            TemplateId::FaFp => include_str!("../templates/fa_fp.txt"),
        }
    }

    pub fn placeholders(&self) -> &'static [Placeholder] {
        use Placeholder::*;
        match self {
            TemplateId::T | TemplateId::TMinimal => &[N, Observation, Action],
            TemplateId::TPlusR | TemplateId::TMinimalPlusR => {
                &[N, RewardLocation, Observation, Action]
            }
            TemplateId::RewardSample => &[N],
            TemplateId::StickySample => &[P1, P2],
            TemplateId::KeyT => &[N, KeyLocation, RewardLocation, Memory, Observation, Action],
            TemplateId::FaAo | TemplateId::FaSp | TemplateId::FaFp => {
                &[N, RewardLocation, Memory, Observation]
            }
        }
    }

    /// Whether responses to this template carry a reward value.
    pub fn includes_reward(&self) -> bool {
        matches!(
            self,
            TemplateId::TPlusR | TemplateId::TMinimalPlusR | TemplateId::KeyT
        )
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("binding for template {template} is missing {token}")]
    MissingBinding { template: TemplateId, token: &'static str },
    #[error("template {template} uses {token}, which it does not declare")]
    UndeclaredPlaceholder { template: TemplateId, token: &'static str },
    #[error("template {template} declares {token} but never uses it")]
    UnusedPlaceholder { template: TemplateId, token: &'static str },
    #[error("cannot read template asset {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    pub fn builtin(id: TemplateId) -> Self {
        PromptTemplate {
            id,
            body: id.builtin_body().to_string(),
        }
    }

    /// Builds a template, checking that its body uses exactly the declared placeholders.
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, TemplateError> {
        let t = PromptTemplate {
            id,
            body: body.into(),
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), TemplateError> {
        let declared = self.id.placeholders();
        for p in Placeholder::ALL {
            let used = self.body.contains(p.token());
            let is_declared = declared.contains(&p);
            if used && !is_declared {
                return Err(TemplateError::UndeclaredPlaceholder {
                    template: self.id,
                    token: p.token(),
                });
            }
            if !used && is_declared {
                return Err(TemplateError::UnusedPlaceholder {
                    template: self.id,
                    token: p.token(),
                });
            }
        }
        Ok(())
    }

    pub fn render(&self, binding: &Binding) -> Result<String, TemplateError> {
        let mut out = self.body.clone();
        for &p in self.id.placeholders() {
            let value = binding.get(p).ok_or(TemplateError::MissingBinding {
                template: self.id,
                token: p.token(),
            })?;
            out = out.replace(p.token(), value);
        }
        Ok(out)
    }
}

/// The ten templates used by an experiment.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: TemplateId::ALL
                .into_iter()
                .map(|id| (id, PromptTemplate::builtin(id)))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Loads templates from `dir`, falling back to the built-in asset for any missing file.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(id, PromptTemplate::new(id, body)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, binding: &Binding) -> Result<String, TemplateError> {
        self.get(id).render(binding)
    }
}

/// Placeholder values. Coordinates are bound in `[x, y]` form, actions as lowercase words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Binding(BTreeMap<Placeholder, String>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, p: Placeholder, value: impl Into<String>) -> Self {
        self.0.insert(p, value.into());
        self
    }

    pub fn get(&self, p: Placeholder) -> Option<&str> {
        self.0.get(&p).map(String::as_str)
    }

    pub fn n(self, n: i32) -> Self {
        self.set(Placeholder::N, n.to_string())
    }

    pub fn observation(self, cell: Cell) -> Self {
        self.set(Placeholder::Observation, cell.to_string())
    }

    pub fn action(self, action: Action) -> Self {
        self.set(Placeholder::Action, action.as_str())
    }

    pub fn reward_location(self, cell: Cell) -> Self {
        self.set(Placeholder::RewardLocation, cell.to_string())
    }

    pub fn key_location(self, cell: Cell) -> Self {
        self.set(Placeholder::KeyLocation, cell.to_string())
    }

    pub fn memory(self, lines: &[String]) -> Self {
        self.set(Placeholder::Memory, memory_text(lines))
    }

    pub fn probabilities(self, p1: f64, p2: f64) -> Self {
        self.set(Placeholder::P1, format_probability(p1))
            .set(Placeholder::P2, format_probability(p2))
    }
}

/// Text bound to `<MEMORY>`.
pub fn memory_text(lines: &[String]) -> String {
    if lines.is_empty() {
        "Nothing yet.".to_string()
    } else {
        lines.join("\n")
    }
}

/// Probabilities are printed with at most two decimals (`0.6`, `0.25`).
pub fn format_probability(p: f64) -> String {
    let s = format!("{p:.2}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Stable labels the mock backends use to recognize and decode prompts.
pub mod anchors {
    pub const GRID_SIZE: &str = "The grid is a square of size ";
    pub const CURRENT_LOCATION: &str = "Current location of the agent: ";
    pub const ACTION_TAKEN: &str = "Action taken by the agent: ";
    pub const REWARD_AT: &str = "Reward function: the reward is located at ";
    pub const KEY_AT: &str = "Key: a key is located at ";
    pub const VISITED: &str = "Locations previously visited by the agent in this episode:";
    pub const REWARD_SAMPLE: &str = "Generate a random reward location.";
    pub const STICKY_SAMPLE: &str = "Sample one element from the set {1, 0}.";
    pub const STICKY_P1: &str = "The element 1 has probability ";
    pub const FA_LOCATION: &str = "Your current location: ";
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{reason}; raw response: {raw:?}")]
pub struct ParseError {
    pub reason: String,
    pub raw: String,
}

impl ParseError {
    fn new(reason: impl Into<String>, raw: &str) -> Self {
        ParseError {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTransition {
    pub next_cell: Cell,
    pub reward: Option<u8>,
}

fn strict_pair() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]$").unwrap())
}

fn strict_pair_reward() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]\s*,\s*(-?\d+)$").unwrap())
}

fn any_pair() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]").unwrap())
}

fn any_int() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+").unwrap())
}

fn to_i32(s: &str, raw: &str) -> Result<i32, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new(format!("integer {s} out of range"), raw))
}

fn to_reward(s: &str, raw: &str) -> Result<u8, ParseError> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(ParseError::new(format!("reward must be 0 or 1, got {other}"), raw)),
    }
}

/// Parses a transition response: strict `[x, y]` / `[x, y], r` first, then the first
/// bracketed integer pair anywhere in the text (and the first integer after it when a
/// reward is expected).
pub fn parse_transition(response: &str, expects_reward: bool) -> Result<ParsedTransition, ParseError> {
    let trimmed = response.trim();
    if expects_reward {
        if let Some(c) = strict_pair_reward().captures(trimmed) {
            return Ok(ParsedTransition {
                next_cell: Cell::new(to_i32(&c[1], response)?, to_i32(&c[2], response)?),
                reward: Some(to_reward(&c[3], response)?),
            });
        }
    } else if let Some(c) = strict_pair().captures(trimmed) {
        return Ok(ParsedTransition {
            next_cell: Cell::new(to_i32(&c[1], response)?, to_i32(&c[2], response)?),
            reward: None,
        });
    }

    let c = any_pair()
        .captures(response)
        .ok_or_else(|| ParseError::new("no bracketed integer pair found", response))?;
    let next_cell = Cell::new(to_i32(&c[1], response)?, to_i32(&c[2], response)?);
    let reward = if expects_reward {
        let rest = &response[c.get(0).unwrap().end()..];
        let m = any_int()
            .find(rest)
            .ok_or_else(|| ParseError::new("no reward value after the location", response))?;
        Some(to_reward(m.as_str(), response)?)
    } else {
        None
    };
    Ok(ParsedTransition { next_cell, reward })
}

/// Parses a location sample with the fallback grammar (first bracketed pair).
pub fn parse_location(response: &str) -> Result<Cell, ParseError> {
    parse_transition(response, false).map(|p| p.next_cell)
}

/// Parses a binary sample: the first standalone `0` or `1`.
pub fn parse_binary(response: &str) -> Result<u8, ParseError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\b[01]\b").unwrap());
    re.find(response)
        .map(|m| if m.as_str() == "1" { 1 } else { 0 })
        .ok_or_else(|| ParseError::new("no 0/1 element found", response))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "AO")]
    ActionOnly,
    #[serde(rename = "SP")]
    SimplePlan,
    #[serde(rename = "FP")]
    FocusedPlan,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ActionOnly, Strategy::SimplePlan, Strategy::FocusedPlan];

    pub fn template(&self) -> TemplateId {
        match self {
            Strategy::ActionOnly => TemplateId::FaAo,
            Strategy::SimplePlan => TemplateId::FaSp,
            Strategy::FocusedPlan => TemplateId::FaFp,
        }
    }

    pub fn has_plan(&self) -> bool {
        !matches!(self, Strategy::ActionOnly)
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Strategy::ActionOnly => "AO",
            Strategy::SimplePlan => "SP",
            Strategy::FocusedPlan => "FP",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAgentTurn {
    pub action: Action,
    pub plan: Option<String>,
}

/// Parses a foundation-agent JSON response. Extra keys are ignored; the object may be
/// surrounded by other text.
pub fn parse_agent_turn(response: &str, strategy: Strategy) -> Result<ParsedAgentTurn, ParseError> {
    let trimmed = response.trim();
    let value: serde_json::Value = match serde_json::from_str(trimmed) {
        Ok(v) => v,
        Err(_) => {
            let (start, end) = match (trimmed.find('{'), trimmed.rfind('}')) {
                (Some(s), Some(e)) if s < e => (s, e),
                _ => return Err(ParseError::new("no JSON object found", response)),
            };
            serde_json::from_str(&trimmed[start..=end])
                .map_err(|e| ParseError::new(format!("malformed JSON object: {e}"), response))?
        }
    };
    let obj = value
        .as_object()
        .ok_or_else(|| ParseError::new("response is not a JSON object", response))?;
    let action_word = obj
        .get("action")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ParseError::new("missing string field \"action\"", response))?;
    let action = action_word
        .parse::<Action>()
        .map_err(|e| ParseError::new(e.to_string(), response))?;
    let plan = if strategy.has_plan() {
        let plan = obj
            .get("plan")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ParseError::new("missing string field \"plan\"", response))?;
        Some(plan.to_string())
    } else {
        None
    };
    Ok(ParsedAgentTurn { action, plan })
}

/// Memory line appended after each executed action.
pub fn build_memory_line(action: Action, from: Cell, to: Cell, reward: u8) -> String {
    let outcome = if reward == 1 { "the reward" } else { "no reward" };
    format!("Executed {action} at {from} resulting in {to} and {outcome}.")
}

/// Memory line recording a plan.
pub fn build_plan_line(plan: &str) -> String {
    format!("Plan: {}", plan.trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_binding() -> Binding {
        Binding::new()
            .n(5)
            .observation(Cell::new(2, 3))
            .action(Action::Up)
            .reward_location(Cell::new(4, 4))
    }

    #[test]
    fn builtin_templates_declare_exactly_their_placeholders() {
        for id in TemplateId::ALL {
            PromptTemplate::new(id, id.builtin_body()).unwrap();
        }
    }

    #[test]
    fn render_substitutes_everything() {
        let set = TemplateSet::default();
        let text = set.render(TemplateId::T, &t_binding()).unwrap();
        assert!(text.contains("[2, 3]"));
        assert!(text.contains("Action taken by the agent: up"));
        assert!(text.contains("otherwise the agent stays at [x, y]"));
        for p in Placeholder::ALL {
            assert!(!text.contains(p.token()));
        }
        let minimal = set.render(TemplateId::TMinimal, &t_binding()).unwrap();
        assert!(minimal.len() < text.len());
        assert!(!minimal.contains("otherwise the agent stays"));
    }

    #[test]
    fn missing_binding_names_the_token() {
        let b = Binding::new().n(5).observation(Cell::new(0, 0));
        let err = TemplateSet::default().render(TemplateId::T, &b).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingBinding {
                template: TemplateId::T,
                token: "<ACTION>"
            }
        );
        assert!(err.to_string().contains("<ACTION>"));
    }

    #[test]
    fn undeclared_placeholder_rejected() {
        let err = PromptTemplate::new(TemplateId::RewardSample, "size <n> reward <ACTION>").unwrap_err();
        assert!(matches!(err, TemplateError::UndeclaredPlaceholder { .. }));
    }

    #[test]
    fn transition_parsing() {
        assert_eq!(
            parse_transition("[3, 4]", false).unwrap(),
            ParsedTransition { next_cell: Cell::new(3, 4), reward: None }
        );
        assert_eq!(
            parse_transition("[3,4], 1", true).unwrap(),
            ParsedTransition { next_cell: Cell::new(3, 4), reward: Some(1) }
        );
        assert_eq!(
            parse_transition("The agent moves to [3, 4] and the reward is 0.", true).unwrap(),
            ParsedTransition { next_cell: Cell::new(3, 4), reward: Some(0) }
        );
        let err = parse_transition("I cannot determine that.", false).unwrap_err();
        assert_eq!(err.raw, "I cannot determine that.");
        assert!(parse_transition("[3, 4] reward 7", true).is_err());
        assert!(parse_transition("[3, 4]", true).is_err());
        assert_eq!(parse_transition("[-1, 9]", false).unwrap().next_cell, Cell::new(-1, 9));
    }

    #[test]
    fn binary_and_location_parsing() {
        assert_eq!(parse_binary("1").unwrap(), 1);
        assert_eq!(parse_binary("I pick 0.").unwrap(), 0);
        assert!(parse_binary("10").is_err());
        assert_eq!(parse_location("Sure! [1, 3]").unwrap(), Cell::new(1, 3));
    }

    #[test]
    fn agent_turn_parsing() {
        let t = parse_agent_turn(r#"{"action": "up"}"#, Strategy::ActionOnly).unwrap();
        assert_eq!(t, ParsedAgentTurn { action: Action::Up, plan: None });
        let t = parse_agent_turn(
            r#"{"plan": "move right to reach column 4", "action": "right"}"#,
            Strategy::SimplePlan,
        )
        .unwrap();
        assert_eq!(t.action, Action::Right);
        assert_eq!(t.plan.as_deref(), Some("move right to reach column 4"));
        let t = parse_agent_turn(
            "Here you go:\n{\"target\": \"[1, 0]\", \"plan\": \"go\", \"action\": \"RIGHT\", \"x\": 1}",
            Strategy::FocusedPlan,
        )
        .unwrap();
        assert_eq!(t.action, Action::Right);
        assert!(parse_agent_turn(r#"{"action": "jump"}"#, Strategy::ActionOnly).is_err());
        assert!(parse_agent_turn(r#"{"action": "up"}"#, Strategy::SimplePlan).is_err());
        assert!(parse_agent_turn("up", Strategy::ActionOnly).is_err());
    }

    #[test]
    fn memory_lines() {
        assert_eq!(
            build_memory_line(Action::Right, Cell::new(0, 0), Cell::new(1, 0), 0),
            "Executed right at [0, 0] resulting in [1, 0] and no reward."
        );
        assert_eq!(
            build_memory_line(Action::Up, Cell::new(4, 3), Cell::new(4, 4), 1),
            "Executed up at [4, 3] resulting in [4, 4] and the reward."
        );
        assert_eq!(
            build_memory_line(Action::Left, Cell::new(0, 2), Cell::new(0, 2), 0),
            "Executed left at [0, 2] resulting in [0, 2] and no reward."
        );
    }

    #[test]
    fn probabilities_print_compactly() {
        assert_eq!(format_probability(0.6), "0.6");
        assert_eq!(format_probability(0.25), "0.25");
        assert_eq!(format_probability(0.4), "0.4");
        assert_eq!(format_probability(1.0), "1");
    }

    #[test]
    fn template_ids_round_trip_names() {
        for id in TemplateId::ALL {
            assert_eq!(id.name().parse::<TemplateId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.name()));
        }
    }
}
