//! Exhaustive single-step probes of a world model against the reference grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::fwm::FoundationWorldModel;
use crate::grid::{enumerate_transitions, Action, Cell, Transition};
use crate::prompt::TemplateId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeError {
    pub from: Cell,
    pub action: Action,
    /// `None` when no answer could be parsed.
    pub predicted: Option<Cell>,
    pub predicted_reward: Option<u8>,
    pub true_cell: Cell,
    pub true_reward: u8,
    pub raw_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub template: TemplateId,
    pub n: i32,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub errors: Vec<ProbeError>,
}

impl ProbeReport {
    pub fn parse_failures(&self) -> usize {
        self.errors.iter().filter(|e| e.predicted.is_none()).count()
    }

    /// Fraction of errors whose source cell lies on the grid boundary.
    pub fn boundary_error_share(&self) -> f64 {
        if self.errors.is_empty() {
            return 0.0;
        }
        let edge = self.errors.iter().filter(|e| e.from.on_boundary(self.n)).count();
        edge as f64 / self.errors.len() as f64
    }

    /// Errors per source cell, row-major from `[0, 0]`.
    pub fn errors_per_cell(&self) -> Vec<u32> {
        let mut grid = vec![0; (self.n * self.n) as usize];
        for e in &self.errors {
            grid[e.from.index(self.n)] += 1;
        }
        grid
    }

    /// Every probe in enumeration order with its verdict. Correct probes predicted the
    /// truth exactly, so their prediction columns repeat it.
    pub fn write_ledger_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let grid = crate::grid::GridConfig::deterministic(self.n);
        let transitions = enumerate_transitions(&grid).map_err(std::io::Error::other)?;
        let with_reward = self.template.includes_reward();
        writeln!(out, "from_x,from_y,action,pred_x,pred_y,pred_reward,true_x,true_y,true_reward,correct")?;
        let opt = |v: Option<i32>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in transitions {
            let wrong = self.errors.iter().find(|e| e.from == t.from && e.action == t.action);
            let (pred, pred_reward) = match wrong {
                Some(e) => (e.predicted, e.predicted_reward),
                None => (Some(t.to), with_reward.then_some(t.reward)),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                t.from.x,
                t.from.y,
                t.action,
                opt(pred.map(|c| c.x)),
                opt(pred.map(|c| c.y)),
                opt(pred_reward.map(i32::from)),
                t.to.x,
                t.to.y,
                t.reward,
                u8::from(wrong.is_none())
            )?;
        }
        Ok(())
    }

    pub fn write_errors_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "from_x,from_y,action,pred_x,pred_y,pred_reward,true_x,true_y,true_reward")?;
        let opt = |v: Option<i32>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.errors {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.from.x,
                e.from.y,
                e.action,
                opt(e.predicted.map(|c| c.x)),
                opt(e.predicted.map(|c| c.y)),
                opt(e.predicted_reward.map(i32::from)),
                e.true_cell.x,
                e.true_cell.y,
                e.true_reward
            )?;
        }
        Ok(())
    }
}

fn judge(fwm: &FoundationWorldModel, t: &Transition, reward_cell: Cell) -> Result<Option<ProbeError>, EvalError> {
    let pred = fwm.predict(t.from, t.action, reward_cell)?;
    let with_reward = fwm.fwm_config().transition_template.includes_reward();
    let (cell, reward) = match &pred.parsed {
        Ok(p) => (Some(p.next_cell), p.reward),
        Err(_) => (None, None),
    };
    let cell_ok = cell == Some(t.to);
    let reward_ok = !with_reward || reward == Some(t.reward);
    if cell_ok && reward_ok {
        return Ok(None);
    }
    Ok(Some(ProbeError {
        from: t.from,
        action: t.action,
        predicted: cell,
        predicted_reward: reward,
        true_cell: t.to,
        true_reward: t.reward,
        raw_response: pred.raw,
    }))
}

/// Queries `fwm` once (τ = 0, with its parse retries) for every (cell, action) of its
/// deterministic grid and scores exact agreement with the reference transition. The
/// reward is scored too when the template asks for it. Unparsable answers count as
/// errors with no predicted cell.
pub fn probe_fidelity(fwm: &FoundationWorldModel) -> Result<ProbeReport, EvalError> {
    let grid = &fwm.fwm_config().grid;
    let transitions = enumerate_transitions(grid).map_err(crate::WorldError::from)?;
    let reward_cell = grid.top_right();
    let verdicts: Vec<Option<ProbeError>> = transitions
        .par_iter()
        .map(|t| judge(fwm, t, reward_cell))
        .collect::<Result<_, _>>()?;
    let errors: Vec<ProbeError> = verdicts.into_iter().flatten().collect();
    let total = transitions.len();
    let correct = total - errors.len();
    Ok(ProbeReport {
        template: fwm.fwm_config().transition_template,
        n: grid.n,
        total,
        correct,
        accuracy: correct as f64 / total as f64,
        errors,
    })
}

pub fn write_accuracy_csv<W: std::io::Write>(reports: &[ProbeReport], mut out: W) -> std::io::Result<()> {
    writeln!(out, "template,n,total,correct,accuracy")?;
    for r in reports {
        writeln!(out, "{},{},{},{},{:.4}", r.template, r.n, r.total, r.correct, r.accuracy)?;
    }
    Ok(())
}
