//! Multi-seed learning-curve runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::World;
use crate::pg::{pretrain_then_finetune, train, LearningCurve, TrainConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
    Scratch,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Scratch => "scratch",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Learning curves of several seeds tagged with their phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub phases: Vec<(Phase, LearningCurve)>,
    /// Seeds whose run failed, with the error text.
    pub failures: Vec<(Phase, u64, String)>,
}

impl CurveSet {
    pub fn curve(&self, phase: Phase) -> Option<&LearningCurve> {
        self.phases.iter().find(|(p, _)| *p == phase).map(|(_, c)| c)
    }

    fn push(&mut self, phase: Phase, seed: u64, result: Result<LearningCurve, TrainError>) {
        match result {
            Ok(c) => match self.phases.iter_mut().find(|(p, _)| *p == phase) {
                Some((_, all)) => all.extend(&c),
                None => self.phases.push((phase, c)),
            },
            Err(e) => self.failures.push((phase, seed, e.to_string())),
        }
    }

    /// Rows `phase,seed,step,success,mean_return`, phases in insertion order.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "phase,seed,step,success,mean_return")?;
        for (phase, curve) in &self.phases {
            for p in &curve.points {
                writeln!(out, "{phase},{},{},{},{}", p.seed, p.step, p.success, p.mean_return)?;
            }
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<CurveSet, String> {
        let mut lines = text.lines();
        if lines.next() != Some("phase,seed,step,success,mean_return") {
            return Err("missing header phase,seed,step,success,mean_return".into());
        }
        let mut set = CurveSet::default();
        for (i, line) in lines.enumerate() {
            let (phase, rest) = line.split_once(',').ok_or_else(|| format!("line {}: too few fields", i + 2))?;
            let phase = match phase {
                "pretrain" => Phase::Pretrain,
                "finetune" => Phase::Finetune,
                "scratch" => Phase::Scratch,
                other => return Err(format!("line {}: unknown phase {other}", i + 2)),
            };
            let point = LearningCurve::read_csv(&format!("seed,step,success,mean_return\n{rest}"))
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            set.push(phase, 0, Ok(point));
        }
        Ok(set)
    }
}

/// Per-seed area under the success curve for two phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucComparison {
    pub seed: u64,
    pub candidate: f64,
    pub baseline: f64,
}

impl AucComparison {
    pub fn wins(&self) -> bool {
        self.candidate > self.baseline
    }
}

/// Pairs seeds present in both curves.
pub fn compare_auc(candidate: &LearningCurve, baseline: &LearningCurve) -> Vec<AucComparison> {
    let base_seeds = baseline.seeds();
    candidate
        .seeds()
        .into_iter()
        .filter(|s| base_seeds.contains(s))
        .map(|seed| AucComparison {
            seed,
            candidate: candidate.for_seed(seed).auc(),
            baseline: baseline.for_seed(seed).auc(),
        })
        .collect()
}

/// Builds the worlds a single seed trains in.
pub trait WorldFactory: Sync {
    fn true_world(&self) -> Box<dyn World>;
    /// World model used for pretraining; `seed` lets mock backends vary per run.
    fn model_world(&self, seed: u64) -> Result<Box<dyn World>, String>;
}

/// Trains one scratch agent per seed, in parallel.
pub fn run_scratch(config: &TrainConfig, seeds: &[u64], worlds: &dyn WorldFactory) -> CurveSet {
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let mut w = worlds.true_world();
            let mut e = worlds.true_world();
            (seed, train(config, seed, w.as_mut(), e.as_mut()).map(|(_, c)| c))
        })
        .collect();
    let mut set = CurveSet::default();
    for (seed, r) in results {
        set.push(Phase::Scratch, seed, r);
    }
    set
}

/// Pretrains in the world model then fine-tunes in the true world, one run per seed.
pub fn run_pretrained(pretrain: &TrainConfig, finetune: &TrainConfig, seeds: &[u64], worlds: &dyn WorldFactory) -> CurveSet {
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let outcome = worlds.model_world(seed).map_err(TrainError::Config).and_then(|mut model| {
                let mut w = worlds.true_world();
                let mut e = worlds.true_world();
                pretrain_then_finetune(pretrain, finetune, seed, model.as_mut(), w.as_mut(), e.as_mut())
            });
            (seed, outcome)
        })
        .collect();
    let mut set = CurveSet::default();
    for (seed, r) in results {
        match r {
            Ok(out) => {
                set.push(Phase::Pretrain, seed, Ok(out.pretrain));
                set.push(Phase::Finetune, seed, Ok(out.finetune));
            }
            Err(e) => set.failures.push((Phase::Finetune, seed, e.to_string())),
        }
    }
    set
}
