use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::nn::{clip_grad_norm, Adam};
use super::policy::{ActorCritic, ArchDescriptor, LossParts, LossWeights, Sample};
use super::rollout::{compute_advantages, evaluate_greedy, Collector, CoordinateCode, FeatureEncoding, RolloutError, Trajectory};
use crate::grid::World;
use crate::seed::derive_seed;
use crate::WorldError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FeedForward,
    Recurrent,
}

/// Learning-rate schedule over one training phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from `learning_rate` at the first update towards zero at the end
    /// of the phase.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub policy: PolicyKind,
    #[serde(default)]
    pub coordinates: CoordinateCode,
    pub rollout_length: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: u32,
}

impl TrainConfig {
    pub fn feed_forward(total_steps: u64) -> Self {
        TrainConfig {
            policy: PolicyKind::FeedForward,
            coordinates: CoordinateCode::OneHot,
            rollout_length: 125,
            learning_rate: 3e-4,
            lr_schedule: LrSchedule::Constant,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            epochs: 10,
            minibatch_size: 32,
            total_steps,
            eval_every: 125,
            eval_episodes: 1,
        }
    }

    pub fn recurrent(total_steps: u64) -> Self {
        TrainConfig {
            policy: PolicyKind::Recurrent,
            learning_rate: 3e-5,
            ..Self::feed_forward(total_steps)
        }
    }

    pub fn with_total_steps(mut self, total_steps: u64) -> Self {
        self.total_steps = total_steps;
        self
    }

    /// Learning rate for an update that starts after `steps` environment steps.
    pub fn learning_rate_at(&self, steps: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear if self.total_steps == 0 => self.learning_rate,
            LrSchedule::Linear => self.learning_rate * (1.0 - steps as f64 / self.total_steps as f64),
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            clip: self.clip,
            vf_coef: self.vf_coef,
            ent_coef: self.ent_coef,
        }
    }

    pub fn architecture(&self, input_dim: usize) -> ArchDescriptor {
        match self.policy {
            PolicyKind::FeedForward => ArchDescriptor::feed_forward(input_dim),
            PolicyKind::Recurrent => ArchDescriptor::recurrent(input_dim),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if self.rollout_length == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("rollout_length, epochs and minibatch_size must be positive".into());
        }
        // zero is allowed: it freezes the policy
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must lie in (0, 1), got {}", self.clip));
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 || self.max_grad_norm <= 0.0 {
            return bad("ent_coef and vf_coef must be non-negative, max_grad_norm positive".into());
        }
        let r = self.rollout_length as u64;
        if self.eval_every == 0 || self.eval_every % r != 0 {
            return bad(format!(
                "eval_every ({}) must be a positive multiple of rollout_length ({r})",
                self.eval_every
            ));
        }
        if self.total_steps % r != 0 {
            return bad(format!(
                "total_steps ({}) must be a multiple of rollout_length ({r})",
                self.total_steps
            ));
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] WorldError),
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch} ({steps} steps); update aborted")]
    NonFinite { epoch: usize, minibatch: usize, steps: usize },
    #[error("observation encodings differ between worlds: {0:?} vs {1:?}")]
    SpaceMismatch(FeatureEncoding, FeatureEncoding),
}

/// Policy parameters together with optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub net: ActorCritic,
    pub optimizer: Adam,
}

impl Agent {
    pub fn new(desc: ArchDescriptor, learning_rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", 0));
        let net = ActorCritic::new(desc, &mut rng);
        let optimizer = Adam::new(net.param_count(), learning_rate);
        Agent { net, optimizer }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Splits a trajectory into the units minibatches are drawn from: single steps for a
/// feed-forward network, episode segments (cut at episode starts and at the rollout
/// boundary) for a recurrent one.
fn segments(traj: &Trajectory, recurrent: bool) -> Vec<std::ops::Range<usize>> {
    if !recurrent {
        return (0..traj.len()).map(|t| t..t + 1).collect();
    }
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..traj.len() {
        if traj.episode_starts[t] {
            out.push(start..t);
            start = t;
        }
    }
    if !traj.is_empty() {
        out.push(start..traj.len());
    }
    out
}

/// One clipped-surrogate update over `traj`. Advantages are normalized once over the
/// whole batch. Minibatches pack whole segments until they hold at least
/// `minibatch_size` steps. A non-finite loss aborts before that minibatch is applied.
pub fn update<R: rand::Rng + ?Sized>(
    agent: &mut Agent,
    traj: &Trajectory,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats, TrainError> {
    let (mut adv, targets) = compute_advantages(
        &traj.rewards,
        &traj.values,
        &traj.dones,
        traj.bootstrap_value,
        config.gamma,
        config.lambda,
    );
    normalize(&mut adv);
    let samples: Vec<Sample> = (0..traj.len())
        .map(|t| Sample {
            features: traj.features[t].clone(),
            action: traj.actions[t],
            old_log_prob: traj.log_probs[t],
            advantage: adv[t],
            target: targets[t],
        })
        .collect();
    let weights = config.weights();
    let mut segs = segments(traj, agent.net.is_recurrent());
    let mut grad = vec![0.0; agent.net.param_count()];
    let mut totals = LossParts::default();
    let mut stats = UpdateStats::default();
    agent.optimizer.lr = config.learning_rate;
    for epoch in 0..config.epochs {
        segs.shuffle(rng);
        let mut cursor = 0;
        let mut minibatch = 0;
        while cursor < segs.len() {
            let mut batch = Vec::new();
            let mut steps = 0;
            while cursor < segs.len() && steps < config.minibatch_size {
                steps += segs[cursor].len();
                batch.push(segs[cursor].clone());
                cursor += 1;
            }
            grad.fill(0.0);
            let mut parts = LossParts::default();
            for seg in &batch {
                let p = agent.net.segment_loss(
                    &agent.net.params,
                    &traj.states[seg.start],
                    &samples[seg.clone()],
                    &weights,
                    Some(&mut grad),
                );
                parts.add(&p);
            }
            let scale = 1.0 / steps as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !parts.total(&weights).is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite { epoch, minibatch, steps });
            }
            clip_grad_norm(&mut grad, config.max_grad_norm);
            agent.optimizer.step(&mut agent.net.params, &grad);
            totals.add(&parts);
            minibatch += 1;
            stats.minibatches += 1;
        }
    }
    let n = totals.count.max(1) as f64;
    stats.policy_loss = totals.policy / n;
    stats.value_loss = totals.value / n;
    stats.entropy = totals.entropy / n;
    stats.clip_fraction = totals.clipped as f64 / n;
    Ok(stats)
}

fn normalize(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / (std + 1e-8));
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub seed: u64,
    pub step: u64,
    pub success: f64,
    pub mean_return: f64,
}

/// Per-seed evaluation series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn final_success(&self) -> Option<f64> {
        self.points.last().map(|p| p.success)
    }

    /// Mean success over the evaluation points; equal to the normalized area under the
    /// curve for evenly spaced evaluations.
    pub fn auc(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|p| p.success).sum::<f64>() / self.points.len() as f64
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.points.iter().map(|p| p.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn for_seed(&self, seed: u64) -> LearningCurve {
        LearningCurve {
            points: self.points.iter().filter(|p| p.seed == seed).copied().collect(),
        }
    }

    pub fn extend(&mut self, other: &LearningCurve) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "seed,step,success,mean_return")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.seed, p.step, p.success, p.mean_return)?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<LearningCurve, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some("seed,step,success,mean_return") => {}
            other => return Err(format!("unexpected header {other:?}")),
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: malformed row {line:?}", i + 2);
            if f.len() != 4 {
                return Err(bad());
            }
            points.push(CurvePoint {
                seed: f[0].parse().map_err(|_| bad())?,
                step: f[1].parse().map_err(|_| bad())?,
                success: f[2].parse().map_err(|_| bad())?,
                mean_return: f[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(LearningCurve { points })
    }
}

fn evaluate(
    agent: &Agent,
    encoding: &FeatureEncoding,
    eval_world: &mut dyn World,
    config: &TrainConfig,
    seed: u64,
    step: u64,
    step_offset: u64,
) -> Result<CurvePoint, TrainError> {
    let mut successes = 0.0;
    let mut returns = 0.0;
    for e in 0..config.eval_episodes {
        let ep_seed = derive_seed(seed, "eval", step * u64::from(config.eval_episodes) + u64::from(e));
        let out = evaluate_greedy(&agent.net, encoding, eval_world, ep_seed)?;
        successes += f64::from(u8::from(out.success));
        returns += out.total_reward;
    }
    let k = f64::from(config.eval_episodes);
    Ok(CurvePoint {
        seed,
        step: step_offset + step,
        success: successes / k,
        mean_return: returns / k,
    })
}

fn check_spaces(world: &dyn World, eval_world: &dyn World, code: CoordinateCode) -> Result<FeatureEncoding, TrainError> {
    let a = FeatureEncoding::for_grid(world.config(), code);
    let b = FeatureEncoding::for_grid(eval_world.config(), code);
    if a != b {
        return Err(TrainError::SpaceMismatch(a, b));
    }
    Ok(a)
}

/// Trains `agent` on `world` for `config.total_steps`, evaluating greedily on
/// `eval_world` before the first update and then every `eval_every` steps. Curve steps
/// are shifted by `step_offset`; evaluation episodes are drawn from `seed` and the
/// unshifted step, so a fine-tune phase meets the same evaluation episodes as a scratch
/// run with the same seed.
pub fn train_agent(
    agent: &mut Agent,
    config: &TrainConfig,
    seed: u64,
    world: &mut dyn World,
    eval_world: &mut dyn World,
    step_offset: u64,
) -> Result<LearningCurve, TrainError> {
    config.validate()?;
    let encoding = check_spaces(world, eval_world, config.coordinates)?;
    let mut act_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "act", 0));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "shuffle", 0));
    let mut collector = Collector::new(encoding, derive_seed(seed, "train", 0));
    let mut curve = LearningCurve::default();
    curve.points.push(evaluate(agent, &encoding, eval_world, config, seed, 0, step_offset)?);
    let mut steps = 0u64;
    while steps < config.total_steps {
        let traj = collector.collect(&agent.net, world, config.rollout_length, &mut act_rng)?;
        agent.optimizer.lr = config.learning_rate_at(steps);
        steps += traj.len() as u64;
        update(agent, &traj, config, &mut shuffle_rng)?;
        if steps % config.eval_every == 0 {
            curve
                .points
                .push(evaluate(agent, &encoding, eval_world, config, seed, steps, step_offset)?);
        }
    }
    agent.optimizer.lr = config.learning_rate;
    Ok(curve)
}

/// Fresh agent seeded by `seed`, trained on `world`.
pub fn train(
    config: &TrainConfig,
    seed: u64,
    world: &mut dyn World,
    eval_world: &mut dyn World,
) -> Result<(Agent, LearningCurve), TrainError> {
    let encoding = check_spaces(world, eval_world, config.coordinates)?;
    let mut agent = Agent::new(config.architecture(encoding.dim()), config.learning_rate, seed);
    let curve = train_agent(&mut agent, config, seed, world, eval_world, 0)?;
    Ok((agent, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub agent: Agent,
    pub pretrain: LearningCurve,
    pub finetune: LearningCurve,
}

/// Trains on `fwm_world` for `pretrain.total_steps`, then keeps training the same agent
/// (and optimizer state) on `true_world`. Both phases evaluate on `eval_world`. The
/// fine-tune curve's steps are offset by the pretraining budget; the fine-tune phase uses
/// the same random streams as training from scratch with `seed`.
pub fn pretrain_then_finetune(
    pretrain: &TrainConfig,
    finetune: &TrainConfig,
    seed: u64,
    fwm_world: &mut dyn World,
    true_world: &mut dyn World,
    eval_world: &mut dyn World,
) -> Result<PretrainOutcome, TrainError> {
    let encoding = check_spaces(fwm_world, true_world, finetune.coordinates)?;
    check_spaces(true_world, eval_world, finetune.coordinates)?;
    if pretrain.policy != finetune.policy || pretrain.coordinates != finetune.coordinates {
        return Err(TrainError::Config(
            "pretrain and finetune must use the same policy kind and coordinate code".into(),
        ));
    }
    let mut agent = Agent::new(finetune.architecture(encoding.dim()), finetune.learning_rate, seed);
    let pre_seed = derive_seed(seed, "pretrain", 0);
    let mut pre_curve = train_agent(&mut agent, pretrain, pre_seed, fwm_world, eval_world, 0)?;
    // report under the caller's seed
    pre_curve.points.iter_mut().for_each(|p| p.seed = seed);
    let fine_curve = train_agent(&mut agent, finetune, seed, true_world, eval_world, pretrain.total_steps)?;
    Ok(PretrainOutcome {
        agent,
        pretrain: pre_curve,
        finetune: fine_curve,
    })
}
