use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Dense, Gru, GruCache, ParamAllocator};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchKind {
    /// Separate actor and critic MLPs with tanh hidden layers.
    FeedForward { hidden: Vec<usize> },
    /// Shared tanh encoder and GRU trunk with linear actor and critic heads.
    Recurrent { encoder: usize, state: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchDescriptor {
    pub input_dim: usize,
    pub n_actions: usize,
    pub kind: ArchKind,
}

impl ArchDescriptor {
    pub fn feed_forward(input_dim: usize) -> Self {
        ArchDescriptor {
            input_dim,
            n_actions: 4,
            kind: ArchKind::FeedForward { hidden: vec![64, 64] },
        }
    }

    pub fn recurrent(input_dim: usize) -> Self {
        ArchDescriptor {
            input_dim,
            n_actions: 4,
            kind: ArchKind::Recurrent { encoder: 64, state: 32 },
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.kind, ArchKind::Recurrent { .. })
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            ArchKind::FeedForward { .. } => 0,
            ArchKind::Recurrent { state, .. } => state,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    FeedForward { actor: Vec<Dense>, critic: Vec<Dense> },
    Recurrent { encoder: Dense, gru: Gru, actor: Dense, critic: Dense },
}

impl Layout {
    fn build(desc: &ArchDescriptor) -> (Layout, usize) {
        let mut alloc = ParamAllocator::default();
        let layout = match &desc.kind {
            ArchKind::FeedForward { hidden } => {
                let mut mlp = |out: usize| {
                    let mut dims = vec![desc.input_dim];
                    dims.extend(hidden);
                    dims.push(out);
                    dims.windows(2).map(|w| alloc.dense(w[0], w[1])).collect::<Vec<_>>()
                };
                let actor = mlp(desc.n_actions);
                let critic = mlp(1);
                Layout::FeedForward { actor, critic }
            }
            &ArchKind::Recurrent { encoder, state } => Layout::Recurrent {
                encoder: alloc.dense(desc.input_dim, encoder),
                gru: alloc.gru(encoder, state),
                actor: alloc.dense(state, desc.n_actions),
                critic: alloc.dense(state, 1),
            },
        };
        (layout, alloc.len())
    }
}

/// Output of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub value: f64,
    pub next_state: Vec<f64>,
}

/// One training sample as consumed by the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

/// Summed (not averaged) loss terms over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clipped: usize,
    pub count: usize,
}

impl LossParts {
    pub fn total(&self, w: &LossWeights) -> f64 {
        self.policy + w.vf_coef * self.value - w.ent_coef * self.entropy
    }

    pub fn add(&mut self, other: &LossParts) {
        self.policy += other.policy;
        self.value += other.value;
        self.entropy += other.entropy;
        self.clipped += other.clipped;
        self.count += other.count;
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Clipped-surrogate loss with entropy bonus for a single sample, and its gradient
/// with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead {
    pub surrogate: f64,
    pub entropy: f64,
    pub log_prob: f64,
    pub clipped: bool,
    pub dlogits: Vec<f64>,
}

pub fn policy_head(logits: &[f64], action: usize, old_log_prob: f64, advantage: f64, w: &LossWeights) -> PolicyHead {
    let logp = log_softmax(logits);
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let ratio = (logp[action] - old_log_prob).exp();
    let unclipped = ratio * advantage;
    let clipped_obj = ratio.clamp(1.0 - w.clip, 1.0 + w.clip) * advantage;
    let clipped = clipped_obj < unclipped;
    let surrogate = -unclipped.min(clipped_obj);
    let dsurr_dlogp = if clipped { 0.0 } else { -advantage * ratio };
    let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let dlogits = (0..logits.len())
        .map(|j| {
            let onehot = if j == action { 1.0 } else { 0.0 };
            let d_entropy = -probs[j] * (logp[j] + entropy);
            dsurr_dlogp * (onehot - probs[j]) - w.ent_coef * d_entropy
        })
        .collect();
    PolicyHead {
        surrogate,
        entropy,
        log_prob: logp[action],
        clipped,
        dlogits,
    }
}

/// Actor-critic parameters plus the layout that interprets them.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    desc: ArchDescriptor,
    layout: Layout,
    pub params: Vec<f64>,
}

fn mlp_forward(layers: &[Dense], p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    for (i, layer) in layers.iter().enumerate() {
        let mut y = vec![0.0; layer.out];
        layer.forward(p, acts.last().unwrap(), &mut y);
        if i + 1 < layers.len() {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(y);
    }
    acts
}

fn mlp_backward(layers: &[Dense], p: &[f64], acts: &[Vec<f64>], dout: &[f64], g: &mut [f64]) {
    let mut dy = dout.to_vec();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        if i == 0 {
            layer.backward(p, &acts[0], &dy, g, None);
        } else {
            let mut dx = vec![0.0; layer.inp];
            layer.backward(p, &acts[i], &dy, g, Some(&mut dx));
            // acts[i] is tanh output of the previous layer
            for (d, a) in dx.iter_mut().zip(&acts[i]) {
                *d *= 1.0 - a * a;
            }
            dy = dx;
        }
    }
}

impl ActorCritic {
    /// Orthogonal init; the policy head starts near uniform and the value head at exactly
    /// zero, so batches without reward carry no advantage signal.
    pub fn new<R: Rng + ?Sized>(desc: ArchDescriptor, rng: &mut R) -> Self {
        let mut net = Self::zeroed(desc);
        let p = &mut net.params;
        let root2 = 2f64.sqrt();
        match &net.layout {
            Layout::FeedForward { actor, critic } => {
                for (layers, out_gain) in [(actor, 0.01), (critic, 0.0)] {
                    for (i, l) in layers.iter().enumerate() {
                        let gain = if i + 1 == layers.len() { out_gain } else { root2 };
                        l.init_orthogonal(p, gain, rng);
                    }
                }
            }
            Layout::Recurrent { encoder, gru, actor, critic } => {
                encoder.init_orthogonal(p, root2, rng);
                gru.init(p, rng);
                actor.init_orthogonal(p, 0.01, rng);
                critic.init_orthogonal(p, 0.0, rng);
            }
        }
        net
    }

    /// Architecture with all parameters zero; used when loading snapshots.
    pub fn zeroed(desc: ArchDescriptor) -> Self {
        let (layout, len) = Layout::build(&desc);
        ActorCritic {
            desc,
            layout,
            params: vec![0.0; len],
        }
    }

    pub fn descriptor(&self) -> &ArchDescriptor {
        &self.desc
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_recurrent(&self) -> bool {
        self.desc.is_recurrent()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.desc.state_dim()]
    }

    pub fn step(&self, features: &[f64], state: &[f64]) -> StepOutput {
        self.step_with(&self.params, features, state)
    }

    fn step_with(&self, p: &[f64], features: &[f64], state: &[f64]) -> StepOutput {
        match &self.layout {
            Layout::FeedForward { actor, critic } => StepOutput {
                logits: mlp_forward(actor, p, features).pop().unwrap(),
                value: mlp_forward(critic, p, features).pop().unwrap()[0],
                next_state: Vec::new(),
            },
            Layout::Recurrent { encoder, gru, actor, critic } => {
                let (_, cache) = self.recurrent_trunk(encoder, gru, p, features, state);
                let mut logits = vec![0.0; actor.out];
                actor.forward(p, &cache.h, &mut logits);
                let mut v = [0.0];
                critic.forward(p, &cache.h, &mut v);
                StepOutput {
                    logits,
                    value: v[0],
                    next_state: cache.h,
                }
            }
        }
    }

    fn recurrent_trunk(&self, encoder: &Dense, gru: &Gru, p: &[f64], x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let mut e = vec![0.0; encoder.out];
        encoder.forward(p, x, &mut e);
        e.iter_mut().for_each(|v| *v = v.tanh());
        let cache = gru.forward(p, &e, h);
        (e, cache)
    }

    /// Loss over a sequence of samples. For the recurrent network the samples form one
    /// contiguous episode segment starting from `state`; for the feed-forward network
    /// they are independent and `state` is ignored. Gradients of the summed loss are
    /// accumulated into `grad` when given.
    pub fn segment_loss(
        &self,
        params: &[f64],
        state: &[f64],
        samples: &[Sample],
        w: &LossWeights,
        mut grad: Option<&mut [f64]>,
    ) -> LossParts {
        let mut parts = LossParts::default();
        match &self.layout {
            Layout::FeedForward { actor, critic } => {
                for s in samples {
                    let a_acts = mlp_forward(actor, params, &s.features);
                    let c_acts = mlp_forward(critic, params, &s.features);
                    let head = policy_head(a_acts.last().unwrap(), s.action, s.old_log_prob, s.advantage, w);
                    let v = c_acts.last().unwrap()[0];
                    accumulate(&mut parts, &head, v, s.target);
                    if let Some(g) = grad.as_deref_mut() {
                        mlp_backward(actor, params, &a_acts, &head.dlogits, g);
                        mlp_backward(critic, params, &c_acts, &[2.0 * w.vf_coef * (v - s.target)], g);
                    }
                }
            }
            Layout::Recurrent { encoder, gru, actor, critic } => {
                let mut h = state.to_vec();
                let mut tape = Vec::with_capacity(samples.len());
                for s in samples {
                    let (e, cache) = self.recurrent_trunk(encoder, gru, params, &s.features, &h);
                    let mut logits = vec![0.0; actor.out];
                    actor.forward(params, &cache.h, &mut logits);
                    let mut v = [0.0];
                    critic.forward(params, &cache.h, &mut v);
                    let head = policy_head(&logits, s.action, s.old_log_prob, s.advantage, w);
                    accumulate(&mut parts, &head, v[0], s.target);
                    h = cache.h.clone();
                    tape.push((e, cache, head.dlogits, 2.0 * w.vf_coef * (v[0] - s.target)));
                }
                if let Some(g) = grad {
                    let mut dh_next = vec![0.0; gru.hid];
                    for (s, (e, cache, dlogits, dv)) in samples.iter().zip(&tape).rev() {
                        let mut dh = dh_next;
                        actor.backward(params, &cache.h, dlogits, g, Some(&mut dh));
                        critic.backward(params, &cache.h, &[*dv], g, Some(&mut dh));
                        let mut de = vec![0.0; encoder.out];
                        let mut dh_prev = vec![0.0; gru.hid];
                        gru.backward(params, cache, &dh, g, &mut de, &mut dh_prev);
                        for (d, a) in de.iter_mut().zip(e) {
                            *d *= 1.0 - a * a;
                        }
                        encoder.backward(params, &s.features, &de, g, None);
                        dh_next = dh_prev;
                    }
                }
            }
        }
        parts
    }
}

/// Largest relative error `|a − f| / max(|a|, |f|, 1e-6)` between the analytic gradient
/// of the summed segment loss and central finite differences with step `h`.
pub fn max_gradient_error(net: &ActorCritic, state: &[f64], samples: &[Sample], w: &LossWeights, h: f64) -> f64 {
    let mut analytic = vec![0.0; net.param_count()];
    net.segment_loss(&net.params, state, samples, w, Some(&mut analytic));
    let mut probe = net.params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = net.segment_loss(&probe, state, samples, w, None).total(w);
        probe[i] = orig - h;
        let down = net.segment_loss(&probe, state, samples, w, None).total(w);
        probe[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = analytic[i];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    worst
}

fn accumulate(parts: &mut LossParts, head: &PolicyHead, value: f64, target: f64) {
    parts.policy += head.surrogate;
    parts.entropy += head.entropy;
    parts.value += (value - target).powi(2);
    parts.clipped += usize::from(head.clipped);
    parts.count += 1;
}
