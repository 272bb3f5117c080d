//! Small randomized networks for gradient checks.

use fmgrid::pg::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_arch(recurrent: bool, input_dim: usize) -> ArchDescriptor {
    ArchDescriptor {
        input_dim,
        n_actions: 4,
        kind: if recurrent {
            ArchKind::Recurrent { encoder: 5, state: 4 }
        } else {
            ArchKind::FeedForward { hidden: vec![6, 5] }
        },
    }
}

/// Random network with non-trivial weights plus a batch whose ratios sit either well
/// inside or well outside the clip range.
pub fn random_instance(seed: u64, recurrent: bool) -> (ActorCritic, Vec<f64>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ActorCritic::new(small_arch(recurrent, 3), &mut rng);
    for p in net.params.iter_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    let state: Vec<f64> = (0..net.descriptor().state_dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut h = state.clone();
    let mut samples = Vec::new();
    for _ in 0..6 {
        let features: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let out = net.step(&features, &h);
        h = out.next_state;
        let action = rng.random_range(0..4);
        let logp = policy::log_softmax(&out.logits)[action];
        let shift = if rng.random_bool(0.5) {
            rng.random_range(-0.1..0.1)
        } else {
            rng.random_range(0.35..0.6) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        };
        samples.push(Sample {
            features,
            action,
            old_log_prob: logp + shift,
            advantage: rng.random_range(-2.0..2.0),
            target: rng.random_range(-1.0..1.0),
        });
    }
    (net, state, samples)
}

pub const ACTOR: LossWeights = LossWeights { clip: 0.2, vf_coef: 0.0, ent_coef: 0.05 };
pub const CRITIC: LossWeights = LossWeights { clip: 0.2, vf_coef: 0.5, ent_coef: 0.0 };

pub fn critic_batch(samples: &[Sample]) -> Vec<Sample> {
    samples.iter().cloned().map(|s| Sample { advantage: 0.0, ..s }).collect()
}

