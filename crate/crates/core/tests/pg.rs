mod support;

use fmgrid::pg::policy::max_gradient_error;
use fmgrid::pg::*;
use fmgrid::{GridConfig, GridEnv, World};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::nets::{critic_batch, random_instance, ACTOR, CRITIC};

#[test]
fn actor_and_critic_gradients_match_finite_differences() {
    for seed in 0..20 {
        for recurrent in [false, true] {
            let (net, state, samples) = random_instance(seed, recurrent);
            let actor = max_gradient_error(&net, &state, &samples, &ACTOR, 1e-5);
            let critic = max_gradient_error(&net, &state, &critic_batch(&samples), &CRITIC, 1e-5);
            assert!(actor < 1e-4, "seed {seed} recurrent {recurrent}: actor {actor}");
            assert!(critic < 1e-4, "seed {seed} recurrent {recurrent}: critic {critic}");
        }
    }
}

fn deterministic_worlds() -> (GridEnv, GridEnv) {
    let g = GridConfig::deterministic(5);
    (GridEnv::new(g.clone()).unwrap(), GridEnv::new(g).unwrap())
}

#[test]
fn zero_learning_rate_keeps_policy_and_curve_flat() {
    let mut cfg = TrainConfig::feed_forward(1000);
    cfg.learning_rate = 0.0;
    let (mut w, mut e) = deterministic_worlds();
    let init = Agent::new(cfg.architecture(20), 0.0, 4);
    let (agent, curve) = train(&cfg, 4, &mut w, &mut e).unwrap();
    assert_eq!(agent.net.params, init.net.params);
    assert_eq!(curve.points.len(), 9);
    let first = curve.points[0].success;
    assert!(curve.points.iter().all(|p| p.success == first));
}

#[test]
fn evaluation_cadence() {
    let cfg = TrainConfig::feed_forward(1500);
    let (mut w, mut e) = deterministic_worlds();
    let (_, curve) = train(&cfg, 0, &mut w, &mut e).unwrap();
    let steps: Vec<u64> = curve.points.iter().map(|p| p.step).collect();
    assert_eq!(steps, (0..=12).map(|k| k * 125).collect::<Vec<_>>());
    let mut cfg = cfg;
    cfg.eval_every = 250;
    let (_, curve) = train(&cfg, 0, &mut w, &mut e).unwrap();
    assert_eq!(curve.points.len(), 7);
}

#[test]
fn rejects_bad_configs() {
    let (mut w, mut e) = deterministic_worlds();
    let mut cfg = TrainConfig::feed_forward(1000);
    cfg.eval_every = 100;
    assert!(matches!(train(&cfg, 0, &mut w, &mut e), Err(TrainError::Config(_))));
    let mut cfg = TrainConfig::feed_forward(1001);
    assert!(cfg.validate().is_err());
    cfg.total_steps = 1000;
    cfg.clip = 1.5;
    assert!(cfg.validate().is_err());
    let mut other = GridEnv::new(GridConfig::stochastic(5)).unwrap();
    let cfg = TrainConfig::feed_forward(125);
    assert!(matches!(train(&cfg, 0, &mut w, &mut other), Err(TrainError::SpaceMismatch(..))));
}

#[test]
fn training_is_seed_deterministic() {
    let run = |seed| {
        let g = GridConfig::stochastic(5);
        let mut w = GridEnv::new(g.clone()).unwrap();
        let mut e = GridEnv::new(g).unwrap();
        train(&TrainConfig::recurrent(1000), seed, &mut w, &mut e).unwrap()
    };
    let (a1, c1) = run(3);
    let (a2, c2) = run(3);
    assert_eq!(c1, c2);
    assert_eq!(a1, a2);
    let (a3, _) = run(4);
    assert_ne!(a1.net.params, a3.net.params);
}

#[test]
fn zero_step_pretraining_equals_scratch() {
    let cfg = TrainConfig::feed_forward(500);
    let (mut w, mut e) = deterministic_worlds();
    let (scratch_agent, scratch) = train(&cfg, 9, &mut w, &mut e).unwrap();
    let (mut fwm, mut tw) = deterministic_worlds();
    let out = pretrain_then_finetune(&cfg.clone().with_total_steps(0), &cfg, 9, &mut fwm, &mut tw, &mut e).unwrap();
    assert_eq!(out.pretrain.points.len(), 1);
    assert_eq!(out.finetune, scratch);
    assert_eq!(out.agent, scratch_agent);
}

#[test]
fn finetune_curve_is_offset_by_pretraining() {
    let cfg = TrainConfig::feed_forward(250);
    let (mut fwm, mut tw) = deterministic_worlds();
    let (_, mut e) = deterministic_worlds();
    let out = pretrain_then_finetune(&cfg.clone().with_total_steps(500), &cfg, 2, &mut fwm, &mut tw, &mut e).unwrap();
    let pre: Vec<u64> = out.pretrain.points.iter().map(|p| p.step).collect();
    let fine: Vec<u64> = out.finetune.points.iter().map(|p| p.step).collect();
    assert_eq!(pre, vec![0, 125, 250, 375, 500]);
    assert_eq!(fine, vec![500, 625, 750]);
    assert!(out.pretrain.points.iter().chain(&out.finetune.points).all(|p| p.seed == 2));
}

#[test]
fn snapshot_round_trip_reproduces_trajectories() {
    let g = GridConfig::stochastic(5);
    let mut w = GridEnv::new(g.clone()).unwrap();
    let mut e = GridEnv::new(g.clone()).unwrap();
    let (agent, _) = train(&TrainConfig::recurrent(500), 1, &mut w, &mut e).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.bin");
    save_snapshot(&agent, &path).unwrap();
    let loaded = load_snapshot(&path).unwrap();
    assert_eq!(loaded, agent);
    let enc = FeatureEncoding::for_grid(&g, CoordinateCode::OneHot);
    let rollout = |a: &Agent| {
        let mut env = GridEnv::new(g.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        collect_rollout(&a.net, &mut env, enc, 400, 5, &mut rng).unwrap()
    };
    assert_eq!(rollout(&agent), rollout(&loaded));
}

#[test]
fn non_finite_loss_aborts_without_touching_parameters() {
    let cfg = TrainConfig::feed_forward(125);
    let (mut w, _) = deterministic_worlds();
    let mut agent = Agent::new(cfg.architecture(20), cfg.learning_rate, 0);
    let enc = FeatureEncoding::for_grid(w.config(), CoordinateCode::OneHot);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut traj = collect_rollout(&agent.net, &mut w, enc, 125, 0, &mut rng).unwrap();
    for f in &mut traj.features {
        f[0] = f64::NAN;
    }
    let before = agent.clone();
    let err = update(&mut agent, &traj, &cfg, &mut rng).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite { epoch: 0, minibatch: 0, .. }));
    assert_eq!(agent, before);
}

#[test]
fn learning_curve_csv_round_trip() {
    let curve = LearningCurve {
        points: vec![
            CurvePoint { seed: 1, step: 0, success: 0.0, mean_return: 0.0 },
            CurvePoint { seed: 1, step: 125, success: 1.0, mean_return: 1.0 },
            CurvePoint { seed: 2, step: 0, success: 0.5, mean_return: 0.5 },
        ],
    };
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("seed,step,success,mean_return\n1,0,0,0\n"));
    assert_eq!(LearningCurve::read_csv(&text).unwrap(), curve);
    assert_eq!(curve.seeds(), vec![1, 2]);
    assert_eq!(curve.for_seed(1).auc(), 0.5);
    assert!(LearningCurve::read_csv("a,b\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn critic_only_updates_do_not_increase_value_loss(seed in 0u64..10_000, recurrent in any::<bool>()) {
        let (mut net, state, samples) = random_instance(seed, recurrent);
        let batch = critic_batch(&samples);
        let mut adam = nn::Adam::new(net.param_count(), 1e-4);
        let mut last = net.segment_loss(&net.params, &state, &batch, &CRITIC, None).value;
        for _ in 0..15 {
            let mut g = vec![0.0; net.param_count()];
            net.segment_loss(&net.params, &state, &batch, &CRITIC, Some(&mut g));
            adam.step(&mut net.params, &g);
            let now = net.segment_loss(&net.params, &state, &batch, &CRITIC, None).value;
            prop_assert!(now <= last + 1e-12, "{now} > {last}");
            last = now;
        }
    }
}
