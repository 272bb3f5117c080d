//! Actor-critic learners trained with the clipped-surrogate objective: a feed-forward
//! policy for fully observed grids and a recurrent one for the partially observed
//! random-reward grid.

pub mod nn;
pub mod policy;
pub mod rollout;
pub mod snapshot;
pub mod train;

pub use policy::{ActorCritic, ArchDescriptor, ArchKind, LossParts, LossWeights, Sample};
pub use rollout::{
    collect_rollout, compute_advantages, evaluate_greedy, Collector, CoordinateCode, EpisodeStats, EvalOutcome, FeatureEncoding,
    RolloutError, Trajectory,
};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SnapshotError};
pub use train::{
    pretrain_then_finetune, train, train_agent, update, Agent, CurvePoint, LearningCurve, PolicyKind,
    LrSchedule, PretrainOutcome, TrainConfig, TrainError, UpdateStats,
};
