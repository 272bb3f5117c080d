//! Experiment families: single-step fidelity probes, sampler distribution audits and
//! multi-seed decision-making runs, with CSV/JSON/SVG reporting.

pub mod curves;
pub mod dist;
pub mod probe;
pub mod svg;

use thiserror::Error;

pub use curves::{compare_auc, run_pretrained, run_scratch, AucComparison, CurveSet, Phase, WorldFactory};
pub use dist::{
    model_location_sampler,
    chi_square, reference_rows, test_binary_distribution, test_location_distribution, Audit, BinaryRow,
    DistributionReport, Support, BINARY_SWEEP, DEFAULT_ALPHA, DEFAULT_SAMPLES,
};
pub use probe::{probe_fidelity, write_accuracy_csv, ProbeError, ProbeReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    World(#[from] crate::WorldError),
    #[error(transparent)]
    Sampling(#[from] crate::backend::SamplingError),
    #[error("invalid evaluation setting: {0}")]
    Config(String),
}
