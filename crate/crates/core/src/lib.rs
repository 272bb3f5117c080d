//! Language-model world models and agents for a family of grid worlds, plus the
//! policy-gradient learners and evaluation harness used to measure them.

pub mod backend;
pub mod eval;
pub mod fa;
pub mod fwm;
pub mod grid;
pub mod pg;
pub mod prompt;
pub mod seed;

use thiserror::Error;

pub use grid::{Action, Cell, GridConfig, GridEnv, Observation, StepResult, World};

/// Errors surfaced through the shared [`World`] interface.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error(transparent)]
    Env(#[from] grid::EnvError),
    #[error(transparent)]
    Config(#[from] grid::ConfigError),
    #[error("backend: {0}")]
    Backend(#[from] backend::BackendError),
    #[error("world model fault: {0}")]
    ModelFault(String),
}
