use thiserror::Error;

use super::{query, BackendError, ModelBackend};
use crate::grid::Cell;
use crate::prompt::{parse_binary, parse_location, Binding, TemplateId, TemplateSet};

/// Temperature used for stochastic sampling prompts.
pub const SAMPLING_TEMPERATURE: f64 = 1.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no valid sample after {attempts} attempts; last response {last:?}")]
    Exhausted { attempts: u32, last: String },
    #[error(transparent)]
    Template(#[from] crate::prompt::TemplateError),
}

/// Draws one location on the `n`-grid from the backend at τ = 1.8. Unparsable and
/// off-grid responses are retried, up to `max_retries` extra attempts.
pub fn sample_location(
    backend: &dyn ModelBackend,
    templates: &TemplateSet,
    n: i32,
    max_retries: u32,
) -> Result<Cell, SamplingError> {
    let prompt = templates.render(TemplateId::RewardSample, &Binding::new().n(n))?;
    let mut last = String::new();
    for _ in 0..=max_retries {
        let text = query(backend, prompt.clone(), SAMPLING_TEMPERATURE)?.text;
        if let Ok(cell) = parse_location(&text) {
            if cell.in_bounds(n) {
                return Ok(cell);
            }
        }
        last = text;
    }
    Err(SamplingError::Exhausted { attempts: max_retries + 1, last })
}

/// Draws one element of `{1, 0}` with requested probabilities `p1`, `1 - p1`.
pub fn sample_binary(
    backend: &dyn ModelBackend,
    templates: &TemplateSet,
    p1: f64,
    max_retries: u32,
) -> Result<u8, SamplingError> {
    let prompt = templates.render(
        TemplateId::StickySample,
        &Binding::new().probabilities(p1, 1.0 - p1),
    )?;
    let mut last = String::new();
    for _ in 0..=max_retries {
        let text = query(backend, prompt.clone(), SAMPLING_TEMPERATURE)?.text;
        if let Ok(b) = parse_binary(&text) {
            return Ok(b);
        }
        last = text;
    }
    Err(SamplingError::Exhausted { attempts: max_retries + 1, last })
}
