use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendRequest, BackendResponse, ModelBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Upper bound on total time spent sleeping between attempts.
    pub max_total_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            max_total_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    /// Backoff before retry number `attempt` (0-based): doubling from the initial delay,
    /// capped per retry.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(30))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// Retries transport failures and rate limits with exponential backoff. A provider's
/// `retry-after` hint is honored when it is longer than the computed backoff.
pub struct RetryingBackend<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B: ModelBackend> RetryingBackend<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        RetryingBackend { inner, policy }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ModelBackend> ModelBackend for RetryingBackend<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let start = Instant::now();
        let budget = Duration::from_millis(self.policy.max_total_ms);
        let mut slept = Duration::ZERO;
        let mut attempt = 0u32;
        loop {
            match self.inner.complete(request) {
                Ok(mut resp) => {
                    resp.latency = start.elapsed();
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() && attempt < self.policy.max_retries => {
                    let mut delay = self.policy.backoff(attempt);
                    if let BackendError::RateLimited { retry_after: Some(hint) } = &e {
                        delay = delay.max(*hint);
                    }
                    if slept + delay > budget {
                        return Err(BackendError::RetriesExhausted {
                            attempts: attempt + 1,
                            last: Box::new(e),
                        });
                    }
                    std::thread::sleep(delay);
                    slept += delay;
                    attempt += 1;
                }
                Err(e) if e.is_retryable() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}
