//! Chat-completion backends: a uniform request/response interface, deterministic mocks,
//! a persistent response cache, retry with backoff, and a thin live HTTP adapter.

mod cache;
mod live;
mod mock;
mod retry;
mod sampling;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, CachedBackend, ResponseCache};
pub use live::{OpenAiBackend, OpenAiConfig};
pub use mock::{ErrorModel, MockBackend, MockSpec};
pub use retry::{RetryPolicy, RetryingBackend};
pub use sampling::{sample_binary, sample_location, SamplingError, SAMPLING_TEMPERATURE};

/// Temperature used for every deterministic (simulation and agent) query.
pub const DETERMINISTIC_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl BackendRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        BackendRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature,
            max_tokens: 256,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.prompt.is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub latency: Duration,
    pub cached: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("provider error {status}: {message}")]
    Api { status: u16, message: String },
    #[error("backend cannot answer this prompt: {0}")]
    Unsupported(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<BackendError> },
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("cache i/o: {0}")]
    Cache(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited { .. })
    }
}

pub trait ModelBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

pub type SharedBackend = Arc<dyn ModelBackend>;

/// Convenience: issue `prompt` against `backend` at `temperature`.
pub fn query(
    backend: &dyn ModelBackend,
    prompt: impl Into<String>,
    temperature: f64,
) -> Result<BackendResponse, BackendError> {
    let request = BackendRequest::new(backend.model_id(), prompt, temperature);
    request.validate()?;
    backend.complete(&request)
}

/// Bounds the number of concurrent requests reaching the wrapped backend.
pub struct Throttled<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B: ModelBackend> Throttled<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Throttled {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<B: ModelBackend> ModelBackend for Throttled<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        {
            let mut n = self.in_flight.lock().unwrap();
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap();
            }
            *n += 1;
        }
        let result = self.inner.complete(request);
        *self.in_flight.lock().unwrap() -= 1;
        self.freed.notify_one();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ModelBackend for Slow {
        fn model_id(&self) -> &str {
            "slow"
        }

        fn complete(&self, _: &BackendRequest) -> Result<BackendResponse, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(BackendResponse {
                text: "ok".into(),
                latency: Duration::ZERO,
                cached: false,
            })
        }
    }

    #[test]
    fn throttle_caps_in_flight_requests() {
        let b = Arc::new(Throttled::new(
            Slow {
                current: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            2,
        ));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let b = Arc::clone(&b);
                std::thread::spawn(move || query(&*b, "hi", 0.0).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(b.inner.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn request_validation() {
        assert!(BackendRequest::new("m", "p", 2.5).validate().is_err());
        assert!(BackendRequest::new("m", "", 0.0).validate().is_err());
        assert!(BackendRequest::new("m", "p", 1.8).validate().is_ok());
    }
}
