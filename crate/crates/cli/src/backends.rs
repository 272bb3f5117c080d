use std::sync::Arc;

use anyhow::{Context, Result};
use fmgrid::backend::{
    CachedBackend, MockBackend, ModelBackend, OpenAiBackend, ResponseCache, RetryingBackend, SharedBackend, Throttled,
};
use fmgrid::seed::derive_seed;

use crate::config::BackendConfig;

/// Builds backends for jobs. Mocks are rebuilt per job seed; a live backend is built
/// once so its in-flight bound holds across jobs.
pub struct BackendFactory {
    config: BackendConfig,
    live: Option<SharedBackend>,
    cache: Option<Arc<ResponseCache>>,
}

impl BackendFactory {
    pub fn new(config: &BackendConfig, cache: Option<Arc<ResponseCache>>) -> Result<Self> {
        let live = match config {
            BackendConfig::Mock { .. } => None,
            BackendConfig::Openai { api, retry, max_in_flight } => {
                let client = OpenAiBackend::new(api.clone()).context("building live backend")?;
                let b = Throttled::new(RetryingBackend::new(client, retry.clone()), *max_in_flight);
                Some(wrap(Arc::new(b), &cache))
            }
        };
        Ok(BackendFactory { config: config.clone(), live, cache })
    }

    pub fn build(&self, seed: u64) -> Result<SharedBackend> {
        if let Some(b) = &self.live {
            return Ok(Arc::clone(b));
        }
        let BackendConfig::Mock { spec } = &self.config else { unreachable!("live backends are prebuilt") };
        // cache keys include the model id, so it must identify spec and seed
        let fingerprint = derive_seed(seed, &serde_json::to_string(spec)?, 0);
        let mock = MockBackend::new(spec.clone(), seed)?;
        let id = format!("{}-{fingerprint:016x}", mock.model_id());
        Ok(wrap(Arc::new(mock.with_model_id(id)), &self.cache))
    }

    /// Model id used in report tables.
    pub fn label(&self) -> String {
        match &self.config {
            BackendConfig::Mock { spec } => MockBackend::new(spec.clone(), 0).map(|m| m.model_id().to_string()).unwrap_or_default(),
            BackendConfig::Openai { api, .. } => api.model_id.clone(),
        }
    }
}

fn wrap(backend: SharedBackend, cache: &Option<Arc<ResponseCache>>) -> SharedBackend {
    match cache {
        Some(c) => Arc::new(CachedBackend::new(backend, Arc::clone(c))),
        None => backend,
    }
}
