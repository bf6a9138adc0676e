//! Completion endpoints exposing next-token probabilities, plus the
//! deterministic doubles used to verify the rest of the pipeline.

mod cache;
mod http;
mod mock;
mod pool;
mod types;

pub use cache::{CachedModel, CACHE_FORMAT, CACHE_VERSION};
pub use http::{parse_completion_response, EndpointConfig, HttpCompletionModel, RetryPolicy, DEFAULT_API_KEY_ENV};
pub use mock::{numeric_grid_index, FnModel, OracleModel, PositionBiasModel, ScriptedModel, ScriptedResponse, FILLER_TOKEN};
pub use pool::complete_all;
pub use types::{prompt_digest, CacheKey, CompletionRequest, TokenDistribution, DEFAULT_TOP_K_LOGPROBS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("endpoint rejected request with HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("scripted miss: no response for prompt digest {digest}")]
    ScriptedMiss { digest: String },
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("endpoint configuration error: {0}")]
    Config(String),
}

impl TransportError {
    /// Errors that apply to every request, so continuing a run is pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            TransportError::Capability(_)
                | TransportError::Config(_)
                | TransportError::Http { status: 401 | 403 | 404, .. }
        )
    }
}

/// Anything that can answer a [`CompletionRequest`] with one distribution
/// per generated position.
pub trait CompletionModel: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError>;
}

impl<M: CompletionModel + ?Sized> CompletionModel for &M {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        (**self).complete(request)
    }
}

impl<M: CompletionModel + ?Sized> CompletionModel for Box<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        (**self).complete(request)
    }
}

impl<M: CompletionModel + ?Sized> CompletionModel for std::sync::Arc<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        (**self).complete(request)
    }
}
