use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TransportError;

pub const DEFAULT_TOP_K_LOGPROBS: u32 = 20;

/// A greedy completion request asking for top-k next-token probabilities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub max_generated_tokens: u32,
    pub top_k_logprobs: u32,
    /// Request metadata identifying the dataset row. Never sent over the
    /// wire and not part of the cache key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_id: Option<u64>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            prompt: prompt.into(),
            max_generated_tokens: 1,
            top_k_logprobs: DEFAULT_TOP_K_LOGPROBS,
            row_id: None,
        }
    }

    pub fn for_row(mut self, row_id: u64) -> Self {
        self.row_id = Some(row_id);
        self
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.max_generated_tokens < 1 {
            return Err(TransportError::InvalidRequest(
                "max_generated_tokens must be at least 1".into(),
            ));
        }
        if self.top_k_logprobs < 2 {
            return Err(TransportError::InvalidRequest(
                "top_k_logprobs must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        let mut h = Sha256::new();
        h.update(b"riskbench-completion-v1");
        for field in [self.model_id.as_bytes(), self.prompt.as_bytes()] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field);
        }
        h.update(self.max_generated_tokens.to_le_bytes());
        h.update(self.top_k_logprobs.to_le_bytes());
        CacheKey(hex::encode(h.finalize()))
    }
}

/// SHA-256 digest of (model, prompt, token budget, top-k depth).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Top-k next-token probabilities at one generated position, sorted by
/// descending probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub position: usize,
    entries: Vec<(String, f64)>,
}

impl TokenDistribution {
    /// Drops non-positive entries, merges duplicate tokens and sorts.
    pub fn new(position: usize, entries: Vec<(String, f64)>) -> Result<Self, TransportError> {
        let mut merged: Vec<(String, f64)> = Vec::with_capacity(entries.len());
        for (tok, p) in entries {
            if !p.is_finite() || p > 1.0 + 1e-9 {
                return Err(TransportError::Malformed(format!(
                    "probability {p} for token {tok:?} is out of range"
                )));
            }
            if p <= 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(t, _)| *t == tok) {
                Some(e) => e.1 += p,
                None => merged.push((tok, p.min(1.0))),
            }
        }
        merged.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if total > 1.0 + 1e-6 {
            return Err(TransportError::Malformed(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self {
            position,
            entries: merged,
        })
    }

    pub fn from_logprobs(
        position: usize,
        entries: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, TransportError> {
        Self::new(position, entries.into_iter().map(|(t, lp)| (t, lp.exp())).collect())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn probability(&self, token: &str) -> f64 {
        self.entries
            .iter()
            .find(|(t, _)| t == token)
            .map_or(0.0, |e| e.1)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_is_sorted_and_merged() {
        let d = TokenDistribution::new(
            0,
            vec![("B".into(), 0.2), ("A".into(), 0.3), ("A".into(), 0.3), ("x".into(), 0.0)],
        )
        .unwrap();
        assert_eq!(d.entries(), &[("A".to_string(), 0.6), ("B".to_string(), 0.2)]);
        assert_eq!(d.probability("x"), 0.0);
    }

    #[test]
    fn excess_mass_rejected() {
        assert!(TokenDistribution::new(0, vec![("A".into(), 0.7), ("B".into(), 0.7)]).is_err());
        assert!(TokenDistribution::new(0, vec![("A".into(), f64::NAN)]).is_err());
    }

    #[test]
    fn cache_key_ignores_row_metadata_only() {
        let a = CompletionRequest::new("m", "p");
        assert_eq!(a.cache_key(), a.clone().for_row(3).cache_key());
        let mut b = a.clone();
        b.top_k_logprobs = 5;
        assert_ne!(a.cache_key(), b.cache_key());
        // Field boundaries are length-prefixed.
        assert_ne!(
            CompletionRequest::new("ab", "c").cache_key(),
            CompletionRequest::new("a", "bc").cache_key()
        );
    }

    #[test]
    fn request_limits() {
        let mut r = CompletionRequest::new("m", "p");
        assert!(r.validate().is_ok());
        r.top_k_logprobs = 1;
        assert!(r.validate().is_err());
        r.top_k_logprobs = 2;
        r.max_generated_tokens = 0;
        assert!(r.validate().is_err());
    }
}
