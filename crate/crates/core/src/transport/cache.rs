use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use serde::{Deserialize, Serialize};

use super::types::{prompt_digest, CompletionRequest, TokenDistribution};
use super::{CompletionModel, TransportError};

pub const CACHE_FORMAT: &str = "riskbench-completion-cache";
pub const CACHE_VERSION: u32 = 1;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    format: String,
    version: u32,
    key: String,
    model_id: String,
    prompt_sha256: String,
    max_generated_tokens: u32,
    top_k_logprobs: u32,
    distributions: Vec<TokenDistribution>,
}

/// Content-addressed on-disk cache in front of another model. One file per
/// entry at `{dir}/{model_id}/{digest}.entry`.
#[derive(Debug)]
pub struct CachedModel<M> {
    inner: M,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<M: CompletionModel> CachedModel<M> {
    pub fn new(inner: M, dir: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| TransportError::Cache(format!("cannot create {}: {e}", dir.display())))?;
        let probe = dir.join(format!(".probe-{}", std::process::id()));
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| TransportError::Cache(format!("{} is not writable: {e}", dir.display())))?;
        Ok(Self {
            inner,
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn entry_path(&self, request: &CompletionRequest) -> PathBuf {
        self.dir
            .join(sanitize(&request.model_id))
            .join(format!("{}.entry", request.cache_key().as_str()))
    }

    fn read(&self, path: &Path, request: &CompletionRequest) -> Option<Vec<TokenDistribution>> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!("cache entry {} unreadable ({e}); refetching", path.display());
                return None;
            }
        };
        let entry: Entry = match serde_json::from_slice(&bytes) {
            Ok(e) => e,
            Err(e) => {
                warn!("cache entry {} is corrupt ({e}); discarding", path.display());
                return None;
            }
        };
        let key = request.cache_key();
        if entry.format != CACHE_FORMAT
            || entry.version != CACHE_VERSION
            || entry.key != key.as_str()
            || entry.distributions.is_empty()
        {
            warn!("cache entry {} does not match its key or version; discarding", path.display());
            return None;
        }
        Some(entry.distributions)
    }

    fn write(&self, path: &Path, request: &CompletionRequest, dists: &[TokenDistribution]) -> std::io::Result<()> {
        let parent = path.parent().expect("entry path has a parent");
        fs::create_dir_all(parent)?;
        let entry = Entry {
            format: CACHE_FORMAT.into(),
            version: CACHE_VERSION,
            key: request.cache_key().0,
            model_id: request.model_id.clone(),
            prompt_sha256: prompt_digest(&request.prompt),
            max_generated_tokens: request.max_generated_tokens,
            top_k_logprobs: request.top_k_logprobs,
            distributions: dists.to_vec(),
        };
        let tmp = parent.join(format!(
            ".{}.{}.{}.tmp",
            entry.key,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(&entry).map_err(std::io::Error::other)?;
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }
}

fn sanitize(model_id: &str) -> String {
    let s: String = model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

impl<M: CompletionModel> CompletionModel for CachedModel<M> {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        let path = self.entry_path(request);
        if let Some(d) = self.read(&path, request) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(d);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let dists = self.inner.complete(request)?;
        if let Err(e) = self.write(&path, request, &dists) {
            warn!("could not write cache entry {}: {e}", path.display());
        }
        Ok(dists)
    }
}
