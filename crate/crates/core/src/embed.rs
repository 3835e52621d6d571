//! Sentence embedding backends.
//!
//! [`HashedBow`] is a deterministic signed feature-hashing embedder used for
//! offline runs and tests. [`HttpEmbedder`] talks to an embedding server over
//! the `/embed` JSON protocol. [`CachedEmbedder`] wraps either one with a
//! content-addressed cache.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a 64-bit hash from an intermediate state.
#[inline]
pub fn fnv1a64_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

pub(crate) fn fnv_offset() -> u64 {
    FNV_OFFSET
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding server returned status {0}")]
    Status(u16),
    #[error("batch exceeds embedding server capacity")]
    Capacity,
    #[error("malformed embedding response: {0}")]
    Protocol(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A dense embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity, or `None` when either vector has zero norm.
    pub fn cosine(&self, other: &Self) -> Option<f64> {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            None
        } else {
            Some(self.dot(other) / denom)
        }
    }
}

/// Produces one embedding per input text, order-aligned.
pub trait Embedder: Send + Sync {
    /// Stable identity used to key caches.
    fn id(&self) -> String;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Signed hashed bag-of-words embedding of `text` in `dim` buckets.
///
/// Lowercases, takes maximal alphanumeric runs as tokens, hashes each with
/// FNV-1a 64, adds `+1` or `-1` (bit 63 clear or set) to bucket `hash % dim`
/// and L2-normalizes. Text without tokens maps to the zero vector.
pub fn hashed_bow_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "hashed embedding dimension must be at least 2");
    let mut v = vec![0.0f64; dim];
    let lower = text.to_lowercase();
    for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let h = fnv1a64(tok.as_bytes());
        let bucket = (h % dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector(v)
}

#[derive(Debug, Clone, Copy)]
pub struct HashedBow {
    pub dim: usize,
}

impl HashedBow {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "hashed embedding dimension must be at least 2");
        Self { dim }
    }
}

impl Default for HashedBow {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl Embedder for HashedBow {
    fn id(&self) -> String {
        format!("hashed_bow/fnv1a64/{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| hashed_bow_embed(t, self.dim)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Client for `POST {endpoint}/embed`.
pub struct HttpEmbedder {
    endpoint: String,
    expected_dim: Option<usize>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, expected_dim: Option<usize>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            expected_dim,
            agent,
        }
    }

    fn validate(&self, n: usize, resp: EmbedResponse) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if let Some(expected) = self.expected_dim {
            if resp.dim != expected {
                return Err(EmbedError::DimensionMismatch { expected, got: resp.dim });
            }
        }
        if resp.vectors.len() != n {
            return Err(EmbedError::Protocol(format!(
                "expected {n} vectors, got {}",
                resp.vectors.len()
            )));
        }
        let mut out = Vec::with_capacity(n);
        for v in resp.vectors {
            if v.len() != resp.dim {
                return Err(EmbedError::DimensionMismatch { expected: resp.dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::Protocol("non-finite vector entry".into()));
            }
            out.push(EmbeddingVector(v));
        }
        Ok(out)
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http/{}", self.endpoint)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let url = format!("{}/embed", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| match e {
                ureq::Error::StatusCode(413) => EmbedError::Capacity,
                ureq::Error::StatusCode(code) => EmbedError::Status(code),
                other => EmbedError::Transport(other.to_string()),
            })?;
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Protocol(e.to_string()))?;
        self.validate(texts.len(), body)
    }
}

type CacheKey = [u8; 32];

/// Content-addressed cache in front of another embedder.
///
/// Entries are keyed by backend identity and a SHA-256 of the text. An optional
/// directory persists entries across runs; any disk failure falls back to the
/// wrapped backend.
pub struct CachedEmbedder<E> {
    inner: E,
    enabled: bool,
    memory: Mutex<HashMap<CacheKey, EmbeddingVector>>,
    dir: Option<PathBuf>,
    backend_calls: AtomicUsize,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, enabled: bool) -> Self {
        Self {
            inner,
            enabled,
            memory: Mutex::new(HashMap::new()),
            dir: None,
            backend_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dir = Some(dir.into());
        self
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Number of times the wrapped backend has been invoked.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::Relaxed)
    }

    fn key(&self, backend: &str, text: &str) -> CacheKey {
        let mut h = Sha256::new();
        h.update(backend.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.finalize().into()
    }

    fn disk_path(&self, key: &CacheKey) -> Option<PathBuf> {
        let hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
        self.dir.as_ref().map(|d| d.join(format!("{hex}.vec")))
    }

    fn disk_get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        let bytes = fs::read(self.disk_path(key)?).ok()?;
        if bytes.len() % 8 != 0 {
            return None;
        }
        let v = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Some(EmbeddingVector(v))
    }

    fn disk_put(&self, key: &CacheKey, v: &EmbeddingVector) {
        let Some(path) = self.disk_path(key) else { return };
        let bytes: Vec<u8> = v.0.iter().flat_map(|x| x.to_le_bytes()).collect();
        // Write-then-rename so readers never see a partial entry.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let res = self
            .dir
            .as_ref()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&tmp, &bytes))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = res {
            log::warn!("embedding cache write failed ({}): {e}", path.display());
            let _ = fs::remove_file(&tmp);
        }
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if !self.enabled {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            return self.inner.embed_batch(texts);
        }
        let backend = self.inner.id();
        let keys: Vec<CacheKey> = texts.iter().map(|t| self.key(&backend, t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> = {
            let mem = self.memory.lock().unwrap();
            keys.iter().map(|k| mem.get(k).cloned()).collect()
        };
        for (slot, key) in out.iter_mut().zip(&keys) {
            if slot.is_none() {
                *slot = self.disk_get(key);
            }
        }

        let mut miss_idx: Vec<usize> = Vec::new();
        let mut miss_texts: Vec<String> = Vec::new();
        let mut pending: HashMap<CacheKey, usize> = HashMap::new();
        for (i, slot) in out.iter().enumerate() {
            if slot.is_none() && !pending.contains_key(&keys[i]) {
                pending.insert(keys[i], miss_texts.len());
                miss_idx.push(i);
                miss_texts.push(texts[i].clone());
            }
        }
        if !miss_texts.is_empty() {
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            let fresh = self.inner.embed_batch(&miss_texts)?;
            let mut mem = self.memory.lock().unwrap();
            for (&i, v) in miss_idx.iter().zip(&fresh) {
                mem.insert(keys[i], v.clone());
                self.disk_put(&keys[i], v);
            }
            drop(mem);
            for (i, slot) in out.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = Some(fresh[pending[&keys[i]]].clone());
                }
            }
        } else if !out.is_empty() {
            let mut mem = self.memory.lock().unwrap();
            for (k, v) in keys.iter().zip(&out) {
                mem.entry(*k).or_insert_with(|| v.clone().unwrap());
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    HashedBow,
    Http,
}

/// Declarative embedder configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub cache_enabled: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::HashedBow,
            dimension: DEFAULT_DIM,
            endpoint: None,
            cache_enabled: true,
            cache_dir: None,
        }
    }
}

impl EmbedderSpec {
    /// Instantiates the configured backend behind a cache.
    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        let base: Box<dyn Embedder> = match self.kind {
            EmbedderKind::HashedBow => Box::new(HashedBow::new(self.dimension)),
            EmbedderKind::Http => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    EmbedError::Transport("http embedder requires an endpoint".into())
                })?;
                Box::new(HttpEmbedder::new(endpoint, Some(self.dimension)))
            }
        };
        let mut cached = CachedEmbedder::new(base, self.cache_enabled);
        if let Some(dir) = &self.cache_dir {
            cached = cached.with_dir(dir);
        }
        Ok(Box::new(cached))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn extend_matches_one_shot() {
        let s = fnv1a64_extend(fnv1a64(b"foo"), b"bar");
        assert_eq!(s, fnv1a64(b"foobar"));
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = HashedBow::default()
            .embed_batch(&["".into(), "".into()])
            .unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|e| e.0.iter().all(|&x| x == 0.0)));
        assert_eq!(hashed_bow_embed("  ,;  ", 8), EmbeddingVector::zeros(8));
    }

    #[test]
    fn bag_of_words_is_order_invariant() {
        let v = HashedBow::default()
            .embed_batch(&["cat dog".into(), "dog cat".into()])
            .unwrap();
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn repetition_keeps_direction() {
        let once = hashed_bow_embed("x", 64);
        let thrice = hashed_bow_embed("x x x", 64);
        for (a, b) in once.0.iter().zip(&thrice.0) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((thrice.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn case_folded() {
        assert_eq!(hashed_bow_embed("Alpha BETA", 32), hashed_bow_embed("alpha beta", 32));
    }

    #[test]
    fn cosine_of_zero_vector_is_undefined() {
        let z = EmbeddingVector::zeros(3);
        let e = EmbeddingVector(vec![1.0, 0.0, 0.0]);
        assert_eq!(z.cosine(&e), None);
        assert_eq!(e.cosine(&e), Some(1.0));
    }

    struct Counting {
        calls: AtomicUsize,
        texts_seen: Mutex<Vec<String>>,
    }

    impl Embedder for Counting {
        fn id(&self) -> String {
            "counting".into()
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.texts_seen.lock().unwrap().extend(texts.iter().cloned());
            Ok(texts.iter().map(|t| hashed_bow_embed(t, 16)).collect())
        }
    }

    fn counting() -> Counting {
        Counting { calls: AtomicUsize::new(0), texts_seen: Mutex::new(Vec::new()) }
    }

    #[test]
    fn second_call_hits_cache() {
        let cache = CachedEmbedder::new(counting(), true);
        let texts: Vec<String> = vec!["one".into(), "two".into()];
        let a = cache.embed_batch(&texts).unwrap();
        let b = cache.embed_batch(&texts).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.inner().calls.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn disabled_cache_always_calls_backend() {
        let cache = CachedEmbedder::new(counting(), false);
        let texts: Vec<String> = vec!["one".into()];
        cache.embed_batch(&texts).unwrap();
        cache.embed_batch(&texts).unwrap();
        assert_eq!(cache.inner().calls.load(Ordering::Relaxed), 2);
    }

    #[test]
    fn mixed_batch_only_fetches_misses() {
        let cache = CachedEmbedder::new(counting(), true);
        cache.embed_batch(&["b".into(), "d".into()]).unwrap();
        cache.inner().texts_seen.lock().unwrap().clear();

        let texts: Vec<String> = ["a", "b", "c", "d", "a"].iter().map(|s| s.to_string()).collect();
        let got = cache.embed_batch(&texts).unwrap();
        let seen = cache.inner().texts_seen.lock().unwrap().clone();
        assert_eq!(seen, vec!["a".to_string(), "c".to_string()]);
        let want: Vec<_> = texts.iter().map(|t| hashed_bow_embed(t, 16)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn disk_cache_survives_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let texts: Vec<String> = vec!["persisted text".into()];
        let first = CachedEmbedder::new(counting(), true).with_dir(dir.path());
        let a = first.embed_batch(&texts).unwrap();

        let second = CachedEmbedder::new(counting(), true).with_dir(dir.path());
        let b = second.embed_batch(&texts).unwrap();
        assert_eq!(a, b);
        assert_eq!(second.inner().calls.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn unwritable_cache_dir_degrades() {
        let file = tempfile::NamedTempFile::new().unwrap();
        // A regular file cannot act as a directory.
        let cache = CachedEmbedder::new(counting(), true).with_dir(file.path().join("sub"));
        let texts: Vec<String> = vec!["x".into()];
        let got = cache.embed_batch(&texts).unwrap();
        assert_eq!(got, vec![hashed_bow_embed("x", 16)]);
    }
}
