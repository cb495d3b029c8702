use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScoreRequest, ScoreResponse, Scorer, ScorerError};

const LOCK_STRIPES: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub corrupt: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    backend_id: String,
    tokens: Vec<u32>,
    token_logprobs: Vec<f64>,
    checksum: String,
}

fn checksum(tokens: &[u32], logprobs: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((tokens.len() as u64).to_le_bytes());
    for t in tokens {
        h.update(t.to_le_bytes());
    }
    for l in logprobs {
        h.update(l.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Persists every score response under `dir`, one JSON file per request.
///
/// Keys are `sha256(backend_id ‖ 0 ‖ prefix ‖ 0 ‖ continuation)`. A record whose
/// checksum does not match is recomputed and overwritten. Writers to the same
/// key are serialized; readers never block.
pub struct CachedScorer<S> {
    inner: S,
    dir: PathBuf,
    backend_id: String,
    locks: Vec<Mutex<()>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    corrupt: AtomicUsize,
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S, dir: impl Into<PathBuf>) -> Result<Self, ScorerError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let backend_id = inner.backend_id();
        Ok(Self {
            inner,
            dir,
            backend_id,
            locks: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect(),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            corrupt: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            corrupt: self.corrupt.load(Ordering::Relaxed),
        }
    }

    pub fn key(&self, request: &ScoreRequest) -> String {
        let mut h = Sha256::new();
        h.update(self.backend_id.as_bytes());
        h.update([0u8]);
        h.update(request.prefix().as_bytes());
        h.update([0u8]);
        h.update(request.continuation().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn entry_path(&self, request: &ScoreRequest) -> PathBuf {
        let key = self.key(request);
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read(&self, path: &Path) -> Option<Result<ScoreResponse, ()>> {
        let bytes = fs::read(path).ok()?;
        let parsed = serde_json::from_slice::<CacheRecord>(&bytes).ok().and_then(|rec| {
            (rec.backend_id == self.backend_id
                && rec.checksum == checksum(&rec.tokens, &rec.token_logprobs))
            .then(|| ScoreResponse::from_parts(rec.tokens, rec.token_logprobs).ok())
            .flatten()
        });
        Some(parsed.ok_or(()))
    }

    fn write(&self, path: &Path, response: &ScoreResponse) -> Result<(), ScorerError> {
        let record = CacheRecord {
            backend_id: self.backend_id.clone(),
            tokens: response.tokens.clone(),
            token_logprobs: response.scores.logprobs().to_vec(),
            checksum: checksum(&response.tokens, response.scores.logprobs()),
        };
        let parent = path.parent().expect("entry has a parent directory");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile_in(parent)?;
        tmp.1.write_all(&serde_json::to_vec(&record).expect("record serializes"))?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        fs::rename(&tmp.0, path)?;
        Ok(())
    }
}

fn tempfile_in(dir: &Path) -> std::io::Result<(PathBuf, fs::File)> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    loop {
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path = dir.join(format!(".tmp-{}-{n}", std::process::id()));
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((path, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn backend_id(&self) -> String {
        self.backend_id.clone()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>, ScorerError> {
        self.inner.tokenize(text)
    }

    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let path = self.entry_path(request);
        match self.read(&path) {
            Some(Ok(hit)) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
            Some(Err(())) => {
                self.corrupt.fetch_add(1, Ordering::Relaxed);
            }
            None => {}
        }

        let stripe = u64::from_str_radix(&self.key(request)[..8], 16).unwrap() as usize % LOCK_STRIPES;
        let _guard = self.locks[stripe].lock().unwrap_or_else(|p| p.into_inner());
        // another writer may have filled the entry while we waited
        if let Some(Ok(hit)) = self.read(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let fresh = self.inner.score(request)?;
        self.write(&path, &fresh)?;
        Ok(fresh)
    }
}
