//! Demonstration retrieval over a fixed pool and prompt construction.

mod dpp;
mod embed;
mod prompt;

pub use dpp::{greedy_map, GreedySelection, KERNEL_JITTER};
pub use embed::{Embedder, EmbeddingVector, HashedTfIdf, RemoteEmbedder, DEFAULT_DIM};
pub use prompt::{build_prompt, PromptTemplate};

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::RetrieverKind;
use crate::dataset::Demonstration;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("retrieval pool is empty")]
    EmptyPool,
    #[error("demonstration {sample_id:?} has no value for template field <{field}>")]
    MissingField { field: String, sample_id: String },
    #[error("template: {0}")]
    Template(String),
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("pool has {demos} demonstrations but {embeddings} embeddings")]
    Misaligned { demos: usize, embeddings: usize },
}

/// Immutable snapshot of demonstrations with their query embeddings.
#[derive(Debug, Clone)]
pub struct RetrievalPool {
    demos: Vec<Demonstration>,
    embeddings: Vec<EmbeddingVector>,
    /// Pool indices sorted by ascending sample id.
    id_order: Vec<usize>,
}

impl RetrievalPool {
    /// Embeds every demonstration's query.
    pub fn build(demos: Vec<Demonstration>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let embeddings = demos
            .iter()
            .map(|d| embedder.embed(&d.query))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(demos, embeddings)
    }

    pub fn from_parts(demos: Vec<Demonstration>, embeddings: Vec<EmbeddingVector>) -> Result<Self, RetrievalError> {
        if demos.len() != embeddings.len() {
            return Err(RetrievalError::Misaligned { demos: demos.len(), embeddings: embeddings.len() });
        }
        let mut id_order: Vec<usize> = (0..demos.len()).collect();
        id_order.sort_by(|&a, &b| demos[a].sample_id.cmp(&demos[b].sample_id));
        Ok(Self { demos, embeddings, id_order })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn demos(&self) -> &[Demonstration] {
        &self.demos
    }

    pub fn get(&self, i: usize) -> &Demonstration {
        &self.demos[i]
    }

    pub fn embedding(&self, i: usize) -> &EmbeddingVector {
        &self.embeddings[i]
    }

    fn similarities(&self, query: &EmbeddingVector) -> Vec<f64> {
        self.embeddings.iter().map(|e| e.dot(query)).collect()
    }

    /// Highest similarity first, ties by ascending sample id.
    fn ranked(&self, sims: &[f64]) -> Vec<usize> {
        let mut idx = self.id_order.clone();
        // stable sort keeps the id order among equal similarities
        idx.sort_by(|&a, &b| sims[b].partial_cmp(&sims[a]).unwrap_or(Ordering::Equal));
        idx
    }
}

/// `k` distinct pool indices drawn uniformly without replacement.
pub fn retrieve_random(pool: &RetrievalPool, k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, pool.len(), k).into_vec()
}

/// The `k` most similar pool items, most similar first.
pub fn retrieve_topk(query: &EmbeddingVector, pool: &RetrievalPool, k: usize) -> Vec<usize> {
    let sims = pool.similarities(query);
    let mut ranked = pool.ranked(&sims);
    ranked.truncate(k.min(pool.len()));
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppRetrieval {
    pub picks: Vec<usize>,
    pub gains: Vec<f64>,
    /// No item had positive similarity; `picks` is the top-k order instead.
    pub kernel_degenerate: bool,
}

/// Relevance weight of each item: positive similarity divided by the largest
/// positive similarity, so the best item has weight 1 and items with
/// non-positive similarity have weight 0.
pub fn relevance_weights(sims: &[f64]) -> Option<Vec<f64>> {
    let max = sims.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return None;
    }
    Some(sims.iter().map(|s| s.max(0.0) / max).collect())
}

/// Greedy MAP selection under the query-conditioned kernel
/// `L_ij = q_i q_j (v_i · v_j)`.
pub fn retrieve_dpp(query: &EmbeddingVector, pool: &RetrievalPool, k: usize) -> DppRetrieval {
    let sims = pool.similarities(query);
    let Some(q) = relevance_weights(&sims) else {
        return DppRetrieval {
            picks: retrieve_topk(query, pool, k),
            gains: Vec::new(),
            kernel_degenerate: true,
        };
    };
    let kernel = |i: usize, j: usize| q[i] * q[j] * pool.embeddings[i].dot(&pool.embeddings[j]);
    let sel = greedy_map(pool.len(), kernel, k, &pool.id_order);
    DppRetrieval { picks: sel.picks, gains: sel.gains, kernel_degenerate: false }
}

/// Dispatches to the configured retriever.
pub fn retrieve(
    kind: RetrieverKind,
    query: &EmbeddingVector,
    pool: &RetrievalPool,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, RetrievalError> {
    if pool.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    Ok(match kind {
        RetrieverKind::Random => retrieve_random(pool, k, seed),
        RetrieverKind::TopK => retrieve_topk(query, pool, k),
        RetrieverKind::Dpp => retrieve_dpp(query, pool, k).picks,
    })
}
