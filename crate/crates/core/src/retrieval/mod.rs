//! Retrieval memory over verified proofs: immutable index snapshots queried
//! top-k by cosine similarity of statement embeddings.

mod embed;
mod persist;

pub use embed::{
    embed, embed_batch, EmbeddingProvider, EmbeddingVector, HashingEmbedder, RemoteEmbedder,
    HASHING_DIM,
};
pub use persist::{load_index, save_index, INDEX_FILE, INDEX_META_FILE};

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("embedding dim mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("index is empty")]
    EmptyIndex,
    #[error("no probe queries")]
    NoProbes,
    #[error("index io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed index: {0}")]
    Format(String),
}

/// One indexed proof. The statement text is the embedded key; the proof
/// text is payload rendered into prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub proof_ref: String,
    pub statement_text: String,
    pub proof_text: String,
    #[serde(skip)]
    pub vector: EmbeddingVector,
    pub insert_seq: u64,
}

/// Immutable snapshot of the retrieval memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<MemoryEntry>,
    dim: usize,
    snapshot_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<'a> {
    pub entry: &'a MemoryEntry,
    pub similarity: f64,
}

/// Heap item ordered so that the *worst* hit is at the top.
struct Ranked {
    similarity: f64,
    insert_seq: u64,
    pos: usize,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // better = higher similarity, then smaller insert_seq; max-heap of "worse"
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.insert_seq.cmp(&other.insert_seq))
    }
}

impl RetrievalIndex {
    pub fn empty(dim: usize, snapshot_id: u64) -> Self {
        RetrievalIndex {
            entries: Vec::new(),
            dim,
            snapshot_id,
        }
    }

    /// Builds a snapshot; entries must share `dim` and have strictly
    /// increasing `insert_seq`.
    pub fn from_entries(
        entries: Vec<MemoryEntry>,
        dim: usize,
        snapshot_id: u64,
    ) -> Result<Self, RetrievalError> {
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(RetrievalError::DimMismatch {
                    expected: dim,
                    got: e.vector.dim(),
                });
            }
        }
        if entries.windows(2).any(|w| w[0].insert_seq >= w[1].insert_seq) {
            return Err(RetrievalError::Format("insert_seq not strictly increasing".into()));
        }
        Ok(RetrievalIndex {
            entries,
            dim,
            snapshot_id,
        })
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn snapshot_id(&self) -> u64 {
        self.snapshot_id
    }

    /// Top `k` entries for an already-embedded query, best first; ties go to
    /// the earlier insertion.
    pub fn topk_by_vector(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<Hit<'_>>, RetrievalError> {
        if query.dim() != self.dim {
            return Err(RetrievalError::DimMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (pos, e) in self.entries.iter().enumerate() {
            heap.push(Ranked {
                similarity: query.cosine(&e.vector),
                insert_seq: e.insert_seq,
                pos,
            });
            if heap.len() > k {
                heap.pop();
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| Hit {
                entry: &self.entries[r.pos],
                similarity: r.similarity,
            })
            .collect())
    }
}

pub fn query_topk<'a>(
    index: &'a RetrievalIndex,
    query_text: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Hit<'a>>, RetrievalError> {
    if provider.dim() != index.dim() {
        return Err(RetrievalError::DimMismatch {
            expected: index.dim(),
            got: provider.dim(),
        });
    }
    if k == 0 || index.is_empty() {
        return Ok(Vec::new());
    }
    let query = embed(query_text, provider)?;
    index.topk_by_vector(&query, k)
}

/// Index over every verified proof of `corpus`, keyed by its statement text.
pub fn rebuild_index(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    snapshot_id: u64,
) -> Result<RetrievalIndex, RetrievalError> {
    let mut keys = Vec::with_capacity(corpus.proofs().len());
    for p in corpus.proofs() {
        let key = corpus
            .statement(&p.statement_id)
            .map(|s| s.lean_statement.as_str())
            .unwrap_or(p.proof_text.as_str());
        keys.push(key);
    }
    let vectors = if keys.is_empty() {
        Vec::new()
    } else {
        embed_batch(&keys, provider)?
    };
    let entries = corpus
        .proofs()
        .iter()
        .zip(keys)
        .zip(vectors)
        .enumerate()
        .map(|(seq, ((p, key), vector))| MemoryEntry {
            proof_ref: p.id(),
            statement_text: key.to_string(),
            proof_text: p.proof_text.clone(),
            vector,
            insert_seq: seq as u64,
        })
        .collect();
    RetrievalIndex::from_entries(entries, provider.dim(), snapshot_id)
}

/// Holder of the live snapshot. Rebuilds happen off to the side and are
/// published atomically; pinned snapshots stay valid after a publish.
pub struct MemoryStore {
    current: RwLock<Arc<RetrievalIndex>>,
    last_issued: AtomicU64,
}

impl MemoryStore {
    pub fn new(initial: RetrievalIndex) -> Self {
        let id = initial.snapshot_id();
        MemoryStore {
            current: RwLock::new(Arc::new(initial)),
            last_issued: AtomicU64::new(id),
        }
    }

    pub fn pin(&self) -> Arc<RetrievalIndex> {
        Arc::clone(&self.current.read().expect("memory store poisoned"))
    }

    /// Re-indexes `corpus` under a fresh snapshot id. On failure the live
    /// snapshot is untouched.
    pub fn rebuild(
        &self,
        corpus: &Corpus,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Arc<RetrievalIndex>, RetrievalError> {
        let id = self.last_issued.fetch_add(1, AtomicOrdering::SeqCst) + 1;
        let index = Arc::new(rebuild_index(corpus, provider, id)?);
        *self.current.write().expect("memory store poisoned") = Arc::clone(&index);
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySpread {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stddev: f64,
    pub samples: usize,
}

/// Statistics of the top-5 similarities over all probe queries
/// (population standard deviation).
pub fn similarity_spread(
    index: &RetrievalIndex,
    probe_queries: &[&str],
    provider: &dyn EmbeddingProvider,
) -> Result<SimilaritySpread, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    if probe_queries.is_empty() {
        return Err(RetrievalError::NoProbes);
    }
    let mut sims = Vec::new();
    for q in probe_queries {
        sims.extend(query_topk(index, q, 5, provider)?.into_iter().map(|h| h.similarity));
    }
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(SimilaritySpread {
        min: sims.iter().copied().fold(f64::INFINITY, f64::min),
        max: sims.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        stddev: var.sqrt(),
        samples: sims.len(),
    })
}
