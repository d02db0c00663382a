use serde::{Deserialize, Serialize};

use super::RetrievalError;
use crate::http::{Endpoint, JsonClient};

/// Dense unit-norm embedding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. A zero vector stays zero.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt()
    }

    /// Cosine similarity of two unit vectors, clamped to [-1, 1].
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum();
        dot.clamp(-1.0, 1.0)
    }
}

/// Turns texts into raw (not necessarily normalized) vectors of `dim()`.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError>;
}

/// Embeds and normalizes a batch of non-empty texts.
pub fn embed_batch(
    texts: &[&str],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    if texts.iter().any(|t| t.is_empty()) {
        return Err(RetrievalError::EmptyText);
    }
    let raw = provider.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(RetrievalError::EmbedderUnavailable(format!(
            "asked for {} vectors, got {}",
            texts.len(),
            raw.len()
        )));
    }
    raw.into_iter()
        .map(|v| {
            if v.len() != provider.dim() {
                return Err(RetrievalError::DimMismatch {
                    expected: provider.dim(),
                    got: v.len(),
                });
            }
            Ok(EmbeddingVector::normalized(v))
        })
        .collect()
}

pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, RetrievalError> {
    Ok(embed_batch(&[text], provider)?.remove(0))
}

/// Character-trigram feature hashing with signed buckets. Deterministic and
/// dependency-free; meant for tests and offline runs.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

pub const HASHING_DIM: usize = 256;

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: HASHING_DIM }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        HashingEmbedder { dim }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let chars: Vec<char> = text.chars().collect();
        let mut gram = String::new();
        let add = |gram: &str, v: &mut Vec<f32>| {
            let h = fnv1a(gram.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        };
        if chars.len() < 3 {
            add(text, &mut v);
        } else {
            for w in chars.windows(3) {
                gram.clear();
                gram.extend(w);
                add(&gram, &mut v);
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            // signed collisions cancelled out; fall back to a whole-text bucket
            let h = fnv1a(text.as_bytes());
            v[(h % self.dim as u64) as usize] = 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Embedding service speaking `POST /embed`.
pub struct RemoteEmbedder {
    client: JsonClient,
    dim: usize,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: Endpoint, dim: usize) -> Result<Self, RetrievalError> {
        let client =
            JsonClient::new(endpoint).map_err(|e| RetrievalError::EmbedderUnavailable(e.to_string()))?;
        Ok(RemoteEmbedder {
            client,
            dim,
            batch_size: 64,
        })
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let resp: EmbedResponse = self
                .client
                .post("embed", &EmbedBody { texts: chunk }, None)
                .map_err(|e| RetrievalError::EmbedderUnavailable(e.to_string()))?;
            out.extend(resp.vectors);
        }
        Ok(out)
    }
}
