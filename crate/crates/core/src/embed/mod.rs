//! Document embeddings: providers, chunk-average pooling and the on-disk cache.

mod cache;
mod hashing;
pub mod remote;
mod tfidf;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::{ChunkingConfig, TokenSequence};

pub use cache::{
    append_embeddings, export_jsonl, load_embeddings, save_embeddings, save_embeddings_with, CacheError,
    Precision, CACHE_MAGIC, CACHE_VERSION,
};
pub use hashing::{hash_bow_embed, hashed_coordinate, token_hash, HashBowProvider};
pub use remote::{remote_embed, RemoteConfig, RemoteError, RemoteProvider, RemoteResponse};
pub use tfidf::{tfidf_embed, tfidf_fit, Projection, TfidfModel, TfidfProvider};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("document has no chunks")]
    NoChunks,
    #[error("chunk {index} is empty")]
    EmptyChunk { index: usize },
    #[error("provider failed on chunk {index}")]
    Provider {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("provider returned dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("provider returned a non-finite value")]
    NonFinite,
    #[error("invalid provider parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("embedding {id}")]
    Document {
        id: String,
        #[source]
        source: Box<EmbedError>,
    },
}

/// Identity and parameters of a provider, as recorded next to its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub provider_id: String,
    pub dimension: usize,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, serde_json::Value>,
}

/// Something that maps one chunk of tokens to a fixed-dimension vector.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed_chunk(&self, chunk: &TokenSequence) -> Result<Vec<f64>, EmbedError>;
}

/// How chunk vectors combine into a document vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Every chunk weighs the same, including a short final chunk.
    #[default]
    Mean,
    /// Chunks weigh by token count.
    LengthWeighted,
}

pub fn embed_document(provider: &dyn EmbeddingProvider, chunks: &[TokenSequence]) -> Result<Vec<f64>, EmbedError> {
    embed_document_with(provider, chunks, Pooling::Mean)
}

/// Embeds each chunk and averages the vectors; accumulation is in `f64`.
pub fn embed_document_with(
    provider: &dyn EmbeddingProvider,
    chunks: &[TokenSequence],
    pooling: Pooling,
) -> Result<Vec<f64>, EmbedError> {
    if chunks.is_empty() {
        return Err(EmbedError::NoChunks);
    }
    if let Some(index) = chunks.iter().position(TokenSequence::is_empty) {
        return Err(EmbedError::EmptyChunk { index });
    }
    let dim = provider.dimension();
    let mut sum = vec![0.0f64; dim];
    let mut total_weight = 0.0;
    for (index, chunk) in chunks.iter().enumerate() {
        let v = provider
            .embed_chunk(chunk)
            .map_err(|e| EmbedError::Provider { index, source: Box::new(e) })?;
        if v.len() != dim {
            return Err(EmbedError::Provider {
                index,
                source: Box::new(EmbedError::Dimension { expected: dim, got: v.len() }),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Provider { index, source: Box::new(EmbedError::NonFinite) });
        }
        let w = match pooling {
            Pooling::Mean => 1.0,
            Pooling::LengthWeighted => chunk.len() as f64,
        };
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += w * x;
        }
        total_weight += w;
    }
    for s in &mut sum {
        *s /= total_weight;
    }
    Ok(sum)
}

/// Prepares and embeds `(id, text)` documents in parallel; rows keep input order.
pub fn embed_documents(
    provider: &dyn EmbeddingProvider,
    documents: &[(String, String)],
    chunking: &ChunkingConfig,
    pooling: Pooling,
) -> Result<EmbeddingMatrix, EmbedError> {
    chunking.validate().map_err(EmbedError::InvalidParams)?;
    let rows: Vec<Result<Vec<f64>, EmbedError>> = documents
        .par_iter()
        .map(|(id, text)| {
            embed_document_with(provider, &chunking.prepare(id, text), pooling)
                .map_err(|e| EmbedError::Document { id: id.clone(), source: Box::new(e) })
        })
        .collect();
    let mut m = EmbeddingMatrix::new(provider.provider_id(), chunking.context_budget, provider.dimension());
    for ((id, _), row) in documents.iter().zip(rows) {
        m.push(id.clone(), &row?)?;
    }
    Ok(m)
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// One provider's embeddings for a set of companies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub provider_id: String,
    pub context_budget: usize,
    dimension: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(provider_id: impl Into<String>, context_budget: usize, dimension: usize) -> Self {
        Self { provider_id: provider_id.into(), context_budget, dimension, ids: Vec::new(), data: Vec::new() }
    }

    /// Builds a matrix from `(id, vector)` rows; every vector must have `dimension` entries.
    pub fn from_rows(
        provider_id: impl Into<String>,
        context_budget: usize,
        dimension: usize,
        rows: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, EmbedError> {
        let mut m = Self::new(provider_id, context_budget, dimension);
        for (id, v) in rows {
            m.push(id, &v)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, id: String, vector: &[f64]) -> Result<(), EmbedError> {
        if vector.len() != self.dimension {
            return Err(EmbedError::Dimension { expected: self.dimension, got: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dimension.max(1)).take(self.ids.len())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.row(i))
    }

    /// Rows reordered by ascending id.
    pub fn sorted(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        self.select_indices(&order)
    }

    /// Rows for `ids`, in the given order; unknown ids are skipped.
    pub fn select(&self, ids: &[String]) -> Self {
        let map = self.index_map();
        let order: Vec<usize> = ids.iter().filter_map(|id| map.get(id.as_str()).copied()).collect();
        self.select_indices(&order)
    }

    fn select_indices(&self, order: &[usize]) -> Self {
        let mut out = Self::new(self.provider_id.clone(), self.context_budget, self.dimension);
        for &i in order {
            out.ids.push(self.ids[i].clone());
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    /// Removes a row; returns whether it was present.
    pub fn remove(&mut self, id: &str) -> bool {
        let Some(i) = self.index_of(id) else { return false };
        self.ids.remove(i);
        self.data.drain(i * self.dimension..(i + 1) * self.dimension);
        true
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}
