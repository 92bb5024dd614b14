use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::textprep::TokenSequence;

use super::{l2_normalize, EmbedError, EmbeddingProvider};

/// Vocabulary and smoothed idf weights: `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub n_documents: usize,
    /// Ordered by descending document frequency, ties lexicographic.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfModel {
    fn from_parts(n_documents: usize, vocabulary: Vec<String>, idf: Vec<f64>) -> Self {
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { n_documents, vocabulary, idf, index }
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        if self.index.is_empty() && !self.vocabulary.is_empty() {
            // deserialized model: index not rebuilt
            return self.vocabulary.iter().position(|t| t == token);
        }
        self.index.get(token).copied()
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.position(token).map(|i| self.idf[i])
    }
}

pub fn tfidf_fit(documents: &[TokenSequence], max_features: usize) -> Result<TfidfModel, EmbedError> {
    if documents.is_empty() {
        return Err(EmbedError::InvalidParams("cannot fit TF-IDF on an empty corpus".into()));
    }
    if documents.len() < 2 {
        return Err(EmbedError::InvalidParams("TF-IDF needs at least two documents".into()));
    }
    if max_features == 0 {
        return Err(EmbedError::InvalidParams("max_features must be positive".into()));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in documents {
        let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    // BTreeMap order is lexicographic; a stable sort on df keeps it as the tie-break.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(max_features);

    let n = documents.len() as f64;
    let vocabulary = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let idf = ranked.iter().map(|&(_, d)| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    Ok(TfidfModel::from_parts(documents.len(), vocabulary, idf))
}

/// Seeded Gaussian random projection from vocabulary space to `dimension`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub dimension: usize,
    pub seed: u64,
    // dimension x vocab, row-major
    matrix: Vec<f64>,
    input_dim: usize,
}

impl Projection {
    pub fn new(dimension: usize, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dimension as f64).sqrt();
        let matrix = (0..dimension * input_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self { dimension, seed, matrix, input_dim }
    }

    fn apply_sparse(&self, entries: &[(usize, f64)]) -> Vec<f64> {
        (0..self.dimension)
            .map(|r| {
                let row = &self.matrix[r * self.input_dim..(r + 1) * self.input_dim];
                entries.iter().map(|&(j, x)| row[j] * x).sum()
            })
            .collect()
    }
}

/// Normalized tf-idf vector of a chunk, optionally projected and renormalized.
/// `projection` must have been built for this model's vocabulary size.
pub fn tfidf_embed(model: &TfidfModel, chunk: &TokenSequence, projection: Option<&Projection>) -> Vec<f64> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for t in &chunk.tokens {
        if let Some(i) = model.position(t) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, tf)| (i, tf * model.idf[i])).collect();
    let norm = entries.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in &mut entries {
            *x /= norm;
        }
    }
    match projection {
        None => {
            let mut v = vec![0.0; model.len()];
            for (i, x) in entries {
                v[i] = x;
            }
            v
        }
        Some(p) => {
            debug_assert_eq!(p.input_dim, model.len());
            let mut v = p.apply_sparse(&entries);
            l2_normalize(&mut v);
            v
        }
    }
}

/// TF-IDF provider; with a projection its id is `tfidf-rp`, otherwise `tfidf`.
#[derive(Debug, Clone)]
pub struct TfidfProvider {
    model: TfidfModel,
    projection: Option<Projection>,
}

impl TfidfProvider {
    pub fn new(model: TfidfModel, projection: Option<(usize, u64)>) -> Result<Self, EmbedError> {
        if model.is_empty() {
            return Err(EmbedError::InvalidParams("TF-IDF vocabulary is empty".into()));
        }
        let projection = match projection {
            Some((0, _)) => return Err(EmbedError::InvalidParams("projection dimension must be positive".into())),
            Some((d, seed)) => Some(Projection::new(d, model.len(), seed)),
            None => None,
        };
        Ok(Self { model, projection })
    }

    pub fn model(&self) -> &TfidfModel {
        &self.model
    }
}

impl EmbeddingProvider for TfidfProvider {
    fn provider_id(&self) -> &str {
        if self.projection.is_some() {
            "tfidf-rp"
        } else {
            "tfidf"
        }
    }

    fn dimension(&self) -> usize {
        self.projection.as_ref().map_or(self.model.len(), |p| p.dimension)
    }

    fn embed_chunk(&self, chunk: &TokenSequence) -> Result<Vec<f64>, EmbedError> {
        Ok(tfidf_embed(&self.model, chunk, self.projection.as_ref()))
    }
}
