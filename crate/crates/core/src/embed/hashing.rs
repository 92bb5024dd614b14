use crate::textprep::TokenSequence;

use super::{l2_normalize, EmbedError, EmbeddingProvider};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded 64-bit token hash: FNV-1a over the bytes, then a splitmix64 finalizer.
pub fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Coordinate and sign a token contributes to in a `dimension`-wide hash space.
pub fn hashed_coordinate(token: &str, dimension: usize, seed: u64) -> (usize, f64) {
    let h = token_hash(token, seed);
    let index = (h % dimension as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

/// Signed feature-hashing bag of words, L2-normalized (zero stays zero).
pub fn hash_bow_embed(chunk: &TokenSequence, dimension: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; dimension];
    for token in &chunk.tokens {
        let (i, s) = hashed_coordinate(token, dimension, seed);
        v[i] += s;
    }
    l2_normalize(&mut v);
    v
}

#[derive(Debug, Clone)]
pub struct HashBowProvider {
    dimension: usize,
    seed: u64,
}

impl HashBowProvider {
    pub const ID: &'static str = "hash-bow";

    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbedError> {
        if dimension < 2 {
            return Err(EmbedError::InvalidParams(format!("hash-bow dimension must be >= 2, got {dimension}")));
        }
        Ok(Self { dimension, seed })
    }
}

impl EmbeddingProvider for HashBowProvider {
    fn provider_id(&self) -> &str {
        Self::ID
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_chunk(&self, chunk: &TokenSequence) -> Result<Vec<f64>, EmbedError> {
        Ok(hash_bow_embed(chunk, self.dimension, self.seed))
    }
}
