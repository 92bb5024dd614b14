use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, GicsLevel, Result};

/// A labelled description pair: 1 when both companies share a GICS industry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub id_a: String,
    pub id_b: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDataset {
    pub pairs: Vec<PairExample>,
    /// Companies alone in their industry; they only produce a negative pair.
    pub singleton_companies: Vec<String>,
}

impl PairDataset {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }
}

/// One positive (same industry) and one negative (other industry) partner per
/// company, drawn uniformly with a seeded generator. Companies are visited in
/// id order so the output is a pure function of `(corpus, seed)`.
pub fn generate_finetune_pairs(corpus: &Corpus, seed: u64) -> Result<PairDataset> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut by_industry: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in corpus.records() {
        by_industry
            .entry(r.gics.level(GicsLevel::Industry))
            .or_default()
            .push(r.company_id.as_str());
    }
    if by_industry.len() < 2 {
        return Err(CorpusError::SingleIndustry);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = corpus.len();
    let mut pairs = Vec::with_capacity(2 * total);
    let mut singleton_companies = Vec::new();
    for r in corpus.records() {
        let industry = r.gics.level(GicsLevel::Industry);
        let same = &by_industry[industry];

        if same.len() >= 2 {
            // Uniform over the other members: draw an index in [0, n-1) and skip self.
            let self_pos = same.iter().position(|id| *id == r.company_id).expect("member");
            let mut j = rng.random_range(0..same.len() - 1);
            if j >= self_pos {
                j += 1;
            }
            pairs.push(PairExample { id_a: r.company_id.clone(), id_b: same[j].to_string(), label: 1 });
        } else {
            log::warn!("{} is alone in industry {industry}; emitting only a negative pair", r.company_id);
            singleton_companies.push(r.company_id.clone());
        }

        // Records are sorted by id, so the other-industry pool is every index
        // outside this industry; sample by rejection on the corpus index.
        let n_other = total - same.len();
        let mut k = rng.random_range(0..n_other);
        let other = corpus
            .records()
            .iter()
            .filter(|o| o.gics.level(GicsLevel::Industry) != industry)
            .find(|_| {
                if k == 0 {
                    true
                } else {
                    k -= 1;
                    false
                }
            })
            .expect("non-empty pool");
        pairs.push(PairExample { id_a: r.company_id.clone(), id_b: other.company_id.clone(), label: 0 });
    }
    Ok(PairDataset { pairs, singleton_companies })
}

/// CSV with header `id_a,id_b,label`.
pub fn save_pairs(pairs: &[PairExample], path: &Path) -> Result<()> {
    let to_io = |e: csv::Error| CorpusError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) };
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    for p in pairs {
        w.serialize(p).map_err(to_io)?;
    }
    w.flush().map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}
