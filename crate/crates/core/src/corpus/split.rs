use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Result};

/// Train/test partition of company ids. Both sides are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
    /// Classes with a single member; their companies are kept in `train`.
    pub singleton_classes: Vec<String>,
}

/// Stratified split: each class with `n` members sends
/// `clamp(round(n * test_fraction), 1, n - 1)` of them to test.
pub fn stratified_split(labels: &[(String, String)], test_fraction: f64, seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in labels {
        by_class.entry(label.as_str()).or_default().push(id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split { train: Vec::new(), test: Vec::new(), singleton_classes: Vec::new() };
    for (class, mut members) in by_class {
        members.sort_unstable();
        let n = members.len();
        if n < 2 {
            split.singleton_classes.push(class.to_string());
            split.train.extend(members.iter().map(|s| s.to_string()));
            continue;
        }
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        members.shuffle(&mut rng);
        split.test.extend(members[..n_test].iter().map(|s| s.to_string()));
        split.train.extend(members[n_test..].iter().map(|s| s.to_string()));
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
