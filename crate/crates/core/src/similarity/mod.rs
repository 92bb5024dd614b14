//! Cosine peer retrieval and the average peer return-correlation metric.
//!
//! For each evaluation year and company `i`, `rho_i` is the mean Pearson
//! correlation of daily returns between `i` and its peers; the year's score is
//! the mean of `rho_i` over scored companies, and the reported score is the
//! unweighted mean over years. Peers are either the `k` nearest companies by
//! embedding cosine or, for GICS baselines, every company in the same class
//! ("dynamic k").

mod returns;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, GicsLevel};
use crate::embed::EmbeddingMatrix;

pub use returns::{load_returns, save_returns, DateRange, ReturnSeries};

pub const DEFAULT_MIN_OVERLAP: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("vectors have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("unknown company {0:?}")]
    UnknownId(String),
    #[error("k = {k} out of range for {count} companies")]
    KOutOfRange { k: usize, count: usize },
    #[error("only {overlap} common dates, need {min}")]
    InsufficientOverlap { overlap: usize, min: usize },
    #[error("a return series has zero variance on the common dates")]
    ZeroVariance,
    #[error("no company has both an embedding and returns")]
    EmptyUniverse,
    #[error("every GICS class is a singleton")]
    AllSingletons,
    #[error("no evaluation year could be scored: {0}")]
    NoScorableYear(String),
    #[error("invalid return series for {id}: {message}")]
    InvalidSeries { id: String, message: String },
    #[error("returns file line {line}: {message}")]
    ReturnsFile { line: usize, message: String },
}

pub type Result<T, E = SimilarityError> = std::result::Result<T, E>;

/// `u.v / (|u||v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerList {
    pub query_id: String,
    /// Most similar first; equal similarities in ascending id order.
    pub neighbors: Vec<(String, f64)>,
}

/// Unit-normalized copy of an embedding matrix for repeated cosine queries.
/// Zero rows stay zero and so have similarity 0 with everything.
struct CosineIndex<'a> {
    ids: &'a [String],
    rows: Vec<Vec<f64>>,
}

impl<'a> CosineIndex<'a> {
    fn new(matrix: &'a EmbeddingMatrix) -> Self {
        let rows = matrix
            .rows()
            .map(|r| {
                let n = norm(r);
                if n > 0.0 {
                    r.iter().map(|x| x / n).collect()
                } else {
                    r.to_vec()
                }
            })
            .collect();
        Self { ids: matrix.ids(), rows }
    }

    fn similarity(&self, a: usize, b: usize) -> f64 {
        dot(&self.rows[a], &self.rows[b]).clamp(-1.0, 1.0)
    }

    /// Top `k` of `candidates` (excluding `query`), ranked by similarity then id.
    fn top_k(&self, query: usize, candidates: &[usize], k: usize) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = candidates
            .iter()
            .filter(|&&j| j != query)
            .map(|&j| (j, self.similarity(query, j)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        scored.truncate(k);
        scored
    }
}

/// Exact k-nearest neighbours of `query_id` by cosine similarity.
pub fn top_k_peers(matrix: &EmbeddingMatrix, query_id: &str, k: usize) -> Result<PeerList> {
    let query = matrix.index_of(query_id).ok_or_else(|| SimilarityError::UnknownId(query_id.to_string()))?;
    if k == 0 || k >= matrix.len() {
        return Err(SimilarityError::KOutOfRange { k, count: matrix.len() });
    }
    let index = CosineIndex::new(matrix);
    let all: Vec<usize> = (0..matrix.len()).collect();
    let neighbors = index
        .top_k(query, &all, k)
        .into_iter()
        .map(|(j, s)| (matrix.ids()[j].clone(), s))
        .collect();
    Ok(PeerList { query_id: query_id.to_string(), neighbors })
}

/// Pearson correlation on two date-sorted observation slices, over their common dates.
fn correlation_on_common_dates(
    a: &[(chrono::NaiveDate, f64)],
    b: &[(chrono::NaiveDate, f64)],
    min_overlap: usize,
) -> Result<f64> {
    let mut xs = Vec::with_capacity(a.len().min(b.len()));
    let mut ys = Vec::with_capacity(xs.capacity());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                xs.push(a[i].1);
                ys.push(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    if xs.len() < min_overlap.max(2) {
        return Err(SimilarityError::InsufficientOverlap { overlap: xs.len(), min: min_overlap.max(2) });
    }
    pearson(&xs, &ys)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    // a constant series can leave rounding residue in the centered sums
    if xs.iter().all(|v| *v == xs[0]) || ys.iter().all(|v| *v == ys[0]) {
        return Err(SimilarityError::ZeroVariance);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(SimilarityError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of daily returns over the dates both series share inside `window`.
pub fn pairwise_return_correlation(
    a: &ReturnSeries,
    b: &ReturnSeries,
    window: &DateRange,
    min_overlap: usize,
) -> Result<f64> {
    correlation_on_common_dates(a.within(window), b.within(window), min_overlap)
}

/// Size of the peer set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeerCount {
    Fixed(usize),
    Dynamic,
}

impl fmt::Display for PeerCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeerCount::Fixed(k) => write!(f, "{k}"),
            PeerCount::Dynamic => f.write_str("dynamic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearResult {
    pub year: i32,
    /// Mean of `per_company` values.
    pub rho_bar: f64,
    pub per_company: BTreeMap<String, f64>,
    /// Companies in the year's universe that could not be scored.
    pub excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub method: String,
    pub k: PeerCount,
    /// Unweighted mean of the yearly scores.
    pub rho_bar: f64,
    /// Each company's score averaged over the years it was scored in.
    pub per_company: BTreeMap<String, f64>,
    pub years: Vec<YearResult>,
    pub skipped_years: Vec<(i32, String)>,
    /// Companies scored in at least one year.
    pub coverage: usize,
    /// Companies with an embedding (or label) but no return series at all.
    pub missing_returns: Vec<String>,
}

impl CorrelationReport {
    pub fn excluded_count(&self) -> usize {
        self.years.iter().map(|y| y.excluded.len()).sum()
    }

    fn assemble(method: String, k: PeerCount, years: Vec<YearResult>, skipped: Vec<(i32, String)>, missing: Vec<String>) -> Result<Self> {
        if years.is_empty() {
            let reasons: Vec<String> = skipped.iter().map(|(y, r)| format!("{y}: {r}")).collect();
            return Err(SimilarityError::NoScorableYear(reasons.join("; ")));
        }
        let rho_bar = years.iter().map(|y| y.rho_bar).sum::<f64>() / years.len() as f64;
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for y in &years {
            for (id, v) in &y.per_company {
                let e = acc.entry(id.clone()).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        let per_company: BTreeMap<String, f64> = acc.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
        Ok(Self {
            method,
            k,
            rho_bar,
            coverage: per_company.len(),
            per_company,
            years,
            skipped_years: skipped,
            missing_returns: missing,
        })
    }
}

/// Companies (by index into `ids`) with at least `min_overlap` observations in `window`.
fn eligible<'r>(
    ids: &[String],
    returns: &'r BTreeMap<String, ReturnSeries>,
    window: &DateRange,
    min_overlap: usize,
) -> Vec<(usize, &'r [(chrono::NaiveDate, f64)])> {
    ids.iter()
        .enumerate()
        .filter_map(|(i, id)| {
            let obs = returns.get(id)?.within(window);
            (obs.len() >= min_overlap.max(2)).then_some((i, obs))
        })
        .collect()
}

/// Mean correlation between `own` and each of `peers`; `None` when all fail.
fn mean_peer_correlation<'a>(
    own: &[(chrono::NaiveDate, f64)],
    peers: impl Iterator<Item = &'a [(chrono::NaiveDate, f64)]>,
    min_overlap: usize,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in peers {
        if let Ok(r) = correlation_on_common_dates(own, p, min_overlap) {
            sum += r;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn year_result(year: i32, ids: &[String], scored: Vec<(usize, Option<f64>)>) -> YearResult {
    let mut per_company = BTreeMap::new();
    let mut excluded = Vec::new();
    for (i, v) in scored {
        match v {
            Some(v) => {
                per_company.insert(ids[i].clone(), v);
            }
            None => excluded.push(ids[i].clone()),
        }
    }
    let rho_bar = if per_company.is_empty() {
        f64::NAN
    } else {
        per_company.values().sum::<f64>() / per_company.len() as f64
    };
    YearResult { year, rho_bar, per_company, excluded }
}

/// Average return correlation with each company's `k` nearest embedding peers.
///
/// Each year's universe is the set of embedded companies with at least
/// `min_overlap` daily returns in that calendar year; peers are searched only
/// inside it. Peers whose correlation cannot be computed are skipped; a
/// company with no computable peer is excluded for that year.
pub fn avg_peer_correlation(
    matrix: &EmbeddingMatrix,
    returns: &BTreeMap<String, ReturnSeries>,
    k: usize,
    years: &[i32],
    min_overlap: usize,
) -> Result<CorrelationReport> {
    let ids = matrix.ids();
    let missing: Vec<String> = ids.iter().filter(|id| !returns.contains_key(*id)).cloned().collect();
    if missing.len() == ids.len() {
        return Err(SimilarityError::EmptyUniverse);
    }
    if k == 0 {
        return Err(SimilarityError::KOutOfRange { k, count: ids.len() });
    }
    let index = CosineIndex::new(matrix);
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for &year in years {
        let window = DateRange::calendar_year(year);
        let universe = eligible(ids, returns, &window, min_overlap);
        if universe.len() <= k {
            skipped.push((year, format!("{} companies with returns, need more than k = {k}", universe.len())));
            continue;
        }
        let members: Vec<usize> = universe.iter().map(|(i, _)| *i).collect();
        let obs_of: BTreeMap<usize, &[(chrono::NaiveDate, f64)]> = universe.iter().copied().collect();
        let scored: Vec<(usize, Option<f64>)> = universe
            .par_iter()
            .map(|&(i, own)| {
                let peers = index.top_k(i, &members, k);
                (i, mean_peer_correlation(own, peers.iter().map(|(j, _)| obs_of[j]), min_overlap))
            })
            .collect();
        let yr = year_result(year, ids, scored);
        if yr.per_company.is_empty() {
            skipped.push((year, "no company could be scored".into()));
        } else {
            results.push(yr);
        }
    }
    CorrelationReport::assemble("embedding".into(), PeerCount::Fixed(k), results, skipped, missing)
}

/// GICS baseline: every same-class company is a peer. `labels` maps company
/// id to its class; companies alone in their class (within a year's universe)
/// are excluded.
pub fn class_peer_correlation(
    method: &str,
    labels: &BTreeMap<String, String>,
    returns: &BTreeMap<String, ReturnSeries>,
    years: &[i32],
    min_overlap: usize,
) -> Result<CorrelationReport> {
    let mut class_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for c in labels.values() {
        *class_sizes.entry(c).or_insert(0) += 1;
    }
    if class_sizes.values().all(|&n| n < 2) {
        return Err(SimilarityError::AllSingletons);
    }
    let ids: Vec<String> = labels.keys().cloned().collect();
    let missing: Vec<String> = ids.iter().filter(|id| !returns.contains_key(*id)).cloned().collect();
    if missing.len() == ids.len() {
        return Err(SimilarityError::EmptyUniverse);
    }
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for &year in years {
        let window = DateRange::calendar_year(year);
        let universe = eligible(&ids, returns, &window, min_overlap);
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, _) in &universe {
            by_class.entry(labels[&ids[*i]].as_str()).or_default().push(*i);
        }
        let obs_of: BTreeMap<usize, &[(chrono::NaiveDate, f64)]> = universe.iter().copied().collect();
        let scored: Vec<(usize, Option<f64>)> = universe
            .par_iter()
            .map(|&(i, own)| {
                let class = &by_class[labels[&ids[i]].as_str()];
                let peers = class.iter().filter(|&&j| j != i).map(|j| obs_of[j]);
                (i, mean_peer_correlation(own, peers, min_overlap))
            })
            .collect();
        let yr = year_result(year, &ids, scored);
        if yr.per_company.is_empty() {
            skipped.push((year, "no company could be scored".into()));
        } else {
            results.push(yr);
        }
    }
    CorrelationReport::assemble(method.to_string(), PeerCount::Dynamic, results, skipped, missing)
}

/// Dynamic-k baseline using the corpus's GICS sector or industry.
pub fn gics_baseline_correlation(
    corpus: &Corpus,
    returns: &BTreeMap<String, ReturnSeries>,
    level: GicsLevel,
    years: &[i32],
    min_overlap: usize,
) -> Result<CorrelationReport> {
    let method = format!("gics_{level}");
    class_peer_correlation(&method, &corpus.label_map(level), returns, years, min_overlap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierScore {
    pub company_id: String,
    pub sector: String,
    /// Cosine distance to the company's own sector centroid.
    pub own_distance: f64,
    pub nearest_other_sector: String,
    pub nearest_other_distance: f64,
    /// `own_distance - nearest_other_distance`; positive means the company
    /// sits closer to another sector than to its own.
    pub score: f64,
}

/// Scores every labelled company in `matrix` against per-sector centroids.
/// A centroid is the normalized mean of its members' unit vectors, so scores
/// do not depend on embedding norms. Sorted by score descending, then id.
pub fn outlier_scores(matrix: &EmbeddingMatrix, sectors: &BTreeMap<String, String>) -> Result<Vec<OutlierScore>> {
    let index = CosineIndex::new(matrix);
    let mut sums: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut members = Vec::new();
    for (i, id) in matrix.ids().iter().enumerate() {
        let Some(sector) = sectors.get(id) else { continue };
        if norm(&index.rows[i]) == 0.0 {
            return Err(SimilarityError::ZeroVector);
        }
        let acc = sums.entry(sector.as_str()).or_insert_with(|| vec![0.0; matrix.dimension()]);
        acc.iter_mut().zip(&index.rows[i]).for_each(|(a, x)| *a += x);
        members.push((i, sector.as_str()));
    }
    if sums.len() < 2 {
        return Err(SimilarityError::AllSingletons);
    }
    let centroids: Vec<(&str, Vec<f64>)> = sums.into_iter().map(|(s, v)| (s, v)).collect();
    let mut out = Vec::with_capacity(members.len());
    for (i, sector) in members {
        let row = &index.rows[i];
        let mut own = f64::NAN;
        let mut other: Option<(&str, f64)> = None;
        for (s, c) in &centroids {
            // a centroid can cancel to zero; treat it as orthogonal
            let d = 1.0 - cosine_similarity(row, c).unwrap_or(0.0);
            if *s == sector {
                own = d;
            } else if other.is_none_or(|(_, best)| d < best) {
                other = Some((s, d));
            }
        }
        let (other_sector, other_d) = other.expect("at least two sectors");
        out.push(OutlierScore {
            company_id: matrix.ids()[i].clone(),
            sector: sector.to_string(),
            own_distance: own,
            nearest_other_sector: other_sector.to_string(),
            nearest_other_distance: other_d,
            score: own - other_d,
        });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.company_id.cmp(&b.company_id)));
    Ok(out)
}
