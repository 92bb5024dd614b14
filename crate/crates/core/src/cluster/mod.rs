//! Dimensionality reduction, clustering and entropy-based cluster quality.

mod hierarchical;
mod kmeans;
mod linalg;
mod quality;
mod reduce;
mod spectral;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingMatrix;

pub use hierarchical::{agglomerative, dendrogram, feature_agglomeration, Linkage, Merge};
pub use kmeans::{kmeans, kmeans_with, KMeansFit, KMeansOptions};
pub use quality::{cluster_quality, contingency_quality, silhouette_score, ClusterQuality};
pub use reduce::{reduce_dims, reduce_points, PcaBasis, ReducedEmbeddings, ReductionMethod};
pub use spectral::{
    connected_components, knn_cosine_affinity, normalized_laplacian, rbf_affinity, spectral_cluster,
    spectral_cluster_with, Affinity, SpectralFit, DEFAULT_AFFINITY_NEIGHBORS,
};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot form {n_clusters} clusters from {n_points} points")]
    TooManyClusters { n_clusters: usize, n_points: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("requested {requested} dimensions but the data has numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("symmetric eigensolver did not converge within {max_iter} iterations")]
    EigenNotConverged { max_iter: usize },
    #[error("assignment and labels cover different companies: {0}")]
    IdMismatch(String),
    #[error("assignment file line {line}: {message}")]
    AssignmentFile { line: usize, message: String },
    #[error("{path}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

/// Company to cluster index map. Labels are canonical: clusters are numbered
/// in order of their first member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    ids: Vec<String>,
    labels: Vec<usize>,
    n_clusters: usize,
}

impl ClusterAssignment {
    /// Checks that every label is below `n_clusters` and ids are unique.
    pub fn new(ids: Vec<String>, labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if ids.len() != labels.len() {
            return Err(ClusterError::InvalidArgument(format!("{} ids but {} labels", ids.len(), labels.len())));
        }
        if ids.is_empty() || n_clusters == 0 {
            return Err(ClusterError::InvalidArgument("empty assignment".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(ClusterError::InvalidArgument(format!("label {l} not below {n_clusters}")));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(ClusterError::InvalidArgument(format!("duplicate id {dup:?}")));
        }
        Ok(Self { ids, labels, n_clusters })
    }

    /// Builds an assignment from raw labels, renumbering them canonically.
    pub fn from_raw(ids: Vec<String>, raw: &[usize]) -> Result<Self> {
        let (labels, n) = canonical_labels(raw);
        Self::new(ids, labels, n)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.labels[i])
    }

    pub fn as_map(&self) -> BTreeMap<String, usize> {
        self.ids.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// CSV `company_id,cluster`, rows in id order.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| ClusterError::Io { path: path.display().to_string(), source: e };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        w.write_record(["company_id", "cluster"]).map_err(|e| io(e.into()))?;
        for (id, l) in self.as_map() {
            w.write_record([id, l.to_string()]).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }

    /// Reads `company_id,cluster`; the cluster count is one more than the largest index.
    pub fn load_csv(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            company_id: String,
            cluster: usize,
        }
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| ClusterError::AssignmentFile { line: 0, message: format!("{}: {e}", path.display()) })?;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| ClusterError::AssignmentFile { line: i + 2, message: e.to_string() })?;
            ids.push(row.company_id);
            labels.push(row.cluster);
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(ids, labels, n)
    }
}

/// Renumbers labels by first appearance; returns the labels and the cluster count.
pub fn canonical_labels(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let labels = raw
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (labels, map.len())
}

/// A clustering algorithm with its settings, as named in sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClusterMethod {
    KMeans,
    Agglomerative(Linkage),
    Spectral(Affinity),
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterMethod::KMeans => f.write_str("kmeans"),
            ClusterMethod::Agglomerative(l) => write!(f, "agglomerative-{l}"),
            ClusterMethod::Spectral(a) => write!(f, "spectral-{a}"),
        }
    }
}

impl FromStr for ClusterMethod {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "kmeans" {
            return Ok(ClusterMethod::KMeans);
        }
        if let Some(l) = s.strip_prefix("agglomerative-") {
            return l.parse().map(ClusterMethod::Agglomerative);
        }
        if let Some(a) = s.strip_prefix("spectral-") {
            return a.parse().map(ClusterMethod::Spectral);
        }
        Err(ClusterError::InvalidArgument(format!("unknown clustering method {s:?}")))
    }
}

impl Serialize for ClusterMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClusterMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Clusters row vectors with `method`. `seed` drives every random step.
pub fn cluster_points(points: &[Vec<f64>], n_clusters: usize, method: ClusterMethod, seed: u64) -> Result<Vec<usize>> {
    match method {
        ClusterMethod::KMeans => Ok(kmeans(points, n_clusters, seed, 300, 1e-8)?.labels),
        ClusterMethod::Agglomerative(l) => agglomerative(points, n_clusters, l),
        ClusterMethod::Spectral(a) => Ok(spectral_cluster(points, n_clusters, a, seed)?.labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub methods: Vec<ClusterMethod>,
    pub n_clusters: Vec<usize>,
    pub reduced_dims: Vec<usize>,
    pub reduction: ReductionMethod,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                ClusterMethod::KMeans,
                ClusterMethod::Agglomerative(Linkage::Ward),
                ClusterMethod::Spectral(Affinity::KnnCosine),
            ],
            n_clusters: vec![11, 25, 66, 100],
            reduced_dims: vec![5, 10, 20],
            reduction: ReductionMethod::Pca,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: ClusterMethod,
    pub n_clusters: usize,
    pub reduced_dim: usize,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// In grid order: reduced_dim, then n_clusters, then method.
    pub rows: Vec<SweepRow>,
    pub assignments: Vec<ClusterAssignment>,
    /// Grid cells that could not run, with the reason.
    pub skipped: Vec<(usize, usize, String)>,
}

impl SweepOutcome {
    /// Index of the row with the highest v-measure (first wins ties).
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.rows.iter().enumerate() {
            if best.is_none_or(|b| r.v_measure > self.rows[b].v_measure) {
                best = Some(i);
            }
        }
        best
    }
}

/// Runs the method x N x r grid; each cell reduces, clusters and scores
/// against `labels`. Cells run in parallel and are reported in grid order.
pub fn run_sweep(matrix: &EmbeddingMatrix, labels: &BTreeMap<String, String>, config: &SweepConfig) -> Result<SweepOutcome> {
    let mut rows = Vec::new();
    let mut assignments = Vec::new();
    let mut skipped = Vec::new();
    for &r in &config.reduced_dims {
        let reduced = match reduce_dims(matrix, r, config.reduction, config.seed) {
            Ok(x) => x,
            Err(e) => {
                for &n in &config.n_clusters {
                    skipped.push((n, r, e.to_string()));
                }
                continue;
            }
        };
        let cells: Vec<(usize, ClusterMethod)> =
            config.n_clusters.iter().flat_map(|&n| config.methods.iter().map(move |&m| (n, m))).collect();
        let results: Vec<_> = cells
            .par_iter()
            .map(|&(n, m)| {
                let raw = cluster_points(&reduced.vectors, n, m, config.seed)?;
                let a = ClusterAssignment::from_raw(reduced.ids.clone(), &raw)?;
                let q = cluster_quality(&a, labels)?;
                Ok::<_, ClusterError>((n, m, a, q))
            })
            .collect();
        for (cell, res) in cells.iter().zip(results) {
            match res {
                Ok((n, m, a, q)) => {
                    rows.push(SweepRow {
                        method: m,
                        n_clusters: n,
                        reduced_dim: r,
                        homogeneity: q.homogeneity,
                        completeness: q.completeness,
                        v_measure: q.v_measure,
                        seed: config.seed,
                    });
                    assignments.push(a);
                }
                Err(e) => skipped.push((cell.0, r, format!("{}: {e}", cell.1))),
            }
        }
    }
    Ok(SweepOutcome { rows, assignments, skipped })
}

/// CSV `method,n_clusters,reduced_dim,homogeneity,completeness,v_measure,seed`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("method,n_clusters,reduced_dim,homogeneity,completeness,v_measure,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{}\n",
            r.method, r.n_clusters, r.reduced_dim, r.homogeneity, r.completeness, r.v_measure, r.seed
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_relabel() {
        assert_eq!(canonical_labels(&[7, 7, 2, 9, 2]), (vec![0, 0, 1, 2, 1], 3));
    }

    #[test]
    fn assignment_validation_and_csv() {
        let ids: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        assert!(ClusterAssignment::new(ids.clone(), vec![0, 3, 1], 2).is_err());
        assert!(ClusterAssignment::new(vec!["a".into(), "a".into()], vec![0, 1], 2).is_err());
        let a = ClusterAssignment::new(ids, vec![1, 0, 1], 2).unwrap();
        assert_eq!(a.cluster_of("c"), Some(1));
        assert_eq!(a.sizes(), vec![1, 2]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        a.save_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "company_id,cluster\na,0\nb,1\nc,1\n");
        let back = ClusterAssignment::load_csv(&p).unwrap();
        assert_eq!(back.as_map(), a.as_map());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            ClusterMethod::KMeans,
            ClusterMethod::Agglomerative(Linkage::Average),
            ClusterMethod::Agglomerative(Linkage::Complete),
            ClusterMethod::Agglomerative(Linkage::Ward),
            ClusterMethod::Spectral(Affinity::KnnCosine),
            ClusterMethod::Spectral(Affinity::Rbf),
        ] {
            assert_eq!(m.to_string().parse::<ClusterMethod>().unwrap(), m);
        }
        assert!("dbscan".parse::<ClusterMethod>().is_err());
    }
}
