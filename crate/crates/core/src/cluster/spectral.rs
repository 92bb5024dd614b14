use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_with, KMeansOptions};
use super::linalg::{check_points, sorted_eigen, sq_dist};
use super::{canonical_labels, ClusterError, Result};

pub const DEFAULT_AFFINITY_NEIGHBORS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Affinity {
    /// Each point links to its nearest neighbours by cosine similarity
    /// (weights clamped at 0), symmetrized by taking the larger direction.
    KnnCosine,
    /// Dense Gaussian kernel with bandwidth the median pairwise distance.
    Rbf,
}

impl fmt::Display for Affinity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Affinity::KnnCosine => "knn-cosine",
            Affinity::Rbf => "rbf",
        })
    }
}

impl FromStr for Affinity {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn-cosine" => Ok(Affinity::KnnCosine),
            "rbf" => Ok(Affinity::Rbf),
            _ => Err(ClusterError::InvalidArgument(format!("unknown affinity {s:?}"))),
        }
    }
}

fn unit_rows(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            let n = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                p.iter().map(|x| x / n).collect()
            } else {
                p.clone()
            }
        })
        .collect()
}

pub fn knn_cosine_affinity(points: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let n = points.len();
    let unit = unit_rows(points);
    let k = k.min(n.saturating_sub(1));
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut sims: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (j, unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, s) in &sims[..k] {
            let s = s.clamp(0.0, 1.0);
            if s > w[(i, j)] {
                w[(i, j)] = s;
                w[(j, i)] = s;
            }
        }
    }
    w
}

pub fn rbf_affinity(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut d2 = DMatrix::zeros(n, n);
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(&points[i], &points[j]);
            d2[(i, j)] = d;
            d2[(j, i)] = d;
            dists.push(d.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let sigma = dists.get(dists.len() / 2).copied().filter(|s| *s > 0.0).unwrap_or(1.0);
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-d2[(i, j)] / (2.0 * sigma * sigma)).exp() })
}

/// `I - D^-1/2 W D^-1/2`; isolated vertices get a diagonal of 1.
pub fn normalized_laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let off = -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    })
}

/// Component label per vertex of the graph with edges where `w > 0`.
pub fn connected_components(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if comp[u] == usize::MAX && (w[(v, u)] > 0.0 || w[(u, v)] > 0.0) {
                    comp[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    canonical_labels(&comp).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFit {
    pub labels: Vec<usize>,
    /// Full Laplacian spectrum, ascending.
    pub eigenvalues: Vec<f64>,
    /// Connected components of the affinity graph; above 1 means the graph
    /// was disconnected and the leading eigenvectors encode the components.
    pub n_components: usize,
}

pub fn spectral_cluster(points: &[Vec<f64>], n_clusters: usize, affinity: Affinity, seed: u64) -> Result<SpectralFit> {
    spectral_cluster_with(points, n_clusters, affinity, seed, DEFAULT_AFFINITY_NEIGHBORS)
}

/// Spectral clustering: bottom `n_clusters` eigenvectors of the normalized
/// Laplacian, rows scaled to unit length, then k-means.
pub fn spectral_cluster_with(
    points: &[Vec<f64>],
    n_clusters: usize,
    affinity: Affinity,
    seed: u64,
    neighbors: usize,
) -> Result<SpectralFit> {
    check_points(points, n_clusters)?;
    let w = match affinity {
        Affinity::KnnCosine => knn_cosine_affinity(points, neighbors),
        Affinity::Rbf => rbf_affinity(points),
    };
    let n_components = connected_components(&w).iter().max().map_or(0, |m| m + 1);
    if n_components > 1 {
        log::warn!("affinity graph has {n_components} connected components; clustering proceeds on the full spectrum");
    }
    let (eigenvalues, vectors) = sorted_eigen(normalized_laplacian(&w))?;
    let rows: Vec<Vec<f64>> = (0..points.len())
        .map(|i| (0..n_clusters).map(|j| vectors[(i, j)]).collect())
        .collect();
    let fit = kmeans_with(&unit_rows(&rows), n_clusters, seed, &KMeansOptions::default())?;
    Ok(SpectralFit { labels: canonical_labels(&fit.labels).0, eigenvalues, n_components })
}
