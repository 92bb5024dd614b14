use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{fix_sign, sorted_eigen};
use super::spectral::{knn_cosine_affinity, normalized_laplacian, DEFAULT_AFFINITY_NEIGHBORS};
use super::{ClusterError, Result};
use crate::embed::EmbeddingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMethod {
    Pca,
    /// Non-trivial bottom eigenvectors of the normalized Laplacian of the
    /// kNN cosine graph.
    SpectralEmbedding,
}

impl fmt::Display for ReductionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionMethod::Pca => "pca",
            ReductionMethod::SpectralEmbedding => "spectral-embedding",
        })
    }
}

impl FromStr for ReductionMethod {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(ReductionMethod::Pca),
            "spectral-embedding" => Ok(ReductionMethod::SpectralEmbedding),
            _ => Err(ClusterError::InvalidArgument(format!("unknown reduction method {s:?}"))),
        }
    }
}

/// Mean and principal axes (unit rows, descending variance) of a PCA fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
}

impl PcaBasis {
    /// Maps reduced coordinates back to the source space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, comp) in coords.iter().zip(&self.components) {
            out.iter_mut().zip(comp).for_each(|(o, v)| *o += c * v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedEmbeddings {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub method: ReductionMethod,
    pub provider_id: String,
    pub source_dimension: usize,
    /// PCA: variance along each kept component. Spectral: the Laplacian
    /// eigenvalues of the kept eigenvectors.
    pub eigenvalues: Vec<f64>,
    /// PCA only: total variance of the centered data.
    pub total_variance: Option<f64>,
    pub basis: Option<PcaBasis>,
}

impl ReducedEmbeddings {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Share of total variance captured by each PCA component.
    pub fn explained_variance_ratio(&self) -> Option<Vec<f64>> {
        let total = self.total_variance?;
        Some(self.eigenvalues.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect())
    }
}

/// Reduces an embedding matrix to `target_dim` columns. Both methods are
/// deterministic; `seed` is accepted so every pipeline stage has the same shape.
pub fn reduce_dims(
    matrix: &EmbeddingMatrix,
    target_dim: usize,
    method: ReductionMethod,
    seed: u64,
) -> Result<ReducedEmbeddings> {
    let _ = seed;
    reduce_points(matrix.ids().to_vec(), &matrix.to_rows(), target_dim, method, &matrix.provider_id)
}

pub fn reduce_points(
    ids: Vec<String>,
    points: &[Vec<f64>],
    target_dim: usize,
    method: ReductionMethod,
    provider_id: &str,
) -> Result<ReducedEmbeddings> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if ids.len() != n {
        return Err(ClusterError::InvalidArgument(format!("{} ids for {n} rows", ids.len())));
    }
    if target_dim < 2 || target_dim >= d {
        return Err(ClusterError::InvalidArgument(format!("target dimension {target_dim} must be in [2, {d})")));
    }
    if n <= target_dim {
        return Err(ClusterError::InvalidArgument(format!("{n} rows cannot support {target_dim} dimensions")));
    }
    if points.iter().any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
        return Err(ClusterError::InvalidArgument("rows must be finite and of equal length".into()));
    }
    let (vectors, eigenvalues, total_variance, basis) = match method {
        ReductionMethod::Pca => {
            let (vectors, eigenvalues, total, basis) = pca(points, target_dim)?;
            (vectors, eigenvalues, Some(total), Some(basis))
        }
        ReductionMethod::SpectralEmbedding => {
            let (vectors, eigenvalues) = spectral_embedding(points, target_dim)?;
            (vectors, eigenvalues, None, None)
        }
    };
    Ok(ReducedEmbeddings {
        ids,
        vectors,
        method,
        provider_id: provider_id.to_string(),
        source_dimension: d,
        eigenvalues,
        total_variance,
        basis,
    })
}

type PcaOutput = (Vec<Vec<f64>>, Vec<f64>, f64, PcaBasis);

fn pca(points: &[Vec<f64>], r: usize) -> Result<PcaOutput> {
    let n = points.len();
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let scale = 1.0 / (n as f64 - 1.0);

    // eigen-decompose whichever of the covariance or Gram matrix is smaller
    let (values, axes) = if d <= n {
        let (vals, vecs) = sorted_eigen((x.transpose() * &x) * scale)?;
        let axes: Vec<Vec<f64>> = (0..d).rev().map(|j| vecs.column(j).iter().copied().collect()).collect();
        (vals.into_iter().rev().collect::<Vec<f64>>(), axes)
    } else {
        let (vals, vecs) = sorted_eigen((&x * x.transpose()) * scale)?;
        let vals: Vec<f64> = vals.into_iter().rev().collect();
        let axes = (0..n)
            .rev()
            .zip(&vals)
            .map(|(j, &lambda)| {
                let u = vecs.column(j);
                let mut v: Vec<f64> = (x.transpose() * u).iter().copied().collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm > 0.0 && lambda > 0.0 {
                    v.iter_mut().for_each(|a| *a /= norm);
                }
                fix_sign(&mut v);
                v
            })
            .collect();
        (vals, axes)
    };
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let tol = values[0].max(0.0) * n.max(d) as f64 * f64::EPSILON;
    let rank = values.iter().filter(|&&v| v > tol).count();
    if r > rank {
        return Err(ClusterError::RankDeficient { requested: r, rank });
    }
    let components: Vec<Vec<f64>> = axes.into_iter().take(r).collect();
    let projected = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(x.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok((projected, values[..r].to_vec(), total, PcaBasis { mean, components }))
}

fn spectral_embedding(points: &[Vec<f64>], r: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let w = knn_cosine_affinity(points, DEFAULT_AFFINITY_NEIGHBORS);
    let (vals, vecs) = sorted_eigen(normalized_laplacian(&w))?;
    // the first eigenvector only reflects vertex degrees
    let rows = (0..points.len()).map(|i| (1..=r).map(|j| vecs[(i, j)]).collect()).collect();
    Ok((rows, vals[1..=r].to_vec()))
}
