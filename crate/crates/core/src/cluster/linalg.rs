use nalgebra::{DMatrix, SymmetricEigen};

use super::{ClusterError, Result};

pub(crate) const EIGEN_MAX_ITER: usize = 100_000;

/// Eigenpairs of a symmetric matrix in ascending eigenvalue order. Each
/// eigenvector's largest-magnitude entry (first on ties) is made positive.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(ClusterError::EigenNotConverged { max_iter: EIGEN_MAX_ITER })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v.get(pivot).is_some_and(|p| *p < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_points(points: &[Vec<f64>], n_clusters: usize) -> Result<usize> {
    if n_clusters == 0 {
        return Err(ClusterError::InvalidArgument("need at least one cluster".into()));
    }
    if n_clusters > points.len() {
        return Err(ClusterError::TooManyClusters { n_clusters, n_points: points.len() });
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(ClusterError::InvalidArgument("points have different dimensions".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ClusterError::InvalidArgument("non-finite coordinate".into()));
    }
    Ok(d)
}
