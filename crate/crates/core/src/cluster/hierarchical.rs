use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::linalg::{check_points, sq_dist};
use super::{canonical_labels, ClusterError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    Complete,
    Ward,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Ward => "ward",
        })
    }
}

impl FromStr for Linkage {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "ward" => Ok(Linkage::Ward),
            _ => Err(ClusterError::InvalidArgument(format!("unknown linkage {s:?}"))),
        }
    }
}

/// One merge step: cluster `b` (by representative point index) joins `a`, with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Linkage distance at the merge (Euclidean scale, also for Ward).
    pub height: f64,
    /// Size of the merged cluster.
    pub size: usize,
}

/// Full bottom-up merge sequence (`n - 1` merges).
///
/// The closest pair is merged first; equal distances go to the pair with the
/// smallest indices. Distances are updated with the Lance-Williams recurrence,
/// on squared Euclidean distances for Ward.
pub fn dendrogram(points: &[Vec<f64>], linkage: Linkage) -> Result<Vec<Merge>> {
    check_points(points, 1)?;
    let n = points.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d2 = sq_dist(&points[i], &points[j]);
            let d = if linkage == Linkage::Ward { d2 } else { d2.sqrt() };
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut nn = vec![usize::MAX; n];
    let mut nn_d = vec![f64::INFINITY; n];
    let nearest = |i: usize, active: &[bool], dist: &[f64]| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if j != i && active[j] && dist[i * n + j] < best.1 {
                best = (j, dist[i * n + j]);
            }
        }
        best
    };
    for i in 0..n {
        (nn[i], nn_d[i]) = nearest(i, &active, &dist);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            let cand = (nn_d[i], i.min(nn[i]), i.max(nn[i]));
            if pick.is_none_or(|p| cand.0 < p.0 || (cand.0 == p.0 && (cand.1, cand.2) < (p.1, p.2))) {
                pick = Some(cand);
            }
        }
        let (d_ab, a, b) = pick.expect("two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let (dka, dkb) = (dist[k * n + a], dist[k * n + b]);
            let nk = size[k] as f64;
            let d = match linkage {
                Linkage::Complete => dka.max(dkb),
                Linkage::Average => (na * dka + nb * dkb) / (na + nb),
                Linkage::Ward => ((na + nk) * dka + (nb + nk) * dkb - nk * d_ab) / (na + nb + nk),
            };
            dist[k * n + a] = d;
            dist[a * n + k] = d;
        }
        active[b] = false;
        size[a] += size[b];
        let height = if linkage == Linkage::Ward { d_ab.max(0.0).sqrt() } else { d_ab };
        merges.push(Merge { a, b, height, size: size[a] });

        for k in (0..n).filter(|&k| active[k]) {
            if k == a || nn[k] == a || nn[k] == b {
                (nn[k], nn_d[k]) = nearest(k, &active, &dist);
            } else {
                let d = dist[k * n + a];
                if d < nn_d[k] || (d == nn_d[k] && a < nn[k]) {
                    nn[k] = a;
                    nn_d[k] = d;
                }
            }
        }
    }
    Ok(merges)
}

/// Labels after applying the first `n - n_clusters` merges.
pub(crate) fn cut(n: usize, merges: &[Merge], n_clusters: usize) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in &merges[..n - n_clusters] {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        parent[rb] = ra;
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    canonical_labels(&roots).0
}

/// Agglomerative clustering cut at `n_clusters`.
pub fn agglomerative(points: &[Vec<f64>], n_clusters: usize, linkage: Linkage) -> Result<Vec<usize>> {
    check_points(points, n_clusters)?;
    let merges = dendrogram(points, linkage)?;
    Ok(cut(points.len(), &merges, n_clusters))
}

/// Groups the columns of `points` into `n_groups` by agglomerating the
/// transposed matrix, then replaces each group with its mean. Returns the
/// feature-to-group labels and the pooled rows.
pub fn feature_agglomeration(
    points: &[Vec<f64>],
    n_groups: usize,
    linkage: Linkage,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let d = check_points(points, 1)?;
    let features: Vec<Vec<f64>> = (0..d).map(|j| points.iter().map(|p| p[j]).collect()).collect();
    let groups = agglomerative(&features, n_groups, linkage)?;
    let mut counts = vec![0usize; n_groups];
    for &g in &groups {
        counts[g] += 1;
    }
    let pooled = points
        .iter()
        .map(|p| {
            let mut out = vec![0.0; n_groups];
            for (x, &g) in p.iter().zip(&groups) {
                out[g] += x;
            }
            out.iter_mut().zip(&counts).for_each(|(v, &c)| *v /= c as f64);
            out
        })
        .collect();
    Ok((groups, pooled))
}
