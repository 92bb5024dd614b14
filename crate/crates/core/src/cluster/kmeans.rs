use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{check_points, sq_dist};
use super::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-8, n_init: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Index into `centroids` for each point.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning run, starting with
    /// the assignment to the initial seeds.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn kmeans(points: &[Vec<f64>], n_clusters: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    kmeans_with(points, n_clusters, seed, &KMeansOptions { max_iter, tol, ..KMeansOptions::default() })
}

pub fn kmeans_with(points: &[Vec<f64>], n_clusters: usize, seed: u64, options: &KMeansOptions) -> Result<KMeansFit> {
    check_points(points, n_clusters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..options.n_init.max(1) {
        let seeds = plus_plus_seeds(points, n_clusters, &mut rng);
        let fit = lloyd(points, seeds, options.max_iter, options.tol);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a seed
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centroids
}

/// Nearest centroid (lowest index on ties) and the squared distance to it.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest(p, centroids)).unzip()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> KMeansFit {
    let k = centroids.len();
    let d = points[0].len();
    let (mut labels, mut dists) = assign(points, &centroids);
    let mut trace = vec![dists.iter().sum::<f64>()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut new_centroids: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s.into_iter().map(|x| x / c as f64).collect() } else { Vec::new() })
            .collect();
        // empty clusters take the points farthest from their current centroid
        let mut taken = vec![false; points.len()];
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..points.len())
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("more points than clusters");
            taken[far] = true;
            new_centroids[j] = points[far].clone();
        }
        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = new_centroids;
        let (new_labels, new_dists) = assign(points, &centroids);
        let unchanged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        trace.push(dists.iter().sum());
        if shift <= tol || unchanged {
            converged = true;
            break;
        }
    }
    KMeansFit { labels, centroids, inertia: *trace.last().unwrap(), inertia_trace: trace, iterations, converged }
}

#[cfg(test)]
mod tests {
    use rand_distr::StandardNormal;

    use super::*;
    use crate::cluster::{contingency_quality, ClusterError};

    pub(crate) fn blobs(per: usize, centers: &[Vec<f64>], sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(center.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect());
                truth.push(c);
            }
        }
        (pts, truth)
    }

    fn table(labels: &[usize], truth: &[usize]) -> Vec<Vec<usize>> {
        let k = labels.iter().max().unwrap() + 1;
        let c = truth.iter().max().unwrap() + 1;
        let mut t = vec![vec![0; c]; k];
        for (&l, &g) in labels.iter().zip(truth) {
            t[l][g] += 1;
        }
        t
    }

    #[test]
    fn each_point_own_cluster() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![5.5]];
        let fit = kmeans(&pts, 4, 1, 100, 1e-9).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut l = fit.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
        assert!(matches!(kmeans(&pts, 5, 1, 100, 1e-9), Err(ClusterError::TooManyClusters { .. })));
    }

    #[test]
    fn recovers_planted_blobs() {
        let centers = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        for seed in 0..5 {
            let (pts, truth) = blobs(30, &centers, 0.5, seed);
            let fit = kmeans(&pts, 3, seed, 300, 1e-10).unwrap();
            let q = contingency_quality(&table(&fit.labels, &truth));
            assert_eq!((q.homogeneity, q.completeness), (1.0, 1.0));
        }
    }

    #[test]
    fn inertia_trace_non_increasing_and_deterministic() {
        let centers = vec![vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 1.0], vec![0.0, 2.0, -1.0], vec![1.0, 1.0, 1.0]];
        let (pts, _) = blobs(40, &centers, 1.0, 9);
        for seed in 0..5 {
            let fit = kmeans_with(&pts, 6, seed, &KMeansOptions { n_init: 1, ..Default::default() }).unwrap();
            assert!(fit.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", fit.inertia_trace);
            assert!(fit.inertia <= fit.inertia_trace[0]);
            let again = kmeans_with(&pts, 6, seed, &KMeansOptions { n_init: 1, ..Default::default() }).unwrap();
            assert_eq!(fit, again);
        }
    }

    #[test]
    fn duplicate_points_do_not_stall_seeding() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let fit = kmeans(&pts, 3, 0, 10, 1e-9).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert_eq!(fit.centroids.len(), 3);
    }
}
