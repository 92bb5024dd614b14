use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

/// Scores `assignment` against reference `labels`; both must cover the same ids.
pub fn cluster_quality(assignment: &ClusterAssignment, labels: &BTreeMap<String, String>) -> Result<ClusterQuality> {
    if assignment.len() != labels.len() {
        return Err(ClusterError::IdMismatch(format!(
            "{} assigned ids vs {} labelled ids",
            assignment.len(),
            labels.len()
        )));
    }
    let mut class_index: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.values() {
        let next = class_index.len();
        class_index.entry(l.as_str()).or_insert(next);
    }
    let mut table = vec![vec![0usize; class_index.len()]; assignment.n_clusters()];
    for (id, &k) in assignment.ids().iter().zip(assignment.labels()) {
        let class = labels.get(id).ok_or_else(|| ClusterError::IdMismatch(format!("{id:?} has no label")))?;
        table[k][class_index[class.as_str()]] += 1;
    }
    Ok(contingency_quality(&table))
}

/// Homogeneity, completeness and V-measure from a cluster x class count table.
pub fn contingency_quality(table: &[Vec<usize>]) -> ClusterQuality {
    let n: usize = table.iter().flatten().sum();
    let n_classes = table.first().map_or(0, Vec::len);
    let cluster_totals: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let class_totals: Vec<usize> = (0..n_classes).map(|c| table.iter().map(|r| r[c]).sum()).collect();

    let nf = n as f64;
    let entropy = |totals: &[usize]| -> f64 {
        totals.iter().filter(|&&t| t > 0).map(|&t| -(t as f64 / nf) * (t as f64 / nf).ln()).sum()
    };
    let h_class = entropy(&class_totals);
    let h_cluster = entropy(&cluster_totals);
    let mut h_class_given_cluster = 0.0;
    let mut h_cluster_given_class = 0.0;
    for (k, row) in table.iter().enumerate() {
        for (c, &cnt) in row.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            let p = cnt as f64 / nf;
            h_class_given_cluster -= p * (cnt as f64 / cluster_totals[k] as f64).ln();
            h_cluster_given_class -= p * (cnt as f64 / class_totals[c] as f64).ln();
        }
    }
    let score = |cond: f64, total: f64| if total == 0.0 { 1.0 } else { (1.0 - cond / total).clamp(0.0, 1.0) };
    let homogeneity = score(h_class_given_cluster, h_class);
    let completeness = score(h_cluster_given_class, h_cluster);
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    ClusterQuality { homogeneity, completeness, v_measure }
}

/// Mean silhouette coefficient under Euclidean distance. Members of
/// singleton clusters score 0. Needs at least two clusters.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.is_empty() {
        return Err(ClusterError::InvalidArgument("points and labels must be non-empty and aligned".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(ClusterError::InvalidArgument("silhouette needs at least two clusters".into()));
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        if sizes[labels[i]] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += super::linalg::sq_dist(p, q).sqrt();
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}
