//! Internal cluster-validity indices used to gate collaboration, plus the
//! adjusted Rand index for reporting against ground truth.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{ColupiError, Result};
use crate::types::DataMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Davies–Bouldin index, lower is better. `f64::INFINITY` marks a
    /// degenerate clustering: an empty cluster, fewer than two non-empty
    /// clusters, or two coinciding centroids.
    #[serde(with = "infinite_as_null")]
    pub db_index: f64,
    /// Mean distance of each cluster's points to its centroid (0 when empty).
    pub per_cluster_scatter: Vec<f64>,
    pub empty_clusters: Vec<usize>,
    /// Index over the non-empty clusters only, when at least two exist.
    pub nonempty_db: Option<f64>,
}

impl QualityReport {
    pub fn is_finite(&self) -> bool {
        self.db_index.is_finite()
    }
}

/// Classical Davies–Bouldin index on hard labels with Euclidean centroids.
pub fn davies_bouldin(data: &DataMatrix, labels: &[usize], k: usize) -> Result<QualityReport> {
    if labels.len() != data.n_obs() {
        return Err(ColupiError::DimensionMismatch(format!(
            "{} labels for {} observations",
            labels.len(),
            data.n_obs()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(ColupiError::InvalidData(format!("label {bad} out of range for K={k}")));
    }

    let d = data.n_features();
    let mut counts = vec![0usize; k];
    let mut centroids = vec![Array1::<f64>::zeros(d); k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        centroids[l] += &data.row(i);
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            *c /= n as f64;
        }
    }

    let mut scatter = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += euclidean(&data.row(i).to_owned(), &centroids[l]);
    }
    for (s, &n) in scatter.iter_mut().zip(&counts) {
        if n > 0 {
            *s /= n as f64;
        }
    }

    let empty_clusters: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    let live: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();

    let nonempty_db = (live.len() >= 2).then(|| {
        let worst: f64 = live
            .iter()
            .map(|&a| {
                live.iter()
                    .filter(|&&b| b != a)
                    .map(|&b| {
                        let sep = euclidean(&centroids[a], &centroids[b]);
                        if sep > 0.0 {
                            (scatter[a] + scatter[b]) / sep
                        } else {
                            f64::INFINITY
                        }
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        worst / live.len() as f64
    });

    let db_index = match nonempty_db {
        Some(v) if empty_clusters.is_empty() => v,
        _ => f64::INFINITY,
    };
    Ok(QualityReport {
        db_index,
        per_cluster_scatter: scatter,
        empty_clusters,
        nonempty_db,
    })
}

fn euclidean(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Strict improvement: `a` beats `b` iff its index is lower. Degenerate
/// reports carry an infinite index and so lose to every finite one.
pub fn quality_better(a: &QualityReport, b: &QualityReport) -> bool {
    a.db_index < b.db_index
}

/// Adjusted Rand index between two hard labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ColupiError::DimensionMismatch(format!(
            "labelings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let row_sums: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let col_sums: f64 = (0..kb)
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let total = pairs(n as u64);
    let expected = row_sums * col_sums / total;
    let max_index = 0.5 * (row_sums + col_sums);
    if max_index == expected {
        // Both labelings trivial (single cluster or all singletons).
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
