//! Shared value types: datasets, partition matrices, per-round weights and
//! run configuration.
//!
//! Everything here is an immutable value once constructed. Site workers share
//! these read-only and produce new values instead of mutating.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ColupiError, Result};
use crate::quality::QualityReport;

/// Maximum allowed deviation of a partition row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// An N x d matrix of finite reals with one name per feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    feature_names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(ColupiError::InvalidData(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if d < 1 {
            return Err(ColupiError::InvalidData("need at least 1 feature".into()));
        }
        if feature_names.len() != d {
            return Err(ColupiError::DimensionMismatch(format!(
                "{} feature names for {d} columns",
                feature_names.len()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ColupiError::InvalidData(format!(
                "non-finite value {v} at row {i}, column {j}"
            )));
        }
        Ok(Self {
            values,
            feature_names,
        })
    }

    /// Builds a matrix with generated feature names `f0..f{d-1}`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(values, names)
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Selects the given feature columns, in the given order.
    pub fn select_features(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_features()) {
            return Err(ColupiError::DimensionMismatch(format!(
                "feature index {bad} out of range for {} features",
                self.n_features()
            )));
        }
        let values = self.values.select(Axis(1), columns);
        let names = columns
            .iter()
            .map(|&c| self.feature_names[c].clone())
            .collect();
        Self::new(values, names)
    }
}

/// The first invariant a candidate partition matrix violates.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionViolation {
    #[error("K must be ≥ 2 (got {0})")]
    TooFewClusters(usize),
    #[error("partition has no rows")]
    NoRows,
    #[error("row {row} column {col} holds {value}, outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
}

/// Checks every partition-matrix invariant and reports the first violation.
pub fn validate_partition(resp: &Array2<f64>) -> std::result::Result<(), PartitionViolation> {
    let (n, k) = resp.dim();
    if k < 2 {
        return Err(PartitionViolation::TooFewClusters(k));
    }
    if n == 0 {
        return Err(PartitionViolation::NoRows);
    }
    for (i, row) in resp.outer_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            // NaN fails both comparisons.
            if !(0.0..=1.0).contains(&v) {
                return Err(PartitionViolation::EntryOutOfRange {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let sum = row.sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(PartitionViolation::RowSum { row: i, sum });
        }
    }
    Ok(())
}

/// N x K row-stochastic matrix of cluster responsibilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct PartitionMatrix {
    resp: Array2<f64>,
}

impl PartitionMatrix {
    /// Wraps `resp` after checking it is a valid partition.
    pub fn new(resp: Array2<f64>) -> std::result::Result<Self, PartitionViolation> {
        validate_partition(&resp)?;
        Ok(Self { resp })
    }

    /// Divides every row of a non-negative weight matrix by its sum.
    pub fn from_weights(mut weights: Array2<f64>) -> Result<Self> {
        for (i, mut row) in weights.outer_iter_mut().enumerate() {
            if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(ColupiError::InvalidData(format!(
                    "row {i} has a negative or non-finite weight"
                )));
            }
            let sum = row.sum();
            if sum <= 0.0 {
                return Err(ColupiError::InvalidData(format!("row {i} has zero total weight")));
            }
            row.mapv_inplace(|v| v / sum);
        }
        Ok(Self::new(weights)?)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<Self, PartitionViolation> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            // Ragged input can only be reported through the row-sum rule.
            let row = rows.iter().position(|r| r.len() != k).unwrap_or(0);
            return Err(PartitionViolation::RowSum {
                row,
                sum: rows[row].iter().sum(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let resp = Array2::from_shape_vec((rows.len(), k), flat)
            .expect("row lengths checked above");
        Self::new(resp)
    }

    /// Uniform 1/K responsibilities for every observation.
    pub fn uniform(n: usize, k: usize) -> std::result::Result<Self, PartitionViolation> {
        Self::new(Array2::from_elem((n, k), 1.0 / k as f64))
    }

    /// One-hot responsibilities from hard labels.
    pub fn one_hot(labels: &[usize], k: usize) -> std::result::Result<Self, PartitionViolation> {
        let mut resp = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(PartitionViolation::EntryOutOfRange {
                    row: i,
                    col: l,
                    value: 1.0,
                });
            }
            resp[[i, l]] = 1.0;
        }
        Self::new(resp)
    }

    pub fn n_obs(&self) -> usize {
        self.resp.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.resp.ncols()
    }

    pub fn resp(&self) -> &Array2<f64> {
        &self.resp
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.resp.row(i)
    }

    pub fn validate(&self) -> std::result::Result<(), PartitionViolation> {
        validate_partition(&self.resp)
    }

    /// Hard labels by row argmax; ties go to the smallest cluster index.
    pub fn harden(&self) -> Vec<usize> {
        harden(self)
    }

    /// Reorders columns so that column `perm[k]` of `self` lands at position `k`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_clusters(), "permutation length must equal K");
        Self {
            resp: self.resp.select(Axis(1), perm),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.resp.outer_iter().map(|r| r.to_vec()).collect()
    }
}

impl From<PartitionMatrix> for Vec<Vec<f64>> {
    fn from(p: PartitionMatrix) -> Self {
        p.to_rows()
    }
}

impl TryFrom<Vec<Vec<f64>>> for PartitionMatrix {
    type Error = PartitionViolation;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, Self::Error> {
        Self::from_rows(&rows)
    }
}

/// Row-wise argmax, ties broken toward the smallest cluster index.
pub fn harden(p: &PartitionMatrix) -> Vec<usize> {
    p.resp.outer_iter().map(|row| argmax(row)).collect()
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-observation blending weights one site used in one round.
///
/// `alpha` weights the site's own partition, each entry of `betas` weights a
/// remote site's partition and is keyed by that site's id.
#[derive(Debug, Clone, PartialEq)]
pub struct CollabWeights {
    pub site: usize,
    pub alpha: Array1<f64>,
    pub betas: Vec<(usize, Array1<f64>)>,
}

impl CollabWeights {
    pub fn n_obs(&self) -> usize {
        self.alpha.len()
    }

    pub fn beta(&self, source: usize) -> Option<&Array1<f64>> {
        self.betas.iter().find(|(q, _)| *q == source).map(|(_, b)| b)
    }
}

/// P x P matrix of averaged weights: row p tells where site p sourced its
/// partition from in one round (diagonal = itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceMatrix {
    pub round: usize,
    pub weights: Vec<Vec<f64>>,
}

impl ConfidenceMatrix {
    pub fn n_sites(&self) -> usize {
        self.weights.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|p| self.weights[p][p]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Blend and refit, accept only strict quality improvements.
    Colupi,
    /// As `Colupi`, plus randomized candidate responsibilities each round.
    Rcolupi,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Colupi => f.write_str("colupi"),
            Variant::Rcolupi => f.write_str("rcolupi"),
        }
    }
}

/// How sites observe each other within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Every site reads the partitions all sites held at the start of the round.
    Synchronous,
    /// Site p reads the already-updated partitions of sites 0..p.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub max_rounds: usize,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub seed: u64,
    pub variant: Variant,
    pub rcolupi_restarts: usize,
    pub covariance_floor: f64,
    pub sweep: SweepMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_rounds: 50,
            em_max_iters: 100,
            em_tol: 1e-6,
            seed: 0,
            variant: Variant::Colupi,
            rcolupi_restarts: 1,
            covariance_floor: 1e-6,
            sweep: SweepMode::Synchronous,
        }
    }
}

impl RunConfig {
    pub fn with_clusters(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(ColupiError::InvalidConfig(msg.to_string()));
        if self.k < 2 {
            return fail("cluster count K must be at least 2");
        }
        if self.max_rounds < 1 {
            return fail("max_rounds must be at least 1");
        }
        if self.em_max_iters < 1 {
            return fail("em_max_iters must be at least 1");
        }
        if self.em_tol.is_nan() || self.em_tol <= 0.0 {
            return fail("em_tol must be positive");
        }
        if self.covariance_floor.is_nan() || self.covariance_floor <= 0.0 {
            return fail("covariance_floor must be positive");
        }
        Ok(())
    }

    /// Randomized candidates evaluated per site and round.
    pub fn random_candidates(&self) -> usize {
        match self.variant {
            Variant::Colupi => 0,
            Variant::Rcolupi => self.rcolupi_restarts,
        }
    }
}

/// One site: its private feature slice, learner state and acceptance history.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteState<P> {
    pub site_id: usize,
    pub data: DataMatrix,
    pub partition: PartitionMatrix,
    pub learner_params: P,
    pub quality: QualityReport,
    pub accepted_rounds: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn accepts_stochastic_rows() {
        assert_eq!(validate_partition(&array![[0.5, 0.5], [1.0, 0.0]]), Ok(()));
    }

    #[test]
    fn reports_bad_row_sum() {
        let err = validate_partition(&array![[0.6, 0.6]]).unwrap_err();
        assert_eq!(err, PartitionViolation::RowSum { row: 0, sum: 1.2 });
        assert_eq!(err.to_string(), "row 0 sums to 1.2");
    }

    #[test]
    fn rejects_single_cluster() {
        let err = validate_partition(&array![[1.0], [1.0]]).unwrap_err();
        assert_eq!(err, PartitionViolation::TooFewClusters(1));
        assert!(err.to_string().starts_with("K must be ≥ 2"));
    }

    #[test]
    fn rejects_out_of_range_and_nan() {
        assert!(matches!(
            validate_partition(&array![[1.5, -0.5]]),
            Err(PartitionViolation::EntryOutOfRange { row: 0, col: 0, .. })
        ));
        assert!(matches!(
            validate_partition(&array![[0.5, 0.5], [f64::NAN, 1.0]]),
            Err(PartitionViolation::EntryOutOfRange { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn harden_examples() {
        let p = PartitionMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_eq!(p.harden(), vec![0, 1]);
        let p = PartitionMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(p.harden(), vec![0]);
        let p = PartitionMatrix::from_rows(&[vec![0.3, 0.3, 0.4]]).unwrap();
        assert_eq!(p.harden(), vec![2]);
    }

    #[test]
    fn from_weights_renormalizes() {
        let p = PartitionMatrix::from_weights(array![[2.0, 2.0], [0.0, 3.0]]).unwrap();
        assert_eq!(p.resp(), &array![[0.5, 0.5], [0.0, 1.0]]);
        assert!(PartitionMatrix::from_weights(array![[0.0, 0.0]]).is_err());
    }

    #[test]
    fn data_matrix_rejects_nan_and_tiny_inputs() {
        assert!(DataMatrix::from_values(array![[1.0], [f64::INFINITY]]).is_err());
        assert!(DataMatrix::from_values(array![[1.0]]).is_err());
        assert!(DataMatrix::from_values(array![[1.0, 2.0], [3.0, 4.0]]).is_ok());
    }

    #[test]
    fn serde_round_trip_validates() {
        let p = PartitionMatrix::from_rows(&[vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: PartitionMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        assert!(serde_json::from_str::<PartitionMatrix>("[[0.7,0.7]]").is_err());
    }

    fn stochastic_rows() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..7).prop_flat_map(|k| {
            let rows = prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), 1..20);
            let perm = Just((0..k).collect::<Vec<_>>()).prop_shuffle();
            (rows, perm)
        })
    }

    proptest! {
        #[test]
        fn harden_is_permutation_equivariant((raw, perm) in stochastic_rows()) {
            let rows: Vec<Vec<f64>> = raw
                .iter()
                .map(|r| {
                    let s: f64 = r.iter().sum::<f64>() + 1e-9;
                    r.iter().map(|v| (v + 1e-9 / r.len() as f64) / s).collect()
                })
                .collect();
            let p = PartitionMatrix::from_weights(
                Array2::from_shape_vec((rows.len(), perm.len()), rows.concat()).unwrap(),
            ).unwrap();
            // Column perm[k] of p lands at k, so old label l maps to the k with perm[k] = l.
            let permuted = p.permute_columns(&perm);
            let mut inverse = vec![0; perm.len()];
            for (k, &l) in perm.iter().enumerate() {
                inverse[l] = k;
            }
            let labels = p.harden();
            let relabeled = permuted.harden();
            for (i, (&l, &m)) in labels.iter().zip(&relabeled).enumerate() {
                // Ties may resolve differently after permutation; only check strict maxima.
                let row = p.row(i);
                let ties = row.iter().filter(|&&v| v == row[l]).count();
                if ties == 1 {
                    prop_assert_eq!(inverse[l], m);
                }
            }
        }
    }
}
