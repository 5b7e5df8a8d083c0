//! Entropy-weighted blending of partition matrices.
//!
//! Every observation carries a normalized Shannon entropy in `[0, 1]` at every
//! site. A site keeps its own responsibilities where it is certain and its
//! peers are not, and borrows from a peer where it is uncertain and that peer
//! is certain:
//!
//! ```text
//! alpha_i   = mean_q H(R_q,i) * (1 - H(R_p,i))
//! beta_q,i  = H(R_p,i) * (1 - H(R_q,i))
//! R_p,i    <- alpha_i * R_p,i + sum_q beta_q,i * R_q,i      (then row-normalized)
//! ```
//!
//! where `H` is the base-2 entropy of a row divided by `log2(K)`.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{ColupiError, Result};
use crate::types::{CollabWeights, ConfidenceMatrix, PartitionMatrix};

/// Probabilities at or below this are treated as exact zeros in `p log p`.
pub const PROBABILITY_EPSILON: f64 = 1e-15;

/// Normalized entropies this close to 0 or 1 are snapped to the bound.
pub const ENTROPY_SNAP: f64 = 1e-12;

/// Raw weights below this count as "no information" for an observation.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

/// Normalized entropy of each responsibility row, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyVector(Array1<f64>);

impl EntropyVector {
    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }
}

impl std::ops::Index<usize> for EntropyVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Entropy of a single probability row divided by `log2(K)`.
pub fn normalized_entropy(row: ArrayView1<'_, f64>) -> f64 {
    let k = row.len();
    debug_assert!(k >= 2, "normalized entropy needs K >= 2");
    let h: f64 = row
        .iter()
        .filter(|&&p| p > PROBABILITY_EPSILON)
        .map(|&p| -p * p.log2())
        .sum();
    let h = h / (k as f64).log2();
    if h <= ENTROPY_SNAP {
        0.0
    } else if h >= 1.0 - ENTROPY_SNAP {
        1.0
    } else {
        h
    }
}

pub fn row_entropy(p: &PartitionMatrix) -> EntropyVector {
    EntropyVector(p.resp().outer_iter().map(normalized_entropy).collect())
}

/// A remote site's partition, already aligned to the local cluster order.
#[derive(Debug, Clone, Copy)]
pub struct Remote<'a> {
    pub site: usize,
    pub partition: &'a PartitionMatrix,
}

impl<'a> Remote<'a> {
    pub fn new(site: usize, partition: &'a PartitionMatrix) -> Self {
        Self { site, partition }
    }
}

fn check_shapes(local: &PartitionMatrix, remotes: &[Remote<'_>]) -> Result<()> {
    if remotes.is_empty() {
        return Err(ColupiError::InvalidData(
            "collaboration needs at least one remote partition".into(),
        ));
    }
    for r in remotes {
        if r.partition.n_obs() != local.n_obs() || r.partition.n_clusters() != local.n_clusters() {
            return Err(ColupiError::DimensionMismatch(format!(
                "remote site {} is {}x{}, local is {}x{}",
                r.site,
                r.partition.n_obs(),
                r.partition.n_clusters(),
                local.n_obs(),
                local.n_clusters()
            )));
        }
    }
    Ok(())
}

/// Raw (unnormalized) self and cross weights for one site.
pub fn collab_weights(
    local_site: usize,
    local: &PartitionMatrix,
    remotes: &[Remote<'_>],
) -> Result<CollabWeights> {
    check_shapes(local, remotes)?;
    let h_local = row_entropy(local);
    let h_remote: Vec<EntropyVector> = remotes.iter().map(|r| row_entropy(r.partition)).collect();
    Ok(raw_weights(local_site, &h_local, remotes, &h_remote))
}

fn raw_weights(
    local_site: usize,
    h_local: &EntropyVector,
    remotes: &[Remote<'_>],
    h_remote: &[EntropyVector],
) -> CollabWeights {
    let n = h_local.len();
    let inv_remotes = 1.0 / remotes.len() as f64;
    let alpha = Array1::from_shape_fn(n, |i| {
        let mean_remote: f64 = h_remote.iter().map(|h| h[i]).sum::<f64>() * inv_remotes;
        mean_remote * (1.0 - h_local[i])
    });
    let betas = remotes
        .iter()
        .zip(h_remote)
        .map(|(r, h)| (r.site, Array1::from_shape_fn(n, |i| h_local[i] * (1.0 - h[i]))))
        .collect();
    CollabWeights {
        site: local_site,
        alpha,
        betas,
    }
}

/// Blends `local` with its aligned remotes.
///
/// Returns the new partition and the row-normalized weights that produced
/// it. Observations where every raw weight is below [`DEGENERATE_WEIGHT`]
/// keep the local row and record `alpha = 1`.
pub fn collab_update(
    local_site: usize,
    local: &PartitionMatrix,
    remotes: &[Remote<'_>],
) -> Result<(PartitionMatrix, CollabWeights)> {
    let raw = collab_weights(local_site, local, remotes)?;
    let (n, k) = (local.n_obs(), local.n_clusters());

    let mut out = Array2::<f64>::zeros((n, k));
    let mut alpha = Array1::<f64>::zeros(n);
    let mut betas: Vec<Array1<f64>> = vec![Array1::zeros(n); remotes.len()];

    for i in 0..n {
        let a = raw.alpha[i];
        let bs: Vec<f64> = raw.betas.iter().map(|(_, b)| b[i]).collect();
        let mut row = out.row_mut(i);

        if a < DEGENERATE_WEIGHT && bs.iter().all(|&b| b < DEGENERATE_WEIGHT) {
            row.assign(&local.row(i));
            alpha[i] = 1.0;
            continue;
        }

        let total = a + bs.iter().sum::<f64>();
        alpha[i] = a / total;
        for (q, &b) in bs.iter().enumerate() {
            betas[q][i] = b / total;
        }

        // A single contributing source is copied verbatim so that no
        // renormalization rounding creeps into an unchanged row.
        let mut sources = std::iter::once((a, local.row(i)))
            .chain(bs.iter().zip(remotes).map(|(&b, r)| (b, r.partition.row(i))))
            .filter(|(w, _)| *w > 0.0);
        let first = sources.next();
        let second = sources.next();
        match (first, second) {
            (Some((_, only)), None) => row.assign(&only),
            _ => {
                row.scaled_add(alpha[i], &local.row(i));
                for (q, r) in remotes.iter().enumerate() {
                    row.scaled_add(betas[q][i], &r.partition.row(i));
                }
                let s = row.sum();
                row.mapv_inplace(|v| (v / s).clamp(0.0, 1.0));
            }
        }
    }

    let weights = CollabWeights {
        site: local_site,
        alpha,
        betas: remotes.iter().map(|r| r.site).zip(betas).collect(),
    };
    Ok((PartitionMatrix::new(out)?, weights))
}

/// Averages each site's applied weights over observations into a P x P
/// matrix; row p has `C[p][p] = mean alpha` and `C[p][q] = mean beta from q`.
pub fn confidence_matrix(round: usize, all_weights: &[CollabWeights]) -> Result<ConfidenceMatrix> {
    let p_sites = all_weights.len();
    if p_sites < 2 {
        return Err(ColupiError::TooFewSites(p_sites));
    }
    let n = all_weights[0].n_obs();
    if n == 0 {
        return Err(ColupiError::InvalidData("weights cover no observations".into()));
    }
    let mut weights = vec![vec![f64::NAN; p_sites]; p_sites];
    for w in all_weights {
        let p = w.site;
        if p >= p_sites || !weights[p][p].is_nan() {
            return Err(ColupiError::InvalidData(format!(
                "site id {p} is out of range or repeated among {p_sites} sites"
            )));
        }
        if w.n_obs() != n || w.betas.iter().any(|(_, b)| b.len() != n) {
            return Err(ColupiError::DimensionMismatch(format!(
                "site {p} weights do not cover {n} observations"
            )));
        }
        weights[p][p] = w.alpha.sum() / n as f64;
        for q in (0..p_sites).filter(|&q| q != p) {
            let beta = w.beta(q).ok_or_else(|| {
                ColupiError::InvalidData(format!("site {p} has no weight for source site {q}"))
            })?;
            weights[p][q] = beta.sum() / n as f64;
        }
    }
    Ok(ConfidenceMatrix { round, weights })
}
