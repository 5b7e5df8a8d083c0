//! Cluster-identity agreement between sites.
//!
//! Sites cluster independently, so cluster `k` at one site has no reason to
//! be cluster `k` at another. Before blending, each remote partition is
//! column-permuted to best match the local one, where "best" maximizes the
//! soft co-membership mass on the diagonal.

use ndarray::Array2;

use crate::error::{ColupiError, Result};
use crate::types::PartitionMatrix;

/// A column permutation and the total profit it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[k]` is the column assigned to row `k`.
    pub perm: Vec<usize>,
    pub score: f64,
}

/// `M[k][l] = sum_i reference[i,k] * other[i,l]`.
pub fn overlap_matrix(reference: &PartitionMatrix, other: &PartitionMatrix) -> Result<Array2<f64>> {
    if reference.n_obs() != other.n_obs() || reference.n_clusters() != other.n_clusters() {
        return Err(ColupiError::DimensionMismatch(format!(
            "cannot align a {}x{} partition to a {}x{} one",
            other.n_obs(),
            other.n_clusters(),
            reference.n_obs(),
            reference.n_clusters()
        )));
    }
    Ok(reference.resp().t().dot(other.resp()))
}

/// Maximum-profit perfect matching on a square matrix.
///
/// Among optimal permutations the lexicographically smallest is returned,
/// so an already-aligned input always maps to the identity.
pub fn hungarian_max(profit: &Array2<f64>) -> Assignment {
    let (rows, cols) = profit.dim();
    assert_eq!(rows, cols, "profit matrix must be square");
    let k = rows;
    if k == 0 {
        return Assignment {
            perm: Vec::new(),
            score: 0.0,
        };
    }
    let cost: Vec<Vec<f64>> = profit
        .outer_iter()
        .map(|r| r.iter().map(|&v| -v).collect())
        .collect();
    let best = min_cost(&cost).1;

    let scale = profit.iter().fold(1.0f64, |m, v| m.max(v.abs())) * k as f64;
    let tol = 1e-12 * scale;

    // Fix rows one at a time to the smallest column that still admits an
    // optimal completion.
    let mut perm = Vec::with_capacity(k);
    let mut used = vec![false; k];
    let mut fixed = 0.0;
    for row in 0..k {
        let free_rows: Vec<usize> = (row + 1..k).collect();
        let mut chosen = None;
        for col in (0..k).filter(|&c| !used[c]) {
            let free_cols: Vec<usize> = (0..k).filter(|&c| !used[c] && c != col).collect();
            let sub: Vec<Vec<f64>> = free_rows
                .iter()
                .map(|&r| free_cols.iter().map(|&c| cost[r][c]).collect())
                .collect();
            let rest = if sub.is_empty() { 0.0 } else { min_cost(&sub).1 };
            if fixed + cost[row][col] + rest <= best + tol {
                chosen = Some(col);
                break;
            }
        }
        // The unrestricted optimum is always reachable from a consistent prefix.
        let col = chosen.expect("an optimal completion exists");
        used[col] = true;
        fixed += cost[row][col];
        perm.push(col);
    }
    let score = perm.iter().enumerate().map(|(r, &c)| profit[[r, c]]).sum();
    Assignment { perm, score }
}

/// Classical O(n^3) shortest-augmenting-path Hungarian method with row and
/// column potentials. Returns the row-to-column assignment and its cost.
fn min_cost(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    (assignment, total)
}

/// Reorders the columns of `other` to agree with `reference`.
pub fn align_to(reference: &PartitionMatrix, other: &PartitionMatrix) -> Result<PartitionMatrix> {
    let overlap = overlap_matrix(reference, other)?;
    let assignment = hungarian_max(&overlap);
    Ok(other.permute_columns(&assignment.perm))
}
