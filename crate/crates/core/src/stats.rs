//! Rank-based comparison of several methods over several datasets:
//! Friedman test and Nemenyi critical difference.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{ColupiError, Result};

/// Scores (lower is better) and their per-dataset ranks, methods x datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    methods: Vec<String>,
    datasets: Vec<String>,
    scores: Vec<Vec<f64>>,
    ranks: Vec<Vec<f64>>,
}

impl RankTable {
    /// Ranks every dataset column; tied scores share their average rank.
    pub fn from_scores(methods: Vec<String>, datasets: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        let m = methods.len();
        let d = datasets.len();
        if scores.len() != m || scores.iter().any(|row| row.len() != d) {
            return Err(ColupiError::DimensionMismatch(format!(
                "score table must be {m} methods x {d} datasets"
            )));
        }
        if let Some(v) = scores.iter().flatten().find(|v| !v.is_finite()) {
            return Err(ColupiError::InvalidData(format!("non-finite score {v}")));
        }
        let mut ranks = vec![vec![0.0; d]; m];
        for j in 0..d {
            let column: Vec<f64> = scores.iter().map(|row| row[j]).collect();
            for (i, r) in average_ranks(&column).into_iter().enumerate() {
                ranks[i][j] = r;
            }
        }
        Ok(Self {
            methods,
            datasets,
            scores,
            ranks,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn ranks(&self) -> &[Vec<f64>] {
        &self.ranks
    }

    pub fn n_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        self.ranks
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }
}

/// 1-based ranks of `values` in ascending order, ties averaged.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

/// Friedman chi-square statistic on mean ranks, with a chi-square p-value.
pub fn friedman_statistic(table: &RankTable) -> Result<FriedmanResult> {
    let m = table.n_methods();
    let d = table.n_datasets();
    if m < 3 {
        return Err(ColupiError::Stats(format!("Friedman test needs at least 3 methods, got {m}")));
    }
    if d < 2 {
        return Err(ColupiError::Stats(format!("Friedman test needs at least 2 datasets, got {d}")));
    }
    let mf = m as f64;
    let sum_sq: f64 = table.mean_ranks().iter().map(|r| r * r).sum();
    let chi2 = 12.0 * d as f64 / (mf * (mf + 1.0)) * (sum_sq - mf * (mf + 1.0).powi(2) / 4.0);
    // Rounding can leave a tiny negative value for an exact null.
    let chi2 = chi2.max(0.0);
    let dist = ChiSquared::new(mf - 1.0).map_err(|e| ColupiError::Stats(e.to_string()))?;
    Ok(FriedmanResult {
        chi2,
        p_value: dist.sf(chi2),
        degrees_of_freedom: m - 1,
    })
}

/// Critical values of the two-tailed Nemenyi test for 2..=10 methods:
/// studentized range quantiles divided by sqrt(2).
const Q_ALPHA_005: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_ALPHA_010: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

pub fn nemenyi_q(methods: usize, alpha: f64) -> Result<f64> {
    if !(2..=10).contains(&methods) {
        return Err(ColupiError::Stats(format!(
            "Nemenyi critical values are tabulated for 2 to 10 methods, got {methods}"
        )));
    }
    let table = if alpha == 0.05 {
        &Q_ALPHA_005
    } else if alpha == 0.10 {
        &Q_ALPHA_010
    } else {
        return Err(ColupiError::Stats(format!(
            "unsupported significance level {alpha}; use 0.05 or 0.10"
        )));
    };
    Ok(table[methods - 2])
}

/// Critical difference between mean ranks at level `alpha`.
pub fn nemenyi_cd(methods: usize, datasets: usize, alpha: f64) -> Result<f64> {
    if datasets == 0 {
        return Err(ColupiError::Stats("need at least one dataset".into()));
    }
    let q = nemenyi_q(methods, alpha)?;
    let m = methods as f64;
    Ok(q * (m * (m + 1.0) / (6.0 * datasets as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedMethod {
    pub name: String,
    pub mean_rank: f64,
}

/// Methods ordered best first, and the groups of consecutive methods that
/// are not significantly different (the connecting bars of a critical
/// difference diagram). Groups hold positions into `methods`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalDiagram {
    pub methods: Vec<RankedMethod>,
    pub groups: Vec<Vec<usize>>,
}

impl CriticalDiagram {
    pub fn group_names(&self) -> Vec<Vec<String>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|&i| self.methods[i].name.clone()).collect())
            .collect()
    }
}

pub fn critical_diagram_data(table: &RankTable, cd: f64) -> CriticalDiagram {
    let means = table.mean_ranks();
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let methods: Vec<RankedMethod> = order
        .iter()
        .map(|&i| RankedMethod {
            name: table.methods[i].clone(),
            mean_rank: means[i],
        })
        .collect();
    let sorted: Vec<f64> = methods.iter().map(|m| m.mean_rank).collect();
    CriticalDiagram {
        groups: group_by_cd(&sorted, cd),
        methods,
    }
}

/// Maximal runs `i..=j` of ascending mean ranks with `r[j] - r[i] < cd`.
pub fn group_by_cd(sorted_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last_end = None;
    for i in 0..sorted_ranks.len() {
        let mut j = i;
        while j + 1 < sorted_ranks.len() && sorted_ranks[j + 1] - sorted_ranks[i] < cd {
            j += 1;
        }
        // A run ending where the previous one ended is contained in it.
        if last_end.is_some_and(|e| j <= e) {
            continue;
        }
        groups.push((i..=j).collect());
        last_end = Some(j);
    }
    groups
}
