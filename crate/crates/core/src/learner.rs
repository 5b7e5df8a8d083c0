//! Local probabilistic clusterers.
//!
//! Collaboration only ever touches responsibilities, so any learner that can
//! (a) produce an initial partition, (b) resume training from an arbitrary
//! partition and (c) report posterior responsibilities can take part. The
//! reference learner is a diagonal-covariance Gaussian mixture fitted by EM.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ColupiError, Result};
use crate::types::{DataMatrix, PartitionMatrix, RunConfig};

/// Components whose total responsibility falls below this are re-seeded.
pub const DEGENERATE_MASS: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Outcome of resuming a learner from a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerFit<P> {
    pub params: P,
    /// Responsibilities under `params`.
    pub partition: PartitionMatrix,
    /// Mean per-observation log-likelihood after every E-step, in order.
    pub log_likelihood: Vec<f64>,
    /// `(trace index, component)` for every component re-seeded in the
    /// M-step that preceded that trace entry.
    pub reseeded: Vec<(usize, usize)>,
}

pub trait Learner: Sync {
    type Params: Clone + PartialEq + std::fmt::Debug + Send + Sync;

    /// Partition used to start the local step.
    fn init_responsibilities(&self, data: &DataMatrix, k: usize, seed: u64) -> Result<PartitionMatrix>;

    /// Trains starting from `resp` (parameters estimated from it first).
    fn fit_from_responsibilities(
        &self,
        data: &DataMatrix,
        resp: &PartitionMatrix,
        cfg: &RunConfig,
    ) -> Result<LearnerFit<Self::Params>>;

    /// Posterior cluster membership of every observation.
    fn responsibilities(&self, data: &DataMatrix, params: &Self::Params) -> Result<PartitionMatrix>;
}

/// Diagonal Gaussian mixture parameters. All matrices are K x d.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub mixing: Array1<f64>,
}

impl GmmParams {
    pub fn n_components(&self) -> usize {
        self.mixing.len()
    }
}

/// Diagonal-covariance Gaussian mixture fitted by expectation-maximization.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiagonalGmm;

impl Learner for DiagonalGmm {
    type Params = GmmParams;

    /// k-means++ seeding of K centers, then a unit-temperature softmax over
    /// negative squared distances to the centers.
    fn init_responsibilities(&self, data: &DataMatrix, k: usize, seed: u64) -> Result<PartitionMatrix> {
        let n = data.n_obs();
        if k < 2 {
            return Err(ColupiError::InvalidConfig("K must be at least 2".into()));
        }
        if n < k {
            return Err(ColupiError::TooFewObservations { n, k });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = data.values();

        let mut centers = Vec::with_capacity(k);
        centers.push(rng.random_range(0..n));
        let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist_rows(x, i, centers[0])).collect();
        while centers.len() < k {
            let total: f64 = nearest.iter().sum();
            let next = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut pick = None;
                for (i, &w) in nearest.iter().enumerate() {
                    if w > 0.0 {
                        if target < w {
                            pick = Some(i);
                            break;
                        }
                        target -= w;
                    }
                }
                // Rounding can run past the end; fall back to the last candidate.
                pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).unwrap())
            } else {
                rng.random_range(0..n)
            };
            centers.push(next);
            for (i, m) in nearest.iter_mut().enumerate() {
                *m = m.min(sq_dist_rows(x, i, next));
            }
        }

        let mut resp = Array2::zeros((n, k));
        for i in 0..n {
            let logits: Vec<f64> = centers.iter().map(|&c| -sq_dist_rows(x, i, c)).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for (j, e) in exps.iter().enumerate() {
                resp[[i, j]] = e / sum;
            }
        }
        Ok(PartitionMatrix::new(resp)?)
    }

    /// One M-step from `resp`, then EM until the mean log-likelihood gains
    /// less than `cfg.em_tol` or `cfg.em_max_iters` iterations have run.
    fn fit_from_responsibilities(
        &self,
        data: &DataMatrix,
        resp: &PartitionMatrix,
        cfg: &RunConfig,
    ) -> Result<LearnerFit<GmmParams>> {
        let n = data.n_obs();
        let k = resp.n_clusters();
        if resp.n_obs() != n {
            return Err(ColupiError::DimensionMismatch(format!(
                "partition has {} rows, data has {n}",
                resp.n_obs()
            )));
        }
        if n < k {
            return Err(ColupiError::TooFewObservations { n, k });
        }

        let mut reseeded = Vec::new();
        let (mut params, fresh) = m_step(data, resp.resp(), cfg.covariance_floor);
        reseeded.extend(fresh.into_iter().map(|c| (0, c)));
        let (mut current, mut ll) = e_step(data, &params);
        let mut trace = vec![ll];

        for _ in 0..cfg.em_max_iters {
            let (next_params, fresh) = m_step(data, &current, cfg.covariance_floor);
            let (next_resp, next_ll) = e_step(data, &next_params);
            let had_reseed = !fresh.is_empty();
            reseeded.extend(fresh.into_iter().map(|c| (trace.len(), c)));
            trace.push(next_ll);
            let gain = next_ll - ll;
            params = next_params;
            current = next_resp;
            ll = next_ll;
            if !had_reseed && gain < cfg.em_tol {
                break;
            }
        }

        for &(at, component) in &reseeded {
            log::debug!("re-seeded empty component {component} before EM step {at}");
        }
        Ok(LearnerFit {
            params,
            partition: PartitionMatrix::new(current)?,
            log_likelihood: trace,
            reseeded,
        })
    }

    fn responsibilities(&self, data: &DataMatrix, params: &GmmParams) -> Result<PartitionMatrix> {
        if params.means.ncols() != data.n_features() {
            return Err(ColupiError::DimensionMismatch(format!(
                "parameters have {} features, data has {}",
                params.means.ncols(),
                data.n_features()
            )));
        }
        Ok(PartitionMatrix::new(e_step(data, params).0)?)
    }
}

fn sq_dist_rows(x: &Array2<f64>, a: usize, b: usize) -> f64 {
    x.row(a)
        .iter()
        .zip(x.row(b))
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

/// Weighted means, variances and mixing proportions. Returns the ids of
/// components that had to be re-seeded.
fn m_step(data: &DataMatrix, resp: &Array2<f64>, floor: f64) -> (GmmParams, Vec<usize>) {
    let x = data.values();
    let (n, d) = x.dim();
    let k = resp.ncols();
    let mass = resp.sum_axis(Axis(0));

    let mut means = resp.t().dot(x);
    let mut variances = Array2::<f64>::zeros((k, d));
    let mut mixing = Array1::<f64>::zeros(k);
    let mut reseeded = Vec::new();
    let mut taken = vec![false; n];

    for c in 0..k {
        if mass[c] < DEGENERATE_MASS {
            // Restart at the observation the current model explains worst.
            let worst = (0..n)
                .filter(|&i| !taken[i])
                .min_by(|&a, &b| {
                    let ma = resp.row(a).fold(0.0f64, |m, &v| m.max(v));
                    let mb = resp.row(b).fold(0.0f64, |m, &v| m.max(v));
                    ma.total_cmp(&mb)
                })
                .unwrap_or(0);
            taken[worst] = true;
            means.row_mut(c).assign(&x.row(worst));
            let global_mean = x.mean_axis(Axis(0)).expect("data has rows");
            for j in 0..d {
                let v = x.column(j).iter().map(|&v| (v - global_mean[j]).powi(2)).sum::<f64>() / n as f64;
                variances[[c, j]] = v.max(floor);
            }
            mixing[c] = 1.0 / n as f64;
            reseeded.push(c);
            continue;
        }
        let inv = 1.0 / mass[c];
        means.row_mut(c).mapv_inplace(|v| v * inv);
        for i in 0..n {
            let r = resp[[i, c]];
            if r == 0.0 {
                continue;
            }
            for j in 0..d {
                let diff = x[[i, j]] - means[[c, j]];
                variances[[c, j]] += r * diff * diff;
            }
        }
        variances.row_mut(c).mapv_inplace(|v| (v * inv).max(floor));
        mixing[c] = mass[c] / n as f64;
    }
    let total = mixing.sum();
    mixing.mapv_inplace(|v| v / total);
    (
        GmmParams {
            means,
            variances,
            mixing,
        },
        reseeded,
    )
}

/// Posterior responsibilities and mean per-observation log-likelihood.
fn e_step(data: &DataMatrix, params: &GmmParams) -> (Array2<f64>, f64) {
    let x = data.values();
    let (n, d) = x.dim();
    let k = params.n_components();

    // Per-component constant: log mixing - 0.5 * sum_j ln(2 pi var_j).
    let constants: Vec<f64> = (0..k)
        .map(|c| {
            let log_det: f64 = params.variances.row(c).iter().map(|v| v.ln()).sum();
            params.mixing[c].ln() - 0.5 * (d as f64 * LN_2PI + log_det)
        })
        .collect();

    let mut resp = Array2::<f64>::zeros((n, k));
    let mut total_ll = 0.0;
    let mut logp = vec![0.0; k];
    for i in 0..n {
        for (c, lp) in logp.iter_mut().enumerate() {
            let mut quad = 0.0;
            for j in 0..d {
                let diff = x[[i, j]] - params.means[[c, j]];
                quad += diff * diff / params.variances[[c, j]];
            }
            *lp = constants[c] - 0.5 * quad;
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logp.iter().map(|l| (l - max).exp()).sum();
        for (c, l) in logp.iter().enumerate() {
            resp[[i, c]] = (l - max).exp() / sum;
        }
        total_ll += max + sum.ln();
    }
    (resp, total_ll / n as f64)
}
