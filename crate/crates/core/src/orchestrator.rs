//! The collaboration protocol.
//!
//! A run is a local step followed by collaboration rounds. In each round every
//! site aligns its peers' partitions to its own, blends them in with
//! entropy-based weights, retrains its learner from the blend and keeps the
//! result only if its Davies–Bouldin index strictly improves. Rejected
//! proposals leave the site untouched. The run stops after the first round in
//! which no site improves, or after `max_rounds`.
//!
//! Sites only ever see each other's [`PartitionMatrix`] values: the
//! per-site proposal takes the site's own state plus a list of [`Remote`]
//! partitions, never another site's data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::align_to;
use crate::collab::{collab_update, confidence_matrix, Remote};
use crate::error::{ColupiError, Result};
use crate::learner::{Learner, LearnerFit};
use crate::quality::{adjusted_rand_index, davies_bouldin, quality_better, QualityReport};
use crate::types::{
    CollabWeights, ConfidenceMatrix, DataMatrix, PartitionMatrix, RunConfig, SiteState, SweepMode,
    Variant,
};

pub const REPORT_SCHEMA: &str = "colupi/1";

/// Which proposal a site evaluated as its best in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// Blend of the site's current partition with its peers.
    Blend,
    /// Blend of the i-th randomized partition with its peers.
    Randomized(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRound {
    pub site: usize,
    #[serde(with = "finite_or_null")]
    pub pre_quality: f64,
    #[serde(with = "finite_or_null")]
    pub post_quality: f64,
    pub accepted: bool,
    pub candidate: Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub per_site: Vec<SiteRound>,
    pub confidence: ConfidenceMatrix,
}

impl RoundTrace {
    pub fn acceptances(&self) -> usize {
        self.per_site.iter().filter(|s| s.accepted).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoImprovement,
    MaxRounds,
}

/// Adjusted Rand index of every site against known labels, before and after
/// collaboration. Reporting only; never visible to the learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScores {
    pub local_ari: Vec<f64>,
    pub final_ari: Vec<f64>,
}

/// Full trace of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n_obs: usize,
    pub site_features: Vec<Vec<String>>,
    #[serde(with = "finite_or_null::vec")]
    pub local_step_qualities: Vec<f64>,
    pub rounds: Vec<RoundTrace>,
    #[serde(with = "finite_or_null::vec")]
    pub final_qualities: Vec<f64>,
    pub terminated_reason: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthScores>,
    pub final_partitions: Vec<PartitionMatrix>,
    #[serde(skip)]
    pub local_partitions: Vec<PartitionMatrix>,
}

impl RunReport {
    pub fn n_sites(&self) -> usize {
        self.final_partitions.len()
    }

    /// Quality of every site after each round, starting with the local step.
    pub fn quality_table(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![self.local_step_qualities.clone()];
        let mut current = self.local_step_qualities.clone();
        for r in &self.rounds {
            for s in &r.per_site {
                if s.accepted {
                    current[s.site] = s.post_quality;
                }
            }
            rows.push(current.clone());
        }
        rows
    }

    pub fn mean_local_quality(&self) -> f64 {
        mean(&self.local_step_qualities)
    }

    pub fn mean_final_quality(&self) -> f64 {
        mean(&self.final_qualities)
    }

    /// Scores local and final partitions against ground-truth labels.
    pub fn score_against(&mut self, labels: &[usize]) -> Result<()> {
        if self.local_partitions.is_empty() {
            return Err(ColupiError::InvalidData(
                "local partitions are not available in a deserialized report".into(),
            ));
        }
        let ari = |parts: &[PartitionMatrix]| -> Result<Vec<f64>> {
            parts.iter().map(|p| adjusted_rand_index(&p.harden(), labels)).collect()
        };
        self.ground_truth = Some(GroundTruthScores {
            local_ari: ari(&self.local_partitions)?,
            final_ari: ari(&self.final_partitions)?,
        });
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn site_quality(data: &DataMatrix, partition: &PartitionMatrix) -> Result<QualityReport> {
    davies_bouldin(data, &partition.harden(), partition.n_clusters())
}

/// Trains every site on its own slice.
pub fn local_step<L: Learner>(
    learner: &L,
    slices: Vec<DataMatrix>,
    cfg: &RunConfig,
) -> Result<Vec<SiteState<L::Params>>> {
    cfg.validate()?;
    if slices.len() < 2 {
        return Err(ColupiError::TooFewSites(slices.len()));
    }
    let n = slices[0].n_obs();
    if let Some((p, s)) = slices.iter().enumerate().find(|(_, s)| s.n_obs() != n) {
        return Err(ColupiError::DimensionMismatch(format!(
            "site {p} has {} observations, site 0 has {n}",
            s.n_obs()
        )));
    }
    if n < cfg.k {
        return Err(ColupiError::TooFewObservations { n, k: cfg.k });
    }

    slices
        .into_par_iter()
        .enumerate()
        .map(|(site_id, data)| {
            let seed = cfg.seed.wrapping_add(site_id as u64);
            let init = learner.init_responsibilities(&data, cfg.k, seed)?;
            let fit = learner.fit_from_responsibilities(&data, &init, cfg)?;
            let quality = site_quality(&data, &fit.partition)?;
            Ok(SiteState {
                site_id,
                data,
                partition: fit.partition,
                learner_params: fit.params,
                quality,
                accepted_rounds: Vec::new(),
            })
        })
        .collect()
}

struct Proposal<P> {
    candidate: Candidate,
    fit: LearnerFit<P>,
    quality: QualityReport,
    weights: CollabWeights,
}

/// Builds and evaluates the best collaboration proposal for one site.
fn propose<L: Learner>(
    learner: &L,
    site: &SiteState<L::Params>,
    remotes: &[Remote<'_>],
    cfg: &RunConfig,
    round: usize,
) -> Result<Proposal<L::Params>> {
    let aligned: Vec<PartitionMatrix> = remotes
        .iter()
        .map(|r| align_to(&site.partition, r.partition))
        .collect::<Result<_>>()?;
    let aligned_remotes: Vec<Remote<'_>> = remotes
        .iter()
        .zip(&aligned)
        .map(|(r, p)| Remote::new(r.site, p))
        .collect();

    let evaluate = |candidate: Candidate, start: &PartitionMatrix| -> Result<Proposal<L::Params>> {
        let (blend, weights) = collab_update(site.site_id, start, &aligned_remotes)?;
        let fit = learner.fit_from_responsibilities(&site.data, &blend, cfg)?;
        let quality = site_quality(&site.data, &fit.partition)?;
        Ok(Proposal {
            candidate,
            fit,
            quality,
            weights,
        })
    };

    let mut best = evaluate(Candidate::Blend, &site.partition)?;
    for restart in 0..cfg.random_candidates() {
        let seed = derive_seed(cfg.seed, &[round as u64, site.site_id as u64, restart as u64]);
        let random = dirichlet_partition(site.partition.n_obs(), site.partition.n_clusters(), seed)?;
        let candidate = evaluate(Candidate::Randomized(restart), &random)?;
        if quality_better(&candidate.quality, &best.quality) {
            best = candidate;
        }
    }
    Ok(best)
}

/// Rows drawn from a flat Dirichlet distribution.
fn dirichlet_partition(n: usize, k: usize, seed: u64) -> Result<PartitionMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..n * k)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            e.max(f64::MIN_POSITIVE)
        })
        .collect();
    let weights = ndarray::Array2::from_shape_vec((n, k), draws).expect("n * k draws");
    PartitionMatrix::from_weights(weights)
}

/// Mixes a base seed with a path of indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

fn settle<P: Clone>(site: &SiteState<P>, proposal: Proposal<P>) -> (SiteState<P>, SiteRound, CollabWeights) {
    let accepted = quality_better(&proposal.quality, &site.quality);
    let outcome = SiteRound {
        site: site.site_id,
        pre_quality: site.quality.db_index,
        post_quality: proposal.quality.db_index,
        accepted,
        candidate: proposal.candidate,
    };
    let mut history = site.accepted_rounds.clone();
    history.push(accepted);
    let next = if accepted {
        SiteState {
            site_id: site.site_id,
            data: site.data.clone(),
            partition: proposal.fit.partition,
            learner_params: proposal.fit.params,
            quality: proposal.quality,
            accepted_rounds: history,
        }
    } else {
        SiteState {
            accepted_rounds: history,
            ..site.clone()
        }
    };
    (next, outcome, proposal.weights)
}

/// One collaboration round over all sites.
pub fn collaboration_round<L: Learner>(
    learner: &L,
    sites: &[SiteState<L::Params>],
    cfg: &RunConfig,
    round: usize,
) -> Result<(Vec<SiteState<L::Params>>, RoundTrace)> {
    if sites.len() < 2 {
        return Err(ColupiError::TooFewSites(sites.len()));
    }
    let remotes_of = |p: usize, partitions: &[&PartitionMatrix]| -> Vec<(usize, PartitionMatrix)> {
        (0..partitions.len())
            .filter(|&q| q != p)
            .map(|q| (q, partitions[q].clone()))
            .collect()
    };

    let settled: Vec<(SiteState<L::Params>, SiteRound, CollabWeights)> = match cfg.sweep {
        SweepMode::Synchronous => {
            let start: Vec<&PartitionMatrix> = sites.iter().map(|s| &s.partition).collect();
            sites
                .par_iter()
                .map(|site| {
                    let owned = remotes_of(site.site_id, &start);
                    let remotes: Vec<Remote<'_>> = owned.iter().map(|(q, p)| Remote::new(*q, p)).collect();
                    let proposal = propose(learner, site, &remotes, cfg, round)?;
                    Ok(settle(site, proposal))
                })
                .collect::<Result<_>>()?
        }
        SweepMode::Sequential => {
            let mut current: Vec<PartitionMatrix> = sites.iter().map(|s| s.partition.clone()).collect();
            let mut out = Vec::with_capacity(sites.len());
            for site in sites {
                let view: Vec<&PartitionMatrix> = current.iter().collect();
                let owned = remotes_of(site.site_id, &view);
                let remotes: Vec<Remote<'_>> = owned.iter().map(|(q, p)| Remote::new(*q, p)).collect();
                let proposal = propose(learner, site, &remotes, cfg, round)?;
                let entry = settle(site, proposal);
                current[site.site_id] = entry.0.partition.clone();
                out.push(entry);
            }
            out
        }
    };

    let mut next = Vec::with_capacity(sites.len());
    let mut per_site = Vec::with_capacity(sites.len());
    let mut weights = Vec::with_capacity(sites.len());
    for (state, outcome, w) in settled {
        next.push(state);
        per_site.push(outcome);
        weights.push(w);
    }
    let confidence = confidence_matrix(round, &weights)?;
    Ok((
        next,
        RoundTrace {
            round,
            per_site,
            confidence,
        },
    ))
}

/// Local step plus collaboration rounds, following `cfg.variant`.
pub fn run<L: Learner>(learner: &L, slices: Vec<DataMatrix>, cfg: &RunConfig) -> Result<RunReport> {
    let site_features = slices.iter().map(|s| s.feature_names().to_vec()).collect();
    let mut sites = local_step(learner, slices, cfg)?;
    let local_step_qualities = sites.iter().map(|s| s.quality.db_index).collect();
    let local_partitions = sites.iter().map(|s| s.partition.clone()).collect();

    let mut rounds = Vec::new();
    let mut terminated_reason = Termination::MaxRounds;
    for round in 1..=cfg.max_rounds {
        let (next, trace) = collaboration_round(learner, &sites, cfg, round)?;
        sites = next;
        let improved = trace.acceptances() > 0;
        log::info!(
            "round {round}: {} of {} sites accepted",
            trace.acceptances(),
            sites.len()
        );
        rounds.push(trace);
        if !improved {
            terminated_reason = Termination::NoImprovement;
            break;
        }
    }

    Ok(RunReport {
        config: cfg.clone(),
        n_obs: sites[0].data.n_obs(),
        site_features,
        local_step_qualities,
        rounds,
        final_qualities: sites.iter().map(|s| s.quality.db_index).collect(),
        terminated_reason,
        ground_truth: None,
        final_partitions: sites.into_iter().map(|s| s.partition).collect(),
        local_partitions,
    })
}

pub fn run_colupi<L: Learner>(learner: &L, slices: Vec<DataMatrix>, cfg: &RunConfig) -> Result<RunReport> {
    let cfg = RunConfig {
        variant: Variant::Colupi,
        ..cfg.clone()
    };
    run(learner, slices, &cfg)
}

pub fn run_rcolupi<L: Learner>(learner: &L, slices: Vec<DataMatrix>, cfg: &RunConfig) -> Result<RunReport> {
    let cfg = RunConfig {
        variant: Variant::Rcolupi,
        ..cfg.clone()
    };
    run(learner, slices, &cfg)
}

/// Degenerate (infinite) quality values travel through JSON as `null`.
mod finite_or_null {
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

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
            opt.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let opt = Vec::<Option<f64>>::deserialize(d)?;
            Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
        }
    }
}
