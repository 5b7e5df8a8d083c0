//! Collaborative clustering over vertically partitioned data.
//!
//! Each site owns a disjoint subset of the features for the same set of
//! observations. Sites cluster locally, then repeatedly blend their soft
//! partitions with the other sites' partitions, weighting every source row by
//! how certain it is. A site keeps a blended result only when it improves its
//! own Davies–Bouldin index.

pub mod alignment;
pub mod collab;
pub mod data;
pub mod error;
pub mod learner;
pub mod orchestrator;
pub mod quality;
pub mod stats;
pub mod types;

pub use alignment::{align_to, hungarian_max, overlap_matrix, Assignment};
pub use collab::{collab_update, collab_weights, confidence_matrix, normalized_entropy, row_entropy, EntropyVector, Remote};
pub use error::{ColupiError, Result};
pub use learner::{DiagonalGmm, GmmParams, Learner, LearnerFit};
pub use orchestrator::{
    collaboration_round, derive_seed, local_step, run, run_colupi, run_rcolupi, RoundTrace, RunReport, SiteRound,
    Termination,
};
pub use quality::{adjusted_rand_index, davies_bouldin, quality_better, QualityReport};
pub use types::{
    harden, CollabWeights, ConfidenceMatrix, DataMatrix, PartitionMatrix, RunConfig, SiteState, SweepMode, Variant,
};
