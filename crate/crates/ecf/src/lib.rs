//! Scoring of explanation methods against three consistency checks —
//! identity, separability and stability — for both regression and
//! classification, with exact formulations at small scale and deterministic
//! sampled/binned heuristics at large scale.
//!
//! The crate is organised around the evaluation pipeline:
//!
//! - [`core`]: the shared data model (objects, predictions, explanations,
//!   distance matrices, verdicts and report structures) with validation at
//!   construction.
//! - [`metrics`]: Euclidean distances, tie-aware Spearman rank correlation
//!   and the Jaccard index.
//! - [`clustering`]: seeded k-means and agglomerative clustering (single and
//!   Ward linkage) backing the classification stability check.
//! - [`axioms`]: the three checks and the [`axioms::evaluate`] orchestration
//!   producing an [`axioms::EvaluationReport`].
//! - [`scalable`]: sampled identity probing, duplicate-scan separability,
//!   quantile-binned regression stability and stratified sampling for data
//!   too large for the exact paths.
//! - [`explainers`]: reference explanation methods (exact Shapley with
//!   marginal masking, a local linear surrogate) and toy prediction models
//!   so the whole pipeline runs end to end with no external tools.
//! - [`io`] / [`report`]: strict numeric CSV ingestion and byte-stable
//!   report output (JSON, markdown, plot-data CSV).
//! - [`demo`]: seeded synthetic datasets exercising everything above.

pub mod axioms;
pub mod clustering;
pub mod core;
pub mod demo;
pub mod error;
pub mod explainers;
pub mod io;
pub mod metrics;
pub mod report;
pub mod scalable;

pub use crate::axioms::{
    evaluate, EcfConfig, EvaluationReport, ExplanationSource, PairCounting, RegressionFallback,
    SEPARABILITY_CAVEAT,
};
pub use crate::core::{
    build_augmented, validate_aligned, AugmentedObjectSet, Axiom, AxiomVerdict,
    ClusterSimilarityTable, ClusteringChoice, DistanceMatrix, ExplanationSet, Matrix, ObjectSet,
    PredictionVector, RhoSummary, Task,
};
pub use crate::error::{EcfError, Result};

/// Worker-thread cap from the `ECF_THREADS` environment variable, when set
/// to an integer >= 1.
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var("ECF_THREADS")
        .ok()?
        .parse::<usize>()
        .ok()
        .filter(|&n| n >= 1)
}

/// Apply the `ECF_THREADS` cap to the global worker pool. A no-op when the
/// variable is unset or the pool is already built.
pub fn apply_thread_cap() {
    if let Some(threads) = thread_cap_from_env() {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
