//! The three explanation-consistency checks — identity, separability,
//! stability — in their exact formulations, plus the top-level [`evaluate`]
//! orchestration that picks between the exact and large-scale paths and
//! assembles an [`EvaluationReport`].

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    agnes, cut_dendrogram, informed_centroids, kmeans_seeded, map_clusters_to_labels,
    ClusterAssignment, Linkage, KMEANS_DEFAULT_MAX_ITER, KMEANS_DEFAULT_TOL,
};
use crate::core::{
    build_augmented, validate_aligned, Axiom, AxiomVerdict, AugmentedObjectSet,
    ClusterSimilarityTable, ClusteringChoice, DistanceMatrix, ExplanationSet, ObjectSet,
    PredictionVector, RhoSummary, Task,
};
use crate::error::{EcfError, Result};
use crate::explainers::Explainer;
use crate::metrics::{jaccard, pairwise_distances, rows_equal, spearman_rho};
use crate::scalable;

/// Separability only holds when the prediction model has no excess degrees
/// of freedom; nothing in this tool can verify that, so every report says so.
pub const SEPARABILITY_CAVEAT: &str = "separability presumes the prediction model has no more \
degrees of freedom than needed to represent its prediction function; this precondition is not \
verified here";

/// How object pairs are counted in the separability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairCounting {
    /// All n(n-1) ordered pairs.
    Ordered,
    /// The n(n-1)/2 unordered pairs.
    Unordered,
}

/// Large-scale strategy for the regression stability axiom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionFallback {
    /// Discretize predictions into quantile bins and run the clustering
    /// formulation on the bins.
    Binned,
    /// Run the exact rank-correlation formulation on a seeded subsample.
    Subsample,
}

/// Effective configuration of one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcfConfig {
    /// How many times the identity check invokes the explainer per object.
    pub identity_repeats: usize,
    /// Relative-or-absolute tolerance for "identical" values:
    /// |a-b| <= tol * max(1, |a|, |b|).
    pub equality_tolerance: f64,
    /// Clustering backend for the classification stability axiom.
    pub stability_clustering: ClusteringChoice,
    pub pair_counting: PairCounting,
    /// Requested quantile bin count for the binned regression fallback.
    pub regression_bins: usize,
    /// Row count up to which the exact formulations run; above it the
    /// large-scale heuristics take over.
    pub exact_threshold: usize,
    /// Sample size for the large-scale identity probe.
    pub identity_sample_size: usize,
    /// Subsample size for the subsample regression fallback.
    pub subsample_size: usize,
    pub regression_fallback: RegressionFallback,
    /// Seed for every sampled heuristic in the run.
    pub seed: u64,
}

impl Default for EcfConfig {
    fn default() -> Self {
        Self {
            identity_repeats: 2,
            equality_tolerance: 1e-9,
            stability_clustering: ClusteringChoice::KmeansInformed,
            pair_counting: PairCounting::Ordered,
            regression_bins: 10,
            exact_threshold: 6_000,
            identity_sample_size: 100,
            subsample_size: 6_000,
            regression_fallback: RegressionFallback::Binned,
            seed: 0,
        }
    }
}

impl EcfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.identity_repeats < 2 {
            return Err(EcfError::InvalidInput(
                "identity_repeats must be at least 2".into(),
            ));
        }
        if !(self.equality_tolerance >= 0.0) {
            return Err(EcfError::InvalidInput(
                "equality_tolerance must be nonnegative".into(),
            ));
        }
        if self.regression_bins < 2 {
            return Err(EcfError::InvalidInput(
                "regression_bins must be at least 2".into(),
            ));
        }
        if self.identity_sample_size == 0 {
            return Err(EcfError::InvalidInput(
                "identity_sample_size must be positive".into(),
            ));
        }
        if self.subsample_size < 4 {
            return Err(EcfError::InvalidInput(
                "subsample_size must be at least 4".into(),
            ));
        }
        Ok(())
    }
}

/// Probe one object: explain it `repeats` times and report whether any two
/// results disagree beyond tolerance.
pub(crate) fn identity_violated_for_object(
    explainer: &dyn Explainer,
    row: &[f64],
    prediction: f64,
    repeats: usize,
    tolerance: f64,
    row_index: usize,
) -> Result<bool> {
    let m = row.len();
    let mut results: Vec<Vec<f64>> = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let explanation =
            explainer
                .explain(row, prediction)
                .map_err(|e| EcfError::ExplainerFailure {
                    row: row_index,
                    message: e.to_string(),
                })?;
        if explanation.len() != m {
            return Err(EcfError::ExplainerFailure {
                row: row_index,
                message: format!(
                    "explanation width {} does not match feature count {m}",
                    explanation.len()
                ),
            });
        }
        results.push(explanation);
    }
    for a in 0..repeats {
        for b in a + 1..repeats {
            if !rows_equal(&results[a], &results[b], tolerance) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Identity axiom: every object, explained `identity_repeats` times, must
/// receive the same explanation each time. One check per object.
///
/// The explanation function is invoked sequentially: it is not assumed to be
/// reentrant.
pub fn check_identity(
    explainer: &dyn Explainer,
    augmented: &AugmentedObjectSet,
    config: &EcfConfig,
) -> Result<AxiomVerdict> {
    config.validate()?;
    let mut violated = 0u64;
    for i in 0..augmented.len() {
        let row = augmented.objects().features().row(i);
        let prediction = augmented.predictions().numeric(i);
        if identity_violated_for_object(
            explainer,
            row,
            prediction,
            config.identity_repeats,
            config.equality_tolerance,
            i,
        )? {
            violated += 1;
        }
    }
    let n = augmented.len() as u64;
    Ok(AxiomVerdict::new(Axiom::Identity, violated, n - violated))
}

/// Per-object view of the exact separability scan: flag i is set when some
/// other object has an equal explanation but different features.
pub fn exact_separability_object_flags(
    objects: &ObjectSet,
    explanations: &ExplanationSet,
    tolerance: f64,
) -> Vec<bool> {
    let n = objects.len();
    let mut flags = vec![false; n];
    for a in 0..n {
        if flags[a] {
            continue;
        }
        for b in 0..n {
            if a == b {
                continue;
            }
            let expl_equal = rows_equal(
                explanations.importances().row(a),
                explanations.importances().row(b),
                tolerance,
            );
            if !expl_equal {
                continue;
            }
            let objects_equal = rows_equal(
                objects.features().row(a),
                objects.features().row(b),
                tolerance,
            );
            if !objects_equal {
                flags[a] = true;
                flags[b] = true;
                break;
            }
        }
    }
    flags
}

/// Separability axiom: a pair is violated when the objects differ but their
/// explanations coincide. Pairs of identical objects satisfy the implication
/// vacuously and are counted as satisfied, which keeps the ordered total at
/// exactly n(n-1).
pub fn check_separability(
    objects: &ObjectSet,
    explanations: &ExplanationSet,
    config: &EcfConfig,
) -> Result<AxiomVerdict> {
    config.validate()?;
    let n = objects.len();
    if n < 2 {
        return Err(EcfError::InvalidInput(
            "separability needs at least 2 objects".into(),
        ));
    }
    if explanations.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "explanation count",
            expected: n,
            actual: explanations.len(),
        });
    }
    let tol = config.equality_tolerance;
    // the predicate is symmetric, so scan unordered pairs and scale
    let violated_unordered: u64 = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut count = 0u64;
            let expl_a = explanations.importances().row(a);
            let obj_a = objects.features().row(a);
            for b in a + 1..n {
                let expl_equal = rows_equal(expl_a, explanations.importances().row(b), tol);
                if expl_equal
                    && !rows_equal(obj_a, objects.features().row(b), tol)
                {
                    count += 1;
                }
            }
            count
        })
        .sum();
    let (violated, total) = match config.pair_counting {
        PairCounting::Ordered => (violated_unordered * 2, (n as u64) * (n as u64 - 1)),
        PairCounting::Unordered => (violated_unordered, (n as u64) * (n as u64 - 1) / 2),
    };
    Ok(AxiomVerdict::new(
        Axiom::Separability,
        violated,
        total - violated,
    ))
}

/// Regression stability axiom: for every column j, Spearman's rho between
/// column j of the object-distance matrix and column j of the
/// explanation-distance matrix (each with the structural zero at row j
/// removed) must be positive. Columns where the correlation is undefined
/// (constant distances) count as violations and are reported in the summary.
pub fn check_stability_regression(
    d_z: &DistanceMatrix,
    d_e: &DistanceMatrix,
) -> Result<(AxiomVerdict, RhoSummary)> {
    let n = d_z.len();
    if d_e.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "distance matrix size",
            expected: n,
            actual: d_e.len(),
        });
    }
    if n < 4 {
        return Err(EcfError::InvalidInput(
            "regression stability needs at least 4 objects".into(),
        ));
    }
    let columns: Vec<std::result::Result<f64, EcfError>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let zc = d_z.column_without_diagonal(j);
            let ec = d_e.column_without_diagonal(j);
            spearman_rho(&zc, &ec)
        })
        .collect();
    let mut per_column = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    let mut violated = 0u64;
    for (j, outcome) in columns.into_iter().enumerate() {
        match outcome {
            Ok(rho) => {
                if !(rho > 0.0) {
                    violated += 1;
                }
                per_column.push(rho);
            }
            Err(EcfError::DegenerateInput(_)) => {
                violated += 1;
                degenerate.push(j);
                per_column.push(f64::NAN);
            }
            Err(other) => return Err(other),
        }
    }
    let verdict = AxiomVerdict::new(Axiom::Stability, violated, n as u64 - violated);
    Ok((verdict, RhoSummary::from_columns(per_column, degenerate)))
}

fn cluster_explanations(
    explanations: &ExplanationSet,
    predictions: &PredictionVector,
    choice: ClusteringChoice,
) -> Result<(ClusterAssignment, Vec<usize>)> {
    match choice {
        ClusteringChoice::KmeansInformed => {
            let centroids = informed_centroids(explanations, predictions)?;
            let assignment = kmeans_seeded(
                explanations.importances(),
                &centroids,
                KMEANS_DEFAULT_MAX_ITER,
                KMEANS_DEFAULT_TOL,
            )?;
            // centroid identity is positional: cluster c means class c
            let mapping = (0..assignment.k).collect();
            Ok((assignment, mapping))
        }
        ClusteringChoice::AgnesSingle | ClusteringChoice::AgnesWard => {
            let linkage = if choice == ClusteringChoice::AgnesSingle {
                Linkage::Single
            } else {
                Linkage::Ward
            };
            let merges = agnes(explanations.importances(), linkage)?;
            let k = predictions.num_classes().ok_or_else(|| {
                EcfError::InvalidInput("classification stability needs labels".into())
            })?;
            let assignment = cut_dendrogram(&merges, k)?;
            let mapping = map_clusters_to_labels(&assignment, predictions)?;
            Ok((assignment, mapping))
        }
    }
}

/// Classification stability axiom: explanations are clustered into one
/// cluster per predicted class; an object is satisfied when its explanation
/// lands in the cluster matched to its predicted label. Also reports the
/// per-label Jaccard similarity between class member sets and matched
/// clusters.
pub fn check_stability_classification(
    explanations: &ExplanationSet,
    predictions: &PredictionVector,
    config: &EcfConfig,
) -> Result<(AxiomVerdict, ClusterSimilarityTable)> {
    config.validate()?;
    let labels = predictions.labels().ok_or_else(|| {
        EcfError::InvalidInput("classification stability needs a classification task".into())
    })?;
    if explanations.len() != labels.len() {
        return Err(EcfError::DimensionMismatch {
            what: "explanation count",
            expected: labels.len(),
            actual: explanations.len(),
        });
    }
    let num_classes = predictions.num_classes().unwrap();
    let (assignment, mapping) =
        cluster_explanations(explanations, predictions, config.stability_clustering)?;

    let mut violated = 0u64;
    for (i, &cluster) in assignment.labels.iter().enumerate() {
        if mapping[cluster] != labels[i] {
            violated += 1;
        }
    }
    let n = labels.len() as u64;
    let verdict = AxiomVerdict::new(Axiom::Stability, violated, n - violated);

    let mut table = std::collections::BTreeMap::new();
    for class in 0..num_classes {
        let members: BTreeSet<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        let clustered: BTreeSet<usize> = assignment
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| mapping[c] == class)
            .map(|(i, _)| i)
            .collect();
        table.insert(class, jaccard(&members, &clustered)?);
    }
    Ok((
        verdict,
        ClusterSimilarityTable {
            algorithm: config.stability_clustering,
            per_label_jaccard: table,
        },
    ))
}

/// Where the explanations of an evaluation run come from.
pub enum ExplanationSource<'a> {
    /// A pre-computed explanation matrix. The identity axiom cannot be
    /// probed and is reported as not assessed.
    Static(&'a ExplanationSet),
    /// A callable explanation method; the run generates the explanation set
    /// itself and can probe identity.
    Callable {
        explainer: &'a dyn Explainer,
        description: Option<String>,
    },
}

/// Full evaluation result; the shape of the written reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method_name: String,
    pub task: Task,
    /// None when only a static explanation set was supplied.
    pub identity: Option<AxiomVerdict>,
    pub separability: AxiomVerdict,
    pub stability: AxiomVerdict,
    pub rho_summary: Option<RhoSummary>,
    pub cluster_table: Option<ClusterSimilarityTable>,
    /// Which stability formulation actually ran (exact, binned, subsampled).
    pub stability_method: String,
    pub separability_caveat: String,
    pub explainer_description: Option<String>,
    pub config: EcfConfig,
}

/// Run the three checks appropriate to the task: the exact formulations up
/// to `config.exact_threshold` rows, the large-scale heuristics above it.
pub fn evaluate(
    objects: &ObjectSet,
    predictions: &PredictionVector,
    source: ExplanationSource<'_>,
    method_name: &str,
    config: &EcfConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    let augmented = build_augmented(objects.clone(), predictions.clone())?;
    let n = objects.len();
    let exact = n <= config.exact_threshold;

    let (explanations, explainer, description): (
        ExplanationSet,
        Option<&dyn Explainer>,
        Option<String>,
    ) = match source {
        ExplanationSource::Static(set) => {
            validate_aligned(objects, predictions, set)?;
            (set.clone(), None, None)
        }
        ExplanationSource::Callable {
            explainer,
            description,
        } => {
            let set = crate::explainers::explain_all(explainer, &augmented)?;
            (set, Some(explainer), description)
        }
    };

    let identity = match explainer {
        None => None,
        Some(explainer) => Some(if exact {
            check_identity(explainer, &augmented, config)?
        } else {
            scalable::probe_identity_sampled(
                explainer,
                &augmented,
                config.identity_sample_size.min(n),
                config.identity_repeats,
                config.equality_tolerance,
                config.seed,
            )?
        }),
    };

    let separability = if exact {
        check_separability(objects, &explanations, config)?
    } else {
        scalable::duplicate_separability(objects, &explanations, config)?
    };

    let (stability, rho_summary, cluster_table, stability_method) = match predictions.task() {
        Task::Regression => {
            if exact {
                let d_z = pairwise_distances(augmented.augmented())?;
                let d_e = pairwise_distances(explanations.importances())?;
                let (verdict, summary) = check_stability_regression(&d_z, &d_e)?;
                (verdict, Some(summary), None, "exact-rho".to_string())
            } else {
                match config.regression_fallback {
                    RegressionFallback::Binned => {
                        let bins = scalable::bin_predictions(predictions, config.regression_bins)?;
                        let realized = bins.realized_bins();
                        let (verdict, table) =
                            scalable::binned_stability_regression(&explanations, &bins)?;
                        let mut method = format!(
                            "binned-kmeans(requested={}, realized={realized})",
                            config.regression_bins
                        );
                        if realized == 1 {
                            method.push_str("; degenerate single bin");
                        }
                        (verdict, None, Some(table), method)
                    }
                    RegressionFallback::Subsample => {
                        let size = config.subsample_size.min(n);
                        let mut indices = crate::explainers::sample_without_replacement(
                            n,
                            size,
                            config.seed,
                        );
                        indices.sort_unstable();
                        let sub_z = augmented.augmented().select_rows(&indices)?;
                        let sub_e = explanations.importances().select_rows(&indices)?;
                        let d_z = pairwise_distances(&sub_z)?;
                        let d_e = pairwise_distances(&sub_e)?;
                        let (verdict, summary) = check_stability_regression(&d_z, &d_e)?;
                        (
                            verdict,
                            Some(summary),
                            None,
                            format!("subsample-rho(size={size})"),
                        )
                    }
                }
            }
        }
        Task::Classification => {
            let (choice, note) = if exact {
                (config.stability_clustering, "")
            } else if config.stability_clustering != ClusteringChoice::KmeansInformed {
                // hierarchical clustering needs the O(n^2) distance matrix the
                // large-scale path exists to avoid
                (ClusteringChoice::KmeansInformed, " (forced at scale)")
            } else {
                (ClusteringChoice::KmeansInformed, "")
            };
            let effective = EcfConfig {
                stability_clustering: choice,
                ..config.clone()
            };
            let (verdict, table) =
                check_stability_classification(&explanations, predictions, &effective)?;
            (verdict, None, Some(table), format!("{choice}{note}"))
        }
    };

    Ok(EvaluationReport {
        method_name: method_name.to_string(),
        task: predictions.task(),
        identity,
        separability,
        stability,
        rho_summary,
        cluster_table,
        stability_method,
        separability_caveat: SEPARABILITY_CAVEAT.to_string(),
        explainer_description: description,
        config: config.clone(),
    })
}
