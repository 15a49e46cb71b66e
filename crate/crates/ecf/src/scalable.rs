//! Large-scale approximations of the three checks: sampled identity probing,
//! duplicate-scan separability, quantile-binned regression stability and
//! stratified sampling. Everything here is seeded and deterministic.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::axioms::{identity_violated_for_object, EcfConfig};
use crate::core::{
    Axiom, AxiomVerdict, AugmentedObjectSet, ClusterSimilarityTable, ClusteringChoice,
    ExplanationSet, ObjectSet, PredictionVector,
};
use crate::error::{EcfError, Result};
use crate::explainers::{sample_without_replacement, Explainer};
use crate::metrics::rows_equal;

/// Quantile bin assignment of regression predictions. Edges are strictly
/// ascending; a prediction belongs to bin = number of edges <= value, so no
/// bin is ever empty.
#[derive(Debug, Clone)]
pub struct BinAssignment {
    pub edges: Vec<f64>,
    pub labels: Vec<usize>,
}

impl BinAssignment {
    pub fn realized_bins(&self) -> usize {
        self.edges.len() + 1
    }
}

/// The seeded sample the identity probe will use; exposed so runs can be
/// reproduced index-for-index.
pub fn identity_sample_indices(n: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    let mut indices = sample_without_replacement(n, sample_size, seed);
    indices.sort_unstable();
    indices
}

/// Identity check on a seeded uniform sample of the objects.
pub fn probe_identity_sampled(
    explainer: &dyn Explainer,
    augmented: &AugmentedObjectSet,
    sample_size: usize,
    repeats: usize,
    tolerance: f64,
    seed: u64,
) -> Result<AxiomVerdict> {
    let n = augmented.len();
    if sample_size == 0 || sample_size > n {
        return Err(EcfError::InvalidInput(format!(
            "sample size {sample_size} out of range 1..={n}"
        )));
    }
    if repeats < 2 {
        return Err(EcfError::InvalidInput(
            "identity probing needs at least 2 repeats".into(),
        ));
    }
    let mut violated = 0u64;
    for &i in &identity_sample_indices(n, sample_size, seed) {
        let row = augmented.objects().features().row(i);
        let prediction = augmented.predictions().numeric(i);
        if identity_violated_for_object(explainer, row, prediction, repeats, tolerance, i)? {
            violated += 1;
        }
    }
    Ok(AxiomVerdict::new(
        Axiom::Identity,
        violated,
        sample_size as u64 - violated,
    ))
}

/// Per-object duplicate flags: flag i is set when some other object has an
/// equal explanation (within tolerance) but different features.
///
/// Candidate pairs come from a quantized-key grouping — cell size
/// 2*tol*max(1, column max |value|) per coordinate, keyed on at most the
/// first 8 coordinates — followed by an exact confirmation pass, so the
/// result matches the exact pairwise definition while staying near O(n*m) on
/// realistic data.
pub fn duplicate_violation_flags(
    objects: &ObjectSet,
    explanations: &ExplanationSet,
    tolerance: f64,
) -> Result<Vec<bool>> {
    let n = objects.len();
    if explanations.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "explanation count",
            expected: n,
            actual: explanations.len(),
        });
    }
    let expl = explanations.importances();
    let m = expl.ncols();

    if tolerance == 0.0 {
        // exact equality: one hash key per full row
        let key_of = |row: &[f64]| -> Vec<u64> {
            row.iter()
                .map(|&v| if v == 0.0 { 0.0f64 } else { v }.to_bits())
                .collect()
        };
        let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for i in 0..n {
            groups.entry(key_of(expl.row(i))).or_default().push(i);
        }
        let mut flags = vec![false; n];
        for members in groups.values() {
            if members.len() < 2 {
                continue;
            }
            for &i in members {
                for &j in members {
                    if i != j && !rows_equal(objects.features().row(i), objects.features().row(j), 0.0)
                    {
                        flags[i] = true;
                        break;
                    }
                }
            }
        }
        return Ok(flags);
    }

    let key_cols = m.min(8);
    // cell sizes scale with column magnitude so relative-tolerance matches
    // always land in adjacent cells
    let cell: Vec<f64> = (0..key_cols)
        .map(|c| {
            let max_abs = (0..n).map(|i| expl.get(i, c).abs()).fold(0.0f64, f64::max);
            2.0 * tolerance * f64::max(1.0, max_abs)
        })
        .collect();
    let home_key = |row: &[f64]| -> Vec<i64> {
        (0..key_cols)
            .map(|c| (row[c] / cell[c]).floor() as i64)
            .collect()
    };
    let mut groups: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for i in 0..n {
        groups.entry(home_key(expl.row(i))).or_default().push(i);
    }

    let mut flags = vec![false; n];
    let mut key = vec![0i64; key_cols];
    for i in 0..n {
        let row = expl.row(i);
        // per-coordinate key ranges covering every possible within-tolerance partner
        let ranges: Vec<(i64, i64)> = (0..key_cols)
            .map(|c| {
                let delta = tolerance * f64::max(1.0, row[c].abs()) * (1.0 + 2.0 * tolerance);
                let lo = ((row[c] - delta) / cell[c]).floor() as i64;
                let hi = ((row[c] + delta) / cell[c]).floor() as i64;
                (lo, hi)
            })
            .collect();
        let mut found = false;
        probe_cells(&ranges, 0, &mut key, &mut |key| {
            if found {
                return;
            }
            if let Some(members) = groups.get(key) {
                for &j in members {
                    if j == i {
                        continue;
                    }
                    if rows_equal(row, expl.row(j), tolerance)
                        && !rows_equal(
                            objects.features().row(i),
                            objects.features().row(j),
                            tolerance,
                        )
                    {
                        found = true;
                        return;
                    }
                }
            }
        });
        flags[i] = found;
    }
    Ok(flags)
}

fn probe_cells(ranges: &[(i64, i64)], depth: usize, key: &mut Vec<i64>, visit: &mut impl FnMut(&Vec<i64>)) {
    if depth == ranges.len() {
        visit(key);
        return;
    }
    for v in ranges[depth].0..=ranges[depth].1 {
        key[depth] = v;
        probe_cells(ranges, depth + 1, key, visit);
    }
}

/// Separability via duplicate scanning: one check per object, violated when
/// its explanation duplicates that of a differing object.
pub fn duplicate_separability(
    objects: &ObjectSet,
    explanations: &ExplanationSet,
    config: &EcfConfig,
) -> Result<AxiomVerdict> {
    config.validate()?;
    let flags = duplicate_violation_flags(objects, explanations, config.equality_tolerance)?;
    let violated = flags.iter().filter(|&&f| f).count() as u64;
    let n = flags.len() as u64;
    Ok(AxiomVerdict::new(
        Axiom::Separability,
        violated,
        n - violated,
    ))
}

/// Quantile binning of regression predictions with equal-count targets.
/// Cuts that land inside a run of equal values move to the end of the run,
/// so realized bins may be fewer than requested but never empty.
pub fn bin_predictions(predictions: &PredictionVector, bins: usize) -> Result<BinAssignment> {
    let values = predictions.regression_values().ok_or_else(|| {
        EcfError::InvalidInput("binning applies to regression predictions".into())
    })?;
    let n = values.len();
    if bins < 2 {
        return Err(EcfError::InvalidInput("need at least 2 bins".into()));
    }
    if n < bins {
        return Err(EcfError::InvalidInput(format!(
            "cannot split {n} predictions into {bins} bins"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] == sorted[n - 1] {
        return Err(EcfError::AllPredictionsEqual);
    }
    let mut edges: Vec<f64> = Vec::with_capacity(bins - 1);
    for i in 1..bins {
        let cut = i * n / bins;
        let threshold = sorted[cut - 1];
        let next = sorted.partition_point(|&x| x <= threshold);
        if next < n {
            let edge = sorted[next];
            if edges.last() != Some(&edge) {
                edges.push(edge);
            }
        }
    }
    let labels: Vec<usize> = values
        .iter()
        .map(|&x| edges.partition_point(|&e| e <= x))
        .collect();
    debug_assert!({
        let mut counts = vec![0usize; edges.len() + 1];
        for &l in &labels {
            counts[l] += 1;
        }
        counts.iter().all(|&c| c > 0)
    });
    Ok(BinAssignment { edges, labels })
}

/// Regression stability on binned predictions: bins play the role of classes
/// and the classification machinery (informed centroids, seeded k-means,
/// per-bin Jaccard) does the rest. One check per object.
pub fn binned_stability_regression(
    explanations: &ExplanationSet,
    bins: &BinAssignment,
) -> Result<(AxiomVerdict, ClusterSimilarityTable)> {
    let n = explanations.len();
    if bins.labels.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "bin label count",
            expected: n,
            actual: bins.labels.len(),
        });
    }
    if bins.realized_bins() == 1 {
        // all predictions in one bin: the axiom holds trivially
        let mut table = std::collections::BTreeMap::new();
        table.insert(0usize, 1.0);
        return Ok((
            AxiomVerdict::new(Axiom::Stability, 0, n as u64),
            ClusterSimilarityTable {
                algorithm: ClusteringChoice::KmeansInformed,
                per_label_jaccard: table,
            },
        ));
    }
    let pseudo = PredictionVector::classification(bins.labels.clone())?;
    let config = EcfConfig {
        stability_clustering: ClusteringChoice::KmeansInformed,
        ..EcfConfig::default()
    };
    crate::axioms::check_stability_classification(explanations, &pseudo, &config)
}

/// Seeded per-class sampling without replacement that preserves the label
/// distribution. Per-class counts follow the exact quotas with a
/// largest-remainder correction so the total equals round(n * fraction).
pub fn stratified_sample(
    predictions: &PredictionVector,
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let labels = predictions.labels().ok_or_else(|| {
        EcfError::InvalidInput("stratified sampling needs a classification task".into())
    })?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EcfError::InvalidInput(format!(
            "fraction {fraction} not in (0, 1]"
        )));
    }
    let n = labels.len();
    let num_classes = predictions.num_classes().unwrap();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let quotas: Vec<f64> = members.iter().map(|m| m.len() as f64 * fraction).collect();
    for (label, &q) in quotas.iter().enumerate() {
        if q < 1.0 {
            return Err(EcfError::ClassTooSmall {
                label,
                count: members[label].len(),
            });
        }
    }
    let total_target = (n as f64 * fraction).round() as usize;
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let mut leftover = total_target.saturating_sub(counts.iter().sum::<usize>());
    // hand out remaining slots by largest fractional remainder, lowest class first
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(num_classes * 2) {
        if leftover == 0 {
            break;
        }
        if counts[c] < members[c].len() {
            counts[c] += 1;
            leftover -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(total_target);
    for c in 0..num_classes {
        let pool = &mut members[c];
        for i in 0..counts[c] {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        picked.extend_from_slice(&pool[..counts[c]]);
    }
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{build_augmented, Matrix};
    use crate::error::Result;
    use std::cell::Cell;

    fn objects_from(rows: Vec<Vec<f64>>) -> ObjectSet {
        let m = rows[0].len();
        let names = (0..m).map(|j| format!("f{j}")).collect();
        ObjectSet::new(Matrix::from_rows(rows).unwrap(), names).unwrap()
    }

    fn explanations_from(rows: Vec<Vec<f64>>) -> ExplanationSet {
        ExplanationSet::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn probe_identity_deterministic_and_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let preds: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        let augmented = build_augmented(
            objects_from(rows),
            PredictionVector::regression(preds).unwrap(),
        )
        .unwrap();

        let deterministic =
            |x: &[f64], _p: f64| -> Result<Vec<f64>> { Ok(x.to_vec()) };
        let verdict =
            probe_identity_sampled(&deterministic, &augmented, 50, 2, 1e-9, 7).unwrap();
        assert_eq!(verdict.satisfied, 50);
        assert_eq!(verdict.violated, 0);

        struct Jitter(Cell<u64>);
        impl Explainer for Jitter {
            fn explain(&self, x: &[f64], _p: f64) -> Result<Vec<f64>> {
                let c = self.0.get();
                self.0.set(c + 1);
                Ok(x.iter().map(|v| v + c as f64).collect())
            }
        }
        let jitter = Jitter(Cell::new(0));
        let verdict = probe_identity_sampled(&jitter, &augmented, 50, 2, 1e-9, 7).unwrap();
        assert_eq!(verdict.violated, 50);
    }

    #[test]
    fn probe_identity_sample_is_seeded() {
        assert_eq!(
            identity_sample_indices(1000, 40, 7),
            identity_sample_indices(1000, 40, 7)
        );
        assert_ne!(
            identity_sample_indices(1000, 40, 7),
            identity_sample_indices(1000, 40, 8)
        );
    }

    #[test]
    fn duplicates_all_distinct_explanations() {
        let objects = objects_from((0..50).map(|i| vec![i as f64]).collect());
        let expl = explanations_from((0..50).map(|i| vec![i as f64 * 1.5 + 0.25]).collect());
        let verdict =
            duplicate_separability(&objects, &expl, &EcfConfig::default()).unwrap();
        assert_eq!(verdict.violated, 0);
        assert_eq!(verdict.checks_total, 50);
    }

    #[test]
    fn duplicates_vacuous_identical_objects() {
        // objects 0 and 1 identical in features AND explanations: satisfied
        let objects = objects_from(vec![vec![1.0], vec![1.0], vec![2.0], vec![3.0]]);
        let expl = explanations_from(vec![vec![9.0], vec![9.0], vec![8.0], vec![7.0]]);
        let flags = duplicate_violation_flags(&objects, &expl, 1e-9).unwrap();
        assert_eq!(flags, vec![false, false, false, false]);
    }

    #[test]
    fn duplicates_detected_at_relative_tolerance() {
        // equal within relative tolerance but not bitwise, at large magnitude
        let objects = objects_from(vec![vec![1.0], vec![2.0], vec![3.0]]);
        let big = 1e12;
        let expl =
            explanations_from(vec![vec![big], vec![big * (1.0 + 1e-10)], vec![5.0]]);
        let flags = duplicate_violation_flags(&objects, &expl, 1e-9).unwrap();
        assert_eq!(flags, vec![true, true, false]);
        let exact = crate::axioms::exact_separability_object_flags(&objects, &expl, 1e-9);
        assert_eq!(flags, exact);
    }

    #[test]
    fn duplicates_reproduce_published_count_shape() {
        // 218,115 synthetic objects with exactly 22,163 planted
        // duplicate-explanation objects: 11,080 pairs plus one triple
        let n = 218_115usize;
        let duplicates = 22_163usize;
        let pairs = (duplicates - 3) / 2;
        let mut expl_rows = Vec::with_capacity(n);
        for i in 0..n {
            if i < pairs * 2 {
                expl_rows.push(vec![(i / 2) as f64, 1.0]);
            } else if i < pairs * 2 + 3 {
                expl_rows.push(vec![99_999.0, 1.0]);
            } else {
                expl_rows.push(vec![i as f64 + 1e6, 0.0]);
            }
        }
        let objects = objects_from((0..n).map(|i| vec![i as f64, 0.5]).collect());
        let expl = explanations_from(expl_rows);
        let verdict = duplicate_separability(&objects, &expl, &EcfConfig::default()).unwrap();
        assert_eq!(verdict.violated, 22_163);
        assert_eq!(verdict.satisfied, 195_952);
        assert!(
            (verdict.satisfied_fraction - 195_952.0 / 218_115.0).abs() < 1e-12
        );
    }

    #[test]
    fn duplicates_match_exact_scan_on_random_instances() {
        use crate::axioms::exact_separability_object_flags;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let n = rng.random_range(20..200);
            let m = rng.random_range(1..5);
            let mut expl_rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random::<f64>() * 10.0).collect())
                .collect();
            // plant some duplicates
            for _ in 0..n / 5 {
                let src = rng.random_range(0..n);
                let dst = rng.random_range(0..n);
                expl_rows[dst] = expl_rows[src].clone();
            }
            let objects = objects_from(
                (0..n)
                    .map(|i| (0..m).map(|j| (i * m + j) as f64).collect())
                    .collect(),
            );
            let expl = explanations_from(expl_rows);
            let fast = duplicate_violation_flags(&objects, &expl, 1e-9).unwrap();
            let exact = exact_separability_object_flags(&objects, &expl, 1e-9);
            assert_eq!(fast, exact);
        }
    }

    #[test]
    fn binning_uniform_quartiles() {
        let preds =
            PredictionVector::regression((1..=100).map(|i| i as f64).collect()).unwrap();
        let bins = bin_predictions(&preds, 4).unwrap();
        assert_eq!(bins.edges, vec![26.0, 51.0, 76.0]);
        let mut counts = [0usize; 4];
        for &l in &bins.labels {
            counts[l] += 1;
        }
        assert_eq!(counts, [25, 25, 25, 25]);
    }

    #[test]
    fn binning_merges_tied_quantiles() {
        let mut values = vec![1.0; 99];
        values.push(1000.0);
        let preds = PredictionVector::regression(values).unwrap();
        let bins = bin_predictions(&preds, 4).unwrap();
        assert_eq!(bins.realized_bins(), 2);
        assert_eq!(bins.labels.iter().filter(|&&l| l == 0).count(), 99);
        assert_eq!(bins.labels.iter().filter(|&&l| l == 1).count(), 1);
    }

    #[test]
    fn binning_median_split() {
        let preds = PredictionVector::regression(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bins = bin_predictions(&preds, 2).unwrap();
        assert_eq!(bins.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn binning_rejects_constant_predictions() {
        let preds = PredictionVector::regression(vec![2.0; 10]).unwrap();
        assert!(matches!(
            bin_predictions(&preds, 2),
            Err(EcfError::AllPredictionsEqual)
        ));
    }

    #[test]
    fn binned_stability_perfect_for_constant_per_bin() {
        for bins_requested in [2usize, 4, 8] {
            let n = 80;
            let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let preds = PredictionVector::regression(values).unwrap();
            let bins = bin_predictions(&preds, bins_requested).unwrap();
            let expl = explanations_from(
                bins.labels
                    .iter()
                    .map(|&b| vec![b as f64 * 5.0, -(b as f64)])
                    .collect(),
            );
            let (verdict, table) = binned_stability_regression(&expl, &bins).unwrap();
            assert_eq!(verdict.violated, 0, "bins={bins_requested}");
            for &j in table.per_label_jaccard.values() {
                assert_eq!(j, 1.0);
            }
        }
    }

    #[test]
    fn binned_stability_uninformative_explanations_score_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 400;
        let preds =
            PredictionVector::regression((0..n).map(|i| i as f64).collect()).unwrap();
        let bins = bin_predictions(&preds, 4).unwrap();
        let expl = explanations_from(
            (0..n)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        );
        let (_, table) = binned_stability_regression(&expl, &bins).unwrap();
        for &j in table.per_label_jaccard.values() {
            assert!(j < 0.5, "jaccard {j} unexpectedly high");
        }
    }

    #[test]
    fn binned_stability_single_bin_is_flagged_trivial() {
        let bins = BinAssignment {
            edges: vec![],
            labels: vec![0; 10],
        };
        let expl = explanations_from((0..10).map(|i| vec![i as f64]).collect());
        let (verdict, table) = binned_stability_regression(&expl, &bins).unwrap();
        assert_eq!(verdict.violated, 0);
        assert_eq!(table.per_label_jaccard[&0], 1.0);
    }

    #[test]
    fn stratified_full_fraction_returns_everything() {
        let preds = PredictionVector::classification(vec![0, 1, 0, 1, 0]).unwrap();
        let sample = stratified_sample(&preds, 1.0, 3).unwrap();
        assert_eq!(sample, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stratified_keeps_proportions() {
        let mut labels = vec![0usize; 90];
        labels.extend(vec![1usize; 10]);
        let preds = PredictionVector::classification(labels).unwrap();
        let sample = stratified_sample(&preds, 0.1, 5).unwrap();
        assert_eq!(sample.len(), 10);
        let class0 = sample.iter().filter(|&&i| i < 90).count();
        assert_eq!(class0, 9);
    }

    #[test]
    fn stratified_is_seeded() {
        let labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
        let preds = PredictionVector::classification(labels).unwrap();
        assert_eq!(
            stratified_sample(&preds, 0.25, 11).unwrap(),
            stratified_sample(&preds, 0.25, 11).unwrap()
        );
    }

    #[test]
    fn stratified_rejects_too_small_class() {
        let mut labels = vec![0usize; 50];
        labels.push(1);
        let preds = PredictionVector::classification(labels).unwrap();
        assert!(matches!(
            stratified_sample(&preds, 0.1, 1),
            Err(EcfError::ClassTooSmall { label: 1, count: 1 })
        ));
    }

    #[test]
    fn stratified_proportions_within_one_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let n = rng.random_range(50..300);
            let classes = rng.random_range(2..5);
            let labels: Vec<usize> = (0..n)
                .map(|i| if i < classes { i } else { rng.random_range(0..classes) })
                .collect();
            let preds = PredictionVector::classification(labels.clone()).unwrap();
            let fraction = rng.random_range(0.3..0.9);
            let counts: Vec<usize> = (0..classes)
                .map(|c| labels.iter().filter(|&&l| l == c).count())
                .collect();
            if counts.iter().any(|&c| (c as f64) * fraction < 1.0) {
                continue;
            }
            let sample = stratified_sample(&preds, fraction, 17).unwrap();
            assert_eq!(sample.len(), (n as f64 * fraction).round() as usize);
            for c in 0..classes {
                let picked = sample.iter().filter(|&&i| labels[i] == c).count() as f64;
                let quota = counts[c] as f64 * fraction;
                assert!(
                    (picked - quota).abs() <= 1.0,
                    "class {c}: picked {picked}, quota {quota}"
                );
            }
        }
    }
}
