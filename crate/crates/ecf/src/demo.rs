//! Seeded synthetic datasets plus an end-to-end driver: generate data, fit
//! the toy models, run the reference explainers through the full evaluation
//! and write every artifact to disk. Byte-identical for a fixed seed.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::axioms::{evaluate, EcfConfig, EvaluationReport, ExplanationSource};
use crate::core::{build_augmented, Matrix, ObjectSet, PredictionVector, Task};
use crate::error::Result;
use crate::explainers::{
    default_kernel_width, explain_all, fit_linear, KnnModel, KnnTargets, LinearModel,
    PredictionModel, SamplingSummary, ShapleyExplainer, SurrogateExplainer,
    SHAPLEY_DEFAULT_BACKGROUND_CAP, SURROGATE_DEFAULT_SAMPLES,
};
use crate::io;
use crate::report::write_report;

pub const REGRESSION_ROWS: usize = 300;
pub const REGRESSION_FEATURES: usize = 4;
pub const CLASSIFICATION_ROWS: usize = 300;
pub const CLASSIFICATION_CLASSES: usize = 3;

/// The three reports the demo produces.
pub struct DemoOutput {
    pub regression_shapley: EvaluationReport,
    pub regression_surrogate: EvaluationReport,
    pub classification_shapley: EvaluationReport,
}

/// Linear trend plus pairwise interaction terms. A purely linear target
/// would make the surrogate's fit independent of the explained point (every
/// local fit recovers the same global weights), which hides exactly the
/// behaviour the demo is meant to show.
#[derive(Debug, Clone)]
pub struct InteractionModel {
    base: LinearModel,
    interactions: Vec<(usize, usize, f64)>,
}

impl PredictionModel for InteractionModel {
    fn num_features(&self) -> usize {
        self.base.num_features()
    }

    fn task(&self) -> Task {
        Task::Regression
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut out = self.base.predict(x);
        for &(i, j, c) in &self.interactions {
            out += c * x[i] * x[j];
        }
        out
    }
}

/// Gaussian features and the model the regression demo explains.
pub fn regression_dataset(seed: u64) -> Result<(ObjectSet, InteractionModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(REGRESSION_ROWS);
    let scales = [1.0, 2.0, 0.5, 1.5];
    for _ in 0..REGRESSION_ROWS {
        let row: Vec<f64> = scales
            .iter()
            .map(|s| s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        rows.push(row);
    }
    let names = (0..REGRESSION_FEATURES).map(|j| format!("x{j}")).collect();
    let objects = ObjectSet::new(Matrix::from_rows(rows)?, names)?;
    let model = InteractionModel {
        base: LinearModel::new(10.0, vec![1.5, -2.0, 1.0, 0.8]),
        interactions: vec![(0, 1, 0.4), (2, 3, -0.3)],
    };
    Ok((objects, model))
}

/// Three well-separated Gaussian blobs and their generating labels; the
/// classification demo's k-NN model reproduces these labels exactly.
pub fn classification_dataset(seed: u64) -> Result<(ObjectSet, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class = CLASSIFICATION_ROWS / CLASSIFICATION_CLASSES;
    let mut rows = Vec::with_capacity(CLASSIFICATION_ROWS);
    let mut labels = Vec::with_capacity(CLASSIFICATION_ROWS);
    for class in 0..CLASSIFICATION_CLASSES {
        let center = 4.0 * class as f64;
        for _ in 0..per_class {
            let row: Vec<f64> = (0..4)
                .map(|_| center + 0.6 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push(row);
            labels.push(class);
        }
    }
    let names = (0..4).map(|j| format!("x{j}")).collect();
    let objects = ObjectSet::new(Matrix::from_rows(rows)?, names)?;
    Ok((objects, labels))
}

fn shapley_description(background_rows: usize, seed: u64) -> String {
    format!(
        "exact Shapley, marginal masking over {background_rows} background rows \
(cap {SHAPLEY_DEFAULT_BACKGROUND_CAP}, seed {seed})"
    )
}

/// Generate both synthetic datasets, run the full evaluation suite and write
/// datasets, explanations and reports under `out_dir`.
pub fn run(out_dir: &Path, seed: u64) -> Result<DemoOutput> {
    let config = EcfConfig {
        seed,
        ..EcfConfig::default()
    };

    // --- regression ---
    let (objects, model) = regression_dataset(seed)?;
    let predictions = PredictionVector::regression(
        objects.features().rows_iter().map(|r| model.predict(r)).collect(),
    )?;
    let reg_dir = out_dir.join("regression");
    io::write_matrix_csv(
        &io::prepare_path(&reg_dir, "data.csv")?,
        objects.feature_names(),
        objects.features(),
    )?;
    io::write_predictions_csv(&reg_dir.join("predictions.csv"), &predictions)?;

    let shapley = ShapleyExplainer::with_background_cap(
        model.clone(),
        objects.features(),
        SHAPLEY_DEFAULT_BACKGROUND_CAP,
        seed,
    )?;
    let regression_shapley = evaluate(
        &objects,
        &predictions,
        ExplanationSource::Callable {
            explainer: &shapley,
            description: Some(shapley_description(shapley.background().nrows(), seed)),
        },
        "shapley",
        &config,
    )?;
    write_report(&regression_shapley, &reg_dir.join("shapley"))?;
    let augmented = build_augmented(objects.clone(), predictions.clone())?;
    let explanations = explain_all(&shapley, &augmented)?;
    io::write_matrix_csv(
        &reg_dir.join("shapley").join("explanations.csv"),
        objects.feature_names(),
        explanations.importances(),
    )?;

    let surrogate = SurrogateExplainer::new(
        model.clone(),
        SamplingSummary::from_training(objects.features()),
        SURROGATE_DEFAULT_SAMPLES,
        default_kernel_width(REGRESSION_FEATURES),
        Some(seed ^ 0x5eed),
    )?;
    let regression_surrogate = evaluate(
        &objects,
        &predictions,
        ExplanationSource::Callable {
            explainer: &surrogate,
            description: Some(format!(
                "local linear surrogate, {SURROGATE_DEFAULT_SAMPLES} samples, seed {}",
                seed ^ 0x5eed
            )),
        },
        "surrogate",
        &config,
    )?;
    write_report(&regression_surrogate, &reg_dir.join("surrogate"))?;
    let surrogate_explanations = explain_all(&surrogate, &augmented)?;
    io::write_matrix_csv(
        &reg_dir.join("surrogate").join("explanations.csv"),
        objects.feature_names(),
        surrogate_explanations.importances(),
    )?;

    // --- classification ---
    let (objects, blob_labels) = classification_dataset(seed.wrapping_add(1))?;
    let classifier = KnnModel::new(
        objects.features().clone(),
        KnnTargets::Classification(blob_labels),
        5,
    )?;
    let predicted: Vec<usize> = objects
        .features()
        .rows_iter()
        .map(|r| classifier.predict(r) as usize)
        .collect();
    let predictions = PredictionVector::classification(predicted.clone())?;
    let cls_dir = out_dir.join("classification");
    io::write_matrix_csv(
        &io::prepare_path(&cls_dir, "data.csv")?,
        objects.feature_names(),
        objects.features(),
    )?;
    io::write_predictions_csv(&cls_dir.join("predictions.csv"), &predictions)?;

    // Shapley on a hard-label model is piecewise constant and collides within
    // classes; explain a continuous least-squares read-out of the classifier
    // instead so attributions stay injective.
    let readout = fit_linear(
        objects.features(),
        &predicted.iter().map(|&l| l as f64).collect::<Vec<f64>>(),
    )?;
    let shapley = ShapleyExplainer::with_background_cap(
        readout,
        objects.features(),
        SHAPLEY_DEFAULT_BACKGROUND_CAP,
        seed.wrapping_add(2),
    )?;
    let classification_shapley = evaluate(
        &objects,
        &predictions,
        ExplanationSource::Callable {
            explainer: &shapley,
            description: Some(format!(
                "{} of a linear read-out of the k-NN classifier",
                shapley_description(shapley.background().nrows(), seed.wrapping_add(2))
            )),
        },
        "shapley",
        &config,
    )?;
    write_report(&classification_shapley, &cls_dir.join("shapley"))?;
    let augmented = build_augmented(objects.clone(), predictions)?;
    let explanations = explain_all(&shapley, &augmented)?;
    io::write_matrix_csv(
        &cls_dir.join("shapley").join("explanations.csv"),
        objects.feature_names(),
        explanations.importances(),
    )?;

    Ok(DemoOutput {
        regression_shapley,
        regression_surrogate,
        classification_shapley,
    })
}
