//! Reference explanation methods and toy prediction models, so the axiom
//! checkers can be exercised end to end without any external tooling.
//!
//! Two explainers ship here: exact Shapley attribution over all feature
//! coalitions (with masked features replaced by background-row values), and a
//! local linear surrogate fit to kernel-weighted Gaussian perturbations. The
//! surrogate runs seedless by default on purpose: its identity-axiom failure
//! is the canonical demonstration of what the framework detects.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::core::{AugmentedObjectSet, ExplanationSet, Matrix, Task};
use crate::error::{EcfError, Result};

/// A deterministic prediction function over m-dimensional rows.
/// Classification models return the label as an integer-valued f64.
pub trait PredictionModel {
    fn num_features(&self) -> usize;
    fn task(&self) -> Task;
    fn predict(&self, x: &[f64]) -> f64;
}

impl<T: PredictionModel + ?Sized> PredictionModel for Box<T> {
    fn num_features(&self) -> usize {
        (**self).num_features()
    }
    fn task(&self) -> Task {
        (**self).task()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
}

impl<T: PredictionModel + ?Sized> PredictionModel for &T {
    fn num_features(&self) -> usize {
        (**self).num_features()
    }
    fn task(&self) -> Task {
        (**self).task()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
}

/// predict(x) = intercept + weights · x
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(intercept: f64, weights: Vec<f64>) -> Self {
        Self { intercept, weights }
    }
}

impl PredictionModel for LinearModel {
    fn num_features(&self) -> usize {
        self.weights.len()
    }

    fn task(&self) -> Task {
        Task::Regression
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut out = self.intercept;
        for (w, v) in self.weights.iter().zip(x) {
            out += w * v;
        }
        out
    }
}

/// Training targets for [`KnnModel`].
#[derive(Debug, Clone)]
pub enum KnnTargets {
    Regression(Vec<f64>),
    Classification(Vec<usize>),
}

/// k-nearest-neighbour model; stands in for an opaque learned predictor.
/// Deterministic by construction: neighbour ties prefer the lowest training
/// index, classification vote ties prefer the lowest label.
#[derive(Debug, Clone)]
pub struct KnnModel {
    features: Matrix,
    targets: KnnTargets,
    k: usize,
}

impl KnnModel {
    pub fn new(features: Matrix, targets: KnnTargets, k: usize) -> Result<Self> {
        let n = features.nrows();
        let target_len = match &targets {
            KnnTargets::Regression(v) => v.len(),
            KnnTargets::Classification(v) => v.len(),
        };
        if target_len != n {
            return Err(EcfError::DimensionMismatch {
                what: "knn target count",
                expected: n,
                actual: target_len,
            });
        }
        if k == 0 || k > n {
            return Err(EcfError::InvalidInput(format!(
                "knn k={k} out of range 1..={n}"
            )));
        }
        Ok(Self {
            features,
            targets,
            k,
        })
    }

    fn nearest(&self, x: &[f64]) -> Vec<usize> {
        let mut order: Vec<(f64, usize)> = self
            .features
            .rows_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut s = 0.0;
                for (a, b) in row.iter().zip(x) {
                    let d = a - b;
                    s += d * d;
                }
                (s, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        order.into_iter().take(self.k).map(|(_, i)| i).collect()
    }
}

impl PredictionModel for KnnModel {
    fn num_features(&self) -> usize {
        self.features.ncols()
    }

    fn task(&self) -> Task {
        match self.targets {
            KnnTargets::Regression(_) => Task::Regression,
            KnnTargets::Classification(_) => Task::Classification,
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let neighbours = self.nearest(x);
        match &self.targets {
            KnnTargets::Regression(values) => {
                neighbours.iter().map(|&i| values[i]).sum::<f64>() / self.k as f64
            }
            KnnTargets::Classification(labels) => {
                let max_label = *labels.iter().max().unwrap();
                let mut counts = vec![0usize; max_label + 1];
                for &i in &neighbours {
                    counts[labels[i]] += 1;
                }
                let mut best = 0usize;
                for l in 1..counts.len() {
                    if counts[l] > counts[best] {
                        best = l;
                    }
                }
                best as f64
            }
        }
    }
}

/// Ordinary least squares via the normal equations, with a ridge fallback
/// (lambda = 1e-8 on the diagonal) when the unregularized system is
/// numerically singular.
pub fn fit_linear(features: &Matrix, targets: &[f64]) -> Result<LinearModel> {
    let n = features.nrows();
    let m = features.ncols();
    if targets.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "target count",
            expected: n,
            actual: targets.len(),
        });
    }
    if n <= m {
        return Err(EcfError::InvalidInput(format!(
            "least squares needs more rows ({n}) than features ({m})"
        )));
    }
    let coeffs = weighted_least_squares(
        (0..n).map(|i| features.row(i)),
        targets,
        None,
        m,
    )?;
    Ok(LinearModel {
        intercept: coeffs[0],
        weights: coeffs[1..].to_vec(),
    })
}

/// Solve (X'WX) b = X'Wy where X has an implicit leading intercept column.
/// Returns the m+1 coefficients (intercept first).
fn weighted_least_squares<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    targets: &[f64],
    weights: Option<&[f64]>,
    m: usize,
) -> Result<Vec<f64>> {
    let dim = m + 1;
    let mut ata = vec![0.0; dim * dim];
    let mut aty = vec![0.0; dim];
    let mut design_row = vec![0.0; dim];
    for (i, row) in rows.enumerate() {
        design_row[0] = 1.0;
        design_row[1..].copy_from_slice(row);
        let w = weights.map_or(1.0, |ws| ws[i]);
        for a in 0..dim {
            let wa = w * design_row[a];
            aty[a] += wa * targets[i];
            for b in a..dim {
                ata[a * dim + b] += wa * design_row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            ata[a * dim + b] = ata[b * dim + a];
        }
    }
    if let Some(solution) = solve_dense(&ata, &aty, dim) {
        return Ok(solution);
    }
    // ridge fallback
    let mut ridged = ata.clone();
    for a in 0..dim {
        ridged[a * dim + a] += 1e-8;
    }
    solve_dense(&ridged, &aty, dim).ok_or(EcfError::RankDeficient)
}

/// Gaussian elimination with partial pivoting; None when singular.
fn solve_dense(matrix: &[f64], rhs: &[f64], dim: usize) -> Option<Vec<f64>> {
    let mut a = matrix.to_vec();
    let mut b = rhs.to_vec();
    for col in 0..dim {
        let mut pivot = col;
        for row in col + 1..dim {
            if a[row * dim + col].abs() > a[pivot * dim + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * dim + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for j in 0..dim {
                a.swap(col * dim + j, pivot * dim + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * dim + col];
        for row in col + 1..dim {
            let factor = a[row * dim + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..dim {
                a[row * dim + j] -= factor * a[col * dim + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for j in col + 1..dim {
            acc -= a[col * dim + j] * x[j];
        }
        x[col] = acc / a[col * dim + col];
    }
    Some(x)
}

/// An explanation function: object row plus its prediction in, one
/// importance value per feature out.
pub trait Explainer {
    fn explain(&self, x: &[f64], prediction: f64) -> Result<Vec<f64>>;
}

impl<F> Explainer for F
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    fn explain(&self, x: &[f64], prediction: f64) -> Result<Vec<f64>> {
        self(x, prediction)
    }
}

pub const SHAPLEY_DEFAULT_MAX_FEATURES: usize = 12;
pub const SHAPLEY_DEFAULT_BACKGROUND_CAP: usize = 100;

/// Exact Shapley attribution over all 2^m feature coalitions.
///
/// The value of a coalition S is the mean model output over the background
/// rows with every feature outside S replaced by the background row's value
/// (marginal masking in place of per-subset retraining). This keeps the
/// dummy, symmetry and efficiency properties exact.
pub struct ShapleyExplainer<M: PredictionModel> {
    model: M,
    background: Matrix,
    max_features_exact: usize,
}

impl<M: PredictionModel> ShapleyExplainer<M> {
    pub fn new(model: M, background: Matrix) -> Result<Self> {
        if background.nrows() == 0 {
            return Err(EcfError::EmptyInput("shapley background"));
        }
        if background.ncols() != model.num_features() {
            return Err(EcfError::DimensionMismatch {
                what: "background width",
                expected: model.num_features(),
                actual: background.ncols(),
            });
        }
        Ok(Self {
            model,
            background,
            max_features_exact: SHAPLEY_DEFAULT_MAX_FEATURES,
        })
    }

    /// Build with the default background policy: the full training set, or a
    /// seeded subsample of `cap` rows when it is larger.
    pub fn with_background_cap(model: M, training: &Matrix, cap: usize, seed: u64) -> Result<Self> {
        if cap == 0 {
            return Err(EcfError::EmptyInput("background cap"));
        }
        let background = if training.nrows() <= cap {
            training.clone()
        } else {
            let mut indices = sample_without_replacement(training.nrows(), cap, seed);
            indices.sort_unstable();
            training.select_rows(&indices)?
        };
        Self::new(model, background)
    }

    pub fn background(&self) -> &Matrix {
        &self.background
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    /// Mean model output with features outside `mask` taken from each
    /// background row in turn.
    fn coalition_value(&self, x: &[f64], mask: u32) -> f64 {
        let m = x.len();
        let mut composite = vec![0.0; m];
        let mut total = 0.0;
        for row in self.background.rows_iter() {
            for j in 0..m {
                composite[j] = if mask & (1 << j) != 0 { x[j] } else { row[j] };
            }
            total += self.model.predict(&composite);
        }
        total / self.background.nrows() as f64
    }

    pub fn shapley_explain(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.model.num_features();
        if x.len() != m {
            return Err(EcfError::DimensionMismatch {
                what: "object width",
                expected: m,
                actual: x.len(),
            });
        }
        if m > self.max_features_exact {
            return Err(EcfError::TooManyFeatures {
                m,
                max: self.max_features_exact,
            });
        }
        let mask_count = 1usize << m;
        let mut values = vec![0.0; mask_count];
        for mask in 0..mask_count {
            values[mask] = self.coalition_value(x, mask as u32);
        }
        // w(s) = s! (m-s-1)! / m!
        let factorial = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product() };
        let m_fact = factorial(m);
        let weights: Vec<f64> = (0..m)
            .map(|s| factorial(s) * factorial(m - s - 1) / m_fact)
            .collect();
        let mut phi = vec![0.0; m];
        for mask in 0..mask_count {
            for i in 0..m {
                let bit = 1usize << i;
                if mask & bit != 0 {
                    continue;
                }
                let s = (mask as u32).count_ones() as usize;
                phi[i] += weights[s] * (values[mask | bit] - values[mask]);
            }
        }
        Ok(phi)
    }
}

impl<M: PredictionModel> Explainer for ShapleyExplainer<M> {
    fn explain(&self, x: &[f64], _prediction: f64) -> Result<Vec<f64>> {
        self.shapley_explain(x)
    }
}

/// Seeded sample of `count` distinct indices from 0..n (partial
/// Fisher-Yates).
pub(crate) fn sample_without_replacement(n: usize, count: usize, seed: u64) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// Per-feature mean and population standard deviation of the training data,
/// driving the surrogate's perturbation distribution and its distance
/// standardization.
#[derive(Debug, Clone)]
pub struct SamplingSummary {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl SamplingSummary {
    pub fn from_training(training: &Matrix) -> Self {
        let n = training.nrows() as f64;
        let m = training.ncols();
        let mut means = vec![0.0; m];
        let mut stds = vec![0.0; m];
        for j in 0..m {
            let mean = (0..training.nrows()).map(|i| training.get(i, j)).sum::<f64>() / n;
            let var = (0..training.nrows())
                .map(|i| {
                    let d = training.get(i, j) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            means[j] = mean;
            stds[j] = var.sqrt();
        }
        Self { means, stds }
    }
}

pub const SURROGATE_DEFAULT_SAMPLES: usize = 1000;

pub fn default_kernel_width(m: usize) -> f64 {
    0.75 * (m as f64).sqrt()
}

/// Local linear surrogate: Gaussian perturbations drawn from the training
/// marginals, weighted by an exponential kernel on the standardized distance
/// to the explained point, then a weighted least-squares fit whose slopes are
/// the explanation.
///
/// Without a seed every call draws fresh entropy, so repeated explanations of
/// the same object differ — intentionally.
pub struct SurrogateExplainer<M: PredictionModel> {
    model: M,
    summary: SamplingSummary,
    n_samples: usize,
    kernel_width: f64,
    seed: Option<u64>,
}

impl<M: PredictionModel> SurrogateExplainer<M> {
    pub fn new(
        model: M,
        summary: SamplingSummary,
        n_samples: usize,
        kernel_width: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        let m = model.num_features();
        if summary.means.len() != m || summary.stds.len() != m {
            return Err(EcfError::DimensionMismatch {
                what: "sampling summary width",
                expected: m,
                actual: summary.means.len(),
            });
        }
        if n_samples < m + 2 {
            return Err(EcfError::InvalidInput(format!(
                "n_samples={n_samples} too small; need at least m+2={}",
                m + 2
            )));
        }
        if !(kernel_width > 0.0) {
            return Err(EcfError::InvalidInput(format!(
                "kernel width must be positive, got {kernel_width}"
            )));
        }
        Ok(Self {
            model,
            summary,
            n_samples,
            kernel_width,
            seed,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn draw_samples(&self, rng: &mut impl Rng) -> Matrix {
        let m = self.model.num_features();
        let mut data = Vec::with_capacity(self.n_samples * m);
        for _ in 0..self.n_samples {
            for j in 0..m {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(self.summary.means[j] + self.summary.stds[j] * noise);
            }
        }
        Matrix::from_vec(self.n_samples, m, data).expect("non-empty sample shape")
    }

    fn kernel_weight(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for j in 0..x.len() {
            let std = self.summary.stds[j];
            if std > 0.0 {
                let d = (x[j] - z[j]) / std;
                d2 += d * d;
            }
        }
        (-d2 / (self.kernel_width * self.kernel_width)).exp()
    }

    pub fn surrogate_explain(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.model.num_features();
        if x.len() != m {
            return Err(EcfError::DimensionMismatch {
                what: "object width",
                expected: m,
                actual: x.len(),
            });
        }
        let samples = match self.seed {
            Some(seed) => self.draw_samples(&mut ChaCha8Rng::seed_from_u64(seed)),
            None => self.draw_samples(&mut ChaCha8Rng::from_rng(&mut rand::rng())),
        };
        self.fit_to_samples(x, &samples)
    }

    fn fit_to_samples(&self, x: &[f64], samples: &Matrix) -> Result<Vec<f64>> {
        let weights: Vec<f64> = samples.rows_iter().map(|z| self.kernel_weight(x, z)).collect();
        if weights.iter().all(|&w| w < 1e-300) {
            return Err(EcfError::DegenerateWeights);
        }
        let targets: Vec<f64> = samples.rows_iter().map(|z| self.model.predict(z)).collect();
        let coeffs = weighted_least_squares(
            samples.rows_iter(),
            &targets,
            Some(&weights),
            samples.ncols(),
        )?;
        Ok(coeffs[1..].to_vec())
    }
}

impl<M: PredictionModel> Explainer for SurrogateExplainer<M> {
    fn explain(&self, x: &[f64], _prediction: f64) -> Result<Vec<f64>> {
        self.surrogate_explain(x)
    }
}

/// Explain every object in order; failures carry the offending row index.
pub fn explain_all<E: Explainer + ?Sized>(
    explainer: &E,
    augmented: &AugmentedObjectSet,
) -> Result<ExplanationSet> {
    let objects = augmented.objects();
    let m = objects.num_features();
    let mut rows = Vec::with_capacity(objects.len());
    for i in 0..objects.len() {
        let row = objects.features().row(i);
        let prediction = augmented.predictions().numeric(i);
        let explanation = explainer
            .explain(row, prediction)
            .map_err(|e| EcfError::ExplainerFailure {
                row: i,
                message: e.to_string(),
            })?;
        if explanation.len() != m {
            return Err(EcfError::ExplainerFailure {
                row: i,
                message: format!(
                    "explanation width {} does not match feature count {m}",
                    explanation.len()
                ),
            });
        }
        rows.push(explanation);
    }
    ExplanationSet::new(Matrix::from_rows(rows)?)
}
