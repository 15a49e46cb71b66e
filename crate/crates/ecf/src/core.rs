//! Shared data model: objects, predictions, explanations, distance matrices
//! and the report structures every checker feeds into.
//!
//! All types here are immutable after construction and safe to share across
//! threads; constructors do the validation so downstream code can assume
//! aligned, finite data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{EcfError, Result};

/// Dense row-major matrix of `f64`. The one container every module shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(EcfError::EmptyInput("matrix rows"));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(EcfError::EmptyInput("matrix columns"));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(EcfError::DimensionMismatch {
                    what: "matrix row width",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
            let _ = i;
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(EcfError::EmptyInput("matrix shape"));
        }
        if data.len() != rows * cols {
            return Err(EcfError::DimensionMismatch {
                what: "matrix buffer length",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// First non-finite entry, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        for i in 0..self.rows {
            for j in 0..self.cols {
                if !self.get(i, j).is_finite() {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// New matrix whose row i is this matrix's row `indices[i]`. A full
    /// permutation reorders; a subset selects.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(EcfError::EmptyInput("row selection"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &src in indices {
            if src >= self.rows {
                return Err(EcfError::InvalidInput(format!(
                    "row index {src} out of range 0..{}",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(src));
        }
        Self::from_vec(indices.len(), self.cols, data)
    }
}

/// Prediction task kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Regression => write!(f, "regression"),
            Task::Classification => write!(f, "classification"),
        }
    }
}

/// The objects under explanation: an n×m feature matrix plus column names.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectSet {
    features: Matrix,
    feature_names: Vec<String>,
}

impl ObjectSet {
    pub fn new(features: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if feature_names.len() != features.ncols() {
            return Err(EcfError::DimensionMismatch {
                what: "feature names",
                expected: features.ncols(),
                actual: feature_names.len(),
            });
        }
        for (i, name) in feature_names.iter().enumerate() {
            if feature_names[..i].contains(name) {
                return Err(EcfError::InvalidInput(format!(
                    "duplicate feature name {name:?}"
                )));
            }
        }
        if let Some((row, col)) = features.find_non_finite() {
            return Err(EcfError::NonFiniteValue {
                what: "features",
                row,
                col,
            });
        }
        Ok(Self {
            features,
            feature_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }
}

/// Per-object model outputs: real values for regression, labels for
/// classification. Classification labels must cover 0..L without gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum PredictionVector {
    Regression { values: Vec<f64> },
    Classification { labels: Vec<usize>, num_classes: usize },
}

impl PredictionVector {
    pub fn regression(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EcfError::EmptyInput("predictions"));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(EcfError::NonFiniteValue {
                what: "predictions",
                row,
                col: 0,
            });
        }
        Ok(Self::Regression { values })
    }

    pub fn classification(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(EcfError::EmptyInput("predictions"));
        }
        let num_classes = labels.iter().copied().max().unwrap() + 1;
        if num_classes < 2 {
            return Err(EcfError::InvalidInput(
                "classification needs at least two classes".into(),
            ));
        }
        let mut seen = vec![false; num_classes];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(EcfError::EmptyClass(missing));
        }
        Ok(Self::Classification {
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Regression { values } => values.len(),
            Self::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Self::Regression { .. } => Task::Regression,
            Self::Classification { .. } => Task::Classification,
        }
    }

    /// Numeric view of prediction i (label cast to f64 for classification).
    pub fn numeric(&self, i: usize) -> f64 {
        match self {
            Self::Regression { values } => values[i],
            Self::Classification { labels, .. } => labels[i] as f64,
        }
    }

    pub fn regression_values(&self) -> Option<&[f64]> {
        match self {
            Self::Regression { values } => Some(values),
            _ => None,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Self::Classification { labels, .. } => Some(labels),
            _ => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            Self::Classification { num_classes, .. } => Some(*num_classes),
            _ => None,
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(EcfError::DimensionMismatch {
                what: "permutation length",
                expected: self.len(),
                actual: perm.len(),
            });
        }
        Ok(match self {
            Self::Regression { values } => Self::Regression {
                values: perm.iter().map(|&i| values[i]).collect(),
            },
            Self::Classification {
                labels,
                num_classes,
            } => Self::Classification {
                labels: perm.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        })
    }
}

/// Feature-importance matrix, row-aligned with the ObjectSet it explains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationSet {
    importances: Matrix,
}

impl ExplanationSet {
    pub fn new(importances: Matrix) -> Result<Self> {
        if let Some((row, col)) = importances.find_non_finite() {
            return Err(EcfError::NonFiniteValue {
                what: "explanations",
                row,
                col,
            });
        }
        Ok(Self { importances })
    }

    pub fn importances(&self) -> &Matrix {
        &self.importances
    }

    pub fn len(&self) -> usize {
        self.importances.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.importances.ncols()
    }
}

/// Reject misaligned object/prediction/explanation triples; reports the
/// first mismatch it finds.
pub fn validate_aligned<'a>(
    objects: &'a ObjectSet,
    predictions: &'a PredictionVector,
    explanations: &'a ExplanationSet,
) -> Result<(&'a ObjectSet, &'a PredictionVector, &'a ExplanationSet)> {
    let n = objects.len();
    if predictions.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "prediction count",
            expected: n,
            actual: predictions.len(),
        });
    }
    if explanations.len() != n {
        return Err(EcfError::DimensionMismatch {
            what: "explanation count",
            expected: n,
            actual: explanations.len(),
        });
    }
    if explanations.num_features() != objects.num_features() {
        return Err(EcfError::DimensionMismatch {
            what: "explanation width",
            expected: objects.num_features(),
            actual: explanations.num_features(),
        });
    }
    Ok((objects, predictions, explanations))
}

/// Z-standardize every column in place (population standard deviation,
/// divisor n). Constant columns map to all-zeros instead of erroring so the
/// row/column alignment with the explanation matrix survives.
pub fn standardize_columns(matrix: &Matrix) -> Matrix {
    let n = matrix.nrows();
    let m = matrix.ncols();
    let mut out = Matrix::zeros(n, m);
    for j in 0..m {
        let mean = (0..n).map(|i| matrix.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| {
                let d = matrix.get(i, j) - mean;
                d * d
            })
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        if std > 0.0 {
            for i in 0..n {
                out.set(i, j, (matrix.get(i, j) - mean) / std);
            }
        }
        // constant column: leave zeros
    }
    out
}

/// Objects joined with their predictions. For regression the prediction is
/// appended as one extra standardized column of the distance-ready matrix;
/// for classification the labels stay out of the distance computation.
#[derive(Debug, Clone)]
pub struct AugmentedObjectSet {
    objects: ObjectSet,
    predictions: PredictionVector,
    augmented: Matrix,
}

impl AugmentedObjectSet {
    pub fn objects(&self) -> &ObjectSet {
        &self.objects
    }

    pub fn predictions(&self) -> &PredictionVector {
        &self.predictions
    }

    /// The standardized matrix distances are computed over.
    pub fn augmented(&self) -> &Matrix {
        &self.augmented
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Join objects with predictions and standardize for distance computation.
pub fn build_augmented(
    objects: ObjectSet,
    predictions: PredictionVector,
) -> Result<AugmentedObjectSet> {
    if predictions.len() != objects.len() {
        return Err(EcfError::DimensionMismatch {
            what: "prediction count",
            expected: objects.len(),
            actual: predictions.len(),
        });
    }
    let augmented = match &predictions {
        PredictionVector::Regression { values } => {
            let n = objects.len();
            let m = objects.num_features();
            let mut wide = Matrix::zeros(n, m + 1);
            for i in 0..n {
                for j in 0..m {
                    wide.set(i, j, objects.features().get(i, j));
                }
                wide.set(i, m, values[i]);
            }
            standardize_columns(&wide)
        }
        PredictionVector::Classification { .. } => standardize_columns(objects.features()),
    };
    Ok(AugmentedObjectSet {
        objects,
        predictions,
        augmented,
    })
}

/// Symmetric nonnegative distance matrix with a zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    const SYMMETRY_TOL: f64 = 1e-12;

    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(EcfError::InvalidInput(
                "distance matrix needs at least 2 rows".into(),
            ));
        }
        if entries.len() != n * n {
            return Err(EcfError::DimensionMismatch {
                what: "distance matrix buffer",
                expected: n * n,
                actual: entries.len(),
            });
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(EcfError::InvalidInput(format!(
                    "distance matrix diagonal entry ({i},{i}) is not zero"
                )));
            }
            for j in 0..i {
                let a = entries[i * n + j];
                let b = entries[j * n + i];
                if !a.is_finite() || a < 0.0 {
                    return Err(EcfError::NonFiniteValue {
                        what: "distance matrix",
                        row: i,
                        col: j,
                    });
                }
                if (a - b).abs() > Self::SYMMETRY_TOL {
                    return Err(EcfError::InvalidInput(format!(
                        "distance matrix asymmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Column j with the structural zero at row j removed.
    pub fn column_without_diagonal(&self, j: usize) -> Vec<f64> {
        (0..self.n)
            .filter(|&i| i != j)
            .map(|i| self.get(i, j))
            .collect()
    }
}

/// Which axiom a verdict belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    Identity,
    Separability,
    Stability,
}

impl std::fmt::Display for Axiom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axiom::Identity => write!(f, "identity"),
            Axiom::Separability => write!(f, "separability"),
            Axiom::Stability => write!(f, "stability"),
        }
    }
}

/// Violated/satisfied counts for one axiom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub axiom: Axiom,
    pub checks_total: u64,
    pub violated: u64,
    pub satisfied: u64,
    pub satisfied_fraction: f64,
}

impl AxiomVerdict {
    pub fn new(axiom: Axiom, violated: u64, satisfied: u64) -> Self {
        let checks_total = violated + satisfied;
        let satisfied_fraction = if checks_total == 0 {
            0.0
        } else {
            satisfied as f64 / checks_total as f64
        };
        Self {
            axiom,
            checks_total,
            violated,
            satisfied,
            satisfied_fraction,
        }
    }
}

/// Distribution summary of the per-column rank correlations behind a
/// regression stability verdict. Degenerate (constant) columns carry NaN in
/// `per_column` and are listed in `degenerate_columns`; the aggregates are
/// taken over the finite entries.
///
/// NaN entries serialize as JSON null and read back as NaN.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoSummary {
    #[serde(with = "nan_as_null")]
    pub min: f64,
    #[serde(with = "nan_as_null")]
    pub max: f64,
    #[serde(with = "nan_as_null")]
    pub mean: f64,
    #[serde(with = "nan_as_null")]
    pub median: f64,
    #[serde(with = "nan_vec_as_null")]
    pub per_column: Vec<f64>,
    pub degenerate_columns: Vec<usize>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else {
            serializer.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::NAN))
    }
}

mod nan_vec_as_null {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(values.len()))?;
        for v in values {
            if v.is_finite() {
                seq.serialize_element(v)?;
            } else {
                seq.serialize_element(&Option::<f64>::None)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(deserializer)?
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect())
    }
}

impl RhoSummary {
    pub fn from_columns(per_column: Vec<f64>, degenerate_columns: Vec<usize>) -> Self {
        let mut finite: Vec<f64> = per_column.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (min, max, mean, median) = if finite.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            let k = finite.len();
            let mean = finite.iter().sum::<f64>() / k as f64;
            let median = if k % 2 == 1 {
                finite[k / 2]
            } else {
                (finite[k / 2 - 1] + finite[k / 2]) / 2.0
            };
            (finite[0], finite[k - 1], mean, median)
        };
        Self {
            min,
            max,
            mean,
            median,
            per_column,
            degenerate_columns,
        }
    }
}

/// Clustering algorithm used for the classification stability axiom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusteringChoice {
    KmeansInformed,
    AgnesSingle,
    AgnesWard,
}

impl std::fmt::Display for ClusteringChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClusteringChoice::KmeansInformed => write!(f, "kmeans-informed"),
            ClusteringChoice::AgnesSingle => write!(f, "agnes-single"),
            ClusteringChoice::AgnesWard => write!(f, "agnes-ward"),
        }
    }
}

/// Per-class agreement between predicted-label member sets and the matched
/// explanation clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSimilarityTable {
    pub algorithm: ClusteringChoice,
    pub per_label_jaccard: BTreeMap<usize, f64>,
}
