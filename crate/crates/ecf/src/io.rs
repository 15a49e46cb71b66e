//! CSV ingestion and writing. The interchange format is a strict numeric
//! subset of RFC 4180: comma delimiter, dot decimal, header row, no quoting.
//! Anything an external explainer pipeline can dump as numbers evaluates
//! here.

use std::fs;
use std::path::{Path, PathBuf};

use crate::core::{ExplanationSet, Matrix, ObjectSet, PredictionVector, Task};
use crate::error::{EcfError, Result};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|source| EcfError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(|t| t.trim()).collect()
}

fn parse_numeric_rows(
    path: &Path,
    lines: &[String],
    expected_fields: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(lines.len());
    for (offset, line) in lines.iter().enumerate() {
        let line_no = offset + 2; // 1-based, after the header
        let fields = split_fields(line);
        if fields.len() != expected_fields {
            return Err(EcfError::SchemaMismatch(format!(
                "{}: line {line_no}: expected {expected_fields} fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(expected_fields);
        for (col, token) in fields.iter().enumerate() {
            let value: f64 = token.parse().map_err(|_| EcfError::ParseError {
                path: path.to_path_buf(),
                line: line_no,
                column: col + 1,
                token: token.to_string(),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Load a feature matrix: header row of unique names, then numeric rows.
pub fn load_dataset(path: &Path) -> Result<ObjectSet> {
    let lines = read_lines(path)?;
    if lines.len() < 2 {
        return Err(EcfError::EmptyFile(path.to_path_buf()));
    }
    let names: Vec<String> = split_fields(&lines[0]).iter().map(|s| s.to_string()).collect();
    let rows = parse_numeric_rows(path, &lines[1..], names.len())?;
    ObjectSet::new(Matrix::from_rows(rows)?, names)
}

/// Load a single-column prediction file. Regression values parse as reals;
/// classification labels must be nonnegative integers covering every class.
pub fn load_predictions(path: &Path, task: Task) -> Result<PredictionVector> {
    let lines = read_lines(path)?;
    if lines.len() < 2 {
        return Err(EcfError::EmptyFile(path.to_path_buf()));
    }
    let mut values = Vec::with_capacity(lines.len() - 1);
    let mut labels = Vec::with_capacity(lines.len() - 1);
    for (offset, line) in lines[1..].iter().enumerate() {
        let line_no = offset + 2;
        let fields = split_fields(line);
        if fields.len() != 1 {
            return Err(EcfError::SchemaMismatch(format!(
                "{}: line {line_no}: expected 1 field, found {}",
                path.display(),
                fields.len()
            )));
        }
        let token = fields[0];
        match task {
            Task::Regression => {
                let value: f64 = token.parse().map_err(|_| EcfError::ParseError {
                    path: path.to_path_buf(),
                    line: line_no,
                    column: 1,
                    token: token.to_string(),
                })?;
                values.push(value);
            }
            Task::Classification => {
                let label: usize = token.parse().map_err(|_| EcfError::ParseError {
                    path: path.to_path_buf(),
                    line: line_no,
                    column: 1,
                    token: token.to_string(),
                })?;
                labels.push(label);
            }
        }
    }
    match task {
        Task::Regression => PredictionVector::regression(values),
        Task::Classification => PredictionVector::classification(labels),
    }
}

/// Load an explanation matrix whose header must match the dataset's feature
/// names exactly (same columns, same order).
pub fn load_explanations(path: &Path, expected_names: &[String]) -> Result<ExplanationSet> {
    let lines = read_lines(path)?;
    if lines.len() < 2 {
        return Err(EcfError::EmptyFile(path.to_path_buf()));
    }
    let names: Vec<&str> = split_fields(&lines[0]);
    if names.len() != expected_names.len()
        || names.iter().zip(expected_names).any(|(a, b)| *a != b.as_str())
    {
        return Err(EcfError::SchemaMismatch(format!(
            "{}: explanation header [{}] does not match dataset header [{}]",
            path.display(),
            names.join(", "),
            expected_names.join(", ")
        )));
    }
    let rows = parse_numeric_rows(path, &lines[1..], expected_names.len())?;
    ExplanationSet::new(Matrix::from_rows(rows)?)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| EcfError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a matrix as CSV. `{}` float formatting is shortest-round-trip, so
/// load(write(x)) reproduces every entry exactly.
pub fn write_matrix_csv(path: &Path, header: &[String], matrix: &Matrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in matrix.rows_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Write predictions as a single-column CSV with header `y`.
pub fn write_predictions_csv(path: &Path, predictions: &PredictionVector) -> Result<()> {
    let mut out = String::from("y\n");
    match predictions {
        PredictionVector::Regression { values } => {
            for v in values {
                out.push_str(&format!("{v}\n"));
            }
        }
        PredictionVector::Classification { labels, .. } => {
            for l in labels {
                out.push_str(&format!("{l}\n"));
            }
        }
    }
    write_file(path, &out)
}

/// dir/name, creating `dir` if needed.
pub fn prepare_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|source| EcfError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir.join(name))
}
