//! Distance, rank-correlation and set-similarity primitives.
//!
//! The distance function is deliberately a single seam: every axiom checker
//! goes through [`euclidean`]/[`pairwise_distances`], so an alternate metric
//! would be a local change here.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::core::{DistanceMatrix, Matrix};
use crate::error::{EcfError, Result};

/// Coordinate equality at relative-or-absolute tolerance:
/// |a - b| <= tol * max(1, |a|, |b|).
pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

/// Row equality: every coordinate within tolerance.
pub fn rows_equal(a: &[f64], b: &[f64], tol: f64) -> bool {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).all(|(&x, &y)| approx_eq(x, y, tol))
}

/// L2 distance between two equal-length vectors.
pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(EcfError::DimensionMismatch {
            what: "vector length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(euclidean_unchecked(a, b))
}

#[inline]
fn euclidean_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s.sqrt()
}

/// Full pairwise Euclidean distance matrix over the rows of `rows`.
///
/// Rows are computed independently (parallel over i), so the result is
/// bit-identical regardless of thread count.
pub fn pairwise_distances(rows: &Matrix) -> Result<DistanceMatrix> {
    let n = rows.nrows();
    if n < 2 {
        return Err(EcfError::InvalidInput(
            "pairwise distances need at least 2 rows".into(),
        ));
    }
    let m = rows.ncols();
    let data = rows.rows_iter().collect::<Vec<_>>();
    let entries: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let data = &data;
            (0..n).map(move |j| {
                if i == j {
                    0.0
                } else if i < j {
                    euclidean_unchecked(data[i], data[j])
                } else {
                    // recompute with the same operand order as (j,i) so the
                    // matrix is exactly symmetric
                    euclidean_unchecked(data[j], data[i])
                }
            })
        })
        .collect();
    let _ = m;
    DistanceMatrix::new(n, entries)
}

/// Ranks with 1 assigned to the largest value; ties share the average of the
/// ranks they span.
#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    pub ranks: Vec<f64>,
}

pub fn rank_average_ties(values: &[f64]) -> RankVector {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // descending by value; index order breaks exact ties deterministically
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0.0; n];
    let mut pos = 0;
    while pos < n {
        let mut end = pos + 1;
        while end < n && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        // positions pos..end hold equal values; average their 1-based ranks
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = avg;
        }
        pos = end;
    }
    RankVector { ranks }
}

/// Spearman's rank correlation: Pearson correlation of the average-rank
/// vectors. Coincides with the closed form 1 - 6*sum(D^2)/(n(n^2-1)) when no
/// ties are present.
pub fn spearman_rho(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EcfError::DimensionMismatch {
            what: "sequence length",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let n = u.len();
    if n < 3 {
        return Err(EcfError::InvalidInput(
            "spearman_rho needs at least 3 observations".into(),
        ));
    }
    if is_constant(u) {
        return Err(EcfError::DegenerateInput(
            "first sequence is constant; rank correlation undefined".into(),
        ));
    }
    if is_constant(v) {
        return Err(EcfError::DegenerateInput(
            "second sequence is constant; rank correlation undefined".into(),
        ));
    }
    let ru = rank_average_ties(u).ranks;
    let rv = rank_average_ties(v).ranks;
    Ok(pearson(&ru, &rv))
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Jaccard index |A ∩ B| / |A ∪ B| of two index sets.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(EcfError::BothEmpty);
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    Ok(intersection / union)
}
