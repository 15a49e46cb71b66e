//! Clustering backends for the classification stability axiom: seeded
//! (deterministic) k-means and agglomerative hierarchical clustering with
//! single or Ward linkage.
//!
//! Determinism rules used throughout: nearest-centroid and merge-pair ties
//! break toward the lowest index, and an empty k-means cluster keeps its
//! previous centroid instead of being re-seeded.

use crate::core::{ExplanationSet, Matrix, PredictionVector};
use crate::error::{EcfError, Result};

pub const KMEANS_DEFAULT_MAX_ITER: usize = 300;
pub const KMEANS_DEFAULT_TOL: f64 = 1e-6;

/// Flat cluster assignment. `centroids` is present for k-means results,
/// where cluster index c keeps the meaning of initial centroid c.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub centroids: Option<Matrix>,
}

/// One merger of a bottom-up hierarchical clustering. Original points carry
/// ids 0..n; the t-th merge creates id n+t.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub new_id: usize,
}

/// Linkage criterion for [`agnes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Minimum inter-point distance between the merged clusters.
    Single,
    /// Increase in total within-cluster sum of squares caused by the merge.
    Ward,
}

/// Per-class mean explanation vectors, used as deterministic k-means seeds.
pub fn informed_centroids(
    explanations: &ExplanationSet,
    predictions: &PredictionVector,
) -> Result<Matrix> {
    let labels = predictions
        .labels()
        .ok_or_else(|| EcfError::InvalidInput("informed centroids need a classification task".into()))?;
    if labels.len() != explanations.len() {
        return Err(EcfError::DimensionMismatch {
            what: "prediction count",
            expected: explanations.len(),
            actual: labels.len(),
        });
    }
    let k = predictions.num_classes().unwrap();
    let m = explanations.num_features();
    let mut sums = Matrix::zeros(k, m);
    let mut counts = vec![0usize; k];
    for (i, &label) in labels.iter().enumerate() {
        counts[label] += 1;
        for j in 0..m {
            sums.set(label, j, sums.get(label, j) + explanations.importances().get(i, j));
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(EcfError::EmptyClass(c));
        }
        for j in 0..m {
            sums.set(c, j, sums.get(c, j) / count as f64);
        }
    }
    Ok(sums)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Lloyd's algorithm from caller-provided centroids; no randomization
/// anywhere. Terminates when assignments stop changing, when the largest
/// centroid movement drops below `tol`, or after `max_iter` iterations.
pub fn kmeans_seeded(
    points: &Matrix,
    initial_centroids: &Matrix,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterAssignment> {
    let n = points.nrows();
    let m = points.ncols();
    let k = initial_centroids.nrows();
    if n == 0 {
        return Err(EcfError::EmptyInput("k-means points"));
    }
    if k == 0 || k > n {
        return Err(EcfError::ClusterCountOutOfRange { k, n });
    }
    if initial_centroids.ncols() != m {
        return Err(EcfError::DimensionMismatch {
            what: "centroid width",
            expected: m,
            actual: initial_centroids.ncols(),
        });
    }
    for i in 0..k {
        for j in 0..i {
            if initial_centroids.row(i) == initial_centroids.row(j) {
                return Err(EcfError::DuplicateInitialCentroids(j, i));
            }
        }
    }

    let mut centroids = initial_centroids.clone();
    let mut labels = assign_nearest(points, &centroids);
    for _ in 0..max_iter {
        let next_centroids = recompute_centroids(points, &labels, &centroids);
        let movement = (0..k)
            .map(|c| squared_distance(centroids.row(c), next_centroids.row(c)).sqrt())
            .fold(0.0f64, f64::max);
        centroids = next_centroids;
        let next_labels = assign_nearest(points, &centroids);
        let unchanged = next_labels == labels;
        labels = next_labels;
        if unchanged || movement < tol {
            break;
        }
    }
    Ok(ClusterAssignment {
        labels,
        k,
        centroids: Some(centroids),
    })
}

fn assign_nearest(points: &Matrix, centroids: &Matrix) -> Vec<usize> {
    let k = centroids.nrows();
    points
        .rows_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = squared_distance(p, centroids.row(0));
            for c in 1..k {
                let d = squared_distance(p, centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn recompute_centroids(points: &Matrix, labels: &[usize], previous: &Matrix) -> Matrix {
    let k = previous.nrows();
    let m = points.ncols();
    let mut sums = Matrix::zeros(k, m);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..m {
            sums.set(c, j, sums.get(c, j) + points.get(i, j));
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            // empty cluster: freeze the previous centroid
            for j in 0..m {
                sums.set(c, j, previous.get(c, j));
            }
        } else {
            for j in 0..m {
                sums.set(c, j, sums.get(c, j) / counts[c] as f64);
            }
        }
    }
    sums
}

/// Agglomerative clustering from n singletons down to one cluster.
///
/// Returns the full merge sequence. Single-linkage heights are the exact
/// inter-point Euclidean distances that triggered each merge (updated with
/// the Lance-Williams minimum rule, so the values are never recomputed);
/// Ward heights are the within-cluster sum-of-squares increase of each merge.
pub fn agnes(points: &Matrix, linkage: Linkage) -> Result<Vec<MergeStep>> {
    let n = points.nrows();
    if n < 2 {
        return Err(EcfError::InvalidInput(
            "agnes needs at least 2 points".into(),
        ));
    }

    // condensed lower triangle: dist[idx(i,j)] with j < i
    let idx = |i: usize, j: usize| -> usize {
        debug_assert!(j < i);
        i * (i - 1) / 2 + j
    };
    let mut dist = vec![0.0f64; n * (n - 1) / 2];
    for i in 1..n {
        for j in 0..i {
            let d2 = squared_distance(points.row(i), points.row(j));
            dist[idx(i, j)] = match linkage {
                Linkage::Single => d2.sqrt(),
                Linkage::Ward => 0.5 * d2,
            };
        }
    }
    let get = |dist: &[f64], a: usize, b: usize| -> f64 {
        if a > b {
            dist[idx(a, b)]
        } else {
            dist[idx(b, a)]
        }
    };

    let m = points.ncols();
    let mut active = vec![true; n];
    let mut sizes = vec![1usize; n];
    // centroid per slot (only consulted for Ward)
    let mut centroids: Vec<Vec<f64>> = points.rows_iter().map(|r| r.to_vec()).collect();
    // public dendrogram id currently held by each slot
    let mut public_id: Vec<usize> = (0..n).collect();
    // nearest active neighbour per slot (exact, lowest slot wins ties)
    let mut nn: Vec<Option<(f64, usize)>> = vec![None; n];
    let scan_nn = |dist: &[f64], active: &[bool], s: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for t in 0..active.len() {
            if t == s || !active[t] {
                continue;
            }
            let d = get(dist, s, t);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, t));
            }
        }
        best
    };
    for s in 0..n {
        nn[s] = scan_nn(&dist, &active, s);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // global closest pair; ascending slot scan keeps ties deterministic
        let mut best: Option<(f64, usize, usize)> = None;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            if let Some((d, t)) = nn[s] {
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, s, t));
                }
            }
        }
        let (height, a, b) = best.expect("at least two active clusters remain");
        let (keep, drop) = if a < b { (a, b) } else { (b, a) };

        let (left, right) = {
            let (p, q) = (public_id[keep], public_id[drop]);
            if p < q {
                (p, q)
            } else {
                (q, p)
            }
        };
        let new_id = n + step;
        merges.push(MergeStep {
            left,
            right,
            height,
            new_id,
        });

        // merge `drop` into `keep`
        match linkage {
            Linkage::Single => {
                for t in 0..n {
                    if !active[t] || t == keep || t == drop {
                        continue;
                    }
                    let d = get(&dist, t, keep).min(get(&dist, t, drop));
                    if t > keep {
                        dist[idx(t, keep)] = d;
                    } else {
                        dist[idx(keep, t)] = d;
                    }
                }
            }
            Linkage::Ward => {
                let (sk, sd) = (sizes[keep] as f64, sizes[drop] as f64);
                let total = sk + sd;
                let merged: Vec<f64> = (0..m)
                    .map(|j| (centroids[keep][j] * sk + centroids[drop][j] * sd) / total)
                    .collect();
                centroids[keep] = merged;
                for t in 0..n {
                    if !active[t] || t == keep || t == drop {
                        continue;
                    }
                    let st = sizes[t] as f64;
                    let d = st * total / (st + total)
                        * squared_distance(&centroids[t], &centroids[keep]);
                    if t > keep {
                        dist[idx(t, keep)] = d;
                    } else {
                        dist[idx(keep, t)] = d;
                    }
                }
            }
        }
        sizes[keep] += sizes[drop];
        active[drop] = false;
        public_id[keep] = new_id;

        // repair nearest-neighbour cache
        nn[keep] = scan_nn(&dist, &active, keep);
        for t in 0..n {
            if !active[t] || t == keep {
                continue;
            }
            match nn[t] {
                Some((_, s)) if s == keep || s == drop => {
                    nn[t] = scan_nn(&dist, &active, t);
                }
                Some((bd, _)) => {
                    let d = get(&dist, t, keep);
                    if d < bd {
                        nn[t] = Some((d, keep));
                    }
                }
                None => {}
            }
        }
    }
    Ok(merges)
}

/// Flatten a merge sequence into k clusters by undoing the last k-1 merges.
/// Cluster ids are assigned by first appearance over points 0..n, which makes
/// them arbitrary but stable for a fixed sequence.
pub fn cut_dendrogram(merges: &[MergeStep], k: usize) -> Result<ClusterAssignment> {
    let n = merges.len() + 1;
    if k == 0 || k > n {
        return Err(EcfError::ClusterCountOutOfRange { k, n });
    }
    let total_ids = n + merges.len();
    let mut parent: Vec<usize> = (0..total_ids).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for merge in &merges[..n - k] {
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = merge.new_id;
        parent[r] = merge.new_id;
    }
    let mut relabel: Vec<Option<usize>> = vec![None; total_ids];
    let mut next = 0usize;
    let mut labels = Vec::with_capacity(n);
    for point in 0..n {
        let root = find(&mut parent, point);
        let label = *relabel[root].get_or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
        labels.push(label);
    }
    debug_assert_eq!(next, k);
    Ok(ClusterAssignment {
        labels,
        k,
        centroids: None,
    })
}

/// One-to-one cluster-to-label mapping maximizing the number of objects whose
/// cluster agrees with their predicted label. Exhaustive search up to k = 8,
/// greedy best-first above; ties resolve to the lexicographically first
/// assignment so results are reproducible.
pub fn map_clusters_to_labels(
    assignment: &ClusterAssignment,
    predictions: &PredictionVector,
) -> Result<Vec<usize>> {
    let labels = predictions
        .labels()
        .ok_or_else(|| EcfError::InvalidInput("cluster mapping needs a classification task".into()))?;
    let num_classes = predictions.num_classes().unwrap();
    if assignment.k != num_classes {
        return Err(EcfError::DimensionMismatch {
            what: "cluster count vs class count",
            expected: num_classes,
            actual: assignment.k,
        });
    }
    if assignment.labels.len() != labels.len() {
        return Err(EcfError::DimensionMismatch {
            what: "assignment length",
            expected: labels.len(),
            actual: assignment.labels.len(),
        });
    }
    let k = assignment.k;
    let mut counts = vec![vec![0u64; k]; k]; // counts[cluster][class]
    for (i, &cluster) in assignment.labels.iter().enumerate() {
        counts[cluster][labels[i]] += 1;
    }

    if k <= 8 {
        let mut best: Option<(u64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..k).collect();
        permute(&mut perm, 0, &mut |p| {
            let score: u64 = (0..k).map(|c| counts[c][p[c]]).sum();
            if best.as_ref().is_none_or(|(bs, _)| score > *bs) {
                best = Some((score, p.to_vec()));
            }
        });
        Ok(best.unwrap().1)
    } else {
        let mut mapping = vec![usize::MAX; k];
        let mut cluster_used = vec![false; k];
        let mut class_used = vec![false; k];
        for _ in 0..k {
            let mut best = (0u64, usize::MAX, usize::MAX);
            for c in 0..k {
                if cluster_used[c] {
                    continue;
                }
                for l in 0..k {
                    if class_used[l] {
                        continue;
                    }
                    if best.1 == usize::MAX || counts[c][l] > best.0 {
                        best = (counts[c][l], c, l);
                    }
                }
            }
            mapping[best.1] = best.2;
            cluster_used[best.1] = true;
            class_used[best.2] = true;
        }
        Ok(mapping)
    }
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: Vec<Vec<f64>>) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn explanations(rows: Vec<Vec<f64>>) -> ExplanationSet {
        ExplanationSet::new(matrix(rows)).unwrap()
    }

    fn sse(points: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &c)| squared_distance(points.row(i), centroids.row(c)))
            .sum()
    }

    #[test]
    fn informed_centroids_singleton_classes() {
        let e = explanations(vec![vec![1.0, 1.0], vec![3.0, 3.0]]);
        let p = PredictionVector::classification(vec![0, 1]).unwrap();
        let c = informed_centroids(&e, &p).unwrap();
        assert_eq!(c.row(0), &[1.0, 1.0]);
        assert_eq!(c.row(1), &[3.0, 3.0]);
    }

    #[test]
    fn informed_centroids_mean_of_two_points() {
        // both rows in class 0, plus a second class so the vector validates
        let e = explanations(vec![vec![0.0, 0.0], vec![2.0, 2.0], vec![9.0, 9.0]]);
        let p = PredictionVector::classification(vec![0, 0, 1]).unwrap();
        let c = informed_centroids(&e, &p).unwrap();
        assert_eq!(c.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn informed_centroids_match_direct_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n_per = 10;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..3usize {
            for _ in 0..n_per {
                rows.push(vec![
                    rng.random::<f64>() + class as f64,
                    rng.random::<f64>() - class as f64,
                ]);
                labels.push(class);
            }
        }
        let e = explanations(rows.clone());
        let p = PredictionVector::classification(labels.clone()).unwrap();
        let c = informed_centroids(&e, &p).unwrap();
        for class in 0..3 {
            for j in 0..2 {
                let mut sum = 0.0;
                let mut count = 0.0;
                for (i, &l) in labels.iter().enumerate() {
                    if l == class {
                        sum += rows[i][j];
                        count += 1.0;
                    }
                }
                assert!((c.get(class, j) - sum / count).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_already_converged_blobs() {
        let points = matrix(vec![
            vec![0.0, 0.0],
            vec![0.2, -0.2],
            vec![10.0, 10.0],
            vec![10.2, 9.8],
        ]);
        let init = matrix(vec![vec![0.1, -0.1], vec![10.1, 9.9]]);
        let out = kmeans_seeded(&points, &init, KMEANS_DEFAULT_MAX_ITER, KMEANS_DEFAULT_TOL)
            .unwrap();
        assert_eq!(out.labels, vec![0, 0, 1, 1]);
        // centroids were already at blob means, so they stay put
        assert_eq!(out.centroids.as_ref().unwrap().row(0), &[0.1, -0.1]);
        assert_eq!(out.centroids.as_ref().unwrap().row(1), &[10.1, 9.9]);
    }

    #[test]
    fn kmeans_nearest_centre_partition() {
        let points = matrix(vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let init = matrix(vec![vec![0.5], vec![10.5]]);
        let out = kmeans_seeded(&points, &init, KMEANS_DEFAULT_MAX_ITER, KMEANS_DEFAULT_TOL)
            .unwrap();
        assert_eq!(out.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn kmeans_never_increases_sse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points = matrix(
            (0..50)
                .map(|_| vec![rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0])
                .collect(),
        );
        let init = matrix(vec![vec![0.5, 0.5], vec![2.0, 2.0], vec![3.5, 3.5]]);
        let initial_sse = {
            let labels = assign_nearest(&points, &init);
            sse(&points, &labels, &init)
        };
        let out = kmeans_seeded(&points, &init, KMEANS_DEFAULT_MAX_ITER, KMEANS_DEFAULT_TOL)
            .unwrap();
        let final_sse = sse(&points, &out.labels, out.centroids.as_ref().unwrap());
        assert!(final_sse <= initial_sse + 1e-12);
    }

    #[test]
    fn kmeans_is_deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let points = matrix(
            (0..40)
                .map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        );
        let init = matrix(vec![
            vec![0.2, 0.2, 0.2],
            vec![0.5, 0.5, 0.5],
            vec![0.8, 0.8, 0.8],
        ]);
        let a = kmeans_seeded(&points, &init, 300, 1e-6).unwrap();
        let b = kmeans_seeded(&points, &init, 300, 1e-6).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn kmeans_rejects_duplicate_centroids() {
        let points = matrix(vec![vec![0.0], vec![1.0], vec![2.0]]);
        let init = matrix(vec![vec![0.5], vec![0.5]]);
        assert!(matches!(
            kmeans_seeded(&points, &init, 10, 1e-6),
            Err(EcfError::DuplicateInitialCentroids(0, 1))
        ));
    }

    #[test]
    fn agnes_single_hand_example() {
        let points = matrix(vec![vec![0.0], vec![1.0], vec![5.0]]);
        let merges = agnes(&points, Linkage::Single).unwrap();
        assert_eq!(merges.len(), 2);
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
        assert_eq!(merges[0].height, 1.0);
        assert_eq!(merges[0].new_id, 3);
        assert_eq!((merges[1].left, merges[1].right), (2, 3));
        assert_eq!(merges[1].height, 4.0);
    }

    #[test]
    fn agnes_ward_first_merge_minimizes_sse_increase() {
        // pairwise SSE increases: {0,2} -> 2, {2,10} -> 32, {0,10} -> 50
        let points = matrix(vec![vec![0.0], vec![2.0], vec![10.0]]);
        let merges = agnes(&points, Linkage::Ward).unwrap();
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
        assert!((merges[0].height - 2.0).abs() < 1e-12);
        // final merge adds the remaining SSE: total SSE of {0,2,10} is 56
        assert!((merges[0].height + merges[1].height - 56.0).abs() < 1e-12);
    }

    #[test]
    fn agnes_heights_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &linkage in &[Linkage::Single, Linkage::Ward] {
            for _ in 0..20 {
                let n = rng.random_range(2..30);
                let points = matrix(
                    (0..n)
                        .map(|_| vec![rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0])
                        .collect(),
                );
                let merges = agnes(&points, linkage).unwrap();
                for w in merges.windows(2) {
                    assert!(
                        w[1].height >= w[0].height - 1e-9,
                        "non-monotone merge heights under {linkage:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_linkage_heights_equal_mst_edges() {
        // Prim's algorithm as an independent oracle
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let n = rng.random_range(2..=30);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0])
                .collect();
            let points = matrix(rows.clone());
            let mut heights: Vec<f64> = agnes(&points, Linkage::Single)
                .unwrap()
                .iter()
                .map(|m| m.height)
                .collect();
            heights.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let mut mst = prim_mst_weights(&rows);
            mst.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(heights, mst);
        }
    }

    fn prim_mst_weights(rows: &[Vec<f64>]) -> Vec<f64> {
        let n = rows.len();
        let dist = |a: usize, b: usize| {
            let mut s = 0.0;
            for c in 0..rows[a].len() {
                let d = rows[a][c] - rows[b][c];
                s += d * d;
            }
            s.sqrt()
        };
        let mut in_tree = vec![false; n];
        let mut best = vec![f64::INFINITY; n];
        in_tree[0] = true;
        for j in 1..n {
            best[j] = dist(0, j);
        }
        let mut weights = Vec::with_capacity(n - 1);
        for _ in 0..n - 1 {
            let mut pick = usize::MAX;
            for j in 0..n {
                if !in_tree[j] && (pick == usize::MAX || best[j] < best[pick]) {
                    pick = j;
                }
            }
            weights.push(best[pick]);
            in_tree[pick] = true;
            for j in 0..n {
                if !in_tree[j] {
                    let d = dist(pick, j);
                    if d < best[j] {
                        best[j] = d;
                    }
                }
            }
        }
        weights
    }

    #[test]
    fn agnes_matches_naive_reference_for_both_linkages() {
        // reference: no nearest-neighbour cache, linkage distances recomputed
        // from their definitions at every step
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for &linkage in &[Linkage::Single, Linkage::Ward] {
            for _ in 0..15 {
                let n = rng.random_range(2..=25);
                let m = rng.random_range(1..4);
                let points = matrix(
                    (0..n)
                        .map(|_| (0..m).map(|_| rng.random::<f64>() * 8.0).collect())
                        .collect(),
                );
                let fast = agnes(&points, linkage).unwrap();
                let naive = naive_agnes(&points, linkage);
                assert_eq!(fast.len(), naive.len());
                for (a, b) in fast.iter().zip(&naive) {
                    assert_eq!((a.left, a.right, a.new_id), (b.left, b.right, b.new_id));
                    let scale = a.height.abs().max(b.height.abs()).max(1.0);
                    assert!(
                        (a.height - b.height).abs() <= 1e-9 * scale,
                        "height {} vs {} under {linkage:?}",
                        a.height,
                        b.height
                    );
                }
            }
        }
    }

    fn naive_agnes(points: &Matrix, linkage: Linkage) -> Vec<MergeStep> {
        let n = points.nrows();
        // (lowest original slot, public id, member indices)
        let mut clusters: Vec<(usize, usize, Vec<usize>)> =
            (0..n).map(|i| (i, i, vec![i])).collect();
        let point_dist = |a: usize, b: usize| {
            squared_distance(points.row(a), points.row(b)).sqrt()
        };
        let sse = |members: &[usize]| -> f64 {
            let m = points.ncols();
            let mut mean = vec![0.0; m];
            for &i in members {
                for j in 0..m {
                    mean[j] += points.get(i, j);
                }
            }
            for v in &mut mean {
                *v /= members.len() as f64;
            }
            members
                .iter()
                .map(|&i| squared_distance(points.row(i), &mean))
                .sum()
        };
        let linkage_dist = |a: &[usize], b: &[usize]| -> f64 {
            match linkage {
                Linkage::Single => {
                    let mut best = f64::INFINITY;
                    for &i in a {
                        for &j in b {
                            best = best.min(point_dist(i, j));
                        }
                    }
                    best
                }
                Linkage::Ward => {
                    let merged: Vec<usize> = a.iter().chain(b).copied().collect();
                    sse(&merged) - sse(a) - sse(b)
                }
            }
        };
        let mut merges = Vec::with_capacity(n - 1);
        for step in 0..n - 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for x in 0..clusters.len() {
                for y in x + 1..clusters.len() {
                    // order candidates by lowest original slot, as the
                    // implementation's ascending slot scan does
                    let (x, y) = if clusters[x].0 < clusters[y].0 {
                        (x, y)
                    } else {
                        (y, x)
                    };
                    let d = linkage_dist(&clusters[x].2, &clusters[y].2);
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, x, y));
                    }
                }
            }
            let (height, x, y) = best.unwrap();
            let new_id = n + step;
            let (left, right) = {
                let (p, q) = (clusters[x].1, clusters[y].1);
                if p < q {
                    (p, q)
                } else {
                    (q, p)
                }
            };
            merges.push(MergeStep {
                left,
                right,
                height,
                new_id,
            });
            let (slot_y, _, members_y) = clusters.remove(y.max(x));
            let keep = y.min(x);
            clusters[keep].0 = clusters[keep].0.min(slot_y);
            clusters[keep].1 = new_id;
            clusters[keep].2.extend(members_y);
        }
        merges
    }

    #[test]
    fn cut_extremes() {
        let points = matrix(vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]]);
        let merges = agnes(&points, Linkage::Single).unwrap();
        let one = cut_dendrogram(&merges, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let all = cut_dendrogram(&merges, 4).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3]);
        assert!(cut_dendrogram(&merges, 0).is_err());
        assert!(cut_dendrogram(&merges, 5).is_err());
    }

    #[test]
    fn cut_two_groups() {
        let points = matrix(vec![vec![0.0], vec![1.0], vec![5.0]]);
        let merges = agnes(&points, Linkage::Single).unwrap();
        let cut = cut_dendrogram(&merges, 2).unwrap();
        assert_eq!(cut.labels[0], cut.labels[1]);
        assert_ne!(cut.labels[0], cut.labels[2]);
    }

    #[test]
    fn mapping_identity_and_swap() {
        let preds = PredictionVector::classification(vec![0, 0, 1, 1]).unwrap();
        let perfect = ClusterAssignment {
            labels: vec![0, 0, 1, 1],
            k: 2,
            centroids: None,
        };
        assert_eq!(map_clusters_to_labels(&perfect, &preds).unwrap(), vec![0, 1]);
        let swapped = ClusterAssignment {
            labels: vec![1, 1, 0, 0],
            k: 2,
            centroids: None,
        };
        assert_eq!(map_clusters_to_labels(&swapped, &preds).unwrap(), vec![1, 0]);
    }

    #[test]
    fn mapping_greedy_path_above_eight_clusters() {
        // k = 9 exercises the greedy branch; perfect clusters map identically
        let n = 27;
        let labels: Vec<usize> = (0..n).map(|i| i % 9).collect();
        let preds = PredictionVector::classification(labels.clone()).unwrap();
        let assignment = ClusterAssignment {
            labels,
            k: 9,
            centroids: None,
        };
        let mapping = map_clusters_to_labels(&assignment, &preds).unwrap();
        assert_eq!(mapping, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn mapping_matches_factorial_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..20 {
            let n = 18;
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let clusters: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let preds = PredictionVector::classification(labels.clone()).unwrap();
            let assignment = ClusterAssignment {
                labels: clusters.clone(),
                k: 3,
                centroids: None,
            };
            let mapping = map_clusters_to_labels(&assignment, &preds).unwrap();
            let score = |map: &[usize]| -> u64 {
                clusters
                    .iter()
                    .zip(&labels)
                    .filter(|(&c, &l)| map[c] == l)
                    .count() as u64
            };
            // brute force over all 3! bijections
            let mut best = 0;
            let perms = [
                [0, 1, 2],
                [0, 2, 1],
                [1, 0, 2],
                [1, 2, 0],
                [2, 0, 1],
                [2, 1, 0],
            ];
            for p in perms {
                best = best.max(score(&p));
            }
            assert_eq!(score(&mapping), best);
        }
    }
}
