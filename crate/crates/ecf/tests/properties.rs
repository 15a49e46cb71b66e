//! Property suites for the metric and clustering primitives.

use std::collections::BTreeSet;

use proptest::prelude::*;

use ecf::core::Matrix;
use ecf::metrics::{euclidean, jaccard, pairwise_distances, rank_average_ties, spearman_rho};

fn distinct_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..25)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(-20.0f64..20.0, n),
                proptest::collection::vec(-20.0f64..20.0, n),
            )
        })
        .prop_filter("need two distinct values in each sequence", |(u, v)| {
            u.iter().any(|&x| x != u[0]) && v.iter().any(|&x| x != v[0])
        })
}

proptest! {
    #[test]
    fn spearman_is_symmetric((u, v) in distinct_pairs()) {
        let a = spearman_rho(&u, &v).unwrap();
        let b = spearman_rho(&v, &u).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn spearman_invariant_under_monotone_transforms((u, v) in distinct_pairs()) {
        let base = spearman_rho(&u, &v).unwrap();
        let exp_u: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let cube_v: Vec<f64> = v.iter().map(|x| x * x * x).collect();
        prop_assert!((spearman_rho(&exp_u, &v).unwrap() - base).abs() < 1e-12);
        prop_assert!((spearman_rho(&u, &cube_v).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_closed_form_without_ties((u, v) in distinct_pairs()
        .prop_filter("tie-free", |(u, v)| {
            let distinct = |s: &[f64]| {
                let mut sorted = s.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                sorted.windows(2).all(|w| w[0] != w[1])
            };
            distinct(u) && distinct(v)
        }))
    {
        let n = u.len() as f64;
        let ru = rank_average_ties(&u).ranks;
        let rv = rank_average_ties(&v).ranks;
        let d2: f64 = ru.iter().zip(&rv).map(|(a, b)| (a - b) * (a - b)).sum();
        let closed = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman_rho(&u, &v).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn ranks_sum_to_triangular_number(values in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let n = values.len() as f64;
        let sum: f64 = rank_average_ties(&values).ranks.iter().sum();
        prop_assert!((sum - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn ranks_average_ties_from_integer_values(values in proptest::collection::vec(0i8..4, 2..30)) {
        // coarse integer grid forces ties; tied values share one rank
        let as_f64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let ranks = rank_average_ties(&as_f64).ranks;
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] == values[j] {
                    prop_assert_eq!(ranks[i], ranks[j]);
                } else if (values[i] > values[j]) != (ranks[i] < ranks[j]) {
                    prop_assert!(false, "rank order disagrees with value order");
                }
            }
        }
    }

    #[test]
    fn jaccard_extremes_characterize_sets(
        a in proptest::collection::btree_set(0usize..30, 1..15),
        b in proptest::collection::btree_set(0usize..30, 1..15),
    ) {
        let j = jaccard(&a, &b).unwrap();
        prop_assert_eq!(j == 1.0, a == b);
        let disjoint = a.intersection(&b).count() == 0;
        prop_assert_eq!(j == 0.0, disjoint);
        prop_assert!((0.0..=1.0).contains(&j));
    }

    #[test]
    fn pairwise_distances_satisfy_triangle_inequality(
        rows in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 3),
            3..12,
        )
    ) {
        let matrix = Matrix::from_rows(rows).unwrap();
        let d = pairwise_distances(&matrix).unwrap();
        let n = d.len();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    prop_assert!(d.get(a, c) <= d.get(a, b) + d.get(b, c) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn euclidean_zero_iff_equal(
        (a, b) in (1usize..8).prop_flat_map(|k| (
            proptest::collection::vec(-10.0f64..10.0, k),
            proptest::collection::vec(-10.0f64..10.0, k),
        ))
    ) {
        let d = euclidean(&a, &b).unwrap();
        prop_assert_eq!(d == 0.0, a == b);
    }

    #[test]
    fn rank_direction_convention_cancels_in_rho((u, v) in distinct_pairs()) {
        // flipping both sequences flips both rank vectors the same way
        let neg_u: Vec<f64> = u.iter().map(|x| -x).collect();
        let neg_v: Vec<f64> = v.iter().map(|x| -x).collect();
        let a = spearman_rho(&u, &v).unwrap();
        let b = spearman_rho(&neg_u, &neg_v).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn jaccard_both_empty_is_rejected() {
    let empty: BTreeSet<usize> = BTreeSet::new();
    assert!(jaccard(&empty, &empty).is_err());
}
