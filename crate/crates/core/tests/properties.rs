use colupi::alignment::{align_to, hungarian_max, overlap_matrix};
use colupi::collab::{collab_update, confidence_matrix, row_entropy, Remote};
use colupi::data::{feature_assignment, SplitSpec, SplitStrategy};
use colupi::{harden, PartitionMatrix};
use ndarray::Array2;
use proptest::prelude::*;

fn row(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        // Dirichlet-like row from positive weights.
        prop::collection::vec(1e-3f64..1.0, k).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        }),
        (0..k).prop_map(move |hot| (0..k).map(|c| if c == hot { 1.0 } else { 0.0 }).collect()),
        Just(vec![1.0 / k as f64; k]),
    ]
}

fn partition(n: usize, k: usize) -> impl Strategy<Value = PartitionMatrix> {
    prop::collection::vec(row(k), n).prop_map(|rows| PartitionMatrix::from_rows(&rows).unwrap())
}

/// Rows with positive, almost surely distinct entries.
fn soft_partition(n: usize, k: usize) -> impl Strategy<Value = PartitionMatrix> {
    prop::collection::vec(1e-3f64..1.0, n * k)
        .prop_map(move |v| PartitionMatrix::from_weights(Array2::from_shape_vec((n, k), v).unwrap()).unwrap())
}

/// Local partition plus `p - 1` remotes of the same shape.
fn sites() -> impl Strategy<Value = (PartitionMatrix, Vec<PartitionMatrix>)> {
    (2usize..=6, 2usize..=5, 1usize..=10).prop_flat_map(|(k, p, n)| {
        (partition(n, k), prop::collection::vec(partition(n, k), p - 1))
    })
}

fn remotes(parts: &[PartitionMatrix]) -> Vec<Remote<'_>> {
    parts.iter().enumerate().map(|(q, p)| Remote::new(q + 1, p)).collect()
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Best total profit, summing each permutation in row order.
fn brute_force(profit: &Array2<f64>) -> f64 {
    fn rec(profit: &Array2<f64>, perm: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
        let k = profit.nrows();
        if perm.len() == k {
            let score: f64 = perm.iter().enumerate().map(|(r, &c)| profit[[r, c]]).sum();
            *best = best.max(score);
            return;
        }
        for c in 0..k {
            if !used[c] {
                used[c] = true;
                perm.push(c);
                rec(profit, perm, used, best);
                perm.pop();
                used[c] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(profit, &mut Vec::new(), &mut vec![false; profit.nrows()], &mut best);
    best
}

proptest! {
    #[test]
    fn blend_is_row_stochastic((local, others) in sites()) {
        let (out, _) = collab_update(0, &local, &remotes(&others)).unwrap();
        for r in out.resp().outer_iter() {
            prop_assert!((r.sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn blend_stays_between_sources((local, others) in sites()) {
        let (out, _) = collab_update(0, &local, &remotes(&others)).unwrap();
        for ((i, c), &v) in out.resp().indexed_iter() {
            let sources = std::iter::once(local.resp()[[i, c]]).chain(others.iter().map(|o| o.resp()[[i, c]]));
            let (lo, hi) = sources.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn applied_weights_are_a_distribution((local, others) in sites()) {
        let (_, w) = collab_update(0, &local, &remotes(&others)).unwrap();
        for i in 0..local.n_obs() {
            let total = w.alpha[i] + w.betas.iter().map(|(_, b)| b[i]).sum::<f64>();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn certain_rows_are_kept((local, others) in sites()) {
        let (out, _) = collab_update(0, &local, &remotes(&others)).unwrap();
        let h = row_entropy(&local);
        for i in 0..local.n_obs() {
            if h[i] == 0.0 {
                prop_assert_eq!(out.row(i), local.row(i));
            }
        }
    }

    #[test]
    fn relabeling_commutes_with_blending((local, others) in sites(), seed in any::<u64>()) {
        let k = local.n_clusters();
        let mut perm: Vec<usize> = (0..k).collect();
        // Rotation by a seed-dependent offset.
        perm.rotate_left((seed % k as u64) as usize);
        let (out, _) = collab_update(0, &local, &remotes(&others)).unwrap();
        let permuted: Vec<PartitionMatrix> = others.iter().map(|o| o.permute_columns(&perm)).collect();
        let (out_perm, _) = collab_update(0, &local.permute_columns(&perm), &remotes(&permuted)).unwrap();
        prop_assert!(max_abs_diff(out_perm.resp(), out.permute_columns(&perm).resp()) <= 1e-12);
    }

    #[test]
    fn confidence_rows_sum_to_one(parts in (2usize..=4, 2usize..=4, 1usize..=6)
        .prop_flat_map(|(k, p, n)| prop::collection::vec(partition(n, k), p)))
    {
        let weights: Vec<_> = (0..parts.len())
            .map(|p| {
                let others: Vec<Remote<'_>> = (0..parts.len()).filter(|&q| q != p).map(|q| Remote::new(q, &parts[q])).collect();
                collab_update(p, &parts[p], &others).unwrap().1
            })
            .collect();
        let c = confidence_matrix(1, &weights).unwrap();
        for row in &c.weights {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn hungarian_matches_exhaustive_search(profit in (1usize..=6).prop_flat_map(|k| {
        prop::collection::vec(-50.0f64..50.0, k * k).prop_map(move |v| Array2::from_shape_vec((k, k), v).unwrap())
    })) {
        let got = hungarian_max(&profit);
        prop_assert_eq!(got.score, brute_force(&profit));
        let mut seen = got.perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..profit.nrows()).collect::<Vec<_>>());
    }

    #[test]
    fn alignment_undoes_relabeling(p in (2usize..=5, 4usize..=20).prop_flat_map(|(k, n)| partition(n, k)), shift in 0usize..5) {
        let k = p.n_clusters();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(shift % k);
        let aligned = align_to(&p, &p.permute_columns(&perm)).unwrap();
        // Aligned overlap score is at least that of the identity pairing.
        let before = overlap_matrix(&p, &p).unwrap().diag().sum();
        let after = overlap_matrix(&p, &aligned).unwrap().diag().sum();
        prop_assert!(after >= before - 1e-9);
        // Aligning twice changes nothing.
        prop_assert_eq!(align_to(&p, &aligned).unwrap(), aligned);
    }

    #[test]
    fn harden_follows_relabeling(p in (2usize..=5, 1usize..=20).prop_flat_map(|(k, n)| soft_partition(n, k)), shift in 0usize..5) {
        let k = p.n_clusters();
        let labels = harden(&p);
        let distinct_max = p.resp().outer_iter().all(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            r.iter().filter(|&&v| v == m).count() == 1
        });
        prop_assume!(distinct_max);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(shift % k);
        let relabeled = harden(&p.permute_columns(&perm));
        for (a, b) in labels.iter().zip(&relabeled) {
            prop_assert_eq!(perm[*b], *a);
        }
    }

    #[test]
    fn splits_partition_the_features(d in 1usize..40, p in 1usize..10, seed in any::<u64>(), which in 0usize..3) {
        prop_assume!(p <= d);
        let strategy = [SplitStrategy::Contiguous, SplitStrategy::RoundRobin, SplitStrategy::SeededRandom][which].clone();
        let sites = feature_assignment(d, &SplitSpec { sites: p, strategy }, seed).unwrap();
        prop_assert_eq!(sites.len(), p);
        let mut all: Vec<usize> = sites.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d).collect::<Vec<_>>());
        prop_assert!(sites.iter().all(|s| !s.is_empty()));
    }
}
