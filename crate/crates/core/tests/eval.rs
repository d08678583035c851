mod common;

use circles_core::eval::{ber, choose_k_modularity, f1, hungarian, match_circles, mean_stderr, modularity, Metric};
use circles_core::{CircleAssignment, EgoNetwork, NodeId};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn mask(n: usize, members: &[usize]) -> Vec<bool> {
    (0..n).map(|i| members.contains(&i)).collect()
}

#[test]
fn set_scores_by_hand() {
    let t = mask(6, &[0, 1, 2, 3]);
    let p = mask(6, &[2, 3, 4]);
    // |C\T| / |C| = 1/3, |T\C| / |T| = 2/4.
    assert!((ber(&p, &t).value - 0.5 * (1.0 / 3.0 + 0.5)).abs() < 1e-15);
    // precision 2/3, recall 1/2.
    assert!((f1(&p, &t).value - 4.0 / 7.0).abs() < 1e-15);
    assert_eq!(ber(&t, &t).value, 0.0);
    assert_eq!(f1(&t, &t).value, 1.0);
    assert_eq!(ber(&mask(6, &[4, 5]), &t).value, 1.0);
    let empty = mask(6, &[]);
    assert!(ber(&empty, &t).degenerate && ber(&empty, &t).value == 0.5);
    assert!(f1(&empty, &empty).degenerate && f1(&empty, &empty).value == 0.0);
}

#[test]
fn random_predictor_scores_chance() {
    let mean = random_predictor_mean_ber(&mut rng(41), 10_000);
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}

#[test]
fn random_predictor_error_tracks_truth_density() {
    // Predicting at rate t against a truth of density t gives about 1 - t.
    let mut r = rng(43);
    for t in [0.2, 0.7] {
        let mut total = 0.0;
        for _ in 0..4000 {
            let truth: Vec<bool> = (0..200).map(|_| r.gen_bool(t)).collect();
            let pred: Vec<bool> = (0..200).map(|_| r.gen_bool(t)).collect();
            total += ber(&pred, &truth).value;
        }
        assert!((total / 4000.0 - (1.0 - t)).abs() < 0.01);
    }
}

#[test]
fn hungarian_matches_brute_force() {
    let mut r = rng(42);
    for _ in 0..200 {
        let rows = r.gen_range(1..6);
        let cols = r.gen_range(rows..7);
        let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-5.0..5.0)).collect()).collect();
        let assign = hungarian(&cost);
        let mut seen = vec![false; cols];
        for &c in &assign {
            assert!(!seen[c]);
            seen[c] = true;
        }
        let got: f64 = assign.iter().enumerate().map(|(i, &c)| cost[i][c]).sum();
        let neg: Vec<Vec<f64>> = cost.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
        let best = -best_injective(&neg, rows, cols);
        assert!((got - best).abs() < 1e-9, "{got} vs {best}");
    }
}

#[test]
fn modularity_of_two_triangles() {
    let ids: Vec<NodeId> = (0..6u128).map(NodeId).collect();
    let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)].map(|(a, b)| (ids[a], ids[b]));
    let net = EgoNetwork::new(ids.clone(), edges, false).unwrap();
    let part = CircleAssignment::from_indices(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
    assert!((modularity(&net, &part).unwrap() - (6.0 / 7.0 - 0.5)).abs() < 1e-12);
    let one = CircleAssignment::from_indices(6, &[(0..6).collect()]).unwrap();
    assert!(modularity(&net, &one).unwrap().abs() < 1e-12);
    let overlap = CircleAssignment::from_indices(6, &[vec![0, 1], vec![1, 2]]).unwrap();
    assert!(modularity(&net, &overlap).is_err());
    let k = choose_k_modularity(&net, |k| if k == 2 { part.clone() } else { one.clone() }, 4).unwrap();
    assert_eq!(k, 2);
}

#[test]
fn mean_and_standard_error() {
    assert_eq!(mean_stderr(&[]), None);
    assert_eq!(mean_stderr(&[3.0]), Some((3.0, 0.0)));
    let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
}

#[test]
fn metric_names_parse() {
    assert_eq!("ber".parse::<Metric>().unwrap(), Metric::Ber);
    assert_eq!("f1".parse::<Metric>().unwrap(), Metric::F1);
    assert!("auc".parse::<Metric>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matching_equals_exhaustive_search(seed in any::<u64>(), kp in 0usize..5, kt in 0usize..5, strict in any::<bool>()) {
        let mut r = rng(seed);
        let n = 12;
        let pred = random_circles(&mut r, n, kp, 0.35);
        let truth = random_circles(&mut r, n, kt, 0.35);
        for metric in [Metric::Ber, Metric::F1] {
            let got = match_circles(&pred, &truth, metric, strict);
            let want = exhaustive_match(&pred, &truth, metric, strict);
            prop_assert!((got.score - want).abs() < 1e-12, "{:?} {} vs {}", metric, got.score, want);
            prop_assert_eq!(got.mapping.len(), kp.min(kt));
        }
    }

    #[test]
    fn identical_assignments_score_perfectly(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let masks: Vec<Vec<bool>> = (0..k)
            .map(|j| (0..15).map(|i| i % k == j || r.gen_bool(0.2)).collect())
            .collect();
        let c = CircleAssignment::from_masks(15, masks).unwrap();
        prop_assert_eq!(match_circles(&c, &c, Metric::Ber, true).score, 1.0);
        prop_assert_eq!(match_circles(&c, &c, Metric::F1, true).score, 1.0);
    }
}
