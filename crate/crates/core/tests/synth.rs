mod common;

use circles_core::math::sigmoid;
use circles_core::model::{log_likelihood, LikelihoodContext};
use circles_core::synth::{generate, planted_phi, summarize, OverlapStructure, PlantedSpec};
use circles_core::{EdgeFeatureCache, FeatureScheme};
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn spec(n: usize, k: usize, structure: OverlapStructure, seed: u64) -> PlantedSpec {
    PlantedSpec {
        n,
        k,
        overlap_structure: structure,
        seed,
        ..PlantedSpec::default()
    }
}

#[test]
fn no_circles_means_coin_flip_edges() {
    let p = generate(&spec(120, 0, OverlapStructure::Mixed, 3)).unwrap();
    let s = summarize(&p.network, &p.circles);
    assert!((s.density_outside - 0.5).abs() < 0.03, "{}", s.density_outside);
}

#[test]
fn nested_circles_are_contained() {
    let p = generate(&spec(80, 3, OverlapStructure::Nested, 4)).unwrap();
    for k in 1..3 {
        assert!(p.circles.members(k).iter().all(|&i| p.circles.contains(k - 1, i)));
    }
    let s = summarize(&p.network, &p.circles);
    assert_eq!(s.max_containment[1], 1.0);
    assert_eq!(s.max_containment[2], 1.0);
}

#[test]
fn disjoint_circles_do_not_share_members() {
    let p = generate(&spec(100, 3, OverlapStructure::Disjoint, 5)).unwrap();
    let s = summarize(&p.network, &p.circles);
    assert!(s.max_containment.iter().all(|&c| c == 0.0));
}

#[test]
fn edge_counts_follow_the_planted_probabilities() {
    for seed in 0..5 {
        let p = generate(&spec(70, 3, OverlapStructure::Mixed, seed)).unwrap();
        let (mut mean, mut var) = (0.0, 0.0);
        for (x, y) in p.network.pairs() {
            let q = sigmoid(planted_phi(&p.profiles, &p.circles, &p.params, x, y));
            mean += q;
            var += q * (1.0 - q);
        }
        let m = p.network.edge_count() as f64;
        assert!((m - mean).abs() <= 5.0 * var.sqrt().max(1.0), "{m} vs {mean} ± {}", var.sqrt());
    }
}

#[test]
fn planted_circles_are_denser_inside() {
    let p = generate(&spec(60, 3, OverlapStructure::Mixed, 1)).unwrap();
    let s = summarize(&p.network, &p.circles);
    for d in &s.density_inside {
        assert!(*d > s.density_outside + 0.3, "{s:?}");
    }
}

#[test]
fn planted_phi_agrees_with_the_model() {
    let p = generate(&spec(25, 2, OverlapStructure::Overlapping, 6)).unwrap();
    let inst = Instance {
        network: p.network.clone(),
        profiles: p.profiles.clone(),
        circles: p.circles.clone(),
        params: p.params.clone(),
        scheme: FeatureScheme::Phi1,
    };
    for (x, y) in p.network.pairs() {
        assert!((planted_phi(&p.profiles, &p.circles, &p.params, x, y) - naive_phi(&inst, x, y)).abs() < 1e-12);
    }
}

#[test]
fn spec_serializes_in_camel_case() {
    let json = serde_json::to_value(spec(10, 2, OverlapStructure::Nested, 1)).unwrap();
    assert_eq!(json["overlapStructure"], "nested");
    assert_eq!(json["featureDim"], 0);
    let back: PlantedSpec = serde_json::from_str(r#"{"n": 12, "k": 1}"#).unwrap();
    assert_eq!((back.n, back.k, back.separation), (12, 1, 4.0));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(generate(&spec(1, 1, OverlapStructure::Mixed, 0)).is_err());
    assert!(generate(&PlantedSpec {
        separation: -1.0,
        ..spec(10, 1, OverlapStructure::Mixed, 0)
    })
    .is_err());
}

#[test]
fn planted_circles_beat_shuffled_circles() {
    let mut wins = 0;
    let seeds = 40;
    for seed in 0..seeds {
        let p = generate(&spec(50, 3, OverlapStructure::Mixed, seed)).unwrap();
        let cache = EdgeFeatureCache::lazy(&p.profiles, FeatureScheme::Phi1);
        let ll = |circles| {
            log_likelihood(&LikelihoodContext {
                network: &p.network,
                features: &cache,
                params: &p.params,
                circles,
                lambda: 1.0,
            })
        };
        // Same circle sizes, random members.
        let mut r = rng(seed);
        let mut shuffled = p.circles.clone();
        for k in 0..3 {
            let mut m = p.circles.mask(k).to_vec();
            m.shuffle(&mut r);
            shuffled.set_mask(k, m);
        }
        if ll(&p.circles) >= ll(&shuffled) {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.95 * seeds as f64, "{wins}/{seeds}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn summary_matches_naive_counts(seed in any::<u64>(), k in 0usize..4) {
        let p = generate(&spec(30, k, OverlapStructure::Mixed, seed)).unwrap();
        let s = summarize(&p.network, &p.circles);
        for j in 0..k {
            let members = p.circles.members(j);
            prop_assert_eq!(s.sizes[j], members.len());
            let (mut e, mut pairs) = (0, 0);
            for (a, &x) in members.iter().enumerate() {
                for &y in &members[a + 1..] {
                    pairs += 1;
                    e += p.network.has_edge(x, y) as usize;
                }
            }
            let want = if pairs == 0 { 0.0 } else { e as f64 / pairs as f64 };
            prop_assert!((s.density_inside[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn same_spec_same_network(seed in any::<u64>()) {
        let a = generate(&spec(25, 2, OverlapStructure::Mixed, seed)).unwrap();
        let b = generate(&spec(25, 2, OverlapStructure::Mixed, seed)).unwrap();
        prop_assert_eq!(a.network.edges(), b.network.edges());
        prop_assert_eq!(a.circles, b.circles);
    }
}
