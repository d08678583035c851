//! Random instances and naive reference implementations shared by the
//! integration tests. The oracles work from raw profile rows and circle
//! masks and share no code with the library's likelihood or feature paths.

#![allow(dead_code)]

use circles_core::eval::{ber, Metric};
use circles_core::extensions::NewNode;
use circles_core::pbopt::{energy_of, PairwiseEnergy};
use circles_core::{CircleAssignment, EgoNetwork, FeaturePath, FeatureScheme, ModelParams, NodeId, ProfileStore};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(n: usize) -> Vec<NodeId> {
    (0..n as u128).map(|i| NodeId(100 + 7 * i)).collect()
}

pub fn random_network(rng: &mut impl Rng, n: usize, p: f64, directed: bool) -> EgoNetwork {
    let ids = ids(n);
    let mut edges = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if x == y || (!directed && y < x) {
                continue;
            }
            if rng.gen_bool(p) {
                edges.push((ids[x], ids[y]));
            }
        }
    }
    EgoNetwork::new(ids, edges, directed).unwrap()
}

/// Profiles with `leaves` leaves spread over `categories` categories.
pub fn random_profiles(rng: &mut impl Rng, n: usize, leaves: usize, categories: usize) -> ProfileStore {
    let names = (0..leaves)
        .map(|l| FeaturePath::new(vec![format!("cat{}", l % categories.max(1)), format!("v{l}")]).unwrap())
        .collect();
    let rows = (0..n).map(|_| (0..leaves).map(|_| rng.gen_range(0..2u8)).collect()).collect();
    let ego = (0..leaves).map(|_| rng.gen_range(0..2u8)).collect();
    ProfileStore::new(names, rows, ego).unwrap()
}

pub fn random_circles(rng: &mut impl Rng, n: usize, k: usize, p: f64) -> CircleAssignment {
    let masks = (0..k).map(|_| (0..n).map(|_| rng.gen_bool(p)).collect()).collect();
    CircleAssignment::from_masks(n, masks).unwrap()
}

pub fn random_params(rng: &mut impl Rng, k: usize, dim: usize) -> ModelParams {
    ModelParams {
        thetas: (0..k).map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect(),
        alphas: (0..k).map(|_| rng.gen_range(0.2..2.0)).collect(),
    }
}

/// A random instance: network, profiles, circles, parameters.
pub struct Instance {
    pub network: EgoNetwork,
    pub profiles: ProfileStore,
    pub circles: CircleAssignment,
    pub params: ModelParams,
    pub scheme: FeatureScheme,
}

pub fn instance(rng: &mut impl Rng, n: usize, k: usize, leaves: usize, scheme: FeatureScheme, directed: bool) -> Instance {
    let network = random_network(rng, n, 0.3, directed);
    let profiles = random_profiles(rng, n, leaves, 3);
    let circles = random_circles(rng, n, k, 0.4);
    let params = random_params(rng, k, scheme.dim(&profiles));
    Instance {
        network,
        profiles,
        circles,
        params,
        scheme,
    }
}

/// Category index of every leaf, in order of first appearance of the
/// leaf's parent path.
fn categories(profiles: &ProfileStore) -> (Vec<usize>, usize) {
    let mut seen: Vec<Vec<String>> = Vec::new();
    let mut of = Vec::new();
    for name in profiles.names() {
        let segs = name.segments();
        let parent = segs[..segs.len() - 1].to_vec();
        let c = match seen.iter().position(|s| *s == parent) {
            Some(c) => c,
            None => {
                seen.push(parent);
                seen.len() - 1
            }
        };
        of.push(c);
    }
    (of, seen.len())
}

fn sigma(a: &[u8], b: &[u8]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { 1.0 }).collect()
}

fn per_category(v: &[f64], cat: &[usize], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (l, x) in v.iter().enumerate() {
        out[cat[l]] += x;
    }
    out
}

/// Dense features `(1; -d)` of two profile rows, written out directly from
/// the definitions.
pub fn naive_features(scheme: FeatureScheme, profiles: &ProfileStore, a: &[u8], b: &[u8]) -> Vec<f64> {
    let u = profiles.ego();
    let (cat, p) = categories(profiles);
    let d: Vec<f64> = match scheme {
        FeatureScheme::Phi1 => sigma(a, b),
        FeatureScheme::Phi2 => sigma(a, u).iter().zip(sigma(b, u)).map(|(x, y)| (x - y).abs()).collect(),
        FeatureScheme::Psi1 => per_category(&sigma(a, b), &cat, p),
        FeatureScheme::Psi2 => {
            let sa = per_category(&sigma(a, u), &cat, p);
            let sb = per_category(&sigma(b, u), &cat, p);
            sa.iter().zip(sb).map(|(x, y)| (x - y).abs()).collect()
        }
    };
    let mut f = vec![1.0];
    f.extend(d.iter().map(|v| -v));
    f
}

fn naive_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `Phi(x, y)` from dense features and explicit circle masks.
pub fn naive_phi(inst: &Instance, x: usize, y: usize) -> f64 {
    let f = naive_features(inst.scheme, &inst.profiles, inst.profiles.row(x), inst.profiles.row(y));
    let mut phi = 0.0;
    for k in 0..inst.params.k() {
        let both = inst.circles.mask(k)[x] && inst.circles.mask(k)[y];
        let d = if both { 1.0 } else { -inst.params.alphas[k] };
        let ip: f64 = f.iter().zip(&inst.params.thetas[k]).map(|(a, b)| a * b).sum();
        phi += d * ip;
    }
    phi
}

/// Log-likelihood summed over every ordered pair (directed) or unordered
/// pair (undirected).
pub fn naive_ll(inst: &Instance) -> f64 {
    let n = inst.network.len();
    let mut ll = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x == y || (!inst.network.is_directed() && y < x) {
                continue;
            }
            let phi = naive_phi(inst, x, y);
            let e = if inst.network.has_edge(x, y) { 1.0 } else { 0.0 };
            ll += e * phi - naive_softplus(phi);
        }
    }
    ll
}

/// Log-likelihood of all pairs involving `x`.
pub fn naive_node_ll(inst: &Instance, x: usize) -> f64 {
    let n = inst.network.len();
    let mut ll = 0.0;
    for y in (0..n).filter(|&y| y != x) {
        let mut pairs = vec![(x, y)];
        if inst.network.is_directed() {
            pairs.push((y, x));
        }
        for (a, b) in pairs {
            let phi = naive_phi(inst, a, b);
            let e = if inst.network.has_edge(a, b) { 1.0 } else { 0.0 };
            ll += e * phi - naive_softplus(phi);
        }
    }
    ll
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Every labeling of `n` binary variables.
pub fn all_labelings(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << n).map(move |m| (0..n).map(|i| m >> i & 1 == 1).collect())
}

/// Random pairwise energy; `supermodular` restricts pairs to a
/// non-negative bonus for `(1, 1)`.
pub fn random_energy(r: &mut impl Rng, n: usize, density: f64, supermodular: bool) -> PairwiseEnergy {
    let mut e = PairwiseEnergy::new(n);
    for i in 0..n {
        e.add_unary(i, r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !r.gen_bool(density) {
                continue;
            }
            let t = if supermodular {
                [[0.0, 0.0], [0.0, r.gen_range(0.0..3.0)]]
            } else {
                [[r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)], [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]]
            };
            if r.gen_bool(0.5) {
                e.add_pairwise(i, j, t);
            } else {
                e.add_pairwise(j, i, [[t[0][0], t[1][0]], [t[0][1], t[1][1]]]);
            }
        }
    }
    e
}

pub fn brute_max(e: &PairwiseEnergy, consistent: impl Fn(&[bool]) -> bool) -> f64 {
    all_labelings(e.node_count())
        .filter(|l| consistent(l))
        .map(|l| energy_of(e, &l))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The instance with the new node appended as the last index.
pub fn augmented(inst: &Instance, node: &NewNode, memberships: &[bool]) -> Instance {
    let n = inst.network.len();
    let new_id = NodeId(u128::MAX);
    let mut nodes = inst.network.nodes().to_vec();
    nodes.push(new_id);
    let mut edges: Vec<(NodeId, NodeId)> = inst.network.edges().iter().map(|&(a, b)| (inst.network.id(a), inst.network.id(b))).collect();
    edges.extend(node.out_edges.iter().map(|&y| (new_id, inst.network.id(y))));
    edges.extend(node.in_edges.iter().map(|&y| (inst.network.id(y), new_id)));
    let network = EgoNetwork::new(nodes, edges, inst.network.is_directed()).unwrap();
    assert_eq!(network.index_of(new_id), Some(n));
    let mut rows = inst.profiles.rows().to_vec();
    rows.push(node.features.clone());
    let profiles = ProfileStore::new(inst.profiles.names().to_vec(), rows, inst.profiles.ego().to_vec()).unwrap();
    let masks = (0..inst.circles.k())
        .map(|k| {
            let mut m = inst.circles.mask(k).to_vec();
            m.push(memberships[k]);
            m
        })
        .collect();
    Instance {
        network,
        profiles,
        circles: CircleAssignment::from_masks(n + 1, masks).unwrap(),
        params: inst.params.clone(),
        scheme: inst.scheme,
    }
}

/// Argmax of the full likelihood over all `2^K` memberships, first in
/// lexicographic order on ties.
pub fn brute_force_memberships(inst: &Instance, node: &NewNode) -> Vec<bool> {
    let k = inst.circles.k();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for m in 0u32..1 << k {
        let c: Vec<bool> = (0..k).map(|j| m >> (k - 1 - j) & 1 == 1).collect();
        let ll = naive_ll(&augmented(inst, node, &c));
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, c));
        }
    }
    best.unwrap().1
}

/// Best total over injective maps from `0..rows` into `0..cols`.
pub fn best_injective(score: &[Vec<f64>], rows: usize, cols: usize) -> f64 {
    fn go(score: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == score.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(score[row][c] + go(score, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    assert_eq!(score.len(), rows);
    go(score, 0, &mut vec![false; cols])
}

/// Reference matching score by exhaustive search.
pub fn exhaustive_match(pred: &CircleAssignment, truth: &CircleAssignment, metric: Metric, strict: bool) -> f64 {
    let (kp, kt) = (pred.k(), truth.k());
    if kp == 0 || kt == 0 {
        return if strict && kp.max(kt) > 0 { metric.unmatched() } else { 0.0 };
    }
    let s = |i: usize, j: usize| metric.score(pred.mask(i), truth.mask(j)).value;
    let total = if kp <= kt {
        let m: Vec<Vec<f64>> = (0..kp).map(|i| (0..kt).map(|j| s(i, j)).collect()).collect();
        best_injective(&m, kp, kt)
    } else {
        let m: Vec<Vec<f64>> = (0..kt).map(|j| (0..kp).map(|i| s(i, j)).collect()).collect();
        best_injective(&m, kt, kp)
    };
    let matched = kp.min(kt);
    if strict {
        (total + (kp.max(kt) - matched) as f64 * metric.unmatched()) / kp.max(kt) as f64
    } else {
        total / matched as f64
    }
}

/// Random truth (every node in with probability 1/2), random prediction at
/// the truth's rate.
pub fn random_predictor_mean_ber(r: &mut impl Rng, trials: usize) -> f64 {
    let mut total = 0.0;
    for _ in 0..trials {
        let n = r.gen_range(10..60);
        let truth: Vec<bool> = (0..n).map(|_| r.gen_bool(0.5)).collect();
        let rate = truth.iter().filter(|&&v| v).count() as f64 / n as f64;
        let pred: Vec<bool> = (0..n).map(|_| r.gen_bool(rate)).collect();
        total += ber(&pred, &truth).value;
    }
    total / trials as f64
}
