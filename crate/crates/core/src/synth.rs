//! Planted ego-networks sampled from the model itself.
//!
//! Each circle owns a block of `featureDim / K` leaves. Members carry all
//! ones on their block; every other node carries ones except for a single
//! zero at a random position. Two members therefore agree on the block, a
//! member and a non-member differ in one leaf, and two non-members in zero
//! or two. Leaves beyond the last block are fair-coin noise.
//!
//! `theta_k` puts `w = separation` on its block and a constant
//! `c = 2w + m` on index 0, `m = w / max(1, K - 1)`. With `alpha = 1` a pair
//! inside exactly one circle then has affinity about `2w - (K - 2) m`, a
//! pair outside every circle about `-K m`, and a member/non-member pair
//! lower still. For `K >= 2` the two are symmetric around zero.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CircleAssignment, EgoNetwork, FeaturePath, ModelParams, NodeId, ProfileStore};
use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapStructure {
    Disjoint,
    Overlapping,
    Nested,
    /// Cycles overlapping, nested, overlapping, disjoint after the first
    /// circle: about half the circles overlap, a quarter nest, a quarter
    /// are disjoint.
    Mixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct PlantedSpec {
    pub n: usize,
    pub k: usize,
    pub overlap_structure: OverlapStructure,
    pub separation: f64,
    /// Leaf count `L`; `0` picks `5 * k`.
    pub feature_dim: usize,
    pub seed: u64,
    pub mean_circle_size: usize,
    pub directed: bool,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n: 190,
            k: 3,
            overlap_structure: OverlapStructure::Mixed,
            separation: 4.0,
            feature_dim: 0,
            seed: 0,
            mean_circle_size: 22,
            directed: false,
        }
    }
}

impl PlantedSpec {
    pub fn leaves(&self) -> usize {
        if self.feature_dim == 0 {
            5 * self.k
        } else {
            self.feature_dim
        }
    }

    fn block(&self) -> usize {
        self.leaves().checked_div(self.k).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("planted network needs at least 2 nodes"));
        }
        if self.k > 0 && self.block() < 2 {
            return Err(Error::invalid("feature_dim must give each circle at least 2 leaves"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("separation must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Planted {
    pub network: EgoNetwork,
    pub profiles: ProfileStore,
    pub circles: CircleAssignment,
    pub params: ModelParams,
}

fn circle_size(spec: &PlantedSpec, rng: &mut impl Rng) -> usize {
    let m = spec.mean_circle_size.min(spec.n / 2).max(2);
    let lo = (m / 2).max(2);
    let hi = (m + m / 2).min(spec.n).max(lo);
    rng.gen_range(lo..=hi)
}

fn sample_from(pool: &[usize], size: usize, rng: &mut impl Rng) -> Vec<usize> {
    pool.choose_multiple(rng, size.min(pool.len())).copied().collect()
}

#[derive(Clone, Copy)]
enum Relation {
    Free,
    Overlap,
    Nested,
    Disjoint,
}

fn sample_circles(spec: &PlantedSpec, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let n = spec.n;
    let all: Vec<usize> = (0..n).collect();
    let mut circles: Vec<Vec<usize>> = Vec::new();
    for k in 0..spec.k {
        let rel = match spec.overlap_structure {
            _ if k == 0 => Relation::Free,
            OverlapStructure::Disjoint => Relation::Disjoint,
            OverlapStructure::Overlapping => Relation::Overlap,
            OverlapStructure::Nested => Relation::Nested,
            OverlapStructure::Mixed => [Relation::Overlap, Relation::Nested, Relation::Overlap, Relation::Disjoint][(k - 1) % 4],
        };
        let size = circle_size(spec, rng);
        let mut members = match rel {
            Relation::Free => sample_from(&all, size, rng),
            Relation::Nested => {
                let parent = if spec.overlap_structure == OverlapStructure::Nested {
                    &circles[k - 1]
                } else {
                    &circles[rng.gen_range(0..k)]
                };
                let sub = (parent.len() / 2).max(1);
                sample_from(parent, sub, rng)
            }
            Relation::Overlap => {
                let other = &circles[rng.gen_range(0..k)];
                let shared = (size / 3).max(1).min(other.len().saturating_sub(1)).max(1);
                let mut m = sample_from(other, shared, rng);
                let outside: Vec<usize> = all.iter().copied().filter(|i| !other.contains(i)).collect();
                m.extend(sample_from(&outside, size - shared.min(size), rng));
                m
            }
            Relation::Disjoint => {
                let used: Vec<bool> = (0..n).map(|i| circles.iter().any(|c| c.contains(&i))).collect();
                let free: Vec<usize> = all.iter().copied().filter(|&i| !used[i]).collect();
                if free.len() >= 2 {
                    sample_from(&free, size, rng)
                } else {
                    sample_from(&all, size, rng)
                }
            }
        };
        members.sort_unstable();
        circles.push(members);
    }
    circles
}

/// The planted parameters for a spec.
pub fn planted_params(spec: &PlantedSpec) -> ModelParams {
    let (k, b) = (spec.k, spec.block());
    let dim = spec.leaves() + 1;
    let mut params = ModelParams::zeros(k, dim);
    if k == 0 {
        return params;
    }
    let w = spec.separation;
    let c = 2.0 * w + w / (k.saturating_sub(1).max(1)) as f64;
    for (j, theta) in params.thetas.iter_mut().enumerate() {
        theta[0] = c;
        for l in j * b..(j + 1) * b {
            theta[l + 1] = spec.separation;
        }
    }
    params
}

/// Samples circles, profiles and edges. Identical specs give identical
/// output.
pub fn generate(spec: &PlantedSpec) -> Result<Planted> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k, b, l) = (spec.n, spec.k, spec.block(), spec.leaves());
    let circle_lists = sample_circles(spec, &mut rng);
    let circles = CircleAssignment::from_indices(n, &circle_lists)?;

    let mut rows = vec![vec![0u8; l]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        for j in 0..k {
            let block = &mut row[j * b..(j + 1) * b];
            block.fill(1);
            if !circles.contains(j, i) {
                block[rng.gen_range(0..b)] = 0;
            }
        }
        for v in row[k * b..].iter_mut() {
            *v = rng.gen_bool(0.5) as u8;
        }
    }
    let ego: Vec<u8> = (0..l).map(|_| rng.gen_bool(0.5) as u8).collect();
    let names = (0..l)
        .map(|leaf| {
            let cat = if leaf < k * b { format!("block{}", leaf / b) } else { "noise".to_string() };
            FeaturePath::new(vec![cat, format!("v{leaf}")])
        })
        .collect::<Result<Vec<_>>>()?;
    let profiles = ProfileStore::new(names, rows, ego)?;
    let params = planted_params(spec);

    let ids: Vec<NodeId> = (0..n as u64).map(NodeId::from).collect();
    let empty = EgoNetwork::new(ids.iter().copied(), [], spec.directed)?;
    let mut edges = Vec::new();
    for (x, y) in empty.pairs() {
        let phi = planted_phi(&profiles, &circles, &params, x, y);
        if rng.gen_bool(sigmoid(phi)) {
            edges.push((ids[x], ids[y]));
        }
    }
    let network = EgoNetwork::new(ids, edges, spec.directed)?;
    Ok(Planted {
        network,
        profiles,
        circles,
        params,
    })
}

/// `Phi` of a pair under `phi1` features, the scheme the generator plants.
pub fn planted_phi(profiles: &ProfileStore, circles: &CircleAssignment, params: &ModelParams, x: usize, y: usize) -> f64 {
    let f = crate::features::FeatureScheme::Phi1.sparse(profiles, x, y);
    (0..params.k())
        .map(|j| {
            let d = if circles.pair_inside(j, x, y) { 1.0 } else { -params.alphas[j] };
            d * f.dot(&params.thetas[j])
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StructureSummary {
    pub sizes: Vec<usize>,
    /// `max_{j != i} |C_i & C_j| / |C_i|`; 0 for empty circles.
    pub max_containment: Vec<f64>,
    /// Edge density among each circle's members.
    pub density_inside: Vec<f64>,
    /// Edge density among pairs not inside any circle.
    pub density_outside: f64,
}

pub fn summarize(network: &EgoNetwork, circles: &CircleAssignment) -> StructureSummary {
    let k = circles.k();
    let sizes: Vec<usize> = (0..k).map(|i| circles.size(i)).collect();
    let max_containment = (0..k)
        .map(|i| {
            if sizes[i] == 0 {
                return 0.0;
            }
            (0..k)
                .filter(|&j| j != i)
                .map(|j| {
                    let both = (0..circles.node_count()).filter(|&v| circles.contains(i, v) && circles.contains(j, v)).count();
                    both as f64 / sizes[i] as f64
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let mut in_pairs = vec![0usize; k];
    let mut in_edges = vec![0usize; k];
    let (mut out_pairs, mut out_edges) = (0usize, 0usize);
    for (x, y) in network.pairs() {
        let e = network.has_edge(x, y) as usize;
        let mut any = false;
        for j in 0..k {
            if circles.pair_inside(j, x, y) {
                in_pairs[j] += 1;
                in_edges[j] += e;
                any = true;
            }
        }
        if !any {
            out_pairs += 1;
            out_edges += e;
        }
    }
    let ratio = |e: usize, p: usize| if p == 0 { 0.0 } else { e as f64 / p as f64 };
    StructureSummary {
        sizes,
        max_containment,
        density_inside: in_edges.iter().zip(&in_pairs).map(|(&e, &p)| ratio(e, p)).collect(),
        density_outside: ratio(out_edges, out_pairs),
    }
}
