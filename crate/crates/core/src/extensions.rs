//! Supervised parameter fitting, placing newly added friends into existing
//! circles, and seeded circle prediction.

use serde::{Deserialize, Serialize};

use crate::data::{CircleAssignment, EgoNetwork, ModelParams, NodeId, ProfileStore};
use crate::error::{Error, Result};
use crate::features::{EdgeFeatureCache, FeatureScheme};
use crate::math::softplus;
use crate::model::TermSet;
use crate::optim::OwlqnConfig;
use crate::trainer::{initial_params, optimize_params, rng_for, Ascent, FitConfig, FitResult};

/// Optimizer settings for fitting parameters to known circles; tighter
/// than the per-iteration steps of the trainer.
pub fn supervised_owlqn() -> OwlqnConfig {
    OwlqnConfig {
        max_iters: 2000,
        gtol: 1e-7,
        ftol: 0.0,
        ..OwlqnConfig::default()
    }
}

/// Maximizes `l - lambda * Omega` over the parameters with the circles
/// fixed, starting from zero weights and `alpha = 1`.
pub fn fit_supervised(
    network: &EgoNetwork,
    features: &EdgeFeatureCache<'_>,
    circles: &CircleAssignment,
    lambda: f64,
) -> Result<ModelParams> {
    let ts = TermSet::for_network(network, features, circles);
    optimize_params(&ts, &ModelParams::zeros(circles.k(), features.dim()), lambda, &supervised_owlqn())
}

/// A friend not yet in the network: their profile row and edges to existing
/// nodes, as node indices.
#[derive(Clone, Debug, Default)]
pub struct NewNode {
    pub features: Vec<u8>,
    /// Edges from the new node (all edges, when undirected).
    pub out_edges: Vec<usize>,
    /// Edges into the new node; directed networks only.
    pub in_edges: Vec<usize>,
}

/// Inner products and edge weights between the new node and every
/// existing node.
struct Incident {
    ip: Vec<f64>,
    w_sp: f64,
    w_lin: Vec<f64>,
}

fn incident_terms(
    node: &NewNode,
    network: &EgoNetwork,
    profiles: &ProfileStore,
    scheme: FeatureScheme,
    params: &ModelParams,
) -> Incident {
    let (n, k) = (network.len(), params.k());
    let mut ip = vec![0.0; n * k];
    for y in 0..n {
        let f = scheme.from_rows(profiles, &node.features, profiles.row(y));
        for j in 0..k {
            ip[y * k + j] = f.dot(&params.thetas[j]);
        }
    }
    let mut w_lin = vec![0.0f64; n];
    for &y in node.out_edges.iter().chain(&node.in_edges) {
        w_lin[y] += 1.0;
    }
    if !network.is_directed() {
        w_lin.iter_mut().for_each(|w| *w = (*w).min(1.0));
    }
    Incident {
        ip,
        w_sp: if network.is_directed() { 2.0 } else { 1.0 },
        w_lin,
    }
}

fn augmented_ll(inc: &Incident, circles: &CircleAssignment, params: &ModelParams, c: &[bool], evals: &mut usize) -> f64 {
    let k = params.k();
    let mut ll = 0.0;
    for (y, w_lin) in inc.w_lin.iter().enumerate() {
        let ip = &inc.ip[y * k..(y + 1) * k];
        let mut phi = 0.0;
        for j in 0..k {
            phi += if c[j] && circles.contains(j, y) { ip[j] } else { -params.alphas[j] * ip[j] };
        }
        ll += w_lin * phi - inc.w_sp * softplus(phi);
    }
    *evals += inc.w_lin.len();
    ll
}

/// Largest `K` solved by exhaustive enumeration.
pub const EXHAUSTIVE_MAX_K: usize = 20;

/// Circle memberships for `node` maximizing the likelihood of the pairs it
/// takes part in. Returns the memberships and the number of pair terms
/// evaluated.
pub fn predict_memberships_counted(
    node: &NewNode,
    network: &EgoNetwork,
    profiles: &ProfileStore,
    scheme: FeatureScheme,
    circles: &CircleAssignment,
    params: &ModelParams,
) -> Result<(Vec<bool>, usize)> {
    let k = params.k();
    if circles.k() != k {
        return Err(Error::invalid("circle and parameter counts differ"));
    }
    if node.features.len() != profiles.leaf_count() {
        return Err(Error::invalid(format!(
            "new node has {} features, expected {}",
            node.features.len(),
            profiles.leaf_count()
        )));
    }
    if let Some(&y) = node.out_edges.iter().chain(&node.in_edges).find(|&&y| y >= network.len()) {
        return Err(Error::invalid(format!("edge to node index {y} out of range")));
    }
    let inc = incident_terms(node, network, profiles, scheme, params);
    let mut evals = 0;
    if k <= EXHAUSTIVE_MAX_K {
        let mut best: Option<(f64, Vec<bool>)> = None;
        let mut c = vec![false; k];
        // Enumerated in lexicographic order, so ties keep the smallest.
        for m in 0u64..(1 << k) {
            for (j, v) in c.iter_mut().enumerate() {
                *v = m >> (k - 1 - j) & 1 == 1;
            }
            let ll = augmented_ll(&inc, circles, params, &c, &mut evals);
            if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                best = Some((ll, c.clone()));
            }
        }
        return Ok((best.map(|b| b.1).unwrap_or_default(), evals));
    }
    let mut c = vec![false; k];
    let mut cur = augmented_ll(&inc, circles, params, &c, &mut evals);
    loop {
        let mut improved = false;
        for j in 0..k {
            c[j] = !c[j];
            let ll = augmented_ll(&inc, circles, params, &c, &mut evals);
            if ll > cur {
                cur = ll;
                improved = true;
            } else {
                c[j] = !c[j];
            }
        }
        if !improved {
            return Ok((c, evals));
        }
    }
}

pub fn predict_memberships(
    node: &NewNode,
    network: &EgoNetwork,
    profiles: &ProfileStore,
    scheme: FeatureScheme,
    circles: &CircleAssignment,
    params: &ModelParams,
) -> Result<Vec<bool>> {
    predict_memberships_counted(node, network, profiles, scheme, circles, params).map(|r| r.0)
}

/// Nodes known to belong to each circle, and optionally nodes known not to.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeedSet {
    pub positive: Vec<Vec<NodeId>>,
    #[serde(default)]
    pub negative: Vec<Vec<NodeId>>,
}

impl SeedSet {
    pub fn new(positive: Vec<Vec<NodeId>>) -> Self {
        SeedSet {
            positive,
            negative: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.positive.len()
    }

    fn clamps(&self, network: &EgoNetwork) -> Result<Vec<Vec<Option<bool>>>> {
        let n = network.len();
        if self.negative.len() > self.positive.len() {
            return Err(Error::invalid("more negative seed lists than circles"));
        }
        let mut clamps = vec![vec![None; n]; self.k()];
        for (lists, value) in [(&self.positive, true), (&self.negative, false)] {
            for (k, ids) in lists.iter().enumerate() {
                for &id in ids {
                    let i = network.index_of(id).ok_or_else(|| Error::UnknownNode {
                        id,
                        context: format!("seeds of circle {k}"),
                    })?;
                    if clamps[k][i] == Some(!value) {
                        return Err(Error::invalid(format!("node {id} is both a positive and negative seed")));
                    }
                    clamps[k][i] = Some(value);
                }
            }
        }
        Ok(clamps)
    }
}

/// Coordinate ascent with seed nodes clamped into their circles (and
/// negative seeds clamped out). Circles start as the seed sets, so the
/// constraints hold after every update.
pub fn fit_seeded(
    network: &EgoNetwork,
    features: &EdgeFeatureCache<'_>,
    seeds: &SeedSet,
    config: &FitConfig,
) -> Result<FitResult> {
    if network.is_empty() {
        return Err(Error::invalid("cannot fit an empty network"));
    }
    let k = seeds.k();
    let clamps = seeds.clamps(network)?;
    let masks = clamps
        .iter()
        .map(|c| c.iter().map(|v| *v == Some(true)).collect())
        .collect();
    let circles = CircleAssignment::from_masks(network.len(), masks)?;
    let mut rng = rng_for(config.seed, k);
    let params = initial_params(k, features.dim(), &mut rng);
    Ascent::new(network, features, params, circles, config.lambda, clamps).run(
        config.max_outer_iters.max(1),
        &mut rng,
        &config.owlqn,
    )
}
