//! Unsupervised coordinate ascent over circles and parameters, and BIC
//! selection of the number of circles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CircleAssignment, EgoNetwork, ModelParams};
use crate::error::{Error, Result};
use crate::features::EdgeFeatureCache;
use crate::model::{regularizer, LikelihoodContext, TermSet};
use crate::optim::{self, OwlqnConfig};
use crate::pbopt::{self, membership_table, PairwiseEnergy};

/// Number of circles to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KChoice {
    Fixed(usize),
    /// Sweep `1..=k_max` and keep the lowest BIC.
    Auto,
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub k: KChoice,
    /// L1 strength on the weight vectors.
    pub lambda: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub k_max: usize,
    pub owlqn: OwlqnConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: KChoice::Auto,
            lambda: 1.0,
            max_outer_iters: 50,
            seed: 0,
            k_max: 10,
            owlqn: OwlqnConfig {
                max_iters: 100,
                ..OwlqnConfig::default()
            },
        }
    }
}

impl FitConfig {
    pub fn with_k(k: usize) -> Self {
        FitConfig {
            k: KChoice::Fixed(k),
            ..FitConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: ModelParams,
    pub circles: CircleAssignment,
    /// Unregularized log-likelihood of the final state.
    pub log_likelihood: f64,
    /// `None` when the network has no edges.
    pub bic: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Regularized objective after initialization and after every
    /// membership update and parameter step.
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    /// Circles and parameters with empty circles removed.
    pub fn non_empty(&self) -> (CircleAssignment, ModelParams) {
        let keep = self.circles.non_empty();
        (self.circles.select(&keep), self.params.select(&keep))
    }
}

/// `-2 ll + param_count * ln(edge_count)`.
pub fn bic(log_likelihood: f64, param_count: usize, edge_count: usize) -> Result<f64> {
    if edge_count == 0 {
        return Err(Error::NoEdges);
    }
    Ok(-2.0 * log_likelihood + param_count as f64 * (edge_count as f64).ln())
}

/// Free parameters of a `k`-circle model: `F + 1` weights plus `alpha`.
pub fn param_count(k: usize, dim: usize) -> usize {
    k * (dim + 1)
}

/// L1 weights matching [`ModelParams::to_flat`]: `lambda` on weights, none
/// on alphas.
pub(crate) fn l1_weights(k: usize, dim: usize, lambda: f64) -> Vec<f64> {
    let mut w = vec![lambda; k * dim];
    w.extend(std::iter::repeat_n(0.0, k));
    w
}

/// One OWL-QN run on `l - lambda * Omega` over a fixed term set. The result
/// is never worse than `params` under [`TermSet::log_likelihood`].
pub fn optimize_params(ts: &TermSet, params: &ModelParams, lambda: f64, cfg: &OwlqnConfig) -> Result<ModelParams> {
    let (k, dim) = (params.k(), params.dim());
    if k == 0 {
        return Ok(params.clone());
    }
    let l1 = l1_weights(k, dim, lambda);
    let res = optim::maximize(
        |x| {
            let p = ModelParams::from_flat(k, dim, x);
            let (ll, g) = ts.evaluate(&p);
            (ll, g.to_flat())
        },
        &params.to_flat(),
        &l1,
        cfg,
    )?;
    let next = ModelParams::from_flat(k, dim, &res.x);
    let score = |p: &ModelParams| ts.log_likelihood(p, &ts.inner_products(p)) - regularizer(p, lambda);
    if score(&next) >= score(params) {
        Ok(next)
    } else {
        Ok(params.clone())
    }
}

/// Quasi-Newton ascent on the regularized objective with circles fixed.
pub fn quasi_newton_step(ctx: &LikelihoodContext<'_>, cfg: &OwlqnConfig) -> Result<ModelParams> {
    let ts = TermSet::for_network(ctx.network, ctx.features, ctx.circles);
    optimize_params(&ts, ctx.params, ctx.lambda, cfg)
}

/// Weight vectors drawn uniformly from `{0, 1}` (constant included) and
/// `alpha = 1`.
pub fn initial_params(k: usize, dim: usize, rng: &mut impl Rng) -> ModelParams {
    ModelParams {
        thetas: (0..k)
            .map(|_| (0..dim).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
            .collect(),
        alphas: vec![1.0; k],
    }
}

/// Coordinate-ascent state for one network.
pub(crate) struct Ascent {
    ts: TermSet,
    pairs: Vec<(u32, u32)>,
    n: usize,
    edge_count: usize,
    pub(crate) params: ModelParams,
    pub(crate) circles: CircleAssignment,
    ip: Vec<f64>,
    lambda: f64,
    clamps: Vec<Vec<Option<bool>>>,
    pub(crate) trace: Vec<f64>,
}

impl Ascent {
    pub(crate) fn new(
        network: &EgoNetwork,
        features: &EdgeFeatureCache<'_>,
        params: ModelParams,
        circles: CircleAssignment,
        lambda: f64,
        clamps: Vec<Vec<Option<bool>>>,
    ) -> Self {
        let n = network.len();
        let ts = TermSet::for_network(network, features, &circles);
        let mut pairs = Vec::with_capacity(ts.len());
        for x in 0..n as u32 {
            for y in x + 1..n as u32 {
                pairs.push((x, y));
            }
        }
        let ip = ts.inner_products(&params);
        let mut a = Ascent {
            ts,
            pairs,
            n,
            edge_count: network.edge_count(),
            params,
            circles,
            ip,
            lambda,
            clamps,
            trace: Vec::new(),
        };
        let obj = a.objective();
        a.trace.push(obj);
        a
    }

    pub(crate) fn log_likelihood(&self) -> f64 {
        self.ts.log_likelihood(&self.params, &self.ip)
    }

    /// The regularized objective; the single definition used for the trace
    /// and for every acceptance test.
    pub(crate) fn objective(&self) -> f64 {
        self.log_likelihood() - regularizer(&self.params, self.lambda)
    }

    fn set_mask(&mut self, k: usize, mask: &[bool]) {
        for (t, &(x, y)) in self.pairs.iter().enumerate() {
            self.ts.set_inside(t, k, mask[x as usize] && mask[y as usize]);
        }
    }

    fn circle_energy(&self, k: usize) -> PairwiseEnergy {
        let kk = self.params.k();
        let mut energy = PairwiseEnergy::new(self.n);
        let alpha = self.params.alphas[k];
        for (t, &(x, y)) in self.pairs.iter().enumerate() {
            let ip = self.ts.term_ip(&self.ip, t);
            let mut o = 0.0;
            for j in (0..kk).filter(|&j| j != k) {
                o += if self.ts.inside(t, j) { ip[j] } else { -self.params.alphas[j] * ip[j] };
            }
            let (w_sp, w_lin) = self.ts.weights(t);
            energy.add_pairwise(x as usize, y as usize, membership_table(w_sp, w_lin, o, ip[k], alpha));
        }
        energy
    }

    /// Re-solves circle `k`. Returns whether its membership changed.
    pub(crate) fn update_circle(&mut self, k: usize) -> Result<bool> {
        let energy = self.circle_energy(k);
        let warm = self.circles.mask(k).to_vec();
        let proposal = pbopt::maximize_clamped(&energy, &warm, &self.clamps[k])?;
        if proposal == warm {
            self.trace.push(self.objective());
            return Ok(false);
        }
        let before = self.objective();
        self.set_mask(k, &proposal);
        let after = self.objective();
        if after >= before {
            self.circles.set_mask(k, proposal);
            self.trace.push(after);
            Ok(true)
        } else {
            self.set_mask(k, &warm);
            self.trace.push(before);
            Ok(false)
        }
    }

    pub(crate) fn update_params(&mut self, cfg: &OwlqnConfig) -> Result<()> {
        let before = self.objective();
        let next = optimize_params(&self.ts, &self.params, self.lambda, cfg)?;
        let old = std::mem::replace(&mut self.params, next);
        let old_ip = std::mem::replace(&mut self.ip, self.ts.inner_products(&self.params));
        let after = self.objective();
        if after >= before {
            self.trace.push(after);
        } else {
            self.params = old;
            self.ip = old_ip;
            self.trace.push(before);
        }
        Ok(())
    }

    /// Alternates membership and parameter updates until an outer iteration
    /// changes no membership.
    pub(crate) fn run(mut self, max_outer: usize, rng: &mut impl Rng, cfg: &OwlqnConfig) -> Result<FitResult> {
        let kk = self.params.k();
        let mut order: Vec<usize> = (0..kk).collect();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_outer {
            iterations += 1;
            order.shuffle(rng);
            let mut changed = false;
            for &k in &order {
                changed |= self.update_circle(k)?;
            }
            self.update_params(cfg)?;
            if !changed {
                converged = true;
                break;
            }
        }
        let ll = self.log_likelihood();
        let bic = bic(ll, param_count(kk, self.params.dim()), self.edge_count).ok();
        Ok(FitResult {
            params: self.params,
            circles: self.circles,
            log_likelihood: ll,
            bic,
            iterations,
            converged,
            objective_trace: self.trace,
        })
    }
}

pub(crate) fn rng_for(seed: u64, k: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fits `k` circles from empty initial circles.
pub fn fit_k(network: &EgoNetwork, features: &EdgeFeatureCache<'_>, k: usize, config: &FitConfig) -> Result<FitResult> {
    if network.is_empty() {
        return Err(Error::invalid("cannot fit an empty network"));
    }
    let mut rng = rng_for(config.seed, k);
    let params = initial_params(k, features.dim(), &mut rng);
    let circles = CircleAssignment::empty(network.len(), k);
    let clamps = vec![vec![None; network.len()]; k];
    Ascent::new(network, features, params, circles, config.lambda, clamps).run(
        config.max_outer_iters.max(1),
        &mut rng,
        &config.owlqn,
    )
}

/// Coordinate ascent from given parameters and circles.
pub fn fit_from(
    network: &EgoNetwork,
    features: &EdgeFeatureCache<'_>,
    params: ModelParams,
    circles: CircleAssignment,
    config: &FitConfig,
) -> Result<FitResult> {
    let k = params.k();
    if circles.k() != k || circles.node_count() != network.len() {
        return Err(Error::invalid("circles do not match the parameters or network"));
    }
    params.validate()?;
    let mut rng = rng_for(config.seed, k);
    let clamps = vec![vec![None; network.len()]; k];
    Ascent::new(network, features, params, circles, config.lambda, clamps).run(
        config.max_outer_iters.max(1),
        &mut rng,
        &config.owlqn,
    )
}

/// Fits with the configured `K`, sweeping with BIC when it is `Auto`.
pub fn fit(network: &EgoNetwork, features: &EdgeFeatureCache<'_>, config: &FitConfig) -> Result<FitResult> {
    match config.k {
        KChoice::Fixed(k) => fit_k(network, features, k, config),
        KChoice::Auto => select_k(network, features, config),
    }
}

/// Fits `K = 1..=k_max` and returns the fit with the lowest BIC, preferring
/// the smaller `K` on ties.
pub fn select_k(network: &EgoNetwork, features: &EdgeFeatureCache<'_>, config: &FitConfig) -> Result<FitResult> {
    if network.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    let mut best: Option<FitResult> = None;
    for k in 1..=config.k_max.max(1) {
        let r = fit_k(network, features, k, config)?;
        let b = r.bic.ok_or(Error::NoEdges)?;
        if best.as_ref().is_none_or(|cur| b < cur.bic.unwrap_or(f64::INFINITY)) {
            best = Some(r);
        }
    }
    Ok(best.expect("k_max >= 1"))
}
