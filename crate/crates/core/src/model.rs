//! Edge probabilities, the log-likelihood of a network and its gradients.
//!
//! The per-pair functions ([`big_phi`], [`log_likelihood`], [`gradients`])
//! follow the definitions directly. [`TermSet`] is the shared evaluation
//! kernel used by the optimizers: it groups pairs into weighted terms so the
//! same code serves plain pair sums, merged directed pairs and the collapsed
//! type-pair sums of the sampler.

use crate::data::{CircleAssignment, EgoNetwork, ModelParams};
use crate::features::{EdgeFeatureCache, SparseFeatures};
use crate::math::{sigmoid, softplus};

/// Everything needed to evaluate the likelihood of one network.
#[derive(Clone, Copy, Debug)]
pub struct LikelihoodContext<'a> {
    pub network: &'a EgoNetwork,
    pub features: &'a EdgeFeatureCache<'a>,
    pub params: &'a ModelParams,
    pub circles: &'a CircleAssignment,
    /// L1 strength.
    pub lambda: f64,
}

impl LikelihoodContext<'_> {
    /// `1` if both endpoints are in circle `k`, otherwise `-alpha_k`.
    #[inline]
    pub fn d_coeff(&self, x: usize, y: usize, k: usize) -> f64 {
        if self.circles.pair_inside(k, x, y) {
            1.0
        } else {
            -self.params.alphas[k]
        }
    }
}

pub fn d_coeff(ctx: &LikelihoodContext<'_>, x: usize, y: usize, k: usize) -> f64 {
    ctx.d_coeff(x, y, k)
}

/// `Phi(e) = sum_k d_k(e) <phi(e), theta_k>`.
pub fn big_phi(ctx: &LikelihoodContext<'_>, x: usize, y: usize) -> f64 {
    let f = ctx.features.get(x, y);
    (0..ctx.params.k())
        .map(|k| ctx.d_coeff(x, y, k) * f.dot(&ctx.params.thetas[k]))
        .sum()
}

/// `(log p(edge), log p(non-edge))` for affinity `phi`.
#[inline]
pub fn edge_log_probs(phi: f64) -> (f64, f64) {
    let sp = softplus(phi);
    (phi - sp, -sp)
}

/// `sum_{e in E} Phi(e) - sum_{pairs} log(1 + e^Phi(e))`.
pub fn log_likelihood(ctx: &LikelihoodContext<'_>) -> f64 {
    let net = ctx.network;
    let mut ll = 0.0;
    for (x, y) in net.pairs() {
        let phi = big_phi(ctx, x, y);
        let (lp_edge, lp_non) = edge_log_probs(phi);
        ll += if net.has_edge(x, y) { lp_edge } else { lp_non };
    }
    ll
}

/// `lambda * sum_k sum_i |theta_ki|`; alphas are not penalized.
pub fn regularizer(params: &ModelParams, lambda: f64) -> f64 {
    lambda * params.thetas.iter().flatten().map(|t| t.abs()).sum::<f64>()
}

/// `l - lambda * Omega`.
pub fn objective(ctx: &LikelihoodContext<'_>) -> f64 {
    log_likelihood(ctx) - regularizer(ctx.params, ctx.lambda)
}

/// Gradients of the unregularized log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub theta: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

impl Gradients {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Gradients {
            theta: vec![vec![0.0; dim]; k],
            alpha: vec![0.0; k],
        }
    }

    /// Packed in the same order as [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.theta.iter().flatten().copied().collect();
        v.extend_from_slice(&self.alpha);
        v
    }
}

pub fn gradients(ctx: &LikelihoodContext<'_>) -> Gradients {
    let net = ctx.network;
    let kk = ctx.params.k();
    let mut g = Gradients::zeros(kk, ctx.params.dim());
    for (x, y) in net.pairs() {
        let f = ctx.features.get(x, y);
        let ip: Vec<f64> = (0..kk).map(|k| f.dot(&ctx.params.thetas[k])).collect();
        let phi: f64 = (0..kk).map(|k| ctx.d_coeff(x, y, k) * ip[k]).sum();
        let r = if net.has_edge(x, y) { 1.0 } else { 0.0 } - sigmoid(phi);
        for k in 0..kk {
            f.add_scaled(r * ctx.d_coeff(x, y, k), &mut g.theta[k]);
            if !ctx.circles.pair_inside(k, x, y) {
                g.alpha[k] -= r * ip[k];
            }
        }
    }
    g
}

/// Weighted likelihood terms. Term `t` contributes
/// `w_lin * Phi - w_sp * softplus(Phi)` where `Phi` uses the features
/// `feats[feat_of[t]]` and the per-circle inside flags of `t`.
#[derive(Clone, Debug)]
pub struct TermSet {
    k: usize,
    dim: usize,
    feats: Vec<SparseFeatures>,
    feat_of: Vec<u32>,
    w_sp: Vec<f64>,
    w_lin: Vec<f64>,
    inside: Vec<bool>,
}

impl TermSet {
    pub fn new(k: usize, dim: usize, feats: Vec<SparseFeatures>) -> Self {
        TermSet {
            k,
            dim,
            feats,
            feat_of: Vec::new(),
            w_sp: Vec::new(),
            w_lin: Vec::new(),
            inside: Vec::new(),
        }
    }

    /// One term per pair of the network's pair domain. Directed pairs
    /// `(x, y)` and `(y, x)` share features and memberships, so they are
    /// merged into a single term of double weight. Term `t` corresponds to
    /// the `t`-th unordered pair `x < y`.
    pub fn for_network(network: &EgoNetwork, features: &EdgeFeatureCache<'_>, circles: &CircleAssignment) -> Self {
        let n = network.len();
        let k = circles.k();
        let mut feats = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for x in 0..n {
            for y in x + 1..n {
                feats.push(features.get(x, y).into_owned());
            }
        }
        let mut ts = TermSet::new(k, features.dim(), feats);
        let directed = network.is_directed();
        let mut inside = vec![false; k];
        let mut t = 0u32;
        for x in 0..n {
            for y in x + 1..n {
                for (c, v) in inside.iter_mut().enumerate() {
                    *v = circles.pair_inside(c, x, y);
                }
                let (w_sp, w_lin) = if directed {
                    (2.0, network.has_edge(x, y) as u8 as f64 + network.has_edge(y, x) as u8 as f64)
                } else {
                    (1.0, network.has_edge(x, y) as u8 as f64)
                };
                ts.push(t, w_sp, w_lin, &inside);
                t += 1;
            }
        }
        ts
    }

    pub fn push(&mut self, feat: u32, w_sp: f64, w_lin: f64, inside: &[bool]) {
        debug_assert_eq!(inside.len(), self.k);
        self.feat_of.push(feat);
        self.w_sp.push(w_sp);
        self.w_lin.push(w_lin);
        self.inside.extend_from_slice(inside);
    }

    pub fn len(&self) -> usize {
        self.feat_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feat_of.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_of(&self, t: usize) -> usize {
        self.feat_of[t] as usize
    }

    pub fn weights(&self, t: usize) -> (f64, f64) {
        (self.w_sp[t], self.w_lin[t])
    }

    #[inline]
    pub fn inside(&self, t: usize, k: usize) -> bool {
        self.inside[t * self.k + k]
    }

    #[inline]
    pub fn set_inside(&mut self, t: usize, k: usize, v: bool) {
        self.inside[t * self.k + k] = v;
    }

    /// `<feats[f], theta_k>` for every feature entry, laid out `f * K + k`.
    pub fn inner_products(&self, params: &ModelParams) -> Vec<f64> {
        let mut ip = vec![0.0; self.feats.len() * self.k];
        for (f, feat) in self.feats.iter().enumerate() {
            for k in 0..self.k {
                ip[f * self.k + k] = feat.dot(&params.thetas[k]);
            }
        }
        ip
    }

    /// Inner products of the features of term `t`.
    #[inline]
    pub fn term_ip<'a>(&self, ip: &'a [f64], t: usize) -> &'a [f64] {
        let f = self.feat_of[t] as usize;
        &ip[f * self.k..(f + 1) * self.k]
    }

    /// `Phi` of term `t` given precomputed inner products.
    #[inline]
    pub fn phi(&self, params: &ModelParams, ip: &[f64], t: usize) -> f64 {
        let ipt = self.term_ip(ip, t);
        let mut phi = 0.0;
        for k in 0..self.k {
            phi += if self.inside(t, k) { ipt[k] } else { -params.alphas[k] * ipt[k] };
        }
        phi
    }

    /// Log-likelihood for the given parameters.
    pub fn log_likelihood(&self, params: &ModelParams, ip: &[f64]) -> f64 {
        (0..self.len())
            .map(|t| {
                let phi = self.phi(params, ip, t);
                self.w_lin[t] * phi - self.w_sp[t] * softplus(phi)
            })
            .sum()
    }

    /// Log-likelihood and its gradient.
    pub fn evaluate(&self, params: &ModelParams) -> (f64, Gradients) {
        let ip = self.inner_products(params);
        let kk = self.k;
        // Per-feature coefficients, so each sparse vector is scattered once.
        let mut coef = vec![0.0; self.feats.len() * kk];
        let mut g = Gradients::zeros(kk, self.dim);
        let mut ll = 0.0;
        for t in 0..self.len() {
            let phi = self.phi(params, &ip, t);
            ll += self.w_lin[t] * phi - self.w_sp[t] * softplus(phi);
            let r = self.w_lin[t] - self.w_sp[t] * sigmoid(phi);
            let f = self.feat_of[t] as usize;
            for k in 0..kk {
                if self.inside(t, k) {
                    coef[f * kk + k] += r;
                } else {
                    coef[f * kk + k] -= r * params.alphas[k];
                    g.alpha[k] -= r * ip[f * kk + k];
                }
            }
        }
        for (f, feat) in self.feats.iter().enumerate() {
            for k in 0..kk {
                let c = coef[f * kk + k];
                if c != 0.0 {
                    feat.add_scaled(c, &mut g.theta[k]);
                }
            }
        }
        (ll, g)
    }
}
