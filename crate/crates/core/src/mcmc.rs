//! Annealed membership sampling over collapsed node types.
//!
//! A node's type is its membership bit string together with its feature
//! class (nodes with identical profile rows share a class). Two nodes of the
//! same type have the same edge probability to any third node, so the
//! non-edge part of a membership marginal is a sum over types weighted by
//! their counts; only the edges incident on the node are corrected
//! individually.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CircleAssignment, EgoNetwork, ModelParams, ProfileStore};
use crate::error::{Error, Result};
use crate::features::{EdgeFeatureCache, FeatureScheme, SparseFeatures};
use crate::math::softplus;
use crate::model::TermSet;
use crate::trainer::{self, initial_params, optimize_params, param_count, rng_for, FitConfig, FitResult};

/// Membership bits packed into words.
pub type Bits = Vec<u64>;

#[inline]
fn bit(b: &[u64], k: usize) -> bool {
    b[k / 64] >> (k % 64) & 1 == 1
}

#[inline]
fn set_bit(b: &mut [u64], k: usize, v: bool) {
    if v {
        b[k / 64] |= 1 << (k % 64);
    } else {
        b[k / 64] &= !(1 << (k % 64));
    }
}

fn words(k: usize) -> usize {
    k.div_ceil(64).max(1)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeKey {
    pub bits: Bits,
    pub class: usize,
}

/// Counts of nodes per type. Iteration order is deterministic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeTable {
    counts: BTreeMap<TypeKey, usize>,
}

impl TypeTable {
    pub fn count(&self, key: &TypeKey) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Number of distinct types.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TypeKey, usize)> {
        self.counts.iter().map(|(k, &v)| (k, v))
    }

    fn increment(&mut self, key: TypeKey) {
        *self.counts.entry(key).or_insert(0) += 1;
    }

    fn decrement(&mut self, key: &TypeKey) {
        let c = self.counts.get_mut(key).expect("type present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(key);
        }
    }
}

/// Groups nodes by identical profile rows, in order of first appearance.
pub fn feature_classes(profiles: &ProfileStore) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut ids: HashMap<&[u8], usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut class_of = Vec::with_capacity(profiles.node_count());
    for i in 0..profiles.node_count() {
        let row = profiles.row(i);
        if let Some(c) = row.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryFeature {
                row: i,
                col: c,
                value: row[c] as u32,
            });
        }
        let next = reps.len();
        let c = *ids.entry(row).or_insert_with(|| {
            reps.push(i);
            next
        });
        class_of.push(c);
    }
    Ok((class_of, reps))
}

fn membership_bits(circles: &CircleAssignment, i: usize) -> Bits {
    let mut b = vec![0; words(circles.k())];
    for k in 0..circles.k() {
        set_bit(&mut b, k, circles.contains(k, i));
    }
    b
}

/// Counts nodes per (membership, feature class).
pub fn build_type_table(profiles: &ProfileStore, circles: &CircleAssignment) -> Result<TypeTable> {
    let (class_of, _) = feature_classes(profiles)?;
    let mut t = TypeTable::default();
    for (i, &class) in class_of.iter().enumerate() {
        t.increment(TypeKey {
            bits: membership_bits(circles, i),
            class,
        });
    }
    Ok(t)
}

#[inline]
fn class_pair(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    b * (b + 1) / 2 + a
}

/// Annealing schedule: the temperature at sweep `s` is `t0 * decay^s`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub decay: f64,
    pub sweeps: usize,
    /// Parameter steps run after every this many sweeps.
    pub param_every: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t0: 1.0,
            decay: 0.95,
            sweeps: 100,
            param_every: 10,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid("schedule needs t0 > 0 and 0 < decay < 1"));
        }
        Ok(())
    }

    pub fn temperature(&self, sweep: usize) -> f64 {
        self.t0 * self.decay.powi(sweep as i32)
    }
}

/// Probability of setting a membership bit to 1: `min(1, exp((l1 - l0) / T))`.
pub fn inclusion_probability(l0: f64, l1: f64, temperature: f64) -> f64 {
    let e = (l1 - l0) / temperature;
    if e >= 0.0 {
        1.0
    } else {
        e.exp()
    }
}

/// Sampler state: memberships, type counts and per-class-pair inner
/// products.
pub struct McmcState<'a> {
    network: &'a EgoNetwork,
    profiles: &'a ProfileStore,
    k: usize,
    class_of: Vec<usize>,
    class_feats: Vec<SparseFeatures>,
    ipc: Vec<f64>,
    params: ModelParams,
    bits: Vec<Bits>,
    table: TypeTable,
    /// Non-edge sums `sum_t n_t * -softplus(Phi)` keyed by the hypothetical
    /// type of the updated node, kept current as types change.
    base: HashMap<TypeKey, f64>,
}

impl<'a> McmcState<'a> {
    pub fn new(
        network: &'a EgoNetwork,
        profiles: &'a ProfileStore,
        scheme: FeatureScheme,
        circles: &CircleAssignment,
        params: ModelParams,
    ) -> Result<Self> {
        if profiles.node_count() != network.len() || circles.node_count() != network.len() {
            return Err(Error::invalid("profiles, circles and network disagree on node count"));
        }
        if circles.k() != params.k() {
            return Err(Error::invalid("circle and parameter counts differ"));
        }
        let (class_of, reps) = feature_classes(profiles)?;
        let c = reps.len();
        let mut class_feats = vec![SparseFeatures::default(); c * (c + 1) / 2];
        for b in 0..c {
            for a in 0..=b {
                class_feats[class_pair(a, b)] = scheme.from_rows(profiles, profiles.row(reps[a]), profiles.row(reps[b]));
            }
        }
        let bits: Vec<Bits> = (0..network.len()).map(|i| membership_bits(circles, i)).collect();
        let mut table = TypeTable::default();
        for (i, b) in bits.iter().enumerate() {
            table.increment(TypeKey {
                bits: b.clone(),
                class: class_of[i],
            });
        }
        let mut s = McmcState {
            network,
            profiles,
            k: circles.k(),
            class_of,
            class_feats,
            ipc: Vec::new(),
            params,
            bits,
            table,
            base: HashMap::new(),
        };
        s.refresh_inner_products();
        Ok(s)
    }

    fn refresh_inner_products(&mut self) {
        let k = self.k;
        self.ipc = vec![0.0; self.class_feats.len() * k];
        for (p, f) in self.class_feats.iter().enumerate() {
            for j in 0..k {
                self.ipc[p * k + j] = f.dot(&self.params.thetas[j]);
            }
        }
        self.base.clear();
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn set_params(&mut self, params: ModelParams) {
        assert_eq!(params.k(), self.k);
        self.params = params;
        self.refresh_inner_products();
    }

    pub fn table(&self) -> &TypeTable {
        &self.table
    }

    pub fn feature_class_count(&self) -> usize {
        self.class_of.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn type_of(&self, x: usize) -> TypeKey {
        TypeKey {
            bits: self.bits[x].clone(),
            class: self.class_of[x],
        }
    }

    pub fn circles(&self) -> CircleAssignment {
        let n = self.network.len();
        let masks = (0..self.k).map(|k| (0..n).map(|i| bit(&self.bits[i], k)).collect()).collect();
        CircleAssignment::from_masks(n, masks).expect("masks have node length")
    }

    #[inline]
    fn phi(&self, a: &[u64], ca: usize, b: &[u64], cb: usize) -> f64 {
        let ip = &self.ipc[class_pair(ca, cb) * self.k..][..self.k];
        let mut phi = 0.0;
        for j in 0..self.k {
            phi += if bit(a, j) && bit(b, j) { ip[j] } else { -self.params.alphas[j] * ip[j] };
        }
        phi
    }

    fn base_sum(&self, key: &TypeKey) -> f64 {
        self.table
            .iter()
            .map(|(t, n)| -(n as f64) * softplus(self.phi(&key.bits, key.class, &t.bits, t.class)))
            .sum()
    }

    fn marginal_from_base(&self, x: usize, hyp: &TypeKey, base: f64) -> f64 {
        let mult = if self.network.is_directed() { 2.0 } else { 1.0 };
        let own = &self.bits[x];
        let cx = self.class_of[x];
        let self_term = -softplus(self.phi(&hyp.bits, cx, own, cx));
        let mut l = mult * (base - self_term);
        for &y in self.network.neighbors(x).iter().chain(self.network.in_neighbors(x)) {
            l += self.phi(&hyp.bits, cx, &self.bits[y], self.class_of[y]);
        }
        l
    }

    fn hypothetical(&self, x: usize, k: usize, v: bool) -> TypeKey {
        let mut bits = self.bits[x].clone();
        set_bit(&mut bits, k, v);
        TypeKey {
            bits,
            class: self.class_of[x],
        }
    }

    /// `(l0, l1)`: log-likelihood of all pairs involving `x` with its bit in
    /// circle `k` set to 0 and to 1. Computed from the type table directly.
    pub fn marginals(&self, x: usize, k: usize) -> (f64, f64) {
        let h0 = self.hypothetical(x, k, false);
        let h1 = self.hypothetical(x, k, true);
        (
            self.marginal_from_base(x, &h0, self.base_sum(&h0)),
            self.marginal_from_base(x, &h1, self.base_sum(&h1)),
        )
    }

    /// As [`McmcState::marginals`], reusing the maintained non-edge sums.
    pub fn marginals_cached(&mut self, x: usize, k: usize) -> (f64, f64) {
        let mut out = [0.0; 2];
        for (v, o) in out.iter_mut().enumerate() {
            let h = self.hypothetical(x, k, v == 1);
            let base = match self.base.get(&h) {
                Some(&b) => b,
                None => {
                    let b = self.base_sum(&h);
                    self.base.insert(h.clone(), b);
                    b
                }
            };
            *o = self.marginal_from_base(x, &h, base);
        }
        (out[0], out[1])
    }

    /// Moves `x` into circle `k` (or out of it), keeping the table and the
    /// cached sums current.
    pub fn set_membership(&mut self, x: usize, k: usize, v: bool) {
        if bit(&self.bits[x], k) == v {
            return;
        }
        let old = self.type_of(x);
        set_bit(&mut self.bits[x], k, v);
        let new = self.type_of(x);
        let mut base = std::mem::take(&mut self.base);
        for (key, val) in base.iter_mut() {
            *val += softplus(self.phi(&key.bits, key.class, &old.bits, old.class))
                - softplus(self.phi(&key.bits, key.class, &new.bits, new.class));
        }
        self.base = base;
        self.table.decrement(&old);
        self.table.increment(new);
    }

    /// One pass over all (node, circle) pairs in random order. Returns the
    /// number of memberships that changed.
    pub fn sweep(&mut self, temperature: f64, rng: &mut impl Rng) -> usize {
        let mut order: Vec<(u32, u32)> = (0..self.network.len() as u32)
            .flat_map(|x| (0..self.k as u32).map(move |k| (x, k)))
            .collect();
        order.shuffle(rng);
        let mut changed = 0;
        for (x, k) in order {
            let (x, k) = (x as usize, k as usize);
            let (l0, l1) = self.marginals_cached(x, k);
            let z: f64 = rng.gen();
            let v = z < inclusion_probability(l0, l1, temperature);
            if v != bit(&self.bits[x], k) {
                self.set_membership(x, k, v);
                changed += 1;
            }
        }
        changed
    }

    /// The likelihood collapsed onto type pairs: one term per unordered pair
    /// of types, weighted by the number of node pairs, plus per-type-pair
    /// edge counts.
    pub fn term_set(&self) -> TermSet {
        let types: Vec<(&TypeKey, usize)> = self.table.iter().collect();
        let index: HashMap<&TypeKey, usize> = types.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
        let nt = types.len();
        let node_type: Vec<usize> = (0..self.network.len())
            .map(|x| index[&TypeKey {
                bits: self.bits[x].clone(),
                class: self.class_of[x],
            }])
            .collect();
        let mut edges = vec![0.0; nt * nt];
        for &(x, y) in self.network.edges() {
            let (a, b) = (node_type[x], node_type[y]);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            edges[a * nt + b] += 1.0;
        }
        let mult = if self.network.is_directed() { 2.0 } else { 1.0 };
        let mut ts = TermSet::new(self.k, self.params.dim(), self.class_feats.clone());
        let mut inside = vec![false; self.k];
        for a in 0..nt {
            for b in a..nt {
                let (ta, na) = types[a];
                let (tb, nb) = types[b];
                let pairs = if a == b { (na * (na - 1) / 2) as f64 } else { (na * nb) as f64 };
                if pairs == 0.0 {
                    continue;
                }
                for (j, v) in inside.iter_mut().enumerate() {
                    *v = bit(&ta.bits, j) && bit(&tb.bits, j);
                }
                ts.push(class_pair(ta.class, tb.class) as u32, mult * pairs, edges[a * nt + b], &inside);
            }
        }
        ts
    }

    pub fn log_likelihood(&self) -> f64 {
        let ts = self.term_set();
        ts.log_likelihood(&self.params, &ts.inner_products(&self.params))
    }

    pub fn profiles(&self) -> &ProfileStore {
        self.profiles
    }
}

/// Fits `K` circles by annealed sampling, interleaving collapsed parameter
/// steps. Returns the highest-likelihood state seen after any sweep.
pub fn fit_mcmc(
    network: &EgoNetwork,
    features: &EdgeFeatureCache<'_>,
    k: usize,
    config: &FitConfig,
    schedule: &AnnealSchedule,
) -> Result<FitResult> {
    schedule.validate()?;
    if network.is_empty() {
        return Err(Error::invalid("cannot fit an empty network"));
    }
    let mut rng = rng_for(config.seed, k);
    let params = initial_params(k, features.dim(), &mut rng);
    let circles = CircleAssignment::empty(network.len(), k);
    let mut state = McmcState::new(network, features.profiles(), features.scheme(), &circles, params)?;
    let mut best = (state.log_likelihood(), state.circles(), state.params().clone());
    let mut last_changes = usize::MAX;
    let mut trace = Vec::new();
    for s in 0..schedule.sweeps {
        last_changes = state.sweep(schedule.temperature(s), &mut rng);
        let every = schedule.param_every.max(1);
        if (s + 1) % every == 0 || s + 1 == schedule.sweeps {
            let ts = state.term_set();
            let next = optimize_params(&ts, state.params(), config.lambda, &config.owlqn)?;
            state.set_params(next);
        }
        let ll = state.log_likelihood();
        trace.push(ll);
        if ll > best.0 {
            best = (ll, state.circles(), state.params().clone());
        }
    }
    let (ll, circles, params) = best;
    let bic = trainer::bic(ll, param_count(k, params.dim()), network.edge_count()).ok();
    Ok(FitResult {
        params,
        circles,
        log_likelihood: ll,
        bic,
        iterations: schedule.sweeps,
        converged: last_changes == 0,
        objective_trace: trace,
    })
}
