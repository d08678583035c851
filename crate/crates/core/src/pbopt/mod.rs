//! Pairwise pseudo-boolean maximization for circle membership updates.
//!
//! [`persistent_labels`] solves the roof-duality relaxation on the doubled
//! graph with a max-flow; nodes it labels agree with some global optimum.
//! [`maximize`] completes the remaining nodes with iterated conditional
//! modes and never returns anything worse than the warm start.

pub mod maxflow;

use crate::error::{Error, Result};
use crate::math::softplus;
use crate::model::LikelihoodContext;
use maxflow::MaxFlow;

/// A 2x2 table indexed `[label_i][label_j]`.
pub type Table = [[f64; 2]; 2];

/// An energy to be maximized: per-node unaries plus pairwise tables.
#[derive(Clone, Debug, Default)]
pub struct PairwiseEnergy {
    n: usize,
    unary: Vec<[f64; 2]>,
    pairs: Vec<(u32, u32, Table)>,
}

impl PairwiseEnergy {
    pub fn new(n: usize) -> Self {
        PairwiseEnergy {
            n,
            unary: vec![[0.0; 2]; n],
            pairs: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn add_unary(&mut self, i: usize, e0: f64, e1: f64) {
        self.unary[i][0] += e0;
        self.unary[i][1] += e1;
    }

    /// Adds a table for `(i, j)`, `i != j`. Stored with `i < j`.
    pub fn add_pairwise(&mut self, i: usize, j: usize, t: Table) {
        assert!(i != j && i < self.n && j < self.n);
        if i < j {
            self.pairs.push((i as u32, j as u32, t));
        } else {
            self.pairs.push((j as u32, i as u32, [[t[0][0], t[1][0]], [t[0][1], t[1][1]]]));
        }
    }

    pub fn unary(&self) -> &[[f64; 2]] {
        &self.unary
    }

    pub fn pairwise(&self) -> &[(u32, u32, Table)] {
        &self.pairs
    }

    fn check_finite(&self) -> Result<()> {
        let bad = self.unary.iter().flatten().any(|v| !v.is_finite())
            || self.pairs.iter().any(|(_, _, t)| t.iter().flatten().any(|v| !v.is_finite()));
        if bad {
            Err(Error::NonFinite("pseudo-boolean energy entry".into()))
        } else {
            Ok(())
        }
    }
}

/// `sum unary + sum pairwise` for a full labeling.
pub fn energy_of(energy: &PairwiseEnergy, labels: &[bool]) -> f64 {
    let mut e: f64 = energy.unary.iter().zip(labels).map(|(u, &l)| u[l as usize]).sum();
    for &(i, j, t) in &energy.pairs {
        e += t[labels[i as usize] as usize][labels[j as usize] as usize];
    }
    e
}

/// The membership table of one pair: every labeling but `(1, 1)` leaves the
/// pair outside the circle.
///
/// `s` is `<phi(e), theta_k>`, `o` the affinity contributed by the other
/// circles, and `(w_sp, w_lin)` the pair weights (`w_lin` counts edges).
#[inline]
pub fn membership_table(w_sp: f64, w_lin: f64, o: f64, s: f64, alpha: f64) -> Table {
    let out = o - alpha * s;
    let inside = o + s;
    let a = w_lin * out - w_sp * softplus(out);
    let b = w_lin * inside - w_sp * softplus(inside);
    [[a, a], [a, b]]
}

/// Energy of circle `k`'s memberships with everything else fixed. Its value
/// at a labeling equals the log-likelihood with circle `k` set to it.
pub fn build_circle_energy(k: usize, ctx: &LikelihoodContext<'_>) -> PairwiseEnergy {
    let net = ctx.network;
    let mut energy = PairwiseEnergy::new(net.len());
    for (x, y) in net.pairs() {
        let f = ctx.features.get(x, y);
        let s = f.dot(&ctx.params.thetas[k]);
        let o: f64 = (0..ctx.params.k())
            .filter(|&j| j != k)
            .map(|j| ctx.d_coeff(x, y, j) * f.dot(&ctx.params.thetas[j]))
            .sum();
        let edge = net.has_edge(x, y) as u8 as f64;
        energy.add_pairwise(x, y, membership_table(1.0, edge, o, s, ctx.params.alphas[k]));
    }
    energy
}

/// Unaries and pairwise tables after substituting clamped nodes, in
/// minimization form (`cost = -energy`).
struct Reduced {
    unary: Vec<f64>,
    pairs: Vec<(usize, usize, [[f64; 2]; 2])>,
}

fn reduce(energy: &PairwiseEnergy, clamps: &[Option<bool>]) -> Reduced {
    let mut unary: Vec<f64> = energy.unary.iter().map(|u| u[0] - u[1]).collect();
    let mut pairs = Vec::with_capacity(energy.pairs.len());
    for &(i, j, t) in &energy.pairs {
        let (i, j) = (i as usize, j as usize);
        match (clamps[i], clamps[j]) {
            (Some(_), Some(_)) => {}
            (Some(a), None) => {
                let row = t[a as usize];
                unary[j] += row[0] - row[1];
            }
            (None, Some(b)) => {
                unary[i] += t[0][b as usize] - t[1][b as usize];
            }
            (None, None) => pairs.push((i, j, [[-t[0][0], -t[0][1]], [-t[1][0], -t[1][1]]])),
        }
    }
    Reduced { unary, pairs }
}

/// Roof-duality labels: `Some(label)` for persistent nodes, `None` where the
/// relaxation is undecided. Clamped nodes keep their clamp.
pub fn persistent_labels(energy: &PairwiseEnergy, clamps: &[Option<bool>]) -> Result<Vec<Option<bool>>> {
    energy.check_finite()?;
    let n = energy.n;
    assert_eq!(clamps.len(), n);
    let Reduced { mut unary, pairs } = reduce(energy, clamps);
    let (s, t) = (2 * n, 2 * n + 1);
    let neg = |i: usize| n + i;
    let mut g = MaxFlow::new(2 * n + 2);
    for (i, j, c) in pairs {
        let (a, b, cc, d) = (c[0][0], c[0][1], c[1][0], c[1][1]);
        unary[i] += cc - a;
        let w = b + cc - a - d;
        if w >= 0.0 {
            unary[j] += d - cc;
            if w > 0.0 {
                g.add_edge(i, j, w / 2.0);
                g.add_edge(neg(j), neg(i), w / 2.0);
            }
        } else {
            unary[j] += b - a;
            g.add_edge(neg(i), j, -w / 2.0);
            g.add_edge(neg(j), i, -w / 2.0);
        }
    }
    for (i, &u) in unary.iter().enumerate() {
        if clamps[i].is_some() {
            continue;
        }
        if u > 0.0 {
            g.add_edge(s, i, u / 2.0);
            g.add_edge(neg(i), t, u / 2.0);
        } else if u < 0.0 {
            g.add_edge(i, t, -u / 2.0);
            g.add_edge(s, neg(i), -u / 2.0);
        }
    }
    g.max_flow(s, t);
    let side = g.source_side(s);
    Ok((0..n)
        .map(|i| match clamps[i] {
            Some(v) => Some(v),
            None => match (side[i], side[neg(i)]) {
                (true, false) => Some(false),
                (false, true) => Some(true),
                _ => None,
            },
        })
        .collect())
}

/// Per-node incident pair indices, for local moves.
fn incidence(energy: &PairwiseEnergy) -> Vec<Vec<u32>> {
    let mut inc = vec![Vec::new(); energy.n];
    for (p, &(i, j, _)) in energy.pairs.iter().enumerate() {
        inc[i as usize].push(p as u32);
        inc[j as usize].push(p as u32);
    }
    inc
}

/// Change in energy from flipping node `i`.
fn flip_gain(energy: &PairwiseEnergy, inc: &[u32], labels: &[bool], i: usize) -> f64 {
    let cur = labels[i] as usize;
    let mut gain = energy.unary[i][1 - cur] - energy.unary[i][cur];
    for &p in inc {
        let (a, b, t) = energy.pairs[p as usize];
        let (a, b) = (a as usize, b as usize);
        if a == i {
            let lb = labels[b] as usize;
            gain += t[1 - cur][lb] - t[cur][lb];
        } else {
            let la = labels[a] as usize;
            gain += t[la][1 - cur] - t[la][cur];
        }
    }
    gain
}

/// Iterated conditional modes over the nodes with `free[i]`, until no single
/// flip improves the energy.
pub fn icm(energy: &PairwiseEnergy, labels: &mut [bool], free: &[bool]) {
    let inc = incidence(energy);
    icm_with(energy, &inc, labels, free);
}

fn icm_with(energy: &PairwiseEnergy, inc: &[Vec<u32>], labels: &mut [bool], free: &[bool]) {
    for _ in 0..1000 {
        let mut changed = false;
        for i in 0..energy.n {
            if free[i] && flip_gain(energy, &inc[i], labels, i) > 1e-12 {
                labels[i] = !labels[i];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Maximizes `energy` starting from `warm`. See [`maximize_clamped`].
pub fn maximize(energy: &PairwiseEnergy, warm: &[bool]) -> Result<Vec<bool>> {
    maximize_clamped(energy, warm, &vec![None; energy.n])
}

/// Roof duality for the persistent part, then ICM from three completions of
/// the undecided nodes (the warm start, all zeros, all ones); the best
/// completion is kept unless it falls below the warm start. Clamped nodes
/// never move.
pub fn maximize_clamped(energy: &PairwiseEnergy, warm: &[bool], clamps: &[Option<bool>]) -> Result<Vec<bool>> {
    assert_eq!(warm.len(), energy.n);
    let persistent = persistent_labels(energy, clamps)?;
    let inc = incidence(energy);
    let free: Vec<bool> = clamps.iter().map(Option::is_none).collect();
    let mut best: Option<(f64, Vec<bool>)> = None;
    for fill in [None, Some(false), Some(true)] {
        let mut labels: Vec<bool> = persistent
            .iter()
            .zip(warm)
            .map(|(p, &w)| p.unwrap_or(fill.unwrap_or(w)))
            .collect();
        icm_with(energy, &inc, &mut labels, &free);
        let e = energy_of(energy, &labels);
        if best.as_ref().is_none_or(|(b, _)| e > *b) {
            best = Some((e, labels));
        }
    }
    let (e, labels) = best.expect("at least one candidate");
    let mut guarded: Vec<bool> = warm.to_vec();
    for (g, c) in guarded.iter_mut().zip(clamps) {
        if let Some(v) = c {
            *g = *v;
        }
    }
    if e >= energy_of(energy, &guarded) {
        Ok(labels)
    } else {
        Ok(guarded)
    }
}
