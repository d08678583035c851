//! Dinic max-flow on real capacities.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct MaxFlow {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    max_cap: f64,
}

impl MaxFlow {
    pub fn new(n: usize) -> Self {
        MaxFlow {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
            max_cap: 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds arc `u -> v` with capacity `c` (and its zero-capacity reverse).
    pub fn add_edge(&mut self, u: usize, v: usize, c: f64) {
        self.add_edge_pair(u, v, c, 0.0);
    }

    /// Adds `u -> v` with capacity `c_uv` and `v -> u` with `c_vu` as one
    /// residual pair.
    pub fn add_edge_pair(&mut self, u: usize, v: usize, c_uv: f64, c_vu: f64) {
        debug_assert!(c_uv >= 0.0 && c_vu >= 0.0);
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c_uv);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(c_vu);
        self.max_cap = self.max_cap.max(c_uv).max(c_vu);
    }

    fn eps(&self) -> f64 {
        1e-12 * (1.0 + self.max_cap)
    }

    fn levels(&self, s: usize, eps: f64) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > eps && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn augment(&mut self, u: usize, t: usize, pushed: f64, level: &[usize], it: &mut [usize], eps: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while it[u] < self.adj[u].len() {
            let e = self.adj[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > eps && level[v] == level[u] + 1 {
                let got = self.augment(v, t, pushed.min(self.cap[e]), level, it, eps);
                if got > 0.0 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    /// Maximum flow from `s` to `t`; leaves the residual network in place.
    pub fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let eps = self.eps();
        let mut flow = 0.0;
        loop {
            let level = self.levels(s, eps);
            if level[t] == usize::MAX {
                return flow;
            }
            let mut it = vec![0; self.adj.len()];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut it, eps);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual network: the source side of
    /// the minimal minimum cut once [`MaxFlow::max_flow`] has run.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let eps = self.eps();
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > eps && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}
