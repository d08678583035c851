//! Ego-networks, user profiles, circle assignments and model parameters.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External identifier of an alter. Wide enough for the 21-digit ids used by
/// some public ego-network dumps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u128);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for NodeId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}

impl From<u64> for NodeId {
    fn from(v: u64) -> Self {
        NodeId(v as u128)
    }
}

/// The friendship graph among the alters of one ego.
///
/// Nodes are kept sorted by id, so the internal index order and the id order
/// agree. Undirected edges are stored once as `(lo, hi)`.
#[derive(Clone, Debug)]
pub struct EgoNetwork {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    directed: bool,
    edges: Vec<(usize, usize)>,
    edge_set: HashSet<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl EgoNetwork {
    /// Builds a network; duplicate edges are merged. Self-loops and edges
    /// touching ids outside `nodes` are rejected.
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        directed: bool,
    ) -> Result<Self> {
        let mut nodes: Vec<NodeId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut net = EgoNetwork {
            out_adj: vec![Vec::new(); nodes.len()],
            in_adj: if directed { vec![Vec::new(); nodes.len()] } else { Vec::new() },
            nodes,
            index,
            directed,
            edges: Vec::new(),
            edge_set: HashSet::new(),
        };
        for (a, b) in edges {
            let i = net.require(a, "edge list")?;
            let j = net.require(b, "edge list")?;
            if i == j {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            net.insert_edge(i, j);
        }
        Ok(net)
    }

    fn require(&self, id: NodeId, context: &str) -> Result<usize> {
        self.index.get(&id).copied().ok_or_else(|| Error::UnknownNode {
            id,
            context: context.to_string(),
        })
    }

    fn insert_edge(&mut self, i: usize, j: usize) {
        let key = self.key(i, j);
        if !self.edge_set.insert(key) {
            return;
        }
        self.edges.push(key);
        if self.directed {
            self.out_adj[i].push(j);
            self.in_adj[j].push(i);
        } else {
            self.out_adj[i].push(j);
            self.out_adj[j].push(i);
        }
    }

    #[inline]
    fn key(&self, i: usize, j: usize) -> (usize, usize) {
        if self.directed || i < j {
            (i, j)
        } else {
            (j, i)
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn id(&self, i: usize) -> NodeId {
        self.nodes[i]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Edges as internal index pairs, in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Whether `(i, j)` is an edge. Symmetric for undirected networks.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edge_set.contains(&self.key(i, j))
    }

    /// Neighbours of `i`; for directed networks the targets of out-edges.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    /// Sources of edges into `i`. Empty for undirected networks.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        if self.directed {
            &self.in_adj[i]
        } else {
            &[]
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.out_adj[i].len() + self.in_neighbors(i).len()
    }

    /// The pair domain of the likelihood: unordered pairs `i < j` when
    /// undirected, ordered pairs `i != j` when directed. Never yields
    /// self-pairs.
    pub fn pairs(&self) -> Pairs {
        Pairs {
            n: self.len(),
            directed: self.directed,
            i: 0,
            j: if self.directed { 0 } else { 1 },
        }
    }

    pub fn pair_count(&self) -> usize {
        let n = self.len();
        if n < 2 {
            0
        } else if self.directed {
            n * (n - 1)
        } else {
            n * (n - 1) / 2
        }
    }
}

/// Iterator over the pair domain of an [`EgoNetwork`].
#[derive(Clone, Debug)]
pub struct Pairs {
    n: usize,
    directed: bool,
    i: usize,
    j: usize,
}

impl Iterator for Pairs {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        loop {
            if self.i >= self.n {
                return None;
            }
            if self.j >= self.n {
                self.i += 1;
                self.j = if self.directed { 0 } else { self.i + 1 };
                continue;
            }
            let pair = (self.i, self.j);
            self.j += 1;
            if pair.0 == pair.1 {
                continue;
            }
            return Some(pair);
        }
    }
}

/// Position of the unordered pair `{i, j}` (`i != j`) in row-major upper
/// triangular order over `n` nodes.
#[inline]
pub fn unordered_pair_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// A path in a profile tree, e.g. `education;type;College`. Everything but
/// the last segment names the leaf's category.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeaturePath {
    segments: Vec<String>,
}

impl FeaturePath {
    pub fn new(segments: Vec<String>) -> Result<Self> {
        if segments.len() < 2 || segments.iter().any(|s| s.is_empty()) {
            return Err(Error::invalid(format!(
                "feature path {:?} needs a category and a value",
                segments.join(";")
            )));
        }
        Ok(FeaturePath { segments })
    }

    /// Parses a `.featnames` path. Segments are `;`-separated; names without
    /// a `;` fall back to a `category:value` split, then to `#tag` / `@user`
    /// style names whose sigil is the category.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains(';') {
            return Self::new(s.split(';').map(|p| p.trim().to_string()).collect());
        }
        if let Some((cat, val)) = s.split_once(':') {
            return Self::new(vec![cat.trim().to_string(), val.trim().to_string()]);
        }
        let mut chars = s.chars();
        match chars.next() {
            Some(c @ ('#' | '@')) if !chars.as_str().is_empty() => {
                Self::new(vec![c.to_string(), chars.as_str().to_string()])
            }
            _ => Err(Error::invalid(format!("feature name {s:?} has no category"))),
        }
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    /// The leaf's parent: all segments but the last, `;`-joined.
    pub fn category(&self) -> String {
        self.segments[..self.segments.len() - 1].join(";")
    }
}

impl fmt::Display for FeaturePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join(";"))
    }
}

/// Binary leaf indicators for every alter and for the ego, over a
/// vocabulary local to this ego-network.
#[derive(Clone, Debug)]
pub struct ProfileStore {
    names: Vec<FeaturePath>,
    rows: Vec<Vec<u8>>,
    ego: Vec<u8>,
    categories: Vec<String>,
    leaf_category: Vec<usize>,
}

impl ProfileStore {
    /// `rows[i]` belongs to node index `i` of the matching network. All
    /// vectors must have length `names.len()` and contain only 0/1.
    pub fn new(names: Vec<FeaturePath>, rows: Vec<Vec<u8>>, ego: Vec<u8>) -> Result<Self> {
        let l = names.len();
        for (r, row) in rows.iter().chain(std::iter::once(&ego)).enumerate() {
            if row.len() != l {
                return Err(Error::invalid(format!(
                    "profile row {r} has length {}, expected {l}",
                    row.len()
                )));
            }
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(Error::NonBinaryFeature {
                    row: r,
                    col: c,
                    value: v as u32,
                });
            }
        }
        let mut categories: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let leaf_category = names
            .iter()
            .map(|p| {
                let cat = p.category();
                *seen.entry(cat.clone()).or_insert_with(|| {
                    categories.push(cat);
                    categories.len() - 1
                })
            })
            .collect();
        Ok(ProfileStore {
            names,
            rows,
            ego,
            categories,
            leaf_category,
        })
    }

    /// Vocabulary without names: every leaf becomes its own category.
    pub fn anonymous(rows: Vec<Vec<u8>>, ego: Option<Vec<u8>>) -> Result<Self> {
        let l = rows.first().map_or_else(|| ego.as_ref().map_or(0, Vec::len), Vec::len);
        let names = (0..l)
            .map(|i| FeaturePath::new(vec![format!("feature {i}"), "1".to_string()]))
            .collect::<Result<_>>()?;
        Self::new(names, rows, ego.unwrap_or_else(|| vec![0; l]))
    }

    /// Leaf vocabulary size `L`.
    pub fn leaf_count(&self) -> usize {
        self.names.len()
    }

    /// Number of distinct leaf parents `P`.
    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn names(&self) -> &[FeaturePath] {
        &self.names
    }

    /// Categories in order of first appearance in the vocabulary.
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn leaf_category(&self, leaf: usize) -> usize {
        self.leaf_category[leaf]
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn ego(&self) -> &[u8] {
        &self.ego
    }
}

/// `K` possibly overlapping subsets of the alters, stored as membership
/// masks over node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircleAssignment {
    n: usize,
    names: Vec<String>,
    members: Vec<Vec<bool>>,
}

impl CircleAssignment {
    /// `k` empty circles over `n` nodes, named `circle0..`.
    pub fn empty(n: usize, k: usize) -> Self {
        CircleAssignment {
            n,
            names: (0..k).map(|i| format!("circle{i}")).collect(),
            members: vec![vec![false; n]; k],
        }
    }

    /// Circles from membership masks, all of length `n`.
    pub fn from_masks(n: usize, masks: Vec<Vec<bool>>) -> Result<Self> {
        let mut c = CircleAssignment::empty(n, 0);
        for (i, m) in masks.into_iter().enumerate() {
            c.push(format!("circle{i}"), m)?;
        }
        Ok(c)
    }

    /// Circles from lists of node indices.
    pub fn from_indices(n: usize, circles: &[Vec<usize>]) -> Result<Self> {
        let masks = circles
            .iter()
            .map(|c| {
                let mut m = vec![false; n];
                for &i in c {
                    *m.get_mut(i)
                        .ok_or_else(|| Error::invalid(format!("node index {i} out of range")))? = true;
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        Self::from_masks(n, masks)
    }

    /// Resolves named id lists against `network`.
    pub fn from_id_sets(network: &EgoNetwork, circles: &[(String, Vec<NodeId>)]) -> Result<Self> {
        let mut out = CircleAssignment::empty(network.len(), 0);
        for (name, ids) in circles {
            let mut mask = vec![false; network.len()];
            for &id in ids {
                let i = network.require(id, &format!("circle {name:?}"))?;
                mask[i] = true;
            }
            out.push(name.clone(), mask)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, name: String, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.n {
            return Err(Error::invalid(format!(
                "circle mask has length {}, expected {}",
                mask.len(),
                self.n
            )));
        }
        self.names.push(name);
        self.members.push(mask);
        Ok(())
    }

    /// Number of circles `K`.
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn contains(&self, k: usize, i: usize) -> bool {
        self.members[k][i]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, member: bool) {
        self.members[k][i] = member;
    }

    pub fn mask(&self, k: usize) -> &[bool] {
        &self.members[k]
    }

    pub fn set_mask(&mut self, k: usize, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.n);
        self.members[k] = mask;
    }

    /// Member indices of circle `k`, ascending.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.members[k]
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn size(&self, k: usize) -> usize {
        self.members[k].iter().filter(|&&m| m).count()
    }

    /// Whether both endpoints of the pair lie in circle `k`.
    #[inline]
    pub fn pair_inside(&self, k: usize, i: usize, j: usize) -> bool {
        self.members[k][i] && self.members[k][j]
    }

    /// Member id lists, using `network` for the index-to-id map.
    pub fn to_id_sets(&self, network: &EgoNetwork) -> Vec<Vec<NodeId>> {
        (0..self.k())
            .map(|k| self.members(k).into_iter().map(|i| network.id(i)).collect())
            .collect()
    }

    /// Indices of the non-empty circles.
    pub fn non_empty(&self) -> Vec<usize> {
        (0..self.k()).filter(|&k| self.members[k].iter().any(|&m| m)).collect()
    }

    /// A copy restricted to the circles in `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        CircleAssignment {
            n: self.n,
            names: keep.iter().map(|&k| self.names[k].clone()).collect(),
            members: keep.iter().map(|&k| self.members[k].clone()).collect(),
        }
    }
}

/// Per-circle parameters: `thetas[k]` has the feature dimension (index 0 is
/// the constant feature) and `alphas[k]` the edge trade-off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub thetas: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
}

impl ModelParams {
    /// `k` circles with zero weights and `alpha = 1`.
    pub fn zeros(k: usize, dim: usize) -> Self {
        ModelParams {
            thetas: vec![vec![0.0; dim]; k],
            alphas: vec![1.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.alphas.len()
    }

    /// Length of each weight vector, `F + 1`.
    pub fn dim(&self) -> usize {
        self.thetas.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.len() != self.alphas.len() {
            return Err(Error::invalid("theta and alpha counts differ"));
        }
        let d = self.dim();
        if self.thetas.iter().any(|t| t.len() != d) {
            return Err(Error::invalid("theta vectors differ in length"));
        }
        Ok(())
    }

    /// Parameters packed as `[theta_1 .. theta_K, alpha_1 .. alpha_K]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.thetas.iter().flatten().copied().collect();
        v.extend_from_slice(&self.alphas);
        v
    }

    pub fn from_flat(k: usize, dim: usize, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), k * (dim + 1));
        ModelParams {
            thetas: flat[..k * dim].chunks(dim.max(1)).take(k).map(<[f64]>::to_vec).collect(),
            alphas: flat[k * dim..].to_vec(),
        }
    }

    pub fn select(&self, keep: &[usize]) -> Self {
        ModelParams {
            thetas: keep.iter().map(|&k| self.thetas[k].clone()).collect(),
            alphas: keep.iter().map(|&k| self.alphas[k]).collect(),
        }
    }
}
