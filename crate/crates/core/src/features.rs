//! Pairwise edge features built from profile difference vectors.
//!
//! `phi1` and `phi2` work at leaf granularity (dimension `L + 1`), `psi1`
//! and `psi2` on per-category counts (dimension `P + 1`). Index 0 is always
//! the constant feature.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{unordered_pair_index, ProfileStore};
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScheme {
    /// `(1; -sigma(x, y))`: friend-to-friend leaf differences.
    Phi1,
    /// `(1; -|sigma(x, u) - sigma(y, u)|)`: differences relative to the ego.
    Phi2,
    /// `(1; -sigma'(x, y))`: per-category difference counts.
    Psi1,
    /// `(1; -|sigma'(x, u) - sigma'(y, u)|)`.
    Psi2,
}

impl FeatureScheme {
    pub const ALL: [FeatureScheme; 4] = [Self::Phi1, Self::Phi2, Self::Psi1, Self::Psi2];

    /// Feature dimension including the constant, `F + 1`.
    pub fn dim(self, profiles: &ProfileStore) -> usize {
        if self.compressed() {
            profiles.category_count() + 1
        } else {
            profiles.leaf_count() + 1
        }
    }

    pub fn compressed(self) -> bool {
        matches!(self, Self::Psi1 | Self::Psi2)
    }

    fn ego_relative(self) -> bool {
        matches!(self, Self::Phi2 | Self::Psi2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Phi1 => "phi1",
            Self::Phi2 => "phi2",
            Self::Psi1 => "psi1",
            Self::Psi2 => "psi2",
        }
    }

    /// Sparse features for two arbitrary profile rows. `profiles` supplies
    /// the category structure and the ego row.
    pub fn from_rows(self, profiles: &ProfileStore, a: &[u8], b: &[u8]) -> SparseFeatures {
        let mut f = SparseFeatures::constant();
        match (self.compressed(), self.ego_relative()) {
            (false, false) => {
                for (l, (&x, &y)) in a.iter().zip(b).enumerate() {
                    if x != y {
                        f.push(l + 1, -1.0);
                    }
                }
            }
            (false, true) => {
                let u = profiles.ego();
                for l in 0..a.len() {
                    let d = ((a[l] ^ u[l]) as i32 - (b[l] ^ u[l]) as i32).abs();
                    if d != 0 {
                        f.push(l + 1, -(d as f64));
                    }
                }
            }
            (true, rel) => {
                let counts = if rel {
                    let ca = compressed_rows(profiles, a, profiles.ego());
                    let cb = compressed_rows(profiles, b, profiles.ego());
                    ca.iter().zip(&cb).map(|(&p, &q)| p.abs_diff(q)).collect()
                } else {
                    compressed_rows(profiles, a, b)
                };
                for (p, &c) in counts.iter().enumerate() {
                    if c != 0 {
                        f.push(p + 1, -(c as f64));
                    }
                }
            }
        }
        f
    }

    /// Features of the node pair `(x, y)`.
    pub fn sparse(self, profiles: &ProfileStore, x: usize, y: usize) -> SparseFeatures {
        self.from_rows(profiles, profiles.row(x), profiles.row(y))
    }
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature scheme {s:?}")))
    }
}

/// Leaf difference indicators `sigma(x, y)`.
pub fn diff_vector(profiles: &ProfileStore, x: usize, y: usize) -> Vec<u8> {
    diff_rows(profiles.row(x), profiles.row(y))
}

pub fn diff_rows(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(&p, &q)| p ^ q).collect()
}

/// Per-category sums of `sigma(x, y)`.
pub fn compressed_diff(profiles: &ProfileStore, x: usize, y: usize) -> Vec<u32> {
    compressed_rows(profiles, profiles.row(x), profiles.row(y))
}

fn compressed_rows(profiles: &ProfileStore, a: &[u8], b: &[u8]) -> Vec<u32> {
    let mut out = vec![0u32; profiles.category_count()];
    for l in 0..a.len() {
        out[profiles.leaf_category(l)] += (a[l] ^ b[l]) as u32;
    }
    out
}

/// Per-category count of leaves present in both profiles. This is the
/// "shared categories" view used to illustrate compressed features, not an
/// input to any feature scheme.
pub fn common_per_category(profiles: &ProfileStore, x: usize, y: usize) -> Vec<u32> {
    let (a, b) = (profiles.row(x), profiles.row(y));
    let mut out = vec![0u32; profiles.category_count()];
    for l in 0..a.len() {
        out[profiles.leaf_category(l)] += (a[l] & b[l]) as u32;
    }
    out
}

/// Dense feature vector of length `scheme.dim(profiles)`.
pub fn pair_features(scheme: FeatureScheme, profiles: &ProfileStore, x: usize, y: usize) -> Vec<f64> {
    scheme.sparse(profiles, x, y).to_dense(scheme.dim(profiles))
}

/// A feature vector stored as sorted `(index, value)` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseFeatures {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseFeatures {
    /// Just the constant feature.
    pub fn constant() -> Self {
        SparseFeatures {
            idx: vec![0],
            val: vec![1.0],
        }
    }

    fn push(&mut self, i: usize, v: f64) {
        self.idx.push(i as u32);
        self.val.push(v);
    }

    #[inline]
    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.val)
            .map(|(&i, &v)| theta[i as usize] * v)
            .sum()
    }

    /// `out += scale * self`.
    #[inline]
    pub fn add_scaled(&self, scale: f64, out: &mut [f64]) {
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            out[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.add_scaled(1.0, &mut out);
        out
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

/// Pair features for one network, computed on demand or materialized for
/// every unordered pair. Features are symmetric, so `(x, y)` and `(y, x)`
/// share an entry.
#[derive(Clone, Debug)]
pub struct EdgeFeatureCache<'p> {
    profiles: &'p ProfileStore,
    scheme: FeatureScheme,
    dense: Option<Vec<SparseFeatures>>,
}

impl<'p> EdgeFeatureCache<'p> {
    pub fn lazy(profiles: &'p ProfileStore, scheme: FeatureScheme) -> Self {
        EdgeFeatureCache {
            profiles,
            scheme,
            dense: None,
        }
    }

    /// Precomputes all `n(n-1)/2` pairs; memory is `O(n^2 * nnz)`.
    pub fn materialized(profiles: &'p ProfileStore, scheme: FeatureScheme) -> Self {
        let n = profiles.node_count();
        let mut all = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                all.push(scheme.sparse(profiles, i, j));
            }
        }
        EdgeFeatureCache {
            profiles,
            scheme,
            dense: Some(all),
        }
    }

    pub fn scheme(&self) -> FeatureScheme {
        self.scheme
    }

    pub fn profiles(&self) -> &'p ProfileStore {
        self.profiles
    }

    pub fn dim(&self) -> usize {
        self.scheme.dim(self.profiles)
    }

    pub fn node_count(&self) -> usize {
        self.profiles.node_count()
    }

    pub fn is_materialized(&self) -> bool {
        self.dense.is_some()
    }

    pub fn get(&self, x: usize, y: usize) -> Cow<'_, SparseFeatures> {
        match &self.dense {
            Some(all) => Cow::Borrowed(&all[unordered_pair_index(self.node_count(), x, y)]),
            None => Cow::Owned(self.scheme.sparse(self.profiles, x, y)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeaturePath;

    fn store(names: &[&str], rows: Vec<Vec<u8>>, ego: Vec<u8>) -> ProfileStore {
        let names = names.iter().map(|s| FeaturePath::parse(s).unwrap()).collect();
        ProfileStore::new(names, rows, ego).unwrap()
    }

    #[test]
    fn identical_profiles_give_zero_diff() {
        let p = store(&["a;1", "a;2", "b;1"], vec![vec![1, 0, 1], vec![1, 0, 1]], vec![0; 3]);
        assert_eq!(diff_vector(&p, 0, 1), vec![0, 0, 0]);
        assert_eq!(pair_features(FeatureScheme::Phi1, &p, 0, 1), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn total_disagreement() {
        let p = store(&["a;1", "a;2", "b;1", "b;2"], vec![vec![1; 4], vec![0; 4]], vec![0; 4]);
        assert_eq!(diff_vector(&p, 0, 1), vec![1, 1, 1, 1]);
    }

    #[test]
    fn phi2_against_ego() {
        let p = store(&["a;1", "b;1"], vec![vec![1, 0], vec![0, 1]], vec![1, 0]);
        assert_eq!(pair_features(FeatureScheme::Phi2, &p, 0, 1), vec![1.0, -1.0, -1.0]);
    }

    #[test]
    fn compressed_counts() {
        let p = store(&["a;1", "a;2", "a;3", "b;1"], vec![vec![1, 1, 1, 0], vec![0, 0, 0, 0]], vec![0; 4]);
        assert_eq!(compressed_diff(&p, 0, 1), vec![3, 0]);
        assert_eq!(pair_features(FeatureScheme::Psi1, &p, 0, 1), vec![1.0, -3.0, 0.0]);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in FeatureScheme::ALL {
            assert_eq!(s.name().parse::<FeatureScheme>().unwrap(), s);
        }
        assert!("phi3".parse::<FeatureScheme>().is_err());
    }

    #[test]
    fn cache_modes_agree() {
        let p = store(
            &["a;1", "a;2", "b;1"],
            vec![vec![1, 0, 1], vec![0, 1, 1], vec![0, 0, 0], vec![1, 1, 0]],
            vec![1, 0, 0],
        );
        for s in FeatureScheme::ALL {
            let lazy = EdgeFeatureCache::lazy(&p, s);
            let dense = EdgeFeatureCache::materialized(&p, s);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert_eq!(lazy.get(i, j), dense.get(i, j));
                    }
                }
            }
        }
    }
}
