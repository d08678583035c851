//! Scoring predicted circles against ground truth.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CircleAssignment, EgoNetwork};
use crate::error::{Error, Result};

/// A set-comparison score; `degenerate` marks an empty predicted or true set,
/// for which the score is fixed by convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetScore {
    pub value: f64,
    pub degenerate: bool,
}

fn counts(pred: &[bool], truth: &[bool]) -> (usize, usize, usize) {
    assert_eq!(pred.len(), truth.len());
    let mut p = 0;
    let mut t = 0;
    let mut both = 0;
    for (&a, &b) in pred.iter().zip(truth) {
        p += a as usize;
        t += b as usize;
        both += (a && b) as usize;
    }
    (p, t, both)
}

/// Balanced error rate `(|C \ T| / |C| + |T \ C| / |T|) / 2`; 0.5 when
/// either set is empty.
pub fn ber(pred: &[bool], truth: &[bool]) -> SetScore {
    let (p, t, both) = counts(pred, truth);
    if p == 0 || t == 0 {
        return SetScore {
            value: 0.5,
            degenerate: true,
        };
    }
    SetScore {
        value: 0.5 * ((p - both) as f64 / p as f64 + (t - both) as f64 / t as f64),
        degenerate: false,
    }
}

/// Harmonic mean of precision and recall; 0 when either set is empty.
pub fn f1(pred: &[bool], truth: &[bool]) -> SetScore {
    let (p, t, both) = counts(pred, truth);
    if p == 0 || t == 0 {
        return SetScore {
            value: 0.0,
            degenerate: true,
        };
    }
    let value = if both == 0 {
        0.0
    } else {
        let (prec, rec) = (both as f64 / p as f64, both as f64 / t as f64);
        2.0 * prec * rec / (prec + rec)
    };
    SetScore {
        value,
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Scored as `1 - BER`.
    Ber,
    F1,
}

impl Metric {
    /// Higher is better for both metrics.
    pub fn score(self, pred: &[bool], truth: &[bool]) -> SetScore {
        match self {
            Metric::Ber => {
                let s = ber(pred, truth);
                SetScore {
                    value: 1.0 - s.value,
                    ..s
                }
            }
            Metric::F1 => f1(pred, truth),
        }
    }

    /// Score given to an unmatched circle in strict mode.
    pub fn unmatched(self) -> f64 {
        match self {
            Metric::Ber => 0.5,
            Metric::F1 => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ber => "ber",
            Metric::F1 => "f1",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ber" => Ok(Metric::Ber),
            "f1" => Ok(Metric::F1),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(predicted, truth)` index pairs.
    pub mapping: Vec<(usize, usize)>,
    /// Mean score over the matched pairs, or over `max(K_pred, K_truth)`
    /// with unmatched circles scored as chance in strict mode.
    pub score: f64,
    pub per_pair: Vec<f64>,
    /// Matched pairs involving an empty circle.
    pub degenerate: usize,
}

/// Minimum-cost assignment of every row to a distinct column
/// (`rows <= cols`). Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Potentials over 1-based rows/columns; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            out[row_of[j] - 1] = j - 1;
        }
    }
    out
}

/// Optimal one-to-one alignment of predicted and true circles maximizing the
/// total score. Extra predictions are ignored unless `strict`.
pub fn match_circles(pred: &CircleAssignment, truth: &CircleAssignment, metric: Metric, strict: bool) -> MatchResult {
    let (kp, kt) = (pred.k(), truth.k());
    let scores: Vec<Vec<SetScore>> = (0..kp)
        .map(|i| (0..kt).map(|j| metric.score(pred.mask(i), truth.mask(j))).collect())
        .collect();
    let mapping: Vec<(usize, usize)> = if kp == 0 || kt == 0 {
        Vec::new()
    } else if kp <= kt {
        let cost: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|s| -s.value).collect()).collect();
        hungarian(&cost).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..kt).map(|j| (0..kp).map(|i| -scores[i][j].value).collect()).collect();
        let mut m: Vec<(usize, usize)> = hungarian(&cost).into_iter().enumerate().map(|(j, i)| (i, j)).collect();
        m.sort_unstable();
        m
    };
    let per_pair: Vec<f64> = mapping.iter().map(|&(i, j)| scores[i][j].value).collect();
    let degenerate = mapping.iter().filter(|&&(i, j)| scores[i][j].degenerate).count();
    let total: f64 = per_pair.iter().sum();
    let score = if strict {
        let denom = kp.max(kt);
        if denom == 0 {
            0.0
        } else {
            (total + (denom - mapping.len()) as f64 * metric.unmatched()) / denom as f64
        }
    } else if mapping.is_empty() {
        0.0
    } else {
        total / mapping.len() as f64
    };
    MatchResult {
        mapping,
        score,
        per_pair,
        degenerate,
    }
}

/// Newman modularity `Q = sum_i (e_ii - a_i^2)` of a disjoint partition.
/// Edge direction is ignored; nodes outside every cluster count as
/// singletons. Overlapping clusters are an error.
pub fn modularity(network: &EgoNetwork, partition: &CircleAssignment) -> Result<f64> {
    let n = network.len();
    if partition.node_count() != n {
        return Err(Error::invalid("partition does not match the network"));
    }
    let mut label = vec![usize::MAX; n];
    for k in 0..partition.k() {
        for i in partition.members(k) {
            if label[i] != usize::MAX {
                return Err(Error::invalid(format!("node {} is in more than one cluster", network.id(i))));
            }
            label[i] = k;
        }
    }
    let mut next = partition.k();
    for l in label.iter_mut().filter(|l| **l == usize::MAX) {
        *l = next;
        next += 1;
    }
    let m = network.edge_count() as f64;
    if m == 0.0 {
        return Ok(0.0);
    }
    let mut inside = vec![0.0; next];
    let mut ends = vec![0.0; next];
    for &(x, y) in network.edges() {
        if label[x] == label[y] {
            inside[label[x]] += 1.0;
        }
        ends[label[x]] += 1.0;
        ends[label[y]] += 1.0;
    }
    Ok(inside
        .iter()
        .zip(&ends)
        .map(|(&e, &a)| e / m - (a / (2.0 * m)).powi(2))
        .sum())
}

/// The `K` in `1..=k_max` whose partition has the highest modularity,
/// preferring the smaller `K` on ties.
pub fn choose_k_modularity(
    network: &EgoNetwork,
    mut cluster: impl FnMut(usize) -> CircleAssignment,
    k_max: usize,
) -> Result<usize> {
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=k_max.max(1) {
        let q = modularity(network, &cluster(k))?;
        if q > best.1 {
            best = (k, q);
        }
    }
    Ok(best.0)
}

/// Mean and standard error of `values`.
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}
