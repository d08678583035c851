//! Orthant-wise limited-memory quasi-Newton (OWL-QN) for maximizing a
//! smooth function minus a weighted L1 penalty.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct OwlqnConfig {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the largest pseudo-gradient entry falls below this.
    pub gtol: f64,
    /// Stop when the relative objective improvement falls below this.
    pub ftol: f64,
    pub max_linesearch: usize,
}

impl Default for OwlqnConfig {
    fn default() -> Self {
        OwlqnConfig {
            memory: 8,
            max_iters: 200,
            gtol: 1e-6,
            ftol: 1e-12,
            max_linesearch: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OwlqnResult {
    pub x: Vec<f64>,
    /// Penalized objective `f(x) - sum_i l1_i |x_i|` at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn penalty(x: &[f64], l1: &[f64]) -> f64 {
    x.iter().zip(l1).map(|(v, c)| c * v.abs()).sum()
}

/// Pseudo-gradient of `loss + sum l1_i |x_i|` (minimization form).
pub fn pseudo_gradient(x: &[f64], grad: &[f64], l1: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .zip(l1)
        .map(|((&xi, &g), &c)| {
            if xi > 0.0 {
                g + c
            } else if xi < 0.0 {
                g - c
            } else if g + c < 0.0 {
                g + c
            } else if g - c > 0.0 {
                g - c
            } else {
                0.0
            }
        })
        .collect()
}

/// Maximizes `f(x) - sum_i l1[i] * |x[i]|` from `x0`. `f` returns the value
/// and gradient of the smooth part.
///
/// Every accepted step improves the penalized objective and coordinates
/// never cross zero within a step. When no improving step exists the start
/// point is returned. A non-finite value or gradient at `x0` is an error;
/// non-finite trial points are treated as rejected steps.
pub fn maximize<F>(mut f: F, x0: &[f64], l1: &[f64], cfg: &OwlqnConfig) -> Result<OwlqnResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert_eq!(x0.len(), l1.len());
    let mut eval = |x: &[f64]| {
        let (v, g) = f(x);
        (-v, g.into_iter().map(|v| -v).collect::<Vec<f64>>())
    };
    let mut x = x0.to_vec();
    let (loss, mut grad) = eval(&x);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point".into()));
    }
    let mut obj = loss + penalty(&x, l1);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let pg = pseudo_gradient(&x, &grad, l1);
        if pg.iter().all(|g| g.abs() <= cfg.gtol) {
            converged = true;
            break;
        }

        // Two-loop recursion on the pseudo-gradient.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += si * (a - b);
            }
        }
        // Penalized coordinates may only move against their pseudo-gradient.
        let mut d: Vec<f64> = q
            .iter()
            .zip(&pg)
            .zip(l1)
            .map(|((&v, &g), &c)| if c == 0.0 || v * g > 0.0 { -v } else { 0.0 })
            .collect();
        if dot(&d, &pg) >= 0.0 {
            hist.clear();
            d = pg.iter().map(|g| -g).collect();
        }

        // Zero marks coordinates free to change sign.
        let orthant: Vec<f64> = x
            .iter()
            .zip(&pg)
            .zip(l1)
            .map(|((&xi, &g), &c)| {
                if c == 0.0 {
                    0.0
                } else if xi != 0.0 {
                    xi.signum()
                } else {
                    -g.signum()
                }
            })
            .collect();

        let mut step = if hist.is_empty() {
            (1.0 / dot(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..cfg.max_linesearch {
            let xn: Vec<f64> = x
                .iter()
                .zip(&d)
                .zip(&orthant)
                .map(|((&xi, &di), &o)| {
                    let v = xi + step * di;
                    if o != 0.0 && v * o <= 0.0 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let (ln, gn) = eval(&xn);
            let on = ln + penalty(&xn, l1);
            let decrease: f64 = pg.iter().zip(xn.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
            if on.is_finite() && gn.iter().all(|v| v.is_finite()) && on <= obj + 1e-4 * decrease && on < obj {
                accepted = Some((xn, on, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, on, gn)) = accepted else {
            break;
        };
        iterations += 1;

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300) && sy > 0.0 {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let rel = (obj - on) / obj.abs().max(1.0);
        x = xn;
        grad = gn;
        obj = on;
        if rel < cfg.ftol {
            converged = true;
            break;
        }
    }

    Ok(OwlqnResult {
        x,
        objective: -obj,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soft_threshold(b: f64, t: f64) -> f64 {
        b.signum() * (b.abs() - t).max(0.0)
    }

    #[test]
    fn one_dimensional_soft_threshold() {
        for &(a, b, lam) in &[(2.0, 3.0, 1.0), (1.0, -0.5, 1.0), (4.0, -2.0, 2.0), (1.0, 0.2, 0.0)] {
            let f = |x: &[f64]| (-0.5 * a * (x[0] - b) * (x[0] - b), vec![-a * (x[0] - b)]);
            let r = maximize(f, &[0.7], &[lam], &OwlqnConfig::default()).unwrap();
            assert!((r.x[0] - soft_threshold(b, lam / a)).abs() < 1e-6, "{a} {b} {lam}: {}", r.x[0]);
        }
    }

    #[test]
    fn separable_quadratic_with_mixed_penalties() {
        let b = [3.0, -0.5, 0.1, -4.0];
        let l1 = [1.0, 1.0, 0.0, 0.0];
        let f = |x: &[f64]| {
            let v = -x.iter().zip(&b).map(|(x, b)| (x - b) * (x - b)).sum::<f64>();
            (v, x.iter().zip(&b).map(|(x, b)| -2.0 * (x - b)).collect())
        };
        let r = maximize(f, &[0.0; 4], &l1, &OwlqnConfig::default()).unwrap();
        for i in 0..4 {
            assert!((r.x[i] - soft_threshold(b[i], l1[i] / 2.0)).abs() < 1e-6, "{:?} {r:?}", r.x);
        }
    }

    #[test]
    fn rosenbrock_without_penalty() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let ga = 2.0 * (1.0 - a) + 400.0 * a * (b - a * a);
            let gb = -200.0 * (b - a * a);
            (v, vec![ga, gb])
        };
        let cfg = OwlqnConfig {
            max_iters: 1000,
            ..OwlqnConfig::default()
        };
        let r = maximize(f, &[-1.2, 1.0], &[0.0, 0.0], &cfg).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn fixed_point_is_returned_unchanged() {
        let f = |x: &[f64]| (-(x[0] - 1.0).powi(2), vec![-2.0 * (x[0] - 1.0)]);
        let r = maximize(f, &[1.0], &[0.0], &OwlqnConfig::default()).unwrap();
        assert_eq!(r.x, vec![1.0]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &[f64]| (f64::NAN, vec![0.0]);
        assert!(maximize(f, &[0.0], &[0.0], &OwlqnConfig::default()).is_err());
    }
}
