//! Dense BFGS with a backtracking Armijo line search.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsConfig {
    /// Stop when `‖∇f‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on `‖step‖∞` for a unit line-search step.
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`; the closure writes the gradient into its second argument
/// and returns the objective value.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], cfg: BfgsConfig) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let mut fx = f(&x, &mut g);
    // inverse Hessian approximation, row-major
    let mut h = identity(d);
    let mut fresh = true;
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut iterations = 0;

    if !fx.is_finite() {
        return BfgsResult { x, f: fx, grad: g, iterations, converged: false };
    }

    while iterations < cfg.max_iter {
        if inf_norm(&g) <= cfg.tol {
            return BfgsResult { x, f: fx, grad: g, iterations, converged: true };
        }
        iterations += 1;

        for i in 0..d {
            dir[i] = -dot(&h[i * d..(i + 1) * d], &g);
        }
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // lost descent: fall back to steepest descent
            h = identity(d);
            fresh = true;
            dir.iter_mut().zip(&g).for_each(|(p, gi)| *p = -gi);
            slope = dot(&dir, &g);
        }
        let len = inf_norm(&dir);
        let mut alpha = if len > cfg.max_step { cfg.max_step / len } else { 1.0 };
        if fresh {
            alpha = alpha.min(1.0 / len.max(1e-300)).min(1.0);
        }

        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..d {
                x_new[i] = x[i] + alpha * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * alpha * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if fresh {
                        let scale = sy / dot(&y, &y);
                        h.iter_mut().for_each(|v| *v *= scale);
                        fresh = false;
                    }
                    bfgs_update(&mut h, &s, &y, sy);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            // quadratic interpolation, safeguarded to [0.1, 0.5] of the step
            let next = if f_new.is_finite() {
                let denom = 2.0 * (f_new - fx - alpha * slope);
                let a = -slope * alpha * alpha / denom;
                a.clamp(0.1 * alpha, 0.5 * alpha)
            } else {
                0.25 * alpha
            };
            alpha = next;
            if alpha < 1e-16 {
                break;
            }
        }
        if !accepted {
            if fresh {
                break;
            }
            h = identity(d);
            fresh = true;
        }
    }
    let converged = inf_norm(&g) <= cfg.tol;
    BfgsResult { x, f: fx, grad: g, iterations, converged }
}

fn identity(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    h
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1 / sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
