//! Graded product quadrature for integrands singular like a power of the
//! distance to a cusp line.
//!
//! Integrals are taken over the unit square in wedge coordinates `(t, x)`,
//! `t, x ∈ (0, 1)`, for integrands of the form `x^β · g(t, x)` with `β > −1`
//! and `g` bounded. The `x` axis is cut into geometric cells `[ρ^{k+1}, ρ^k]`
//! on which `x^β g` is smooth and a tensor Gauss–Legendre rule is applied.
//! The remaining segment `[0, ρ^K]` gets the exact power integral times `g` at
//! its midpoint, so no node ever sits on `x = 0`. Refinement doubles the
//! number of nodes per cell (in both axes) until two successive levels agree
//! to the relative tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand not integrable at the cusp: power exponent {beta} <= -1")]
    NonintegrableSingularity { beta: f64 },
    #[error("quadrature did not converge after {levels} levels (last relative change {last_change:e})")]
    NotConverged { levels: usize, last_change: f64 },
    #[error("non-finite integrand value at t = {t}, x = {x}")]
    NonFinite { t: f64, x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    /// Stop when two successive dyadic refinements differ by less than this.
    pub rel_tol: f64,
    /// Maximum number of dyadic refinements.
    pub max_levels: usize,
    /// Geometric ratio of the cells toward `x = 0`.
    pub grading: f64,
    /// Gauss nodes per axis and geometric cell at level 0.
    pub base_nodes: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            max_levels: 10,
            grading: 0.5,
            base_nodes: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub levels: usize,
    pub last_change: T,
}

/// `∫_{x0}^{x1} x^β dx` for `0 ≤ x0 < x1`, stable when `β + 1` is small.
pub fn power_integral<T: Real>(beta: T, x0: T, x1: T) -> T {
    let e = beta + T::one();
    if x0 <= T::zero() {
        return x1.powf(e) / e;
    }
    // x0^e (exp(e ln(x1/x0)) − 1)/e
    let l = (x1 / x0).ln();
    x0.powf(e) * (e * l).exp_m1() / e
}

/// Number of geometric cells needed before the tail segment carries less than
/// `1e-14` of the pure power mass. Capped so `ρ^K` stays a normal float.
fn cell_count<T: Real>(beta: T, grading: T) -> usize {
    let e = (beta + T::one()).as_f64();
    let rho = grading.as_f64();
    let k = (14.0 * std::f64::consts::LN_10 / (e * -rho.ln())).ceil();
    let min_normal = T::min_positive_value().as_f64().ln() / rho.ln();
    let cap = (0.8 * min_normal).floor().min(400.0);
    k.clamp(4.0, cap) as usize
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre<T: Real>(k: usize) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(k);
    let kf = k as f64;
    for i in 0..k {
        // Newton iteration on P_k from the Chebyshev-like initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (kf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, 0.0f64);
            for j in 0..k {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            dp = kf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.push((T::lit(0.5 * (1.0 - z)), T::lit(0.5 * w)));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn level_sum<T, G>(beta: T, g: &G, cells: usize, grading: T, k: usize) -> Result<T, QuadError>
where
    T: Real,
    G: Fn(T, T) -> T + Sync,
{
    let rule: Vec<(T, T)> = gauss_legendre(k);
    let sample = |x: T| -> Result<T, QuadError> {
        let mut acc = T::zero();
        for &(t, w) in &rule {
            let v = g(t, x);
            if !v.is_finite() {
                return Err(QuadError::NonFinite {
                    t: t.as_f64(),
                    x: x.as_f64(),
                });
            }
            acc += w * v;
        }
        Ok(acc)
    };

    let per_cell: Vec<Result<T, QuadError>> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let hi = grading.powi(c as i32);
            let lo = hi * grading;
            let h = hi - lo;
            let mut acc = T::zero();
            for &(u, w) in &rule {
                let x = lo + h * u;
                acc += w * x.powf(beta) * sample(x)?;
            }
            Ok(acc * h)
        })
        .collect();

    let mut total = T::zero();
    for c in per_cell {
        total += c?;
    }
    let x_tail = grading.powi(cells as i32);
    total += power_integral(beta, T::zero(), x_tail) * sample(x_tail * T::lit(0.5))?;
    Ok(total)
}

/// `∫_0^1 ∫_0^1 x^β g(t, x) dt dx`.
pub fn integrate_power_product<T, G>(
    beta: T,
    g: G,
    cfg: &QuadConfig,
) -> Result<QuadResult<T>, QuadError>
where
    T: Real,
    G: Fn(T, T) -> T + Sync,
{
    if !(beta > -T::one()) {
        return Err(QuadError::NonintegrableSingularity { beta: beta.as_f64() });
    }
    let grading = T::lit(cfg.grading);
    let cells = cell_count(beta, grading);
    let tol = T::lit(cfg.rel_tol);
    let mut prev = level_sum(beta, &g, cells, grading, cfg.base_nodes.max(1))?;
    let mut change = T::infinity();
    for level in 1..=cfg.max_levels {
        let m = cfg.base_nodes.max(1) << level;
        let cur = level_sum(beta, &g, cells, grading, m)?;
        change = (cur - prev).abs() / cur.abs().max(T::min_positive_value());
        if cur == prev || change < tol {
            return Ok(QuadResult {
                value: cur,
                levels: level,
                last_change: change,
            });
        }
        prev = cur;
    }
    Err(QuadError::NotConverged {
        levels: cfg.max_levels,
        last_change: change.as_f64(),
    })
}
