//! P1 discretization of the weighted Neumann `(p, q)` eigenproblem
//!
//! ```text
//! ∫ |∇u|^{p−2} ∇u·∇v |x|^α = λ ‖u‖_q^{p−q} ∫ |u|^{q−2} u v,   ∫ |u|^{q−2} u = 0,
//! ```
//!
//! with the inverse iteration `A(φ_{n+1}) = μ_n B(φ_n)` and a dense `p = 2` oracle.
//!
//! The weight enters only through the per-triangle integrals `∫_T |x|^α`,
//! sampled at interior quadrature points, because gradients of P1 functions
//! are constant on each triangle.

use nalgebra::{DMatrix, RealField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bound::NumericPoincareConfig;
use crate::mesh::{ElementGeometry, GradedMesh, MeshError, QuadratureRule};
use crate::param::{DomainSpec, ParamError, ProblemParams};
use crate::scalar::Real;
use crate::sparse::{dot, pcg, remove_mean, Csr, P1Pattern};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("weight |x|^alpha is not finite and positive on triangle {0}")]
    NonfiniteWeight(usize),
    #[error("function has {got} coefficients, mesh has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("constraint projection of a constant function")]
    ConstantInput,
    #[error("Rayleigh quotient of the zero function")]
    ZeroFunction,
    #[error("inner solve did not converge after {iterations} steps (KKT residual {residual:e})")]
    NonconvergedInner { iterations: usize, residual: f64 },
    #[error("inverse iteration hit {iterations} iterations (last relative change {last_change:e}, residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        last_change: f64,
        residual: f64,
    },
    #[error("iterate collapsed: ‖w‖ = {norm:e}")]
    CollapsedIterate { norm: f64 },
    #[error("mass matrix is not positive definite")]
    SingularMass,
    #[error("unsupported exponents: {0}")]
    UnsupportedExponent(String),
}

/// Nodal coefficients of a P1 function, one per mesh vertex.
pub type GridFunction<T> = Vec<T>;

/// `sign(x) |x|^e`, with `0 ↦ 0` for every `e > 0`.
fn spow<T: Real>(x: T, e: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x.signum() * x.abs().powf(e)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteProblem<T> {
    mesh: GradedMesh<T>,
    params: ProblemParams<T>,
    elems: Vec<ElementGeometry<T>>,
    weight: Vec<T>,
    rule: QuadratureRule<T>,
    pattern: P1Pattern,
    mass: Csr<T>,
    lumped: Vec<T>,
    stiff: Csr<T>,
    area: T,
}

impl<T: Real> DiscreteProblem<T> {
    pub fn new(mesh: GradedMesh<T>, params: ProblemParams<T>) -> Result<Self, EigenError> {
        let spec = DomainSpec::planar(mesh.gamma1())?;
        params.check_solvable(&spec)?;
        mesh.validate()?;
        let rule = QuadratureRule::order2();
        let elems: Vec<ElementGeometry<T>> =
            (0..mesh.num_triangles()).map(|t| mesh.element(t)).collect();
        let alpha = params.alpha;
        let weight: Vec<T> = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let area = elems[t].area;
                rule.map_points(&mesh, t)
                    .into_iter()
                    .zip(&rule.weights)
                    .map(|(x, &w)| w * area * (x[0] * x[0] + x[1] * x[1]).sqrt().powf(alpha))
                    .sum()
            })
            .collect();
        if let Some(t) = weight.iter().position(|w: &T| !(w.is_finite() && *w > T::zero())) {
            return Err(EigenError::NonfiniteWeight(t));
        }
        let pattern = P1Pattern::new(&mesh);
        let mass_blocks: Vec<[T; 9]> = elems
            .iter()
            .map(|e| {
                let mut b = [T::zero(); 9];
                for (l, &w) in rule.points.iter().zip(&rule.weights) {
                    for i in 0..3 {
                        for j in 0..3 {
                            b[3 * i + j] += w * e.area * l[i] * l[j];
                        }
                    }
                }
                b
            })
            .collect();
        let mass = pattern.assemble(&mass_blocks);
        let lumped: Vec<T> = (0..mass.n)
            .map(|i| mass.vals[mass.row_ptr[i]..mass.row_ptr[i + 1]].iter().copied().sum())
            .collect();
        let area = elems.iter().map(|e| e.area).sum();
        let mut dp = Self {
            mesh,
            params,
            elems,
            weight,
            rule,
            pattern,
            mass,
            lumped,
            stiff: Csr {
                n: 0,
                row_ptr: vec![0],
                col_idx: Vec::new(),
                vals: Vec::new(),
            },
            area,
        };
        dp.stiff = dp.stiffness();
        Ok(dp)
    }

    pub fn mesh(&self) -> &GradedMesh<T> {
        &self.mesh
    }

    pub fn params(&self) -> &ProblemParams<T> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn area(&self) -> T {
        self.area
    }

    /// `∫_T |x|^α` per triangle.
    pub fn weights(&self) -> &[T] {
        &self.weight
    }

    pub fn mass(&self) -> &Csr<T> {
        &self.mass
    }

    fn check_len(&self, u: &[T]) -> Result<(), EigenError> {
        if u.len() == self.dim() {
            Ok(())
        } else {
            Err(EigenError::LengthMismatch {
                expected: self.dim(),
                got: u.len(),
            })
        }
    }

    fn grad(&self, t: usize, u: &[T]) -> [T; 2] {
        let tri = self.mesh.triangles[t];
        let g = &self.elems[t].grads;
        // ∇λ_0 = −∇λ_1 − ∇λ_2, so constants have exactly zero gradient
        let d1 = u[tri[1]] - u[tri[0]];
        let d2 = u[tri[2]] - u[tri[0]];
        [d1 * g[1][0] + d2 * g[2][0], d1 * g[1][1] + d2 * g[2][1]]
    }

    fn elem_sum<F: Fn(usize) -> T + Sync + Send>(&self, f: F) -> T {
        let parts: Vec<T> = (0..self.elems.len()).into_par_iter().map(f).collect();
        parts.into_iter().sum()
    }

    fn scatter<F: Fn(usize) -> [T; 3] + Sync + Send>(&self, f: F) -> Vec<T> {
        let parts: Vec<[T; 3]> = (0..self.elems.len()).into_par_iter().map(f).collect();
        let mut out = vec![T::zero(); self.dim()];
        for (tri, c) in self.mesh.triangles.iter().zip(parts) {
            for k in 0..3 {
                out[tri[k]] += c[k];
            }
        }
        out
    }

    /// Values of `u` at the quadrature points of triangle `t`.
    fn at_points(&self, t: usize, u: &[T]) -> impl Iterator<Item = (T, T, &[T; 3])> + '_ {
        let tri = self.mesh.triangles[t];
        let area = self.elems[t].area;
        let (a, b, c) = (u[tri[0]], u[tri[1]], u[tri[2]]);
        self.rule
            .points
            .iter()
            .zip(&self.rule.weights)
            .map(move |(l, &w)| (l[0] * a + l[1] * b + l[2] * c, w * area, l))
    }

    /// `‖∇u‖^p_{L_p(|x|^α)}`.
    pub fn energy(&self, u: &[T]) -> T {
        let half_p = self.params.p * T::lit(0.5);
        self.elem_sum(|t| {
            let g = self.grad(t, u);
            self.weight[t] * (g[0] * g[0] + g[1] * g[1]).powf(half_p)
        })
    }

    pub fn x_norm(&self, u: &[T]) -> T {
        self.energy(u).powf(self.params.p.recip())
    }

    /// The nodal vector `⟨A u, φ_i⟩`.
    pub fn a_vector(&self, u: &[T]) -> Vec<T> {
        let p = self.params.p;
        self.scatter(|t| {
            let g = self.grad(t, u);
            let g2 = g[0] * g[0] + g[1] * g[1];
            let mut c = [T::zero(); 3];
            if g2 > T::zero() {
                let coef = self.weight[t] * g2.powf((p - T::lit(2.0)) * T::lit(0.5));
                let gr = &self.elems[t].grads;
                for k in 0..3 {
                    c[k] = coef * (g[0] * gr[k][0] + g[1] * gr[k][1]);
                }
            }
            c
        })
    }

    /// `⟨A u, v⟩ = ∫ |∇u|^{p−2} ∇u·∇v |x|^α`.
    pub fn apply_a(&self, u: &[T], v: &[T]) -> T {
        let p = self.params.p;
        self.elem_sum(|t| {
            let gu = self.grad(t, u);
            let gv = self.grad(t, v);
            let g2 = gu[0] * gu[0] + gu[1] * gu[1];
            if g2 > T::zero() {
                self.weight[t] * g2.powf((p - T::lit(2.0)) * T::lit(0.5)) * (gu[0] * gv[0] + gu[1] * gv[1])
            } else {
                T::zero()
            }
        })
    }

    /// `⟨B u, v⟩ = ∫ u v`.
    pub fn apply_b(&self, u: &[T], v: &[T]) -> T {
        self.mass.quad_form(u, v)
    }

    /// `‖u‖_{L_q}`.
    pub fn lq_norm(&self, u: &[T]) -> T {
        let q = self.params.q;
        self.elem_sum(|t| self.at_points(t, u).map(|(v, w, _)| w * v.abs().powf(q)).sum())
            .powf(q.recip())
    }

    /// The nodal vector `∫ |u|^{q−2} u φ_i`; equals `M u` for `q = 2`.
    pub fn bq_vector(&self, u: &[T]) -> Vec<T> {
        let e = self.params.q - T::one();
        self.scatter(|t| {
            let mut c = [T::zero(); 3];
            for (v, w, l) in self.at_points(t, u) {
                let f = w * spow(v, e);
                for k in 0..3 {
                    c[k] += f * l[k];
                }
            }
            c
        })
    }

    fn constraint_integral(&self, u: &[T], shift: T) -> T {
        let e = self.params.q - T::one();
        self.elem_sum(|t| self.at_points(t, u).map(|(v, w, _)| w * spow(v - shift, e)).sum())
    }

    /// `|∫|u|^{q−2}u| / (‖u‖_q^{q−1} |Ω|)`.
    pub fn constraint_residual(&self, u: &[T]) -> T {
        let n = self.lq_norm(u);
        if n == T::zero() {
            return T::zero();
        }
        self.constraint_integral(u, T::zero()).abs() / (n.powf(self.params.q - T::one()) * self.area)
    }

    /// `u − c` with `∫ |u−c|^{q−2}(u−c) = 0`.
    pub fn project_constraint(&self, u: &[T]) -> Result<GridFunction<T>, EigenError> {
        self.check_len(u)?;
        let (lo, hi) = u
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)));
        let scale = lo.abs().max(hi.abs());
        if !(hi - lo > T::epsilon() * T::lit(8.0) * scale) {
            return Err(EigenError::ConstantInput);
        }
        let c = if self.params.q == T::lit(2.0) {
            dot(&self.lumped, u) / self.area
        } else {
            // c ↦ ∫|u−c|^{q−2}(u−c) is continuous and strictly decreasing
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = (a + b) * T::lit(0.5);
                if m <= a || m >= b {
                    break;
                }
                if self.constraint_integral(u, m) > T::zero() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let (ga, gb) = (self.constraint_integral(u, a).abs(), self.constraint_integral(u, b).abs());
            if ga <= gb {
                a
            } else {
                b
            }
        };
        Ok(u.iter().map(|&x| x - c).collect())
    }

    /// `‖∇u‖^p_{L_p(|x|^α)} / ‖u‖^p_{L_q}`.
    pub fn rayleigh_quotient(&self, u: &[T]) -> Result<T, EigenError> {
        self.check_len(u)?;
        let n = self.lq_norm(u);
        if !(n > T::zero()) {
            return Err(EigenError::ZeroFunction);
        }
        Ok(self.energy(u) / n.powf(self.params.p))
    }

    /// Dual norm `(r·K^{-1}r)^{1/2}` of a nodal residual in the weighted
    /// stiffness metric, after removing its constant component.
    pub fn dual_norm(&self, r: &[T]) -> T {
        let mut r = r.to_vec();
        remove_mean(&mut r);
        let mut z = vec![T::zero(); r.len()];
        pcg(&self.stiff, &r, &mut z, T::lit(1e-10), 20 * r.len() + 100, true);
        dot(&r, &z).max(T::zero()).sqrt()
    }

    /// Weighted stiffness matrix `∫ ∇φ_i·∇φ_j |x|^α`.
    pub fn stiffness(&self) -> Csr<T> {
        let blocks: Vec<[T; 9]> = (0..self.elems.len())
            .into_par_iter()
            .map(|t| {
                let g = &self.elems[t].grads;
                let mut b = [T::zero(); 9];
                for i in 0..3 {
                    for j in 0..3 {
                        b[3 * i + j] = self.weight[t] * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                }
                b
            })
            .collect();
        self.pattern.assemble(&blocks)
    }

    /// Hessian of `(1/p)‖∇w‖^p` with `|∇w|²` regularized by `ε`.
    fn hessian(&self, w: &[T], eps: T) -> Csr<T> {
        let p = self.params.p;
        let two = T::lit(2.0);
        let blocks: Vec<[T; 9]> = (0..self.elems.len())
            .into_par_iter()
            .map(|t| {
                let g = self.grad(t, w);
                let s2 = g[0] * g[0] + g[1] * g[1] + eps;
                let c1 = self.weight[t] * s2.powf((p - two) / two);
                let c2 = self.weight[t] * (p - two) * s2.powf((p - T::lit(4.0)) / two);
                let gr = &self.elems[t].grads;
                let gd: [T; 3] = std::array::from_fn(|k| g[0] * gr[k][0] + g[1] * gr[k][1]);
                let mut b = [T::zero(); 9];
                for i in 0..3 {
                    for j in 0..3 {
                        b[3 * i + j] =
                            c1 * (gr[i][0] * gr[j][0] + gr[i][1] * gr[j][1]) + c2 * gd[i] * gd[j];
                    }
                }
                b
            })
            .collect();
        self.pattern.assemble(&blocks)
    }

    fn mean_grad_sq(&self, w: &[T]) -> T {
        self.elem_sum(|t| {
            let g = self.grad(t, w);
            self.elems[t].area * (g[0] * g[0] + g[1] * g[1])
        }) / self.area
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerConfig {
    /// Relative `J` decrease below which a non-optimal iterate counts as stalled.
    pub tol: f64,
    /// Relative dual-norm bound on `A(w) − f`.
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub eps_rho: f64,
    pub eps_min: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-15,
            kkt_tol: 1e-10,
            max_iter: 200,
            eps_rho: 0.5,
            eps_min: 1e-12,
            cg_tol: 1e-13,
            cg_max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult<T> {
    pub w: GridFunction<T>,
    pub iterations: usize,
    /// `J(w_k) = (1/p)‖w_k‖_X^p − ⟨f, w_k⟩` along the iteration.
    pub j_trace: Vec<T>,
    pub kkt: T,
}

fn objective<T: Real>(dp: &DiscreteProblem<T>, f: &[T], w: &[T]) -> T {
    dp.energy(w) / dp.params.p - dot(f, w)
}

/// Minimizer of `J(w) = (1/p)‖w‖_X^p − ⟨f, w⟩` over nodal functions for a
/// dual vector `f` (orthogonal to constants after cleanup). Damped Newton on
/// the regularized Hessian with an Armijo search on the true `J`.
pub fn solve_dual<T: Real>(
    dp: &DiscreteProblem<T>,
    f: &[T],
    w0: Option<&[T]>,
    cfg: &InnerConfig,
) -> Result<InnerResult<T>, EigenError> {
    let res = solve_dual_partial(dp, f, w0, cfg)?;
    if res.kkt <= T::lit(cfg.kkt_tol) {
        Ok(res)
    } else {
        Err(EigenError::NonconvergedInner {
            iterations: res.iterations,
            residual: res.kkt.as_f64(),
        })
    }
}

/// [`solve_dual`] that returns the last iterate even when the KKT bound is
/// not met.
fn solve_dual_partial<T: Real>(
    dp: &DiscreteProblem<T>,
    f: &[T],
    w0: Option<&[T]>,
    cfg: &InnerConfig,
) -> Result<InnerResult<T>, EigenError> {
    dp.check_len(f)?;
    let p = dp.params.p;
    let mut f = f.to_vec();
    remove_mean(&mut f);
    let fnorm = dp.dual_norm(&f);
    if !(fnorm > T::zero()) {
        return Ok(InnerResult {
            w: vec![T::zero(); dp.dim()],
            iterations: 0,
            j_trace: vec![T::zero()],
            kkt: T::zero(),
        });
    }
    let cg_tol = T::lit(cfg.cg_tol);
    let kkt_of = |w: &[T]| {
        let a = dp.a_vector(w);
        let r: Vec<T> = a.iter().zip(&f).map(|(&a, &f)| a - f).collect();
        (dp.dual_norm(&r) / fnorm, r)
    };

    let mut w = match w0 {
        Some(w0) => {
            dp.check_len(w0)?;
            w0.to_vec()
        }
        None => {
            let k = dp.stiffness();
            let mut w = vec![T::zero(); dp.dim()];
            pcg(&k, &f, &mut w, cg_tol, cfg.cg_max_iter, true);
            w
        }
    };
    // best multiple of the start along its ray
    let e = dp.energy(&w);
    let fw = dot(&f, &w);
    if e > T::zero() && fw > T::zero() {
        let t = (fw / e).powf((p - T::one()).recip());
        w.iter_mut().for_each(|x| *x *= t);
    }
    let mut j = objective(dp, &f, &w);
    let mut j_trace = vec![j];
    let (mut kkt, mut r) = kkt_of(&w);
    let g2 = dp.mean_grad_sq(&w).max(T::min_positive_value());
    let eps0 = T::lit(1e-2) * g2;
    let eps_floor = T::lit(cfg.eps_min) * g2;

    for k in 0..cfg.max_iter {
        if kkt <= T::lit(cfg.kkt_tol) {
            return Ok(InnerResult {
                w,
                iterations: k,
                j_trace,
                kkt,
            });
        }
        let eps = eps_floor.max(eps0 * T::lit(cfg.eps_rho).powi(k as i32));
        let h = dp.hessian(&w, eps);
        let neg: Vec<T> = r.iter().map(|&x| -x).collect();
        let mut d = vec![T::zero(); dp.dim()];
        pcg(&h, &neg, &mut d, cg_tol, cfg.cg_max_iter, true);
        let mut slope = dot(&r, &d);
        if !(slope < T::zero()) {
            d = r.iter().zip(&dp.lumped).map(|(&r, &m)| -r / m).collect();
            slope = dot(&r, &d);
        }
        let slack = T::lit(1e-13) * j.abs().max(T::min_positive_value());
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<T> = w.iter().zip(&d).map(|(&w, &d)| w + step * d).collect();
            let jt = objective(dp, &f, &trial);
            if jt <= j + T::lit(1e-4) * step * slope {
                accepted = Some((trial, jt));
                break;
            }
            // at rounding level accept steps that reduce the residual without raising J
            if jt <= j + slack {
                let (kt, _) = kkt_of(&trial);
                if kt < kkt {
                    accepted = Some((trial, jt));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((trial, jt)) = accepted else {
            break;
        };
        let decrease = j - jt;
        w = trial;
        j = jt.min(j);
        j_trace.push(j);
        (kkt, r) = kkt_of(&w);
        if decrease <= T::lit(cfg.tol) * j.abs() && kkt > T::lit(cfg.kkt_tol) && step < T::lit(1e-6) {
            break;
        }
    }
    let iterations = j_trace.len() - 1;
    Ok(InnerResult {
        w,
        iterations,
        j_trace,
        kkt,
    })
}

/// Minimizer of `(1/p)‖w‖_X^p − ⟨B ψ, w⟩` for a nodal right-hand side `ψ`.
pub fn inner_solve<T: Real>(
    dp: &DiscreteProblem<T>,
    rhs: &[T],
    cfg: &InnerConfig,
) -> Result<InnerResult<T>, EigenError> {
    dp.check_len(rhs)?;
    let f = dp.mass.mul(rhs);
    solve_dual(dp, &f, None, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative change of `μ_n` at convergence.
    pub tol: f64,
    /// Relative dual-norm defect of the returned eigenpair.
    pub weak_tol: f64,
    /// `‖w‖_Y` below this counts as a collapsed iterate.
    pub collapse_tol: f64,
    pub inner: InnerConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-10,
            weak_tol: 1e-6,
            collapse_tol: 1e-150,
            inner: InnerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo<T> {
    pub gamma: T,
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult<T> {
    pub lambda: T,
    #[serde(skip)]
    pub u: GridFunction<T>,
    pub iterations: usize,
    pub mu_trace: Vec<T>,
    pub x_norm_trace: Vec<T>,
    pub residual: T,
    pub constraint_residual: T,
    pub mesh: MeshInfo<T>,
    pub problem: ProblemParams<T>,
}

impl<T: Real> DiscreteProblem<T> {
    fn mesh_info(&self) -> MeshInfo<T> {
        MeshInfo {
            gamma: self.mesh.gamma1(),
            n: self.mesh.level,
            kappa: self.mesh.kappa,
        }
    }

    /// Relative defect of `A(u) = λ ‖u‖_q^{p−q} |u|^{q−2}u` against every nodal test function.
    pub fn weak_residual(&self, lambda: T, u: &[T]) -> T {
        let a = self.a_vector(u);
        let b = self.bq_vector(u);
        let scale = lambda * self.lq_norm(u).powf(self.params.p - self.params.q);
        let r: Vec<T> = a.iter().zip(&b).map(|(&a, &b)| a - scale * b).collect();
        self.dual_norm(&r) / self.dual_norm(&a).max(T::min_positive_value())
    }

    fn normalized(&self, u: &[T]) -> Result<GridFunction<T>, EigenError> {
        let v = self.project_constraint(u)?;
        let n = self.lq_norm(&v);
        if !(n > T::zero()) {
            return Err(EigenError::ZeroFunction);
        }
        Ok(v.into_iter().map(|x| x / n).collect())
    }

    /// `x_2` minus its constraint shift: a smooth start with no symmetry bias.
    pub fn default_start(&self) -> GridFunction<T> {
        self.mesh.vertices.iter().map(|v| v[1] + T::lit(0.25) * v[0]).collect()
    }

    pub fn random_start(&self, seed: u64) -> GridFunction<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect()
    }
}

/// Inverse iteration `A(w) = B_q(φ_n)`, `φ_{n+1} = P(w)/‖P(w)‖_q`,
/// `μ_n = ‖P(w)‖_q^{1−p}` for any admissible `q`. For `q = 2` this is the
/// classical scheme; otherwise it is the nonlinear inverse power method,
/// which does not increase the Rayleigh quotient.
fn power_loop<T: Real>(
    dp: &DiscreteProblem<T>,
    u0: &[T],
    cfg: &SolverConfig,
) -> Result<EigenResult<T>, EigenError> {
    dp.check_len(u0)?;
    let p = dp.params.p;
    let mut phi = dp.normalized(u0)?;
    let mut mu_trace = Vec::new();
    let mut x_norm_trace = Vec::new();
    let mut warm: Option<Vec<T>> = None;
    let mut change = T::infinity();
    let mut residual = T::infinity();
    for it in 0..cfg.max_iter {
        let f = dp.bq_vector(&phi);
        let inner = solve_dual(dp, &f, warm.as_deref(), &cfg.inner)?;
        let pw = dp.project_constraint(&inner.w)?;
        let norm = dp.lq_norm(&pw);
        if !(norm > T::lit(cfg.collapse_tol)) {
            return Err(EigenError::CollapsedIterate { norm: norm.as_f64() });
        }
        let mu = norm.powf(T::one() - p);
        phi = pw.into_iter().map(|x| x / norm).collect();
        x_norm_trace.push(dp.energy(&phi));
        if let Some(&prev) = mu_trace.last() {
            let prev: T = prev;
            change = (prev - mu).abs() / mu;
        }
        mu_trace.push(mu);
        residual = dp.weak_residual(mu, &phi);
        if change < T::lit(cfg.tol) && residual <= T::lit(cfg.weak_tol) {
            return Ok(EigenResult {
                lambda: mu,
                constraint_residual: dp.constraint_residual(&phi),
                u: phi,
                iterations: it + 1,
                mu_trace,
                x_norm_trace,
                residual,
                mesh: dp.mesh_info(),
                problem: dp.params,
            });
        }
        // A(φ) ≈ μ B(φ) ⇒ next w ≈ μ^{−1/(p−1)} φ
        let s = mu.powf(-(p - T::one()).recip());
        warm = Some(phi.iter().map(|&x| x * s).collect());
    }
    Err(EigenError::MaxIterations {
        iterations: cfg.max_iter,
        last_change: change.as_f64(),
        residual: residual.as_f64(),
    })
}

/// The inverse iteration for `q = 2`.
pub fn inverse_iteration<T: Real>(
    dp: &DiscreteProblem<T>,
    u0: &[T],
    cfg: &SolverConfig,
) -> Result<EigenResult<T>, EigenError> {
    if dp.params.q != T::lit(2.0) {
        return Err(EigenError::UnsupportedExponent(format!(
            "inverse iteration needs q = 2, got q = {}",
            dp.params.q
        )));
    }
    power_loop(dp, u0, cfg)
}

/// Best-effort constrained Rayleigh minimization for any `q`; for `q = 2`
/// identical to [`inverse_iteration`].
pub fn minimize_rayleigh<T: Real>(
    dp: &DiscreteProblem<T>,
    u0: &[T],
    cfg: &SolverConfig,
) -> Result<EigenResult<T>, EigenError> {
    power_loop(dp, u0, cfg)
}

/// Smallest discrete Rayleigh quotient of the unweighted `(s, r)` problem on
/// `mesh` found from `starts` random initial functions.
///
/// Every constraint-projected iterate is an admissible test function, so the
/// inner solves may stop early: for `s` near 1 the minimizers flatten out,
/// the energy loses smoothness and the inner problems scale like
/// `‖f‖^{1/(s−1)}`. Each run returns the lowest quotient it met and ends when
/// `μ` settles to `tol` or the quotient stalls.
pub fn discrete_poincare_eigenvalue<T: Real>(
    mesh: &GradedMesh<T>,
    s: T,
    r: T,
    cfg: &NumericPoincareConfig,
) -> Result<T, EigenError> {
    let dp = DiscreteProblem::new(mesh.clone(), ProblemParams::new(s, r, T::zero()))?;
    let inner = InnerConfig {
        kkt_tol: cfg.kkt_tol,
        max_iter: cfg.inner_max_iter,
        cg_max_iter: 20 * dp.dim(),
        ..InnerConfig::default()
    };
    let runs: Vec<Result<T, EigenError>> = (0..cfg.starts.max(1))
        .into_par_iter()
        .map(|k| {
            let u0 = dp.random_start(cfg.seed.wrapping_add(k as u64));
            lenient_power_run(&dp, &u0, cfg, &inner)
        })
        .collect();
    let mut best: Option<T> = None;
    let mut last_err = None;
    for r in runs {
        match r {
            Ok(l) => best = Some(best.map_or(l, |b: T| b.min(l))),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start"))
}

fn lenient_power_run<T: Real>(
    dp: &DiscreteProblem<T>,
    u0: &[T],
    cfg: &NumericPoincareConfig,
    inner: &InnerConfig,
) -> Result<T, EigenError> {
    let p = dp.params.p;
    let tol = T::lit(cfg.tol);
    let mut phi = dp.normalized(u0)?;
    let mut best = dp.rayleigh_quotient(&phi)?;
    let mut prev_mu = T::infinity();
    let mut warm: Option<Vec<T>> = None;
    let mut stalled = 0;
    for _ in 0..cfg.max_iter {
        let f = dp.bq_vector(&phi);
        let w = solve_dual_partial(dp, &f, warm.as_deref(), inner)?.w;
        let Ok(pw) = dp.project_constraint(&w) else {
            break;
        };
        let norm = dp.lq_norm(&pw);
        if !(norm > T::zero() && norm.is_finite()) {
            break;
        }
        phi = pw.into_iter().map(|x| x / norm).collect();
        let rq = dp.rayleigh_quotient(&phi)?;
        if rq < best * (T::one() - tol) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best = best.min(rq);
        let mu = norm.powf(T::one() - p);
        if (prev_mu - mu).abs() < tol * mu || stalled >= 8 {
            break;
        }
        prev_mu = mu;
        let sc = mu.powf(-(p - T::one()).recip());
        warm = Some(phi.iter().map(|&x| x * sc).collect());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution<T> {
    pub result: EigenResult<T>,
    /// Smallest eigenvalue of the unconstrained pencil (the Neumann kernel).
    pub zero_eigenvalue: T,
    /// `‖K 1‖_∞ / ‖K‖_∞`: how far the constant is from the stiffness kernel.
    pub kernel_defect: T,
    /// The lowest few eigenvalues of the pencil, ascending.
    pub lowest: Vec<T>,
}

/// Dense generalized eigensolve of the weighted stiffness/mass pencil for `p = q = 2`.
pub fn direct_eigensolve_p2<T: Real + RealField>(
    dp: &DiscreteProblem<T>,
) -> Result<DirectSolution<T>, EigenError> {
    let two = <T as Real>::lit(2.0);
    if dp.params.p != two || dp.params.q != two {
        return Err(EigenError::UnsupportedExponent(format!(
            "direct solve needs p = q = 2, got p = {}, q = {}",
            dp.params.p, dp.params.q
        )));
    }
    let n = dp.dim();
    let to_dense = |a: &Csr<T>| {
        let mut m = DMatrix::<T>::zeros(n, n);
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                m[(i, a.col_idx[k])] += a.vals[k];
            }
        }
        m
    };
    let k = to_dense(&dp.stiffness());
    let m = to_dense(&dp.mass);
    let chol = m.clone().cholesky().ok_or(EigenError::SingularMass)?;
    let l = chol.l();
    // C = L^{-1} K L^{-T}
    let x = l.solve_lower_triangular(&k).ok_or(EigenError::SingularMass)?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(EigenError::SingularMass)?;
    let c = (&c + c.transpose()) * <T as Real>::lit(0.5);
    let mut eig: Vec<T> = c.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let zero_eigenvalue = eig[0];
    let ones = DMatrix::<T>::from_element(n, 1, T::one());
    let kernel_defect = (&k * &ones).amax() / k.amax();
    let lambda = eig[1];
    // eigenvector by shift-invert just below λ
    let sigma = lambda * (T::one() - <T as Real>::lit(1e-7));
    let lu = (&k - &m * sigma).lu();
    let mut x = DMatrix::<T>::from_column_slice(n, 1, &dp.default_start());
    for _ in 0..3 {
        let y = lu.solve(&(&m * &x)).ok_or(EigenError::SingularMass)?;
        let s = y.amax();
        x = y / s;
    }
    let u = dp.normalized(x.as_slice())?;
    let residual = dp.weak_residual(lambda, &u);
    let result = EigenResult {
        lambda,
        constraint_residual: dp.constraint_residual(&u),
        u,
        iterations: 1,
        mu_trace: vec![lambda],
        x_norm_trace: vec![lambda],
        residual,
        mesh: dp.mesh_info(),
        problem: dp.params,
    };
    Ok(DirectSolution {
        result,
        zero_eigenvalue,
        kernel_defect,
        lowest: eig.into_iter().take(6).collect(),
    })
}


/// `⟨Au − Av, u − v⟩`.
pub fn monotone_operator_check<T: Real>(dp: &DiscreteProblem<T>, u: &[T], v: &[T]) -> T {
    let au = dp.a_vector(u);
    let av = dp.a_vector(v);
    au.iter()
        .zip(&av)
        .zip(u.iter().zip(v))
        .map(|((&a, &b), (&x, &y))| (a - b) * (x - y))
        .sum()
}

/// Largest relative error over `directions` random nodal directions between
/// `⟨Au, δ⟩` and the central difference of `(1/p)‖·‖_X^p` at `u`.
pub fn gradient_check<T: Real>(dp: &DiscreteProblem<T>, u: &[T], h: T, directions: usize, seed: u64) -> T {
    let p = dp.params.p;
    let a = dp.a_vector(u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = T::zero();
    for _ in 0..directions {
        let d: Vec<T> = (0..dp.dim()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let plus: Vec<T> = u.iter().zip(&d).map(|(&u, &d)| u + h * d).collect();
        let minus: Vec<T> = u.iter().zip(&d).map(|(&u, &d)| u - h * d).collect();
        let fd = (dp.energy(&plus) - dp.energy(&minus)) / (T::lit(2.0) * h * p);
        let an = dot(&a, &d);
        let err = (fd - an).abs() / an.abs().max(T::min_positive_value());
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cusp_mesh, build_reference_mesh};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn reference(n: usize, p: f64, q: f64) -> DiscreteProblem<f64> {
        let mesh = build_reference_mesh(n, 1.0).unwrap();
        DiscreteProblem::new(mesh, ProblemParams::new(p, q, 0.0)).unwrap()
    }

    #[test]
    fn x_norm_examples() {
        let dp = reference(6, 2.0, 2.0);
        let ones = vec![1.0; dp.dim()];
        assert_eq!(dp.x_norm(&ones), 0.0);
        let x2: Vec<f64> = dp.mesh().vertices.iter().map(|v| v[1]).collect();
        assert_relative_eq!(dp.x_norm(&x2), 0.5f64.sqrt(), epsilon = 1e-14);
        let t: Vec<f64> = x2.iter().map(|x| -3.0 * x).collect();
        assert_relative_eq!(dp.x_norm(&t), 3.0 * dp.x_norm(&x2), max_relative = 1e-14);
    }

    #[test]
    fn operators_match_matrices() {
        let dp = reference(5, 2.0, 2.0);
        let u = dp.random_start(1);
        let v = dp.random_start(2);
        let k = dp.stiffness();
        assert_relative_eq!(dp.apply_a(&u, &v), k.quad_form(&u, &v), max_relative = 1e-12);
        assert_relative_eq!(dp.apply_a(&u, &v), dp.apply_a(&v, &u), max_relative = 1e-12);
        assert_relative_eq!(dp.apply_a(&u, &u), dp.energy(&u), max_relative = 1e-12);
        assert_relative_eq!(dot(&dp.a_vector(&u), &v), dp.apply_a(&u, &v), max_relative = 1e-12);
        assert_relative_eq!(dp.apply_b(&u, &v), dot(&dp.bq_vector(&u), &v), max_relative = 1e-12);
        assert_relative_eq!(dp.lq_norm(&u).powi(2), dp.apply_b(&u, &u), max_relative = 1e-12);
    }

    #[test]
    fn projection_q2_is_mean() {
        let dp = reference(6, 2.0, 2.0);
        let u = dp.random_start(3);
        let pu = dp.project_constraint(&u).unwrap();
        let ones = vec![1.0; dp.dim()];
        assert!(dp.apply_b(&pu, &ones).abs() < 1e-14);
        assert!(matches!(dp.project_constraint(&ones), Err(EigenError::ConstantInput)));
    }

    #[test]
    fn projection_general_q() {
        for q in [1.5, 3.0, 4.5] {
            let dp = reference(6, 2.0, q);
            let u: Vec<f64> = dp.mesh().vertices.iter().map(|v| (3.0 * v[1]).exp() + v[0]).collect();
            let pu = dp.project_constraint(&u).unwrap();
            assert!(dp.constraint_residual(&pu) <= 1e-10, "q {q}: {}", dp.constraint_residual(&pu));
            let twice = dp.project_constraint(&pu).unwrap();
            for (a, b) in pu.iter().zip(&twice) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rayleigh_of_exact_eigenfunction() {
        let r = |n| {
            let dp = reference(n, 2.0, 2.0);
            let u: Vec<f64> = dp
                .mesh()
                .vertices
                .iter()
                .map(|v| (PI * v[0]).cos() + (PI * v[1]).cos())
                .collect();
            let q = dp.rayleigh_quotient(&u).unwrap();
            assert_relative_eq!(dp.rayleigh_quotient(&u.iter().map(|x| 2.5 * x).collect::<Vec<_>>()).unwrap(), q, max_relative = 1e-13);
            q
        };
        let (e8, e16) = ((r(8) - PI * PI).abs(), (r(16) - PI * PI).abs());
        assert!(e16 < e8 && e16 / (PI * PI) < 0.01);
    }

    #[test]
    fn inner_solve_p2_matches_dense_solve() {
        let dp = reference(8, 2.0, 2.0);
        let rhs = dp.project_constraint(&dp.random_start(5)).unwrap();
        let w = inner_solve(&dp, &rhs, &InnerConfig::default()).unwrap();
        assert_eq!(w.iterations, 0);
        // dense solve of the stiffness system bordered by the mean constraint
        let n = dp.dim();
        let k = dp.stiffness().to_dense();
        let f = dp.mass().mul(&rhs);
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut b = nalgebra::DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = k[i][j];
            }
            a[(i, n)] = 1.0;
            a[(n, i)] = 1.0;
            b[i] = f[i];
        }
        let x = a.lu().solve(&b).unwrap();
        let mut wd: Vec<f64> = x.iter().take(n).copied().collect();
        remove_mean(&mut wd);
        let mut ws = w.w.clone();
        remove_mean(&mut ws);
        let scale = wd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in ws.iter().zip(&wd) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn inner_solve_p3_descends_and_matches_descent_oracle() {
        let dp = reference(4, 3.0, 2.0);
        let rhs = dp.project_constraint(&dp.random_start(11)).unwrap();
        let res = inner_solve(&dp, &rhs, &InnerConfig::default()).unwrap();
        assert!(res.kkt <= 1e-6);
        for w in res.j_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        // oracle: lumped-mass preconditioned gradient descent with
        // Barzilai–Borwein steps, started from zero
        let mut f = dp.mass().mul(&rhs);
        remove_mean(&mut f);
        let grad = |w: &[f64]| -> Vec<f64> {
            dp.a_vector(w).iter().zip(&f).map(|(a, b)| a - b).collect()
        };
        let mut w = vec![0.0; dp.dim()];
        let mut g = grad(&w);
        let mut step = 1e-2;
        for _ in 0..200_000 {
            let w_new: Vec<f64> = w.iter().zip(&g).zip(&dp.lumped).map(|((w, g), m)| w - step * g / m).collect();
            let g_new = grad(&w_new);
            let sy: f64 = (0..w.len()).map(|i| (w_new[i] - w[i]) * (g_new[i] - g[i])).sum();
            let ss: f64 = (0..w.len()).map(|i| (w_new[i] - w[i]).powi(2) * dp.lumped[i]).sum();
            w = w_new;
            g = g_new;
            if dp.dual_norm(&g) <= 1e-12 * dp.dual_norm(&f) || sy <= 0.0 {
                break;
            }
            step = ss / sy;
        }
        let jw = objective(&dp, &f, &w);
        let jn = *res.j_trace.last().unwrap();
        assert!((jn - jw).abs() <= 1e-8 * jn.abs(), "{jn} vs {jw}");
    }

    #[test]
    fn inverse_iteration_matches_direct_and_pi_squared() {
        let dp = reference(16, 2.0, 2.0);
        let cfg = SolverConfig::default();
        let it = inverse_iteration(&dp, &dp.default_start(), &cfg).unwrap();
        let direct = direct_eigensolve_p2(&dp).unwrap();
        assert_relative_eq!(it.lambda, direct.result.lambda, max_relative = 1e-6);
        assert!((it.lambda / (PI * PI) - 1.0).abs() < 0.02);
        for w in it.mu_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10));
        }
        assert!(it.residual <= cfg.weak_tol);
        assert!((it.x_norm_trace.last().unwrap() - it.lambda).abs() <= 1e-8 * it.lambda);
        assert!(direct.zero_eigenvalue.abs() <= 1e-10);
        assert!(direct.kernel_defect <= 1e-12);
        assert!(direct.lowest[1] > 1e-3);
        assert!(direct.result.lambda >= PI * PI / 2.0);
        let rnd = inverse_iteration(&dp, &dp.random_start(9), &cfg).unwrap();
        assert!((rnd.lambda - it.lambda).abs() <= 2e-9 * it.lambda);
        // discrete infimum
        for k in 0..20 {
            let v = dp.project_constraint(&dp.random_start(100 + k)).unwrap();
            assert!(it.lambda <= dp.rayleigh_quotient(&v).unwrap() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn inverse_iteration_rejects_q_not_two() {
        let dp = reference(4, 2.0, 3.0);
        assert!(matches!(
            inverse_iteration(&dp, &dp.default_start(), &SolverConfig::default()),
            Err(EigenError::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn p3_and_q3_solves() {
        for (p, q) in [(3.0, 2.0), (1.5, 2.0), (2.0, 3.0)] {
            let dp = reference(8, p, q);
            let r = minimize_rayleigh(&dp, &dp.default_start(), &SolverConfig::default()).unwrap();
            assert!(r.lambda > 0.0);
            assert!(r.residual <= 1e-6);
            for k in 0..10 {
                let v = dp.project_constraint(&dp.random_start(200 + k)).unwrap();
                assert!(r.lambda <= dp.rayleigh_quotient(&v).unwrap() * (1.0 + 1e-8), "p {p} q {q}");
            }
        }
    }

    #[test]
    fn weighted_cusp_solve() {
        let mesh = build_cusp_mesh(2.0, 8, 2.0).unwrap();
        let dp = DiscreteProblem::new(mesh, ProblemParams::new(2.0, 2.0, 0.5)).unwrap();
        let r = inverse_iteration(&dp, &dp.default_start(), &SolverConfig::default()).unwrap();
        let d = direct_eigensolve_p2(&dp).unwrap();
        assert_relative_eq!(r.lambda, d.result.lambda, max_relative = 1e-6);
    }

    #[test]
    fn operator_identities() {
        for p in [1.5, 2.0, 3.0] {
            let dp = reference(6, p, 2.0);
            let u = dp.random_start(21);
            let v = dp.random_start(22);
            for t in [-2.0, -1.0, 0.5, 3.0] {
                let tu: Vec<f64> = u.iter().map(|x| t * x).collect();
                let lhs = dp.apply_a(&tu, &v);
                let rhs = t.abs().powf(p - 2.0) * t * dp.apply_a(&u, &v);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
            let holder = dp.x_norm(&u).powf(p - 1.0) * dp.x_norm(&v);
            assert!(dp.apply_a(&u, &v) <= holder * (1.0 + 1e-12));
            let two_u: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
            let eq = dp.x_norm(&u).powf(p - 1.0) * dp.x_norm(&two_u);
            assert_relative_eq!(dp.apply_a(&u, &two_u), eq, max_relative = 1e-12);
            assert!(monotone_operator_check(&dp, &u, &u).abs() < 1e-15);
            let m = monotone_operator_check(&dp, &u, &v);
            assert!(m >= -1e-12 * dp.x_norm(&u).max(dp.x_norm(&v)).powf(p));
        }
        let dp = reference(6, 2.0, 2.0);
        let u = dp.random_start(31);
        let v = dp.random_start(32);
        let d: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert_relative_eq!(monotone_operator_check(&dp, &u, &v), dp.x_norm(&d).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn gradient_checks() {
        let dp = reference(6, 2.0, 2.0);
        let u = dp.random_start(41);
        assert!(gradient_check(&dp, &u, 1e-3, 50, 1) <= 1e-9);
        let dp = reference(6, 3.0, 2.0);
        assert!(gradient_check(&dp, &u, 1e-5, 50, 2) <= 1e-5);
        let dp = reference(6, 1.5, 2.0);
        // |∇u| bounded below: a linear function plus a small perturbation
        let lin: Vec<f64> = dp
            .mesh()
            .vertices
            .iter()
            .zip(&u)
            .map(|(v, r)| v[0] + 2.0 * v[1] + 0.01 * r)
            .collect();
        assert!(gradient_check(&dp, &lin, 1e-6, 50, 3) <= 1e-4);
    }
}
