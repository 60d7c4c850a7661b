//! Upper bounds on `1/λ_{p,q}(Ω_γ, |x|^α)` through the cusp transfer chain
//! `B_{q,p}(Ω_γ, w) ≤ K_{p,s} M_{r,q} B_{r,s}(Ω_n)`, and their minimization over
//! the free parameters `(a, s, r)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cusp_map::{self, envelope_constant_sq, weight_envelope, MapError};
use crate::eigen::{self, EigenError};
use crate::mesh::{DomainTag, GradedMesh};
use crate::param::{self, DomainSpec, ParamError, TransferWindow, ValidatedProblem};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("infeasible bound parameters: {}", .0.join("; "))]
    InfeasibleParams(Vec<String>),
    #[error("no feasible (a, s, r) point in the search grid")]
    EmptyFeasibleSet,
    #[error("Poincaré strategy does not apply: {0}")]
    StrategyDomainMismatch(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams<T> {
    pub a: T,
    pub s: T,
    pub r: T,
}

impl<T: Real> BoundParams<T> {
    pub fn new(a: T, s: T, r: T) -> Self {
        Self { a, s, r }
    }

    fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |b: &Self| [b.a, b.s, b.r];
        key(self)
            .iter()
            .zip(key(other).iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Every strict inequality as `lhs < rhs` with a name; feasible iff all slacks are positive.
fn constraints<T: Real>(
    bp: &BoundParams<T>,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    window: &TransferWindow<T>,
) -> Vec<(String, T)> {
    let (p, q, alpha) = (problem.p(), problem.q(), problem.alpha());
    let n = spec.dim();
    let BoundParams { a, s, r } = *bp;
    let t = param::transfer_exponent(a, p, alpha, spec);
    let mut out = vec![
        (format!("a > a_lo = {}", window.a_lo), a - window.a_lo),
        (format!("a < a_hi = {}", window.a_hi), window.a_hi - a),
        ("s > 1".to_string(), s - T::one()),
        ("s < p".to_string(), p - s),
        ("s < n".to_string(), n - s),
        (format!("s < t(a) = {t}"), t - s),
        ("s < r".to_string(), r - s),
    ];
    let r_max = if s < n { n * s / (n - s) } else { T::infinity() };
    out.push(("r < ns/(n−s)".to_string(), r_max - r));
    out.push(("q < aγr/n".to_string(), a * spec.gamma() * r / n - q));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<String>,
}

pub fn feasible<T: Real>(
    bp: &BoundParams<T>,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
) -> Feasibility {
    let violations = match param::transfer_window(problem, spec) {
        Ok(w) => constraints(bp, problem, spec, &w)
            .into_iter()
            .filter(|(_, slack)| !(*slack > T::zero()))
            .map(|(name, _)| name)
            .collect(),
        Err(e) => vec![e.to_string()],
    };
    Feasibility {
        feasible: violations.is_empty(),
        violations,
    }
}

fn min_slack<T: Real>(
    bp: &BoundParams<T>,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    window: &TransferWindow<T>,
) -> T {
    constraints(bp, problem, spec, window)
        .into_iter()
        .map(|(_, s)| s)
        .fold(T::infinity(), |m, s| if s.is_nan() { T::neg_infinity() } else { m.min(s) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoincareStrategy {
    User,
    PayneWeinberger,
    NumericLower,
}

/// A value for the Poincaré–Sobolev constant `B_{r,s}(Ω_n)` and whether it is
/// a proven upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareProvider<T> {
    pub strategy: PoincareStrategy,
    pub value: T,
    pub certified: bool,
}

impl<T: Real> PoincareProvider<T> {
    pub fn user(value: T, certified: bool) -> Self {
        Self {
            strategy: PoincareStrategy::User,
            value,
            certified,
        }
    }

    pub fn scaled(&self, tau: T) -> Self {
        Self {
            value: self.value * tau,
            ..*self
        }
    }
}

/// Options for the numeric lower estimate of `B_{r,s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericPoincareConfig {
    pub starts: usize,
    pub seed: u64,
    /// Outer iterations per start.
    pub max_iter: usize,
    /// Relative change of `μ` at which a start stops.
    pub tol: f64,
    /// Inner solves stop here or after `inner_max_iter` steps, whichever first.
    pub kkt_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for NumericPoincareConfig {
    fn default() -> Self {
        Self {
            starts: 20,
            seed: 0x5eed,
            max_iter: 300,
            tol: 1e-7,
            kkt_tol: 1e-10,
            inner_max_iter: 50,
        }
    }
}

/// Build a provider.
///
/// `user_value` is used only by [`PoincareStrategy::User`]; `diameter` only by
/// Payne–Weinberger (`B_{2,2} ≤ d/π` on convex domains). The numeric strategy
/// returns `λ_{s,r}(Ω_2)^{-1/s}` of the discrete problem, which underestimates
/// the true constant and is therefore never certified.
pub fn poincare_constant<T: Real>(
    strategy: PoincareStrategy,
    r: T,
    s: T,
    user_value: Option<(T, bool)>,
    ref_mesh: Option<&GradedMesh<T>>,
    diameter: T,
    cfg: &NumericPoincareConfig,
) -> Result<PoincareProvider<T>, BoundError> {
    match strategy {
        PoincareStrategy::User => {
            let (value, certified) = user_value.ok_or_else(|| {
                BoundError::StrategyDomainMismatch("user strategy needs a value".into())
            })?;
            if !(value > T::zero()) || !value.is_finite() {
                return Err(BoundError::StrategyDomainMismatch(format!(
                    "user value {value} must be positive"
                )));
            }
            Ok(PoincareProvider::user(value, certified))
        }
        PoincareStrategy::PayneWeinberger => {
            if r != T::lit(2.0) || s != T::lit(2.0) {
                return Err(BoundError::StrategyDomainMismatch(format!(
                    "payne_weinberger needs r = s = 2, got r = {r}, s = {s}"
                )));
            }
            if !(diameter > T::zero()) {
                return Err(BoundError::StrategyDomainMismatch(format!(
                    "diameter {diameter} must be positive"
                )));
            }
            Ok(PoincareProvider {
                strategy,
                value: diameter / T::PI(),
                certified: true,
            })
        }
        PoincareStrategy::NumericLower => {
            let mesh = ref_mesh.ok_or_else(|| {
                BoundError::StrategyDomainMismatch("numeric_lower needs a reference mesh".into())
            })?;
            if mesh.domain != DomainTag::Reference {
                return Err(BoundError::StrategyDomainMismatch(
                    "numeric_lower needs a mesh of the reference triangle".into(),
                ));
            }
            if !(s > T::one() && r > T::one()) {
                return Err(BoundError::StrategyDomainMismatch(format!(
                    "numeric_lower needs r, s > 1, got r = {r}, s = {s}"
                )));
            }
            let lambda = eigen::discrete_poincare_eigenvalue(mesh, s, r, cfg)?;
            Ok(PoincareProvider {
                strategy,
                value: lambda.powf(-s.recip()),
                certified: false,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub grid: [usize; 3],
    pub evaluated: usize,
    pub feasible_points: usize,
    pub golden_passes: usize,
    pub grid_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub params: BoundParams<T>,
    pub k_ps: T,
    pub m_rq: T,
    pub b_rs: T,
    pub inv_lambda_bound: T,
    pub lambda_lower_bound: T,
    /// Same bound evaluated from the expanded product formula.
    pub inv_lambda_expanded: T,
    pub certified: bool,
    pub poincare: PoincareProvider<T>,
    pub notes: Vec<String>,
    pub search: Option<SearchSummary>,
}

/// `a^{p/q−1} c_a^{−1} S^{p/2} B^p ((p−s)/(np − s(a(α+γ−p)+p)))^{(p−s)/s}
///  ((r−q)/(aγr − nq))^{(r−q)p/(rq)}` with `S = Σ(aγ_i−1)² + n − 1 + a²`.
pub fn expanded_bound<T: Real>(
    bp: &BoundParams<T>,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    b: T,
) -> T {
    let (p, q, alpha) = (problem.p(), problem.q(), problem.alpha());
    let n = spec.dim();
    let gamma = spec.gamma();
    let BoundParams { a, s, r } = *bp;
    let (c_a, _) = weight_envelope(a, alpha, spec.n());
    let first = (p - s) / (n * p - s * (a * (alpha + gamma - p) + p));
    let second = (r - q) / (a * gamma * r - n * q);
    a.powf(p / q - T::one()) / c_a
        * envelope_constant_sq(a, spec).powf(p / T::lit(2.0))
        * b.powf(p)
        * first.powf((p - s) / s)
        * second.powf((r - q) * p / (r * q))
}

pub fn eigen_bound<T: Real>(
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    bp: &BoundParams<T>,
    b: &PoincareProvider<T>,
) -> Result<BoundReport<T>, BoundError> {
    let f = feasible(bp, problem, spec);
    if !f.feasible {
        return Err(BoundError::InfeasibleParams(f.violations));
    }
    let params = problem.params();
    let p = params.p;
    let k_ps = cusp_map::kps_closed_form(bp.a, bp.s, &params, spec)?;
    let m_rq = cusp_map::mrq_closed_form(bp.a, bp.r, params.q, spec)?;
    let inv = k_ps.powf(p) * m_rq.powf(p) * b.value.powf(p);
    let expanded = expanded_bound(bp, problem, spec, b.value);
    let mut notes = vec!["K_{p,s} and M_{r,q} from closed forms".to_string()];
    notes.push(match b.strategy {
        PoincareStrategy::User if b.certified => "B_{r,s} supplied by user, asserted".into(),
        PoincareStrategy::User => "B_{r,s} supplied by user, not certified".into(),
        PoincareStrategy::PayneWeinberger => "B_{2,2} = d/π (Payne–Weinberger, convex domain)".into(),
        PoincareStrategy::NumericLower => {
            "B_{r,s} from the discrete Rayleigh problem (underestimate, not certified)".into()
        }
    });
    Ok(BoundReport {
        params: *bp,
        k_ps,
        m_rq,
        b_rs: b.value,
        inv_lambda_bound: inv,
        lambda_lower_bound: inv.recip(),
        inv_lambda_expanded: expanded,
        certified: b.certified,
        poincare: *b,
        notes,
        search: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub grid_a: usize,
    pub grid_s: usize,
    pub grid_r: usize,
    pub golden_passes: usize,
    pub tol: f64,
    pub boundary_margin: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_a: 33,
            grid_s: 17,
            grid_r: 17,
            golden_passes: 3,
            tol: 1e-4,
            boundary_margin: 1e-6,
        }
    }
}

impl SearchConfig {
    pub fn doubled(&self) -> Self {
        Self {
            grid_a: 2 * self.grid_a - 1,
            grid_s: 2 * self.grid_s - 1,
            grid_r: 2 * self.grid_r - 1,
            ..*self
        }
    }
}

/// Feasible open interval of one coordinate with the other two held fixed.
fn coordinate_range<T: Real>(
    axis: usize,
    bp: &BoundParams<T>,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    window: &TransferWindow<T>,
) -> (T, T) {
    let (p, q, alpha) = (problem.p(), problem.q(), problem.alpha());
    let n = spec.dim();
    let gamma = spec.gamma();
    let excess = alpha + gamma - p;
    let BoundParams { a, s, r } = *bp;
    match axis {
        0 => {
            // t(a) > s  ⇔  a < (np/s − p)/(α+γ−p);  q < aγr/n  ⇔  a > nq/(γr)
            let lo = window.a_lo.max(n * q / (gamma * r));
            let hi = window.a_hi.min((n * p / s - p) / excess);
            (lo, hi)
        }
        1 => {
            let t = param::transfer_exponent(a, p, alpha, spec);
            // r < ns/(n−s)  ⇔  s > nr/(n+r)
            let lo = T::one().max(n * r / (n + r));
            let hi = p.min(n).min(t).min(r);
            (lo, hi)
        }
        _ => {
            let lo = s.max(n * q / (a * gamma));
            let hi = n * s / (n - s);
            (lo, hi)
        }
    }
}

/// Interior grid `lo + (hi−lo)·k/(m+1)`, `k = 1..=m`.
fn interior_grid<T: Real>(lo: T, hi: T, m: usize) -> Vec<T> {
    let d = T::from_count(m + 1);
    (1..=m).map(|k| lo + (hi - lo) * T::from_count(k) / d).collect()
}

fn golden_min<T: Real, F: Fn(T) -> T>(lo: T, hi: T, tol: T, f: F) -> (T, T) {
    let g = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimize the bound over `(a, s, r)`: interior grid over the feasible set,
/// then coordinate-wise golden-section passes.
pub fn optimize_bound<T: Real>(
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
    b: &PoincareProvider<T>,
    search: &SearchConfig,
) -> Result<BoundReport<T>, BoundError> {
    let window = param::transfer_window(problem, spec).map_err(|e| match e {
        ParamError::EmptyWindow { .. } => BoundError::EmptyFeasibleSet,
        other => other.into(),
    })?;
    let margin = T::lit(search.boundary_margin);
    let (p, q, alpha) = (problem.p(), problem.q(), problem.alpha());
    let n = spec.dim();
    let gamma = spec.gamma();

    // the grid in a covers the window; s and r are clipped to the feasible
    // slice of each a (resp. (a, s))
    let mut points = Vec::new();
    let mut evaluated = 0usize;
    for a in interior_grid(window.a_lo, window.a_hi, search.grid_a) {
        let t = param::transfer_exponent(a, p, alpha, spec);
        let s_hi = p.min(n).min(t);
        for s in interior_grid(T::one(), s_hi, search.grid_s) {
            let r_lo = s.max(n * q / (a * gamma));
            let r_hi = n * s / (n - s);
            if !(r_lo < r_hi) {
                evaluated += search.grid_r;
                continue;
            }
            for r in interior_grid(r_lo, r_hi, search.grid_r) {
                evaluated += 1;
                points.push(BoundParams { a, s, r });
            }
        }
    }
    let objective = |bp: &BoundParams<T>| -> Option<T> {
        if !(min_slack(bp, problem, spec, &window) > margin) {
            return None;
        }
        let v = expanded_bound(bp, problem, spec, T::one());
        v.is_finite().then_some(v)
    };
    let values: Vec<Option<T>> = points.par_iter().map(objective).collect();

    let mut best: Option<(T, BoundParams<T>)> = None;
    let mut feasible_points = 0;
    for (bp, v) in points.iter().zip(values) {
        let Some(v) = v else { continue };
        feasible_points += 1;
        let better = match &best {
            None => true,
            Some((bv, bb)) => v < *bv || (v == *bv && bp.lex_cmp(bb).is_lt()),
        };
        if better {
            best = Some((v, *bp));
        }
    }
    let (grid_best, mut cur) = best.ok_or(BoundError::EmptyFeasibleSet)?;
    let mut cur_val = grid_best;

    let tol = T::lit(search.tol);
    for _ in 0..search.golden_passes {
        for axis in 0..3 {
            let (lo, hi) = coordinate_range(axis, &cur, problem, spec, &window);
            let (lo, hi) = (lo + margin, hi - margin);
            if !(lo < hi) {
                continue;
            }
            let with = |x: T| {
                let mut bp = cur;
                match axis {
                    0 => bp.a = x,
                    1 => bp.s = x,
                    _ => bp.r = x,
                }
                bp
            };
            let (x, _) = golden_min(lo, hi, tol, |x| objective(&with(x)).unwrap_or(T::infinity()));
            let cand = with(x);
            if let Some(v) = objective(&cand) {
                if v < cur_val {
                    cur = cand;
                    cur_val = v;
                }
            }
        }
    }

    let mut report = eigen_bound(problem, spec, &cur, b)?;
    report.notes.push(format!(
        "optimized over a {}×{}×{} grid and {} golden-section passes",
        search.grid_a, search.grid_s, search.grid_r, search.golden_passes
    ));
    report.search = Some(SearchSummary {
        grid: [search.grid_a, search.grid_s, search.grid_r],
        evaluated,
        feasible_points,
        golden_passes: search.golden_passes,
        grid_best: (grid_best * b.value.powf(p)).as_f64(),
    });
    Ok(report)
}
