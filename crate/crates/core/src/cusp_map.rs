//! The power map `φ_a : Ω_n → Ω_γ` and the constants it induces.
//!
//! `φ_a(x) = ((x_1/x_n) x_n^{aγ_1}, …, (x_{n−1}/x_n) x_n^{aγ_{n−1}}, x_n^a)`.
//! Its Jacobian is `a x_n^{aγ−n}` and its differential is bounded by
//! `x_n^{a−1} √(Σ(aγ_i−1)² + n−1 + a²)`. Both transfer constants come in a
//! closed form and as a graded quadrature of the defining integral.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::{self, DomainSpec, Interval, ParamError, ProblemParams};
use crate::quadrature::{integrate_power_product, QuadConfig, QuadError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("map exponent must be positive, got {0}")]
    NonPositiveExponent(f64),
    #[error("point {0:?} is not inside the open reference domain")]
    OutsideReference(Vec<f64>),
    #[error("point has {got} coordinates, domain dimension is {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error("s = {s} outside admissible s ∈ {admissible}")]
    SOutOfRange { s: f64, admissible: Interval },
    #[error("np − s(a(α+γ−p)+p) = {value} is not positive")]
    DenominatorNonpositive { value: f64 },
    #[error("need 1 < q < (aγ/n)·r, got q = {q}, (aγ/n)·r = {limit}")]
    InfeasibleQR { q: f64, limit: f64 },
    #[error("quadrature path supports n = 2 only, got n = {0}")]
    UnsupportedDimension(usize),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuspMapping<T> {
    a: T,
    spec: DomainSpec<T>,
}

impl<T: Real> CuspMapping<T> {
    pub fn new(a: T, spec: DomainSpec<T>) -> Result<Self, MapError> {
        if !(a > T::zero()) {
            return Err(MapError::NonPositiveExponent(a.as_f64()));
        }
        Ok(Self { a, spec })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn spec(&self) -> &DomainSpec<T> {
        &self.spec
    }

    fn check_point(&self, x: &[T]) -> Result<(), MapError> {
        let n = self.spec.n();
        if x.len() != n {
            return Err(MapError::PointDimension {
                expected: n,
                got: x.len(),
            });
        }
        let xn = x[n - 1];
        let inside = xn < T::one() && x[..n - 1].iter().all(|&xi| xi > T::zero() && xi < xn);
        if inside {
            Ok(())
        } else {
            Err(MapError::OutsideReference(x.iter().map(|v| v.as_f64()).collect()))
        }
    }

    pub fn map_point(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        self.check_point(x)?;
        let n = self.spec.n();
        let xn = x[n - 1];
        let mut y: Vec<T> = self
            .spec
            .gamma_exps()
            .iter()
            .zip(x)
            .map(|(&g, &xi)| xi / xn * xn.powf(self.a * g))
            .collect();
        y.push(xn.powf(self.a));
        Ok(y)
    }

    pub fn jacobian(&self, x: &[T]) -> Result<T, MapError> {
        self.check_point(x)?;
        let xn = x[self.spec.n() - 1];
        Ok(self.a * xn.powf(self.a * self.spec.gamma() - self.spec.dim()))
    }

    /// `Σ(aγ_i−1)² + n−1 + a²`, the square of the constant in the differential bound.
    pub fn envelope_constant_sq(&self) -> T {
        envelope_constant_sq(self.a, &self.spec)
    }

    pub fn diff_norm_bound(&self, x: &[T]) -> Result<T, MapError> {
        self.check_point(x)?;
        let xn = x[self.spec.n() - 1];
        Ok(xn.powf(self.a - T::one()) * self.envelope_constant_sq().sqrt())
    }

    /// Analytic `Dφ_a(x)`, row-major `n × n`.
    pub fn differential(&self, x: &[T]) -> Result<Vec<T>, MapError> {
        self.check_point(x)?;
        let n = self.spec.n();
        let xn = x[n - 1];
        let mut d = vec![T::zero(); n * n];
        for (i, &g) in self.spec.gamma_exps().iter().enumerate() {
            let ag = self.a * g;
            d[i * n + i] = xn.powf(ag - T::one());
            d[i * n + n - 1] = (ag - T::one()) * x[i] * xn.powf(ag - T::lit(2.0));
        }
        d[n * n - 1] = self.a * xn.powf(self.a - T::one());
        Ok(d)
    }
}

pub fn envelope_constant_sq<T: Real>(a: T, spec: &DomainSpec<T>) -> T {
    let sum: T = spec
        .gamma_exps()
        .iter()
        .map(|&g| (a * g - T::one()).powi(2))
        .sum();
    sum + spec.dim() - T::one() + a * a
}

/// Constants `(c_a, C_a)` with `c_a x_n^{aα} ≤ |φ_a(x)|^α ≤ C_a x_n^{aα}` on `Ω_n`,
/// from `x_n^a ≤ |φ_a(x)| ≤ √n x_n^a`.
pub fn weight_envelope<T: Real>(a: T, alpha: T, n: usize) -> (T, T) {
    debug_assert!(a > T::zero());
    let big = T::from_count(n).powf(alpha / T::lit(2.0));
    if alpha >= T::zero() {
        (T::one(), big)
    } else {
        (big, T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantMethod {
    ClosedForm,
    Quadrature,
}

/// `K_{p,s}` and `M_{r,q}` for one parameter point together with the weight
/// envelope used by the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferConstants<T> {
    pub k_ps: T,
    pub m_rq: T,
    pub c_a: T,
    pub c_a_upper: T,
    pub method: ConstantMethod,
}

/// Validates `(a, s)` for the distortion constant; returns `t(a)`.
///
/// Only integrability is required (`1 < s < min{p, t(a)}`), so exponents at the
/// lower end of the map range, e.g. the identity on `Ω_2` with `α = 0`, are
/// accepted.
fn check_kps_inputs<T: Real>(
    a: T,
    s: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
) -> Result<T, MapError> {
    let (p, alpha) = (params.p, params.alpha);
    let n = spec.dim();
    let ap = Interval::new(-n.as_f64(), (n * (p - T::one())).as_f64());
    if !ap.contains(alpha.as_f64()) {
        return Err(ParamError::AlphaOutOfRange {
            alpha: alpha.as_f64(),
            admissible: ap,
        }
        .into());
    }
    param::check_p(spec, p, alpha)?;
    if !(a > T::zero()) {
        return Err(MapError::NonPositiveExponent(a.as_f64()));
    }
    let t = param::transfer_exponent(a, p, alpha, spec);
    if !(s > T::one() && s < t && s < p) {
        return Err(MapError::SOutOfRange {
            s: s.as_f64(),
            admissible: Interval::new(1.0, t.min(p).as_f64()),
        });
    }
    let denom = n * p - s * (a * (alpha + spec.gamma() - p) + p);
    if !(denom > T::zero()) {
        return Err(MapError::DenominatorNonpositive {
            value: denom.as_f64(),
        });
    }
    Ok(t)
}

/// Closed-form upper bound on `K_{p,s}(φ_a; Ω_n)`.
pub fn kps_closed_form<T: Real>(
    a: T,
    s: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
) -> Result<T, MapError> {
    check_kps_inputs(a, s, params, spec)?;
    let (p, alpha) = (params.p, params.alpha);
    let n = spec.dim();
    let (c_a, _) = weight_envelope(a, alpha, spec.n());
    let lead = envelope_constant_sq(a, spec).sqrt() / (a * c_a).powf(p.recip());
    let denom = n * p - s * (a * (alpha + spec.gamma() - p) + p);
    Ok(lead * ((p - s) / denom).powf((p - s) / (p * s)))
}

/// The simplified distortion bound `√(Σ(aγ_i−1)²+n−1+a²)/(a c_a)^{1/p}`, valid
/// when `s < (n−1)p/(a(α+γ−p)+p+1)`; `None` outside that range.
pub fn kps_simplified<T: Real>(
    a: T,
    s: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
) -> Option<T> {
    let (p, alpha) = (params.p, params.alpha);
    let limit = (spec.dim() - T::one()) * p / (a * (alpha + spec.gamma() - p) + p + T::one());
    if s < limit {
        let (c_a, _) = weight_envelope(a, alpha, spec.n());
        Some(envelope_constant_sq(a, spec).sqrt() / (a * c_a).powf(p.recip()))
    } else {
        None
    }
}

/// Quadrature of the defining integral of `K_{p,s}` with the exact weight
/// `|φ_a(x)|^α` and the differential envelope in the numerator. Planar only.
pub fn kps_quadrature<T: Real>(
    a: T,
    s: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
    cfg: &QuadConfig,
) -> Result<T, MapError> {
    if spec.n() != 2 {
        return Err(MapError::UnsupportedDimension(spec.n()));
    }
    check_kps_inputs(a, s, params, spec)?;
    let (p, alpha) = (params.p, params.alpha);
    let map = CuspMapping::new(a, spec.clone())?;
    let expo = s / (p - s);
    // leading power of the integrand at the cusp, including dx_1 = x_2 dt
    let lead = expo * (p * (a - T::one()) - (a * spec.gamma() - T::lit(2.0)) - a * alpha);
    let beta = lead + T::one();
    if !(beta > -T::one()) {
        return Err(QuadError::NonintegrableSingularity { beta: beta.as_f64() }.into());
    }
    let g = |t: T, x2: T| -> T {
        let pt = [t * x2, x2];
        let (Ok(env), Ok(jac), Ok(y)) = (
            map.diff_norm_bound(&pt),
            map.jacobian(&pt),
            map.map_point(&pt),
        ) else {
            return T::nan();
        };
        let ln_y = (y[0] * y[0] + y[1] * y[1]).sqrt().ln();
        let ln_full = expo * (p * env.ln() - jac.ln() - alpha * ln_y) + x2.ln();
        (ln_full - beta * x2.ln()).exp()
    };
    let r = integrate_power_product(beta, g, cfg)?;
    Ok(r.value.powf((p - s) / (p * s)))
}

fn check_qr<T: Real>(a: T, r: T, q: T, spec: &DomainSpec<T>) -> Result<(), MapError> {
    if !(a > T::zero()) {
        return Err(MapError::NonPositiveExponent(a.as_f64()));
    }
    let limit = a * spec.gamma() / spec.dim() * r;
    if q > T::one() && q < limit {
        Ok(())
    } else {
        Err(MapError::InfeasibleQR {
            q: q.as_f64(),
            limit: limit.as_f64(),
        })
    }
}

/// `M_{r,q} = a^{1/q} ((r−q)/(aγr − nq))^{(r−q)/(rq)}`.
pub fn mrq_closed_form<T: Real>(a: T, r: T, q: T, spec: &DomainSpec<T>) -> Result<T, MapError> {
    check_qr(a, r, q, spec)?;
    let base = (r - q) / (a * spec.gamma() * r - spec.dim() * q);
    Ok(a.powf(q.recip()) * base.powf((r - q) / (r * q)))
}

/// `(∫_{Ω_2} J(x, φ_a)^{r/(r−q)} dx)^{(r−q)/(rq)}` by graded quadrature.
pub fn mrq_quadrature<T: Real>(
    a: T,
    r: T,
    q: T,
    spec: &DomainSpec<T>,
    cfg: &QuadConfig,
) -> Result<T, MapError> {
    if spec.n() != 2 {
        return Err(MapError::UnsupportedDimension(spec.n()));
    }
    check_qr(a, r, q, spec)?;
    let map = CuspMapping::new(a, spec.clone())?;
    let expo = r / (r - q);
    let beta = expo * (a * spec.gamma() - T::lit(2.0)) + T::one();
    let g = |t: T, x2: T| -> T {
        match map.jacobian(&[t * x2, x2]) {
            Ok(j) => (expo * j.ln() + x2.ln() - beta * x2.ln()).exp(),
            Err(_) => T::nan(),
        }
    };
    let r_int = integrate_power_product(beta, g, cfg)?;
    Ok(r_int.value.powf((r - q) / (r * q)))
}

/// Closed-form or quadrature constants for one `(a, s, r)` point.
pub fn transfer_constants<T: Real>(
    a: T,
    s: T,
    r: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
    method: ConstantMethod,
    cfg: &QuadConfig,
) -> Result<TransferConstants<T>, MapError> {
    let (c_a, c_a_upper) = weight_envelope(a, params.alpha, spec.n());
    let (k_ps, m_rq) = match method {
        ConstantMethod::ClosedForm => (
            kps_closed_form(a, s, params, spec)?,
            mrq_closed_form(a, r, params.q, spec)?,
        ),
        ConstantMethod::Quadrature => (
            kps_quadrature(a, s, params, spec, cfg)?,
            mrq_quadrature(a, r, params.q, spec, cfg)?,
        ),
    };
    Ok(TransferConstants {
        k_ps,
        m_rq,
        c_a,
        c_a_upper,
        method,
    })
}

/// A `C¹` test function on the planar cusp domain.
pub trait TestFunction<T>: Sync {
    fn value(&self, y: [T; 2]) -> T;
    fn gradient(&self, y: [T; 2]) -> [T; 2];
}

/// `Σ c_{ij} y_1^i y_2^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial2<T> {
    pub terms: Vec<(u32, u32, T)>,
}

impl<T: Real> Polynomial2<T> {
    pub fn new(terms: Vec<(u32, u32, T)>) -> Self {
        Self { terms }
    }
}

impl<T: Real> TestFunction<T> for Polynomial2<T> {
    fn value(&self, y: [T; 2]) -> T {
        self.terms
            .iter()
            .map(|&(i, j, c)| c * y[0].powi(i as i32) * y[1].powi(j as i32))
            .sum()
    }

    fn gradient(&self, y: [T; 2]) -> [T; 2] {
        let mut g = [T::zero(); 2];
        for &(i, j, c) in &self.terms {
            if i > 0 {
                g[0] += c * T::from_count(i as usize) * y[0].powi(i as i32 - 1) * y[1].powi(j as i32);
            }
            if j > 0 {
                g[1] += c * T::from_count(j as usize) * y[0].powi(i as i32) * y[1].powi(j as i32 - 1);
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionReport<T> {
    /// `‖∇(f∘φ_a)‖_{L_s(Ω_2)}`
    pub lhs: T,
    /// `K_{p,s} ‖∇f‖_{L_p(Ω_γ, |y|^α)}`
    pub rhs: T,
    pub k_ps: T,
    pub holds: bool,
}

/// Checks `‖∇(f∘φ_a)‖_{L_s} ≤ K_{p,s} ‖∇f‖_{L_p(w)}` by quadrature on both sides.
pub fn composition_inequality_check<T, F>(
    f: &F,
    a: T,
    s: T,
    params: &ProblemParams<T>,
    spec: &DomainSpec<T>,
    cfg: &QuadConfig,
    rel_tol: T,
) -> Result<CompositionReport<T>, MapError>
where
    T: Real,
    F: TestFunction<T>,
{
    if spec.n() != 2 {
        return Err(MapError::UnsupportedDimension(spec.n()));
    }
    let p = params.p;
    let alpha = params.alpha;
    let k_ps = kps_closed_form(a, s, params, spec)?;
    let map = CuspMapping::new(a, spec.clone())?;
    let gamma1 = spec.gamma_exps()[0];

    // lhs over Ω_2 with x_1 = t x_2; |Dφ| ≲ x_2^{a−1}
    let beta_l = (a - T::one()) * s + T::one();
    let g_l = |t: T, x2: T| -> T {
        let x = [t * x2, x2];
        let (Ok(d), Ok(y)) = (map.differential(&x), map.map_point(&x)) else {
            return T::nan();
        };
        let gf = f.gradient([y[0], y[1]]);
        // ∇(f∘φ) = Dφᵀ ∇f(φ)
        let c0 = d[0] * gf[0] + d[2] * gf[1];
        let c1 = d[1] * gf[0] + d[3] * gf[1];
        let norm = (c0 * c0 + c1 * c1).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        (s * norm.ln() + x2.ln() - beta_l * x2.ln()).exp()
    };
    let lhs_int = integrate_power_product(beta_l, g_l, cfg)?.value;

    // rhs over Ω_γ with y_1 = t y_2^{γ_1}; dy = y_2^{γ_1} dt dy_2, |y|^α ≈ y_2^α
    let beta_r = gamma1 + alpha;
    let g_r = |t: T, y2: T| -> T {
        let y1 = t * y2.powf(gamma1);
        let gf = f.gradient([y1, y2]);
        let norm = (gf[0] * gf[0] + gf[1] * gf[1]).sqrt();
        if norm == T::zero() {
            return T::zero();
        }
        let ln_w = alpha * T::lit(0.5) * (y1 * y1 + y2 * y2).ln();
        (p * norm.ln() + ln_w + gamma1 * y2.ln() - beta_r * y2.ln()).exp()
    };
    let rhs_int = integrate_power_product(beta_r, g_r, cfg)?.value;

    let lhs = lhs_int.powf(s.recip());
    let rhs = k_ps * rhs_int.powf(p.recip());
    Ok(CompositionReport {
        lhs,
        rhs,
        k_ps,
        holds: lhs <= rhs * (T::one() + rel_tol),
    })
}
