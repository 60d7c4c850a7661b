//! Domain geometry and exponent admissibility.
//!
//! The cusp domain is `{0 < x_n < 1, 0 < x_i < x_n^{γ_i}}` with `γ_i ≥ 1`; its
//! total sharpness is `γ = 1 + Σ γ_i`. Every interval test in this module is
//! strict: boundary values are rejected with the admissible interval attached.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Relative tolerance for the stored-vs-recomputed `γ` check.
const GAMMA_REL_TOL: f64 = 1e-12;

/// Open interval carried by rejections so callers can print it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", fmt_g(self.lo), fmt_g(self.hi))
    }
}

fn fmt_g(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{:.6}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("dimension n = {0} is not supported (need n >= 2)")]
    Dimension(usize),
    #[error("expected {expected} Hölder exponents, got {got}")]
    ExponentCount { expected: usize, got: usize },
    #[error("Hölder exponent γ_{index} = {value} is below 1")]
    ExponentBelowOne { index: usize, value: f64 },
    #[error("stored γ = {stored} disagrees with 1 + Σγ_i = {recomputed}")]
    GammaMismatch { stored: f64, recomputed: f64 },
    #[error("p = {p} outside admissible p ∈ {admissible}")]
    POutOfRange { p: f64, admissible: Interval },
    #[error("alpha = {alpha} outside admissible alpha ∈ {admissible}")]
    AlphaOutOfRange { alpha: f64, admissible: Interval },
    #[error("q = {q} outside admissible q ∈ {admissible}")]
    QOutOfRange { q: f64, admissible: Interval },
    #[error("empty transfer window (a_lo={a_lo}, a_hi={a_hi})", a_lo = fmt_g(*.a_lo), a_hi = fmt_g(*.a_hi))]
    EmptyWindow { a_lo: f64, a_hi: f64 },
    #[error("map exponent a = {a} outside the transfer window {window}")]
    AOutsideWindow { a: f64, window: Interval },
    #[error("Sobolev exponent undefined: p = {p} >= alpha + gamma = {bound}")]
    SobolevDomain { p: f64, bound: f64 },
}

/// Cusp geometry: dimension and the Hölder exponents of the boundary profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    n: usize,
    gamma_exps: Vec<T>,
    gamma: T,
}

impl<T: Real> DomainSpec<T> {
    pub fn new(n: usize, gamma_exps: Vec<T>) -> Result<Self, ParamError> {
        if n < 2 {
            return Err(ParamError::Dimension(n));
        }
        if gamma_exps.len() != n - 1 {
            return Err(ParamError::ExponentCount {
                expected: n - 1,
                got: gamma_exps.len(),
            });
        }
        let gamma = derive_gamma(&gamma_exps)?;
        Ok(Self {
            n,
            gamma_exps,
            gamma,
        })
    }

    /// Accepts an externally supplied `γ`; it must match the recomputed sum.
    pub fn with_gamma(n: usize, gamma_exps: Vec<T>, gamma: T) -> Result<Self, ParamError> {
        let spec = Self::new(n, gamma_exps)?;
        let tol = T::lit(GAMMA_REL_TOL) * spec.gamma.abs();
        if (gamma - spec.gamma).abs() > tol || gamma.is_nan() {
            return Err(ParamError::GammaMismatch {
                stored: gamma.as_f64(),
                recomputed: spec.gamma.as_f64(),
            });
        }
        Ok(spec)
    }

    /// Planar cusp `{0 < x_1 < x_2^{γ_1}}`.
    pub fn planar(gamma1: T) -> Result<Self, ParamError> {
        Self::new(2, vec![gamma1])
    }

    /// Lipschitz reference domain `Ω_n` (all `γ_i = 1`).
    pub fn reference(n: usize) -> Result<Self, ParamError> {
        Self::new(n, vec![T::one(); n.saturating_sub(1)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> T {
        T::from_count(self.n)
    }

    pub fn gamma_exps(&self) -> &[T] {
        &self.gamma_exps
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn is_lipschitz(&self) -> bool {
        self.gamma_exps.iter().all(|&g| g == T::one())
    }

    /// Lebesgue measure of the domain, `∫_0^1 x_n^{γ-1} dx_n = 1/γ`.
    pub fn volume(&self) -> T {
        T::one() / self.gamma
    }
}

/// `γ = 1 + Σ γ_i`, rejecting exponents below one.
pub fn derive_gamma<T: Real>(gamma_exps: &[T]) -> Result<T, ParamError> {
    for (i, &g) in gamma_exps.iter().enumerate() {
        if !(g >= T::one()) {
            return Err(ParamError::ExponentBelowOne {
                index: i + 1,
                value: g.as_f64(),
            });
        }
    }
    Ok(T::one() + gamma_exps.iter().copied().sum::<T>())
}

/// Weighted Sobolev exponent `p* = γp/(α+γ−p)`.
pub fn sobolev_exponent<T: Real>(spec: &DomainSpec<T>, p: T, alpha: T) -> Result<T, ParamError> {
    let denom = alpha + spec.gamma - p;
    if !(denom > T::zero()) {
        return Err(ParamError::SobolevDomain {
            p: p.as_f64(),
            bound: (alpha + spec.gamma).as_f64(),
        });
    }
    Ok(spec.gamma * p / denom)
}

/// Raw `(p, q, α)` triple, not yet checked against the cusp theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams<T> {
    pub p: T,
    pub q: T,
    pub alpha: T,
}

impl<T: Real> ProblemParams<T> {
    pub fn new(p: T, q: T, alpha: T) -> Self {
        Self { p, q, alpha }
    }

    /// Checks needed for the discrete problem to make sense: `p, q > 1`,
    /// `|x|^α` in the Muckenhoupt class, and `q < p*` whenever `p* ` is finite.
    ///
    /// This is weaker than [`validate_problem`]: the Lipschitz Laplacian
    /// (`p = 2 = γ`, `α = 0`) passes here but not there.
    pub fn check_solvable(&self, spec: &DomainSpec<T>) -> Result<(), ParamError> {
        let n = spec.dim();
        if !(self.p > T::one()) {
            return Err(ParamError::POutOfRange {
                p: self.p.as_f64(),
                admissible: Interval::new(1.0, f64::INFINITY),
            });
        }
        let ap = Interval::new(-n.as_f64(), (n * (self.p - T::one())).as_f64());
        if !ap.contains(self.alpha.as_f64()) {
            return Err(ParamError::AlphaOutOfRange {
                alpha: self.alpha.as_f64(),
                admissible: ap,
            });
        }
        let q_hi = if self.p < self.alpha + spec.gamma {
            sobolev_exponent(spec, self.p, self.alpha)?.as_f64()
        } else {
            f64::INFINITY
        };
        let qi = Interval::new(1.0, q_hi);
        if !qi.contains(self.q.as_f64()) {
            return Err(ParamError::QOutOfRange {
                q: self.q.as_f64(),
                admissible: qi,
            });
        }
        Ok(())
    }
}

/// `(p, q, α)` that satisfies every admissibility chain of the cusp theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidatedProblem<T> {
    p: T,
    q: T,
    alpha: T,
    p_star: T,
}

impl<T: Real> ValidatedProblem<T> {
    pub fn p(&self) -> T {
        self.p
    }
    pub fn q(&self) -> T {
        self.q
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn p_star(&self) -> T {
        self.p_star
    }
    pub fn params(&self) -> ProblemParams<T> {
        ProblemParams::new(self.p, self.q, self.alpha)
    }
}

/// Admissible `p` interval `(1, α+γ)`.
pub fn check_p<T: Real>(spec: &DomainSpec<T>, p: T, alpha: T) -> Result<(), ParamError> {
    let pi = Interval::new(1.0, (alpha + spec.gamma).as_f64());
    if p > T::one() && p < alpha + spec.gamma {
        Ok(())
    } else {
        Err(ParamError::POutOfRange {
            p: p.as_f64(),
            admissible: pi,
        })
    }
}

/// Admissible weight interval `(max{−n, p(n−γ)/n}, n(p−1))`.
pub fn alpha_interval<T: Real>(spec: &DomainSpec<T>, p: T) -> (T, T) {
    let n = spec.dim();
    let lo = (-n).max(p * (n - spec.gamma) / n);
    (lo, n * (p - T::one()))
}

pub fn validate_problem<T: Real>(
    spec: &DomainSpec<T>,
    p: T,
    q: T,
    alpha: T,
) -> Result<ValidatedProblem<T>, ParamError> {
    check_p(spec, p, alpha)?;
    let (a_lo, a_hi) = alpha_interval(spec, p);
    if !(alpha > a_lo && alpha < a_hi) {
        return Err(ParamError::AlphaOutOfRange {
            alpha: alpha.as_f64(),
            admissible: Interval::new(a_lo.as_f64(), a_hi.as_f64()),
        });
    }
    let p_star = sobolev_exponent(spec, p, alpha)?;
    if !(q > T::one() && q < p_star) {
        return Err(ParamError::QOutOfRange {
            q: q.as_f64(),
            admissible: Interval::new(1.0, p_star.as_f64()),
        });
    }
    Ok(ValidatedProblem {
        p,
        q,
        alpha,
        p_star,
    })
}

/// Interval of map exponents `a` for which `φ_a` transfers the weighted
/// Sobolev structure with finite constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferWindow<T> {
    pub a_lo: T,
    pub a_hi: T,
}

impl<T: Real> TransferWindow<T> {
    /// Window from `(p, α)` alone; needs only `p < α + γ`.
    pub fn from_exponents(spec: &DomainSpec<T>, p: T, alpha: T) -> Result<Self, ParamError> {
        check_p(spec, p, alpha)?;
        let n = spec.dim();
        let excess = alpha + spec.gamma - p;
        let a_lo = T::zero().max((n - p) / excess);
        let a_hi = (n / spec.gamma).min(p * (n - T::one()) / excess);
        let w = Self { a_lo, a_hi };
        if w.is_empty() {
            Err(ParamError::EmptyWindow {
                a_lo: a_lo.as_f64(),
                a_hi: a_hi.as_f64(),
            })
        } else {
            Ok(w)
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.a_lo < self.a_hi)
    }

    pub fn contains(&self, a: T) -> bool {
        self.a_lo < a && a < self.a_hi
    }

    pub fn width(&self) -> T {
        self.a_hi - self.a_lo
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.a_lo.as_f64(), self.a_hi.as_f64())
    }
}

pub fn transfer_window<T: Real>(
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
) -> Result<TransferWindow<T>, ParamError> {
    TransferWindow::from_exponents(spec, problem.p, problem.alpha)
}

/// Exponents `a` for which `φ_a` has a finite distortion constant `K_{p,s}`:
/// `(max{0, (n−p)/(α+γ−p)}, p(n−1)/(α+γ−p))`. The transfer window further
/// caps this at `n/γ`.
pub fn map_exponent_range<T: Real>(
    spec: &DomainSpec<T>,
    p: T,
    alpha: T,
) -> Result<(T, T), ParamError> {
    check_p(spec, p, alpha)?;
    let n = spec.dim();
    let excess = alpha + spec.gamma - p;
    Ok((
        T::zero().max((n - p) / excess),
        p * (n - T::one()) / excess,
    ))
}

/// `t(a) = np/(a(α+γ−p)+p)` with no window check.
pub fn transfer_exponent<T: Real>(a: T, p: T, alpha: T, spec: &DomainSpec<T>) -> T {
    let n = spec.dim();
    n * p / (a * (alpha + spec.gamma - p) + p)
}

/// Upper limit `t` for the Sobolev exponent `s` at map exponent `a`.
pub fn s_upper<T: Real>(
    a: T,
    problem: &ValidatedProblem<T>,
    spec: &DomainSpec<T>,
) -> Result<T, ParamError> {
    let window = transfer_window(problem, spec)?;
    if !window.contains(a) {
        return Err(ParamError::AOutsideWindow {
            a: a.as_f64(),
            window: window.interval(),
        });
    }
    let t = transfer_exponent(a, problem.p, problem.alpha, spec);
    debug_assert!(t > T::one() && t < problem.p.min(spec.dim()));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn planar(g: f64) -> DomainSpec<f64> {
        DomainSpec::planar(g).unwrap()
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(planar(1.0).gamma(), 2.0);
        assert_eq!(planar(2.0).gamma(), 3.0);
        let s = DomainSpec::new(3, vec![2.0, 2.0]).unwrap();
        assert_eq!(s.gamma(), 5.0);
        assert!(planar(1.0).is_lipschitz());
    }

    #[test]
    fn gamma_rejects_sub_unit_exponent() {
        assert!(matches!(
            DomainSpec::planar(0.5),
            Err(ParamError::ExponentBelowOne { index: 1, .. })
        ));
        assert!(matches!(
            DomainSpec::<f64>::new(3, vec![1.0]),
            Err(ParamError::ExponentCount { .. })
        ));
        assert!(matches!(
            DomainSpec::<f64>::new(1, vec![]),
            Err(ParamError::Dimension(1))
        ));
    }

    #[test]
    fn gamma_mismatch_detected() {
        assert!(DomainSpec::with_gamma(2, vec![2.0], 3.0).is_ok());
        assert!(DomainSpec::with_gamma(2, vec![2.0], 3.0 * (1.0 + 1e-13)).is_ok());
        assert!(matches!(
            DomainSpec::with_gamma(2, vec![2.0], 3.0 + 1e-9),
            Err(ParamError::GammaMismatch { .. })
        ));
    }

    #[test]
    fn sobolev_examples() {
        assert_relative_eq!(sobolev_exponent(&planar(2.0), 2.0, 0.0).unwrap(), 6.0);
        assert_relative_eq!(sobolev_exponent(&planar(1.0), 1.5, 0.0).unwrap(), 6.0);
        // Lipschitz case reduces to np/(n−p).
        let s3 = DomainSpec::<f64>::reference(3).unwrap();
        assert_relative_eq!(sobolev_exponent(&s3, 2.0, 0.0).unwrap(), 6.0);
        assert!(sobolev_exponent(&planar(1.0), 2.0, 0.0).is_err());
    }

    #[test]
    fn validate_examples() {
        let v = validate_problem(&planar(2.0), 2.0, 2.0, 0.0).unwrap();
        assert_relative_eq!(v.p_star(), 6.0);

        match validate_problem(&planar(1.0), 2.0, 2.0, 0.0) {
            Err(ParamError::POutOfRange { admissible, .. }) => {
                assert_eq!(admissible, Interval::new(1.0, 2.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        match validate_problem(&planar(2.0), 2.0, 7.0, 0.0) {
            Err(e @ ParamError::QOutOfRange { .. }) => {
                assert_eq!(e.to_string(), "q = 7 outside admissible q ∈ (1, 6)");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            validate_problem(&planar(2.0), 2.0, 2.0, 2.0),
            Err(ParamError::AlphaOutOfRange { .. })
        ));
        // boundary values are rejected
        assert!(validate_problem(&planar(2.0), 2.0, 6.0, 0.0).is_err());
        assert!(validate_problem(&planar(2.0), 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn window_examples() {
        let s = planar(2.0);
        let v = validate_problem(&s, 2.0, 2.0, 0.0).unwrap();
        let w = transfer_window(&v, &s).unwrap();
        assert_eq!(w.a_lo, 0.0);
        assert_relative_eq!(w.a_hi, 2.0 / 3.0);

        let v = validate_problem(&s, 2.5, 2.0, 0.0).unwrap();
        let w = transfer_window(&v, &s).unwrap();
        assert_eq!(w.a_lo, 0.0);
        assert_relative_eq!(w.a_hi, 2.0 / 3.0);

        match TransferWindow::from_exponents(&planar(1.0), 1.5, 0.0) {
            Err(e @ ParamError::EmptyWindow { a_lo, a_hi }) => {
                assert_eq!((a_lo, a_hi), (1.0, 1.0));
                assert_eq!(e.to_string(), "empty transfer window (a_lo=1, a_hi=1)");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn s_upper_examples() {
        let s = planar(2.0);
        let v = validate_problem(&s, 2.0, 2.0, 0.0).unwrap();
        assert_relative_eq!(s_upper(0.5, &v, &s).unwrap(), 1.6);
        let v = validate_problem(&s, 2.0, 2.0, 0.5).unwrap();
        assert_relative_eq!(s_upper(0.5, &v, &s).unwrap(), 4.0 / 2.75);
        assert!(matches!(
            s_upper(0.9, &v, &s),
            Err(ParamError::AOutsideWindow { .. })
        ));
        // at a_lo > 0 the exponent collapses to p
        let s = planar(1.5);
        let (p, alpha) = (1.5, 0.2);
        let w = TransferWindow::from_exponents(&s, p, alpha).unwrap();
        assert!(w.a_lo > 0.0);
        assert_relative_eq!(transfer_exponent(w.a_lo, p, alpha, &s), p, epsilon = 1e-14);
    }

    #[test]
    fn solvable_admits_lipschitz_laplacian() {
        let s = planar(1.0);
        assert!(ProblemParams::new(2.0, 2.0, 0.0).check_solvable(&s).is_ok());
        assert!(ProblemParams::new(2.0, 2.0, -2.0).check_solvable(&s).is_err());
        assert!(ProblemParams::new(1.5, 7.0, 0.0).check_solvable(&s).is_err());
    }
}
