//! Graded triangulations of the planar cusp `{0 < x_2 < 1, 0 < x_1 < x_2^{γ_1}}`.
//!
//! Rows of vertices sit on the levels `x_2 = (j/N)^κ`. Row `j` spans
//! `[0, σ·x_2^{γ_1}]` with `m_j = ⌈width_j / Δx_2⌉` equal cells, and adjacent
//! rows are stitched by a left-to-right merge. The right boundary is the chord
//! polygon through the curve scaled horizontally by a single factor `σ ≤ 1`
//! chosen so the mesh area equals the exact area `1/(γ_1+1)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
    #[error("triangle {index} has non-positive area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("integrand is not finite at ({x1}, {x2})")]
    NonfiniteIntegrand { x1: f64, x2: f64 },
    #[error("mesh text parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag<T> {
    Cusp { gamma1: T },
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradedMesh<T> {
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub kappa: T,
    pub level: usize,
    pub domain: DomainTag<T>,
}

/// Affine element data: area and the constant gradients of the three hat functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry<T> {
    pub area: T,
    pub grads: [[T; 2]; 3],
}

fn check_params<T: Real>(gamma1: T, n: usize, kappa: T) -> Result<(), MeshError> {
    if !(gamma1 >= T::one()) || !gamma1.is_finite() {
        return Err(MeshError::InvalidParameters(format!("gamma1 = {gamma1} < 1")));
    }
    if n < 2 {
        return Err(MeshError::InvalidParameters(format!("N = {n} < 2")));
    }
    if !(kappa >= T::one()) || !kappa.is_finite() {
        return Err(MeshError::InvalidParameters(format!("kappa = {kappa} < 1")));
    }
    Ok(())
}

/// Default grading exponent `max(1, γ_1)`.
pub fn default_kappa<T: Real>(gamma1: T) -> T {
    gamma1.max(T::one())
}

fn graded_levels<T: Real>(n: usize, kappa: T) -> Vec<T> {
    let nf = T::from_count(n);
    (0..=n)
        .map(|j| {
            if j == n {
                T::one()
            } else {
                (T::from_count(j) / nf).powf(kappa)
            }
        })
        .collect()
}

/// Area of the chord polygon through `(x_2^{γ_1}, x_2)` at the given levels.
fn chord_area<T: Real>(levels: &[T], gamma1: T) -> T {
    levels
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[0].powf(gamma1) + w[1].powf(gamma1)) * T::lit(0.5))
        .sum()
}

pub fn build_cusp_mesh<T: Real>(gamma1: T, n: usize, kappa: T) -> Result<GradedMesh<T>, MeshError> {
    check_params(gamma1, n, kappa)?;
    let levels = graded_levels(n, kappa);
    let exact = T::one() / (gamma1 + T::one());
    let scale = if gamma1 == T::one() {
        T::one()
    } else {
        exact / chord_area(&levels, gamma1)
    };

    let mut vertices: Vec<[T; 2]> = vec![[T::zero(), T::zero()]];
    let mut rows: Vec<std::ops::Range<usize>> = vec![0..1];
    for j in 1..=n {
        let y = levels[j];
        let width = scale * y.powf(gamma1);
        let dy = levels[j] - levels[j - 1];
        let ratio = (y.powf(gamma1) / dy).as_f64();
        let cells = ((ratio - 1e-9).ceil() as usize).max(1);
        let start = vertices.len();
        for i in 0..=cells {
            let x = if i == cells {
                width
            } else {
                width * T::from_count(i) / T::from_count(cells)
            };
            vertices.push([x, y]);
        }
        rows.push(start..vertices.len());
    }

    let mut triangles = Vec::new();
    for j in 1..=n {
        stitch_rows(&vertices, rows[j - 1].clone(), rows[j].clone(), &mut triangles);
    }

    let domain = if gamma1 == T::one() {
        DomainTag::Reference
    } else {
        DomainTag::Cusp { gamma1 }
    };
    let mesh = GradedMesh {
        vertices,
        triangles,
        kappa,
        level: n,
        domain,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Triangulation of the reference triangle `Ω_2 = {0 < x_1 < x_2 < 1}`.
pub fn build_reference_mesh<T: Real>(n: usize, kappa: T) -> Result<GradedMesh<T>, MeshError> {
    build_cusp_mesh(T::one(), n, kappa)
}

/// Merge two vertex rows left to right; on ties the upper row advances first.
fn stitch_rows<T: Real>(
    vertices: &[[T; 2]],
    lower: std::ops::Range<usize>,
    upper: std::ops::Range<usize>,
    out: &mut Vec<[usize; 3]>,
) {
    let (mut b, mut t) = (lower.start, upper.start);
    loop {
        let can_b = b + 1 < lower.end;
        let can_t = t + 1 < upper.end;
        let advance_top = match (can_b, can_t) {
            (false, false) => break,
            (false, true) => true,
            (true, false) => false,
            (true, true) => vertices[t + 1][0] <= vertices[b + 1][0],
        };
        if advance_top {
            out.push([b, t + 1, t]);
            t += 1;
        } else {
            out.push([b, b + 1, t]);
            b += 1;
        }
    }
}

impl<T: Real> GradedMesh<T> {
    pub fn gamma1(&self) -> T {
        match self.domain {
            DomainTag::Cusp { gamma1 } => gamma1,
            DomainTag::Reference => T::one(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) * T::lit(0.5)
    }

    pub fn element(&self, t: usize) -> ElementGeometry<T> {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        // ∇λ_i = rot90(opposite edge) / det
        let grad = |p: [T; 2], q: [T; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        ElementGeometry {
            area: det * T::lit(0.5),
            grads: [grad(b, c), grad(c, a), grad(a, b)],
        }
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Exact area `1/(γ_1+1)` of the continuous domain.
    pub fn exact_area(&self) -> T {
        T::one() / (self.gamma1() + T::one())
    }

    /// Relative excess of the unscaled chord polygon over the exact area.
    /// Shrinks like `h²` under refinement; zero on the reference triangle.
    pub fn polygon_gap(&self) -> T {
        if self.gamma1() == T::one() {
            return T::zero();
        }
        let levels = graded_levels(self.level, self.kappa);
        let chord = chord_area(&levels, self.gamma1());
        (chord - self.exact_area()) / self.exact_area()
    }

    pub fn diameter(&self) -> T {
        let mut d2 = T::zero();
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                d2 = d2.max(dx * dx + dy * dy);
            }
        }
        d2.sqrt()
    }

    /// Positive areas and edge-manifoldness; returns the number of boundary edges.
    pub fn validate(&self) -> Result<usize, MeshError> {
        for t in 0..self.triangles.len() {
            let a = self.signed_area(t);
            if !(a > T::zero()) {
                return Err(MeshError::DegenerateTriangle {
                    index: t,
                    area: a.as_f64(),
                });
            }
        }
        let counts = self.edge_counts();
        let mut boundary = 0;
        for (&(i, j), &c) in &counts {
            match c {
                1 => boundary += 1,
                2 => {}
                _ => return Err(MeshError::NonManifoldEdge(i, j)),
            }
        }
        Ok(boundary)
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((i.min(j), i.max(j))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges used by exactly one triangle, sorted.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .edge_counts()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        e.sort_unstable();
        e
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "vertices {} triangles {} gamma {:.16e} kappa {:.16e}",
            self.vertices.len(),
            self.triangles.len(),
            self.gamma1().as_f64(),
            self.kappa.as_f64()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", v[0].as_f64(), v[1].as_f64());
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let perr = |line: usize, msg: &str| MeshError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 8 || h[0] != "vertices" || h[2] != "triangles" || h[4] != "gamma" || h[6] != "kappa" {
            return Err(perr(1, "bad header"));
        }
        let nv: usize = h[1].parse().map_err(|_| perr(1, "vertex count"))?;
        let nt: usize = h[3].parse().map_err(|_| perr(1, "triangle count"))?;
        let gamma: f64 = h[5].parse().map_err(|_| perr(1, "gamma"))?;
        let kappa: f64 = h[7].parse().map_err(|_| perr(1, "kappa"))?;

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing vertex line"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| perr(ln + 1, "vertex coordinates"))?;
            if v.len() != 2 {
                return Err(perr(ln + 1, "expected two coordinates"));
            }
            vertices.push([T::lit(v[0]), T::lit(v[1])]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| perr(0, "missing triangle line"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| perr(ln + 1, "triangle indices"))?;
            if v.len() != 3 || v.iter().any(|&i| i >= nv) {
                return Err(perr(ln + 1, "expected three valid vertex indices"));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        if let Some((ln, l)) = lines.next() {
            if !l.trim().is_empty() {
                return Err(perr(ln + 1, "trailing data"));
            }
        }
        let mut ys: Vec<f64> = vertices.iter().map(|v| v[1].as_f64()).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        let gamma1 = T::lit(gamma);
        Ok(Self {
            vertices,
            triangles,
            kappa: T::lit(kappa),
            level: ys.len().saturating_sub(1),
            domain: if gamma == 1.0 {
                DomainTag::Reference
            } else {
                DomainTag::Cusp { gamma1 }
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshQuality<T> {
    /// Smallest interior angle, degrees.
    pub min_angle: T,
    /// Largest ratio of longest edge to shortest altitude.
    pub max_aspect: T,
    pub h_min: T,
    pub h_max: T,
}

pub fn mesh_quality<T: Real>(mesh: &GradedMesh<T>) -> MeshQuality<T> {
    let mut q = MeshQuality {
        min_angle: T::lit(180.0),
        max_aspect: T::zero(),
        h_min: T::infinity(),
        h_max: T::zero(),
    };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|i| mesh.vertices[i]);
        let len = |a: [T; 2], b: [T; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let e = [len(p[1], p[2]), len(p[2], p[0]), len(p[0], p[1])];
        for k in 0..3 {
            let (a, b, c) = (e[k], e[(k + 1) % 3], e[(k + 2) % 3]);
            // law of cosines for the angle opposite edge a
            let cos = ((b * b + c * c - a * a) / (T::lit(2.0) * b * c))
                .max(-T::one())
                .min(T::one());
            q.min_angle = q.min_angle.min(cos.acos().to_degrees());
        }
        let longest = e[0].max(e[1]).max(e[2]);
        let area = mesh.signed_area(t);
        let altitude = T::lit(2.0) * area / longest;
        q.max_aspect = q.max_aspect.max(longest / altitude);
        for &l in &e {
            q.h_min = q.h_min.min(l);
            q.h_max = q.h_max.max(l);
        }
    }
    q
}

/// Interior quadrature rule on the reference triangle, barycentric points.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    pub points: Vec<[T; 3]>,
    /// Weights relative to the triangle area; they sum to one.
    pub weights: Vec<T>,
    pub order: usize,
}

impl<T: Real> QuadratureRule<T> {
    /// Symmetric 3-point rule, exact for quadratics.
    pub fn order2() -> Self {
        let a = T::lit(2.0 / 3.0);
        let b = T::lit(1.0 / 6.0);
        let w = T::lit(1.0 / 3.0);
        Self {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![w, w, w],
            order: 2,
        }
    }

    /// Six-point symmetric rule, exact for quartics.
    pub fn order4() -> Self {
        let a1 = 0.445_948_490_915_965;
        let w1 = 0.223_381_589_678_011;
        let a2 = 0.091_576_213_509_771;
        let w2 = 0.109_951_743_655_322;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (a, w) in [(a1, w1), (a2, w2)] {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a], [a, b, a], [a, a, b]] {
                points.push(p.map(T::lit));
                weights.push(T::lit(w));
            }
        }
        Self {
            points,
            weights,
            order: 4,
        }
    }

    /// Physical quadrature points of triangle `t`.
    pub fn map_points(&self, mesh: &GradedMesh<T>, t: usize) -> Vec<[T; 2]> {
        let v = mesh.triangles[t].map(|i| mesh.vertices[i]);
        self.points
            .iter()
            .map(|l| {
                [
                    l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
                    l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
                ]
            })
            .collect()
    }
}

/// `∫ f` over the mesh, evaluated per triangle in parallel and summed in
/// triangle order.
pub fn integrate<T, F>(mesh: &GradedMesh<T>, rule: &QuadratureRule<T>, f: F) -> Result<T, MeshError>
where
    T: Real,
    F: Fn([T; 2]) -> T + Sync,
{
    let parts: Vec<Result<T, MeshError>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let area = mesh.signed_area(t);
            let mut acc = T::zero();
            for (x, &w) in rule.map_points(mesh, t).into_iter().zip(&rule.weights) {
                let v = f(x);
                if !v.is_finite() {
                    return Err(MeshError::NonfiniteIntegrand {
                        x1: x[0].as_f64(),
                        x2: x[1].as_f64(),
                    });
                }
                acc += w * v;
            }
            Ok(acc * area)
        })
        .collect();
    let mut total = T::zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// `∫ u_h` for a nodal (piecewise-linear) function.
pub fn integrate_nodal<T: Real>(
    mesh: &GradedMesh<T>,
    rule: &QuadratureRule<T>,
    values: &[T],
) -> Result<T, MeshError> {
    assert_eq!(values.len(), mesh.vertices.len());
    let parts: Vec<Result<T, MeshError>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangles[t];
            let area = mesh.signed_area(t);
            let mut acc = T::zero();
            for (l, &w) in rule.points.iter().zip(&rule.weights) {
                let v = l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]];
                if !v.is_finite() {
                    return Err(MeshError::NonfiniteIntegrand {
                        x1: f64::NAN,
                        x2: f64::NAN,
                    });
                }
                acc += w * v;
            }
            Ok(acc * area)
        })
        .collect();
    let mut total = T::zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}
