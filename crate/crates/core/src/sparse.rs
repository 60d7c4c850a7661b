//! Compressed sparse rows on a fixed P1 pattern and Jacobi-preconditioned CG.

use crate::mesh::GradedMesh;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<T>,
}

/// Pattern of the P1 stiffness matrix plus, per triangle, the value slot of
/// every local entry `(i, j)` at `3 i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct P1Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub slots: Vec<[usize; 9]>,
}

impl P1Pattern {
    pub fn new<T: Real>(mesh: &GradedMesh<T>) -> Self {
        let n = mesh.num_vertices();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in &mesh.triangles {
            for &i in tri {
                for &j in tri {
                    adj[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + cols.binary_search(&j).expect("entry in pattern")
        };
        let slots = mesh
            .triangles
            .iter()
            .map(|tri| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = slot(tri[a], tri[b]);
                    }
                }
                s
            })
            .collect();
        Self {
            n,
            row_ptr,
            col_idx,
            slots,
        }
    }

    /// Sum per-triangle 3×3 blocks into a matrix, in triangle order.
    pub fn assemble<T: Real>(&self, blocks: &[[T; 9]]) -> Csr<T> {
        let mut vals = vec![T::zero(); self.col_idx.len()];
        for (slots, block) in self.slots.iter().zip(blocks) {
            for k in 0..9 {
                vals[slots[k]] += block[k];
            }
        }
        Csr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals,
        }
    }
}

impl<T: Real> Csr<T> {
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.col_idx[k] == i)
                    .map_or(T::zero(), |k| self.vals[k])
            })
            .collect()
    }

    pub fn quad_form(&self, x: &[T], y: &[T]) -> T {
        dot(&self.mul(x), y)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.col_idx[k]] += self.vals[k];
            }
        }
        d
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Remove the Euclidean mean so a vector is orthogonal to constants.
pub fn remove_mean<T: Real>(v: &mut [T]) {
    let m = v.iter().copied().sum::<T>() / T::from_count(v.len());
    v.iter_mut().for_each(|x| *x -= m);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome<T> {
    pub iterations: usize,
    pub rel_residual: T,
    pub converged: bool,
}

/// Preconditioned CG for `A x = b`. With `singular = true` the matrix is
/// taken to have the constants as kernel: `b` and the iterates are kept
/// orthogonal to them.
pub fn pcg<T: Real>(
    a: &Csr<T>,
    b: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
    singular: bool,
) -> CgOutcome<T> {
    let n = a.n;
    let mut rhs = b.to_vec();
    if singular {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let diag = a.diagonal();
    let inv: Vec<T> = diag
        .iter()
        .map(|&d| if d > T::zero() { d.recip() } else { T::one() })
        .collect();
    let bnorm = dot(&rhs, &rhs).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return CgOutcome {
            iterations: 0,
            rel_residual: T::zero(),
            converged: true,
        };
    }
    let mut ax = vec![T::zero(); n];
    a.matvec(x, &mut ax);
    let mut r: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &v)| b - v).collect();
    let precond = |r: &[T]| -> Vec<T> {
        let mut z: Vec<T> = r.iter().zip(&inv).map(|(&r, &d)| r * d).collect();
        if singular {
            remove_mean(&mut z);
        }
        z
    };
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut ap = vec![T::zero(); n];
    for it in 0..max_iter {
        if res <= rel_tol {
            return CgOutcome {
                iterations: it,
                rel_residual: res,
                converged: true,
            };
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
    }
    CgOutcome {
        iterations: max_iter,
        rel_residual: res,
        converged: res <= rel_tol,
    }
}
