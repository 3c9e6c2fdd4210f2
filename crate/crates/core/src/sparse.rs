//! Compressed sparse row matrices and a preconditioned conjugate gradient
//! solver for the symmetric positive definite systems of each implicit step.

use crate::error::{Error, Result};

/// Sparsity structure shared by every operator assembled on one mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrPattern {
    pub row_ptr: Vec<usize>,
    /// Column indices, sorted within each row.
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (duplicates removed).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        CsrPattern { row_ptr, col_idx }
    }

    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of entry `(i, j)` in the value array.
    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|k| a + k)
    }

    /// Pattern of the block matrix where every scalar entry becomes a dense
    /// `m×m` block; unknown `(node, c)` maps to `node*m + c`.
    pub fn blocked(&self, m: usize) -> Self {
        let n = self.size();
        let rows = (0..n * m)
            .map(|r| {
                let i = r / m;
                self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .flat_map(|&j| (0..m).map(move |c| j * m + c))
                    .collect()
            })
            .collect();
        CsrPattern::from_rows(rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub pattern: std::sync::Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: std::sync::Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn size(&self) -> usize {
        self.pattern.size()
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        (&self.pattern.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .pattern
            .slot(i, j)
            .expect("entry outside sparsity pattern");
        self.values[s] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * x[j];
            }
            *yi = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                s += v * y[j];
            }
            acc += xi * s;
        }
        acc
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.size() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces the rows and columns of `fixed` unknowns by the identity.
    ///
    /// For every free row `i` the removed entries `A_ij`, `j` fixed, are moved
    /// to the right-hand side as `b_i −= A_ij g_j`; fixed rows get `b_j = g_j`.
    /// The result stays symmetric.
    pub fn constrain(&mut self, fixed: &[bool], values: &[f64], rhs: &mut [f64]) {
        for i in 0..self.size() {
            let (a, b) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
            if fixed[i] {
                for k in a..b {
                    self.values[k] = if self.pattern.col_idx[k] == i {
                        1.0
                    } else {
                        0.0
                    };
                }
                rhs[i] = values[i];
            } else {
                for k in a..b {
                    let j = self.pattern.col_idx[k];
                    if fixed[j] {
                        rhs[i] -= self.values[k] * values[j];
                        self.values[k] = 0.0;
                    }
                }
            }
        }
    }
}

/// Preconditioner for [`pcg`].
#[derive(Clone, Debug)]
pub enum Preconditioner {
    Jacobi(Vec<f64>),
    /// Incomplete Cholesky factor on the lower-triangular part of the pattern.
    IncompleteCholesky {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

impl Preconditioner {
    pub fn jacobi(a: &CsrMatrix) -> Result<Self> {
        let d = a.diagonal();
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonSpd(format!(
                "non-positive diagonal {v:e} at row {i}"
            )));
        }
        Ok(Preconditioner::Jacobi(d.iter().map(|v| 1.0 / v).collect()))
    }

    /// IC(0); falls back to Jacobi when a pivot breaks down.
    pub fn incomplete_cholesky(a: &CsrMatrix) -> Result<Self> {
        let n = a.size();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        for i in 0..n {
            let (ra, rb) = (row_ptr[i], row_ptr[i + 1]);
            for kk in ra..rb {
                let k = col_idx[kk];
                // Σ_{j<k} L_ij L_kj by merging rows i and k.
                let (ka, kb) = (row_ptr[k], row_ptr[k + 1]);
                let (mut p, mut q) = (ra, ka);
                let mut s = 0.0;
                while p < kk && q < kb {
                    let (cp, cq) = (col_idx[p], col_idx[q]);
                    if cq >= k {
                        break;
                    }
                    match cp.cmp(&cq) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            s += values[p] * values[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                if k < i {
                    let pivot = values[kb - 1];
                    values[kk] = (values[kk] - s) / pivot;
                } else {
                    let d = values[kk] - s;
                    if !(d > 0.0) {
                        return Self::jacobi(a);
                    }
                    values[kk] = d.sqrt();
                }
            }
        }
        Ok(Preconditioner::IncompleteCholesky {
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Preconditioner::IncompleteCholesky {
                row_ptr,
                col_idx,
                values,
            } => {
                let n = r.len();
                for i in 0..n {
                    let (a, b) = (row_ptr[i], row_ptr[i + 1]);
                    let mut s = r[i];
                    for k in a..b - 1 {
                        s -= values[k] * z[col_idx[k]];
                    }
                    z[i] = s / values[b - 1];
                }
                for i in (0..n).rev() {
                    let (a, b) = (row_ptr[i], row_ptr[i + 1]);
                    z[i] /= values[b - 1];
                    let zi = z[i];
                    for k in a..b - 1 {
                        z[col_idx[k]] -= values[k] * zi;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖` (0 for `b = 0`).
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients from the initial guess in `x`.
///
/// Stops when `‖b − Ax‖ ≤ tol·‖b‖`. Nonpositive curvature `pᵀAp ≤ 0` is
/// reported as [`Error::NonSpd`].
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    prec: &Preconditioner,
    tol: f64,
    max_iter: usize,
) -> Result<CgStats> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol * bnorm;
    let mut rnorm = dot(&r, &r).sqrt();
    let mut it = 0;
    while rnorm > target {
        if it == max_iter {
            return Err(Error::ConvergenceFailure(format!(
                "CG reached {max_iter} iterations at relative residual {:e}",
                rnorm / bnorm
            )));
        }
        a.matvec(&p, &mut q);
        let curv = dot(&p, &q);
        if !(curv > 0.0) {
            return Err(Error::NonSpd(format!(
                "non-positive curvature {curv:e} in CG"
            )));
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rnorm = dot(&r, &r).sqrt();
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    Ok(CgStats {
        iterations: it,
        relative_residual: rnorm / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        let mut a = CsrMatrix::zeros(Arc::new(CsrPattern::from_rows(rows)));
        for i in 0..n {
            a.add_at(i, i, 2.0);
            if i > 0 {
                a.add_at(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add_at(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn ic0_is_exact_for_tridiagonal() {
        let a = laplace_1d(20);
        let prec = Preconditioner::incomplete_cholesky(&a).unwrap();
        assert!(matches!(prec, Preconditioner::IncompleteCholesky { .. }));
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 20];
        let stats = pcg(&a, &b, &mut x, &prec, 1e-14, 100).unwrap();
        assert!(stats.iterations <= 2, "{stats:?}");
        let mut ax = vec![0.0; 20];
        a.matvec(&x, &mut ax);
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_pcg_solves() {
        let a = laplace_1d(50);
        let prec = Preconditioner::jacobi(&a).unwrap();
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let stats = pcg(&a, &b, &mut x, &prec, 1e-12, 500).unwrap();
        assert!(stats.relative_residual <= 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_detected() {
        let mut a = laplace_1d(4);
        for v in a.values.iter_mut() {
            *v = -*v;
        }
        let prec = Preconditioner::Jacobi(vec![1.0; 4]);
        let mut x = vec![0.0; 4];
        assert!(matches!(
            pcg(&a, &[1.0; 4], &mut x, &prec, 1e-10, 10),
            Err(Error::NonSpd(_))
        ));
    }

    #[test]
    fn constraint_keeps_symmetry() {
        let mut a = laplace_1d(5);
        let fixed = [true, false, false, false, true];
        let vals = [1.0, 0.0, 0.0, 0.0, 3.0];
        let mut rhs = vec![0.0; 5];
        a.constrain(&fixed, &vals, &mut rhs);
        assert_eq!(a.asymmetry(), 0.0);
        assert_eq!(rhs, vec![1.0, 1.0, 0.0, 3.0, 3.0]);
        let prec = Preconditioner::incomplete_cholesky(&a).unwrap();
        let mut x = vec![0.0; 5];
        pcg(&a, &rhs, &mut x, &prec, 1e-14, 50).unwrap();
        for (i, v) in x.iter().enumerate() {
            assert!((v - (1.0 + 0.5 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn blocked_pattern_expands_entries() {
        let p = CsrPattern::from_rows(vec![vec![0, 1], vec![0, 1]]);
        let b = p.blocked(2);
        assert_eq!(b.size(), 4);
        assert_eq!(b.nnz(), 16);
        assert_eq!(b.slot(3, 0), Some(12));
    }
}
