//! Small dense objects used pointwise: the metric `γ(x,t)` acting on
//! `ℝⁿ` and `N×n` Jacobian matrices with the inner product it induces.

use serde::{Deserialize, Serialize};

/// Maximum spatial dimension handled by the crate.
pub const MAX_DIM: usize = 2;

/// Symmetric `n×n` matrix defining the inner product `⟨ζ|η⟩_γ = γ_{αβ} ζ^j_α η^j_β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    dim: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl Metric {
    pub fn identity(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2");
        let mut entries = [[0.0; MAX_DIM]; MAX_DIM];
        for (a, row) in entries.iter_mut().enumerate().take(dim) {
            row[a] = 1.0;
        }
        Metric { dim, entries }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Metric::identity(diag.len());
        for (a, &d) in diag.iter().enumerate() {
            m.entries[a][a] = d;
        }
        m
    }

    /// Builds a metric from full rows; only the first `dim` rows/columns are used.
    pub fn from_rows(dim: usize, rows: [[f64; MAX_DIM]; MAX_DIM]) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2");
        let mut entries = [[0.0; MAX_DIM]; MAX_DIM];
        for a in 0..dim {
            for b in 0..dim {
                entries[a][b] = rows[a][b];
            }
        }
        Metric { dim, entries }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a][b]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|a| (0..self.dim).all(|b| self.entries[a][b] == self.entries[b][a]))
    }

    /// `out = γ v` for `v ∈ ℝⁿ`.
    #[inline]
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for a in 0..self.dim {
            let mut s = 0.0;
            for b in 0..self.dim {
                s += self.entries[a][b] * v[b];
            }
            out[a] = s;
        }
    }

    /// `γ_{αβ} a_α b_β` for vectors in `ℝⁿ`.
    #[inline]
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.entries[i][j] * a[i] * b[j];
            }
        }
        s
    }

    /// Inner product of two row-major `rows×n` blocks, summing over rows.
    #[inline]
    pub fn inner_rows(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.chunks_exact(self.dim)
            .zip(b.chunks_exact(self.dim))
            .map(|(ra, rb)| self.inner(ra, rb))
            .sum()
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        if self.dim == 1 {
            let v = self.entries[0][0];
            return (v, v);
        }
        let (a, b, c) = (self.entries[0][0], self.entries[0][1], self.entries[1][1]);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    /// Sum of absolute entries, the `Σ|γ_{αβ}|` appearing in coefficient bounds.
    pub fn abs_sum(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                s += self.entries[a][b].abs();
            }
        }
        s
    }
}

/// `N×n` matrix stored row-major; row `j` is the spatial gradient of component `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Jacobian {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "jacobian data length mismatch");
        Jacobian { rows, cols, data }
    }

    /// A `1×n` Jacobian holding a single gradient.
    pub fn row_vector(v: &[f64]) -> Self {
        Jacobian::from_vec(1, v.len(), v.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, j: usize, a: usize) -> f64 {
        self.data[j * self.cols + a]
    }

    #[inline]
    pub fn set(&mut self, j: usize, a: usize, v: f64) {
        self.data[j * self.cols + a] = v;
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scaled(&self, s: f64) -> Jacobian {
        Jacobian::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    pub fn add(&self, other: &Jacobian) -> Jacobian {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Jacobian) -> Jacobian {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Jacobian, f: impl Fn(f64, f64) -> f64) -> Jacobian {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Jacobian::from_vec(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Plain Euclidean (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

impl Metric {
    #[inline]
    pub fn inner_jac(&self, a: &Jacobian, b: &Jacobian) -> f64 {
        debug_assert_eq!(a.cols(), self.dim);
        self.inner_rows(a.as_slice(), b.as_slice())
    }

    #[inline]
    pub fn norm_jac(&self, a: &Jacobian) -> f64 {
        self.inner_jac(a, a).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_extremes_of_rotated_diagonal() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let (l1, l2) = (2.0, 0.5);
        let m = Metric::from_rows(
            2,
            [
                [l1 * c * c + l2 * s * s, (l1 - l2) * c * s],
                [(l1 - l2) * c * s, l1 * s * s + l2 * c * c],
            ],
        );
        let (lo, hi) = m.eigen_extremes();
        assert!((lo - 0.5).abs() < 1e-14);
        assert!((hi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inner_rows_sums_components() {
        let m = Metric::diagonal(&[4.0, 1.0]);
        let a = Jacobian::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]);
        assert_eq!(m.inner_jac(&a, &a), 4.0 + 4.0);
    }
}
