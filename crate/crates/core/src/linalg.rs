//! Small dense linear-algebra helpers.
//!
//! Everything here works on plain `f64` slices with a fixed left-to-right
//! summation order, so results are reproducible bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Largest parameter count for which dense `p x p` matrices are assembled.
pub const DENSE_LIMIT: usize = 512;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| if v.abs() > m { v.abs() } else { m })
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix whose `j`-th column is `column(j)`.
    pub fn from_columns<F>(rows: usize, cols: usize, mut column: F) -> Result<Self>
    where
        F: FnMut(usize) -> Result<Vec<f64>>,
    {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            let c = column(j)?;
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    what: "matrix column",
                    expected: rows,
                    got: c.len(),
                });
            }
            for (i, v) in c.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Solves `self * x = b` by LU decomposition with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.rows;
        if self.cols != n || b.len() != n {
            return Err(Error::DimensionMismatch {
                what: "linear system",
                expected: n,
                got: b.len(),
            });
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = norm_inf(&a).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= scale * 1e-14 {
                return Err(Error::Singular);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                x.swap(k, piv);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / d;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= a[k * n + j] * x[j];
            }
            x[k] = s / a[k * n + k];
        }
        if !all_finite(&x) {
            return Err(Error::Singular);
        }
        Ok(x)
    }
}

impl core::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Spectral norm of a symmetric operator given only its action, by power
/// iteration. Stops once successive estimates agree to `1e-12` relative or
/// after `max_iter` rounds.
pub fn symmetric_operator_norm<F>(dim: usize, max_iter: usize, mut apply: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if dim == 0 {
        return Ok(0.0);
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        // Iterating with A^2 avoids oscillation between +lambda and -lambda.
        let av = apply(&v)?;
        let aav = apply(&av)?;
        let n = norm2(&aav);
        if n == 0.0 {
            return Ok(0.0);
        }
        let next = libm::sqrt(n);
        v = aav.into_iter().map(|x| x / n).collect();
        if (next - estimate).abs() <= 1e-12 * next {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let mut a = DenseMatrix::zeros(3, 3);
        let vals = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = vals[i][j];
            }
        }
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let got = a.solve(&b).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = DenseMatrix::zeros(2, 2);
        assert_eq!(a.solve(&[1.0, 1.0]), Err(Error::Singular));
    }

    #[test]
    fn power_iteration_finds_dominant_magnitude() {
        // diag(1, -3, 2): the norm is 3 even though the eigenvalue is negative.
        let d = [1.0, -3.0, 2.0];
        let norm =
            symmetric_operator_norm(3, 500, |v| Ok(v.iter().zip(d).map(|(x, s)| x * s).collect())).unwrap();
        assert!((norm - 3.0).abs() < 1e-9, "{norm}");
    }
}
