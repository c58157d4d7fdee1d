//! Small dense complex matrices. Dimensions here are single digits, so
//! everything is row-major `Vec<C64>` with straightforward loops.

use crate::model_spaces::{lp_norm, C64, ZERO};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    /// `u v^T` (no conjugation).
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for (i, a) in u.iter().enumerate() {
            for (j, b) in v.iter().enumerate() {
                m.data[i * v.len() + j] = a * b;
            }
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Accumulates `self * x` into `out`.
    pub fn mul_vec_add(&self, x: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<C64>();
        }
    }

    /// `self^T f`: the functional `x -> f(self x)`.
    pub fn transpose_mul_vec(&self, f: &[C64]) -> Vec<C64> {
        debug_assert_eq!(f.len(), self.rows);
        let mut out = vec![ZERO; self.cols];
        for (i, fi) in f.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += fi * self.at(i, j);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut m = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *m.at_mut(j, i) = self.at(i, j);
            }
        }
        m
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut m = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    *m.at_mut(i, j) += a * other.at(k, j);
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Largest singular value, inflated by a rounding allowance so that it
    /// bounds the true spectral norm from above.
    pub fn spectral_norm_upper(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 || self.is_zero() {
            return 0.0;
        }
        let svd = self.to_nalgebra().svd(false, false);
        let s = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let fro = self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (s * (1.0 + 1e-12) + 1e-15 * fro).min(fro * (1.0 + 1e-15))
    }

    /// Upper bound on `||self||` as a map `l_p^cols -> l_r^rows`:
    /// `||Ax||_r <= ||Ax||_1 <= sum_i ||row_i||_q ||x||_p`, tightened by the
    /// spectral norm whenever both exponents allow comparison with `l_2`.
    pub fn norm_upper(&self, p: f64, r: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let q = crate::model_spaces::conjugate_exponent(p);
        let rows_bound: f64 = (0..self.rows).map(|i| lp_norm(self.row(i), q)).sum();
        let mut best = rows_bound * (1.0 + 1e-14);
        // ||x||_2 <= c_in ||x||_p and ||y||_r <= c_out ||y||_2
        let c_in = if p >= 2.0 {
            (self.cols as f64).powf(0.5 - 1.0 / p)
        } else {
            1.0
        };
        let c_out = if r <= 2.0 {
            (self.rows as f64).powf(1.0 / r - 0.5)
        } else {
            1.0
        };
        best = best.min(c_in * c_out * self.spectral_norm_upper() * (1.0 + 1e-14));
        best
    }
}
