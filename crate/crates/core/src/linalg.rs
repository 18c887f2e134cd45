//! Small dense square matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Builds from a row-major slice of length `dim * dim`.
    pub fn from_row_major(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Matrix { dim, data: data.to_vec() })
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        let mut data = Vec::with_capacity(N * N);
        for r in rows.iter() {
            data.extend_from_slice(r);
        }
        Matrix { dim: N, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, c: f64) -> Self {
        Matrix { dim: self.dim, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &Matrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|j| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim;
        let scale = self.max_abs().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        (0..n).map(|i| (0..n).map(|j| self[(i, j)] * v[j]).sum()).collect()
    }

    /// vᵀ M v
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            let mut r = 0.0;
            for j in 0..n {
                r += self[(i, j)] * v[j];
            }
            s += v[i] * r;
        }
        s
    }

    /// LU decomposition with partial pivoting; returns (lu, perm, sign) or None if singular.
    fn lu(&self) -> Option<(Matrix, Vec<usize>, f64)> {
        let n = self.dim;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in (k + 1)..n {
                if a[(i, k)].abs() > best {
                    best = a[(i, k)].abs();
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let piv = a[(k, k)];
            for i in (k + 1)..n {
                let f = a[(i, k)] / piv;
                a[(i, k)] = f;
                for j in (k + 1)..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        Some((a, perm, sign))
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            0 => 1.0,
            1 => self.data[0],
            2 => self.data[0] * self.data[3] - self.data[1] * self.data[2],
            _ => match self.lu() {
                None => 0.0,
                Some((lu, _, sign)) => (0..self.dim).fold(sign, |d, i| d * lu[(i, i)]),
            },
        }
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.dim;
        if n == 2 {
            let d = self.det();
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular);
            }
            let [a, b, c, e] = [self.data[0], self.data[1], self.data[2], self.data[3]];
            return Ok(Matrix { dim: 2, data: vec![e / d, -b / d, -c / d, a / d] });
        }
        let (lu, perm, _) = self.lu().ok_or(Error::Singular)?;
        let mut inv = Matrix::zeros(n);
        for col in 0..n {
            let mut x: Vec<f64> = (0..n).map(|i| if perm[i] == col { 1.0 } else { 0.0 }).collect();
            for i in 0..n {
                for k in 0..i {
                    x[i] -= lu[(i, k)] * x[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    x[i] -= lu[(i, k)] * x[k];
                }
                x[i] /= lu[(i, i)];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        Ok(inv)
    }

    /// Lower Cholesky factor; fails unless symmetric positive definite.
    pub fn cholesky(&self) -> Result<Matrix> {
        if !self.is_symmetric(1e-12) {
            return Err(Error::NotPositiveDefinite);
        }
        let n = self.dim;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let d = libm::sqrt(d);
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Integer power; negative exponents invert first.
    pub fn powi(&self, e: i64) -> Result<Matrix> {
        let mut base = if e < 0 { self.inverse()? } else { self.clone() };
        let mut k = e.unsigned_abs();
        let mut acc = Matrix::identity(self.dim);
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        Ok(acc)
    }

    /// Bᵀ B
    pub fn gram(&self) -> Matrix {
        &self.transpose() * self
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(other.data.iter()).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(1.0, rhs);
        out
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, rhs);
        out
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_inverse_3x3() {
        let m = Matrix::from_rows([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]);
        assert!((m.det() - 18.0).abs() < 1e-12);
        let id = &m * &m.inverse().unwrap();
        assert!(id.max_abs_diff(&Matrix::identity(3)) < 1e-14);
    }

    #[test]
    fn singular_inverse_fails() {
        let m = Matrix::from_rows([[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(m.inverse(), Err(Error::Singular));
        let m3 = Matrix::from_rows([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]);
        assert_eq!(m3.det(), 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows([[1.0, 2.0], [2.0, 1.0]]);
        assert_eq!(m.cholesky(), Err(Error::NotPositiveDefinite));
        let s = Matrix::from_rows([[4.0, 2.0], [2.0, 3.0]]);
        let l = s.cholesky().unwrap();
        assert!((&l * &l.transpose()).max_abs_diff(&s) < 1e-14);
    }

    #[test]
    fn negative_power() {
        let a = Matrix::from_rows([[1.0, 1.0], [0.0, 1.0]]);
        let p = a.powi(-3).unwrap();
        assert_eq!(p, Matrix::from_rows([[1.0, -3.0], [0.0, 1.0]]));
        assert_eq!(a.powi(0).unwrap(), Matrix::identity(2));
    }
}
