//! Small dense and tridiagonal kernels.
//!
//! Everything the stepper needs is either tridiagonal (P1 elements in one
//! dimension) or small enough to factor densely, so no external linear
//! algebra crate is pulled into the `no_std` core.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Tridiagonal matrix stored by diagonals. `lower[i]` sits at `(i+1, i)` and
/// `upper[i]` at `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Tridiagonal {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = 1.0);
        t
    }

    /// Constant-coefficient symmetric Toeplitz matrix.
    pub fn toeplitz(n: usize, off: f64, diag: f64) -> Self {
        let m = n.saturating_sub(1);
        Tridiagonal {
            lower: vec![off; m],
            diag: vec![diag; n],
            upper: vec![off; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// `self + alpha * other`
    pub fn add_scaled(&self, alpha: f64, other: &Tridiagonal) -> Tridiagonal {
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + alpha * y).collect();
        Tridiagonal {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self
            .lower
            .iter_mut()
            .chain(self.diag.iter_mut())
            .chain(self.upper.iter_mut())
        {
            *v *= alpha;
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, self.diag[i]);
            if i + 1 < n {
                m.set(i, i + 1, self.upper[i]);
                m.set(i + 1, i, self.lower[i]);
            }
        }
        m
    }

    /// Gaussian elimination with partial pivoting (LAPACK `gtsv` layout).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut x = rhs.to_vec();
        if n == 0 {
            return Ok(x);
        }
        if n == 1 {
            if self.diag[0] == 0.0 {
                return Err(Error::Singular { what: "tridiagonal matrix" });
            }
            x[0] /= self.diag[0];
            return Ok(x);
        }
        let mut dl = self.lower.clone();
        let mut d = self.diag.clone();
        let mut du = self.upper.clone();
        let mut du2 = vec![0.0; n];
        for i in 0..n - 1 {
            if libm::fabs(d[i]) >= libm::fabs(dl[i]) {
                if d[i] == 0.0 {
                    return Err(Error::Singular { what: "tridiagonal matrix" });
                }
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                x[i + 1] -= fact * x[i];
                dl[i] = 0.0;
            } else {
                // swap rows i and i+1
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - fact * tmp;
                if i + 1 < n - 1 {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du2[i];
                }
                du[i] = tmp;
                x.swap(i, i + 1);
                x[i + 1] -= fact * x[i];
            }
        }
        if d[n - 1] == 0.0 {
            return Err(Error::Singular { what: "tridiagonal matrix" });
        }
        x[n - 1] /= d[n - 1];
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular { what: "tridiagonal matrix" })
        }
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        DenseMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|row| dot(row, x)).collect()
    }

    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    pub fn add_tridiagonal(&mut self, alpha: f64, t: &Tridiagonal) {
        let n = self.n;
        for i in 0..n {
            self.add_to(i, i, alpha * t.diag[i]);
            if i + 1 < n {
                self.add_to(i, i + 1, alpha * t.upper[i]);
                self.add_to(i + 1, i, alpha * t.lower[i]);
            }
        }
    }

    /// LU with partial pivoting.
    pub fn lu(&self) -> Result<LuFactors> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v)));
        for k in 0..n {
            let mut p = k;
            let mut best = libm::fabs(a[k * n + k]);
            for i in k + 1..n {
                let v = libm::fabs(a[i * n + k]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * 1e-300 || best == 0.0 {
                return Err(Error::Singular { what: "dense matrix" });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu: a, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.lu()?.solve(rhs)
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular { what: "dense matrix" })
        }
    }
}

/// Jacobian of a residual map, kept in the cheapest exact representation.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Tridiagonal(Tridiagonal),
    Dense(DenseMatrix),
}

impl Jacobian {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Jacobian::Tridiagonal(t) => t.solve(rhs),
            Jacobian::Dense(d) => d.solve(rhs),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Jacobian::Tridiagonal(t) => t.mul_vec(x),
            Jacobian::Dense(d) => d.mul_vec(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve_matches_dense_lu() {
        let n = 9;
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            t.diag[i] = 0.1 * i as f64 - 0.3; // forces pivoting
            if i + 1 < n {
                t.lower[i] = 1.0 + 0.2 * i as f64;
                t.upper[i] = -0.7 + 0.05 * i as f64;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| libm::sin(i as f64)).collect();
        let x1 = t.solve(&b).unwrap();
        let x2 = t.to_dense().solve(&b).unwrap();
        for (a, c) in x1.iter().zip(&x2) {
            assert!((a - c).abs() < 1e-12, "{a} vs {c}");
        }
        let r = t.mul_vec(&x1);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detected() {
        let t = Tridiagonal::zeros(3);
        assert!(t.solve(&[1.0, 1.0, 1.0]).is_err());
        assert!(DenseMatrix::zeros(2).solve(&[1.0, 0.0]).is_err());
    }
}
