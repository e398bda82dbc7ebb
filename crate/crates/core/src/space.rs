//! Piecewise-linear finite elements on a uniform grid of (0,1) with
//! homogeneous Dirichlet boundary, plus a plain Euclidean space for scalar
//! and diagonal toy models.
//!
//! Nodal vectors hold the `n` interior values; the two boundary values are
//! zero. Cell `c` (for `c = 0..=n`) spans nodes `c-1` and `c`, where indices
//! `-1` and `n` denote the boundary.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::linalg::Tridiagonal;

/// Three-point Gauss–Legendre rule on the reference cell [0, 1].
pub const GAUSS_POINTS: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
pub const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Geometry {
    /// P1 elements on (0,1).
    Fem,
    /// Coordinates with identity mass; no spatial structure.
    Euclidean,
}

#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    geometry: Geometry,
    n_dof: usize,
    h: f64,
    nodes: Vec<f64>,
    mass: Tridiagonal,
    stiffness: Tridiagonal,
}

impl GalerkinSpace {
    /// P1 space with `n_dof` interior nodes (mesh width `1/(n_dof+1)`).
    pub fn fem(n_dof: usize) -> Result<Self> {
        if n_dof == 0 {
            return Err(Error::invalid("n_dof", "must be at least 1"));
        }
        let h = 1.0 / (n_dof as f64 + 1.0);
        let nodes = (1..=n_dof).map(|i| i as f64 * h).collect();
        let mass = Tridiagonal::toeplitz(n_dof, h / 6.0, 4.0 * h / 6.0);
        let stiffness = Tridiagonal::toeplitz(n_dof, -1.0 / h, 2.0 / h);
        let space = GalerkinSpace {
            geometry: Geometry::Fem,
            n_dof,
            h,
            nodes,
            mass,
            stiffness,
        };
        space.check_mass_spd()?;
        Ok(space)
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n_dof", "must be at least 1"));
        }
        Ok(GalerkinSpace {
            geometry: Geometry::Euclidean,
            n_dof: n,
            h: 1.0,
            nodes: (0..n).map(|i| i as f64).collect(),
            mass: Tridiagonal::identity(n),
            stiffness: Tridiagonal::identity(n),
        })
    }

    /// Cholesky sweep of the symmetric tridiagonal mass matrix.
    fn check_mass_spd(&self) -> Result<()> {
        let m = &self.mass;
        let mut prev = 0.0;
        for i in 0..self.n_dof {
            let sub = if i > 0 { m.lower[i - 1] } else { 0.0 };
            let pivot = m.diag[i] - if i > 0 { sub * sub / prev } else { 0.0 };
            if !(pivot > 0.0) {
                return Err(Error::invalid("mass_matrix", "not positive definite"));
            }
            prev = pivot;
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn mass(&self) -> &Tridiagonal {
        &self.mass
    }

    /// Dirichlet stiffness matrix (identity for the Euclidean geometry).
    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    pub fn n_cells(&self) -> usize {
        self.n_dof + 1
    }

    /// Endpoint values of cell `c`, boundary zeros included.
    #[inline]
    pub fn cell_values(&self, v: &[f64], c: usize) -> (f64, f64) {
        let left = if c == 0 { 0.0 } else { v[c - 1] };
        let right = if c == self.n_dof { 0.0 } else { v[c] };
        (left, right)
    }

    /// Nodal values interpolated from a function of x.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Piecewise-constant cell gradients (the gradient operator).
    pub fn gradients(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_cells())
            .map(|c| {
                let (l, r) = self.cell_values(v, c);
                (r - l) / self.h
            })
            .collect()
    }

    /// Discrete sine mode `sin(k pi x)` sampled at the nodes; for the
    /// Euclidean geometry this is the unit vector `e_k`.
    pub fn sine_mode(&self, k: usize) -> Vec<f64> {
        match self.geometry {
            Geometry::Fem => self.interpolate(|x| libm::sin(k as f64 * PI * x)),
            Geometry::Euclidean => {
                let mut e = vec![0.0; self.n_dof];
                if (1..=self.n_dof).contains(&k) {
                    e[k - 1] = 1.0;
                }
                e
            }
        }
    }

    /// Generalized eigenvalue of `(stiffness, mass)` belonging to `sine_mode(k)`.
    pub fn dirichlet_eigenvalue(&self, k: usize) -> f64 {
        match self.geometry {
            Geometry::Fem => {
                let theta = k as f64 * PI * self.h;
                let c = libm::cos(theta);
                6.0 * (1.0 - c) / (self.h * self.h * (2.0 + c))
            }
            Geometry::Euclidean => 1.0,
        }
    }

    /// `∫ g(v_h) φ_i` by three-point Gauss per cell.
    pub fn load_vector(&self, v: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dof];
        if self.geometry == Geometry::Euclidean {
            for (o, x) in out.iter_mut().zip(v) {
                *o = g(*x);
            }
            return out;
        }
        let n = self.n_dof;
        for c in 0..self.n_cells() {
            let (l, r) = self.cell_values(v, c);
            let mut to_left = 0.0;
            let mut to_right = 0.0;
            for (xi, w) in GAUSS_POINTS.iter().zip(GAUSS_WEIGHTS) {
                let u = l * (1.0 - xi) + r * xi;
                let gw = w * self.h * g(u);
                to_left += gw * (1.0 - xi);
                to_right += gw * xi;
            }
            if c > 0 {
                out[c - 1] += to_left;
            }
            if c < n {
                out[c] += to_right;
            }
        }
        out
    }

    /// `∫ dg(v_h) φ_i φ_j` by three-point Gauss per cell.
    pub fn weighted_mass(&self, v: &[f64], dg: impl Fn(f64) -> f64) -> Tridiagonal {
        let n = self.n_dof;
        let mut t = Tridiagonal::zeros(n);
        if self.geometry == Geometry::Euclidean {
            for (d, x) in t.diag.iter_mut().zip(v) {
                *d = dg(*x);
            }
            return t;
        }
        for c in 0..self.n_cells() {
            let (l, r) = self.cell_values(v, c);
            let (mut ll, mut lr, mut rr) = (0.0, 0.0, 0.0);
            for (xi, w) in GAUSS_POINTS.iter().zip(GAUSS_WEIGHTS) {
                let u = l * (1.0 - xi) + r * xi;
                let gw = w * self.h * dg(u);
                ll += gw * (1.0 - xi) * (1.0 - xi);
                lr += gw * (1.0 - xi) * xi;
                rr += gw * xi * xi;
            }
            if c > 0 {
                t.diag[c - 1] += ll;
            }
            if c < n {
                t.diag[c] += rr;
            }
            if c > 0 && c < n {
                t.upper[c - 1] += lr;
                t.lower[c - 1] += lr;
            }
        }
        t
    }

    /// `(∫ |v_h|^q)^{1/q}`; Gauss quadrature is exact for even integer `q ≤ 4`.
    pub fn lq_norm(&self, v: &[f64], q: f64) -> f64 {
        libm::pow(self.lq_power(v, q), 1.0 / q)
    }

    /// `∫ |v_h|^q`.
    pub fn lq_power(&self, v: &[f64], q: f64) -> f64 {
        if self.geometry == Geometry::Euclidean {
            return v.iter().map(|x| libm::pow(libm::fabs(*x), q)).sum();
        }
        let mut s = 0.0;
        for c in 0..self.n_cells() {
            let (l, r) = self.cell_values(v, c);
            for (xi, w) in GAUSS_POINTS.iter().zip(GAUSS_WEIGHTS) {
                let u = l * (1.0 - xi) + r * xi;
                s += w * self.h * libm::pow(libm::fabs(u), q);
            }
        }
        s
    }

    /// `∫ |∇v_h|^p`, exact for piecewise-constant gradients.
    pub fn gradient_power(&self, v: &[f64], p: f64) -> f64 {
        if self.geometry == Geometry::Euclidean {
            return self.lq_power(v, p);
        }
        self.gradients(v)
            .iter()
            .map(|g| self.h * libm::pow(libm::fabs(*g), p))
            .sum()
    }

    /// Discrete `p`-Laplacian flux divergence `∫ |∇v|^{p-2} ∇v · ∇φ_i`.
    pub fn p_laplace_action(&self, v: &[f64], p: f64) -> Vec<f64> {
        if self.geometry == Geometry::Euclidean {
            return v.iter().map(|x| signed_pow(*x, p - 1.0)).collect();
        }
        let flux: Vec<f64> = self
            .gradients(v)
            .iter()
            .map(|s| signed_pow(*s, p - 1.0))
            .collect();
        (0..self.n_dof).map(|i| flux[i] - flux[i + 1]).collect()
    }

    /// Jacobian of [`Self::p_laplace_action`]. `floor` bounds the cell
    /// coefficients from below where the gradient vanishes.
    pub fn p_laplace_jacobian(&self, v: &[f64], p: f64, floor: f64) -> Tridiagonal {
        let n = self.n_dof;
        let mut t = Tridiagonal::zeros(n);
        if self.geometry == Geometry::Euclidean {
            for (d, x) in t.diag.iter_mut().zip(v) {
                *d = ((p - 1.0) * libm::pow(libm::fabs(*x), p - 2.0)).max(floor);
            }
            return t;
        }
        for (c, s) in self.gradients(v).iter().enumerate() {
            let k = ((p - 1.0) * libm::pow(libm::fabs(*s), p - 2.0)).max(floor) / self.h;
            if c > 0 {
                t.diag[c - 1] += k;
            }
            if c < n {
                t.diag[c] += k;
            }
            if c > 0 && c < n {
                t.upper[c - 1] -= k;
                t.lower[c - 1] -= k;
            }
        }
        t
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        check_len(self.n_dof, v)
    }
}

/// `|x|^e · sign(x)`
#[inline]
pub fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        libm::copysign(libm::pow(libm::fabs(x), e), x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn sine_modes_are_generalized_eigenvectors() {
        let s = GalerkinSpace::fem(31).unwrap();
        for k in [1, 2, 7, 31] {
            let phi = s.sine_mode(k);
            let kphi = s.stiffness().mul_vec(&phi);
            let mphi = s.mass().mul_vec(&phi);
            let lam = s.dirichlet_eigenvalue(k);
            for (a, b) in kphi.iter().zip(&mphi) {
                assert!((a - lam * b).abs() < 1e-9 * lam.max(1.0));
            }
        }
        let a = s.sine_mode(2);
        let b = s.sine_mode(5);
        assert!(dot(&a, &s.mass().mul_vec(&b)).abs() < 1e-13);
    }

    #[test]
    fn load_vector_of_linear_map_is_mass_action() {
        let s = GalerkinSpace::fem(17).unwrap();
        let v: Vec<f64> = (0..17).map(|i| libm::cos(i as f64 * 0.4)).collect();
        let lv = s.load_vector(&v, |x| 3.0 * x);
        let mv = s.mass().mul_vec(&v);
        for (a, b) in lv.iter().zip(&mv) {
            assert!((a - 3.0 * b).abs() < 1e-14);
        }
        let wm = s.weighted_mass(&v, |_| 1.0);
        assert!(wm
            .diag
            .iter()
            .zip(&s.mass().diag)
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn gradient_annihilates_only_zero_with_dirichlet_boundary() {
        let s = GalerkinSpace::fem(8).unwrap();
        assert!(s.gradients(&[0.0; 8]).iter().all(|g| *g == 0.0));
        // A nonzero constant interior vector has jumps at the boundary cells.
        let g = s.gradients(&[1.0; 8]);
        assert!(g[0] > 0.0 && g[8] < 0.0);
        assert!(g[1..8].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn quartic_quadrature_exact() {
        // ∫_0^1 x^4 on a one-cell-per-half mesh against the closed form.
        let s = GalerkinSpace::fem(1).unwrap();
        // v_h is the hat function with peak 1 at x = 1/2; ∫ hat^4 = 2 * (1/2) / 5.
        let got = s.lq_power(&[1.0], 4.0);
        assert!((got - 0.2).abs() < 1e-15);
    }
}
