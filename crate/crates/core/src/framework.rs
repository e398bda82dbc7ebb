//! Discrete Gelfand triple `V ⊂ H ⊂ V*`.
//!
//! Primal vectors (elements of `V` and `H`) are nodal coefficient vectors.
//! Elements of `V*` are stored as dual coefficient vectors `f_i = f(φ_i)`, so
//! the dualization is the plain Euclidean sum `Σ f_i v_i`. The embedding of
//! `u ∈ H` into `V*` is `G u` with `G` the Gram matrix of the `H` inner product,
//! which makes `pairing(embed_h(u), v) = h_inner(u, v)` hold by construction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix, Tridiagonal};
use crate::space::{Geometry, GalerkinSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SpaceTag {
    H,
    V,
    VStar,
}

/// Tags a vector with the space it lives in and the shared Galerkin dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GelfandIndex {
    pub dim_v: usize,
    pub space_tag: SpaceTag,
}

impl GelfandIndex {
    pub fn new(dim_v: usize, space_tag: SpaceTag) -> Result<Self> {
        if dim_v == 0 {
            return Err(Error::invalid("dim_v", "must be at least 1"));
        }
        Ok(GelfandIndex { dim_v, space_tag })
    }

    pub fn check(&self, v: &[f64]) -> Result<()> {
        check_len(self.dim_v, v)
    }
}

/// Which norm realizes `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum VNorm {
    /// `‖∇v‖_{L^p}` on `W_0^{1,p}`.
    W1p(f64),
    /// `‖v‖_{L^{r+1}}`.
    Lr1(f64),
    Euclidean,
}

/// Gram matrix of the `H` inner product.
#[derive(Debug, Clone)]
pub enum HGram {
    Identity,
    /// `L²` inner product: the P1 mass matrix.
    Mass(Tridiagonal),
    /// Dual of `D(√-L)`: `⟨u, (-L)^{-1} v⟩` with `L = -M^{-1}K`, Gram `M K^{-1} M`.
    NegativeSobolev {
        mass: Tridiagonal,
        stiffness: Tridiagonal,
        dense: DenseMatrix,
    },
}

impl HGram {
    pub fn negative_sobolev(space: &GalerkinSpace) -> Result<Self> {
        let n = space.n_dof();
        let mass = space.mass().clone();
        let stiffness = space.stiffness().clone();
        let mut dense = DenseMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = mass.mul_vec(&stiffness.solve(&mass.mul_vec(&e))?);
            for (i, c) in col.iter().enumerate() {
                dense.set(i, j, *c);
            }
        }
        Ok(HGram::NegativeSobolev {
            mass,
            stiffness,
            dense,
        })
    }

    /// `G u`
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        match self {
            HGram::Identity => u.to_vec(),
            HGram::Mass(m) => m.mul_vec(u),
            HGram::NegativeSobolev {
                mass, stiffness, ..
            } => {
                let mu = mass.mul_vec(u);
                // stiffness is SPD; a solve failure here means a corrupted space.
                let k = stiffness.solve(&mu).expect("Dirichlet stiffness is nonsingular");
                mass.mul_vec(&k)
            }
        }
    }

    /// `G^{-1} f` (Riesz representer in `H`).
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            HGram::Identity => Ok(f.to_vec()),
            HGram::Mass(m) => m.solve(f),
            HGram::NegativeSobolev {
                mass, stiffness, ..
            } => {
                let a = mass.solve(f)?;
                mass.solve(&stiffness.mul_vec(&a))
            }
        }
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            HGram::Identity => dot(u, v),
            _ => dot(u, &self.apply(v)),
        }
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        libm::sqrt(self.inner(u, u).max(0.0))
    }

    /// The Gram matrix when it is tridiagonal.
    pub fn as_tridiagonal(&self, n: usize) -> Option<Tridiagonal> {
        match self {
            HGram::Identity => Some(Tridiagonal::identity(n)),
            HGram::Mass(m) => Some(m.clone()),
            HGram::NegativeSobolev { .. } => None,
        }
    }

    pub fn to_dense(&self, n: usize) -> DenseMatrix {
        match self {
            HGram::Identity => DenseMatrix::identity(n),
            HGram::Mass(m) => m.to_dense(),
            HGram::NegativeSobolev { dense, .. } => dense.clone(),
        }
    }

    /// `‖G^{-1} r‖_H = sqrt(r · G^{-1} r)`: H-norm of a dual residual.
    pub fn dual_residual_norm(&self, r: &[f64]) -> Result<f64> {
        match self {
            HGram::Identity => Ok(norm2(r)),
            _ => Ok(libm::sqrt(dot(r, &self.solve(r)?).max(0.0))),
        }
    }
}

const DUAL_MAX_ITERS: usize = 100;
const DUAL_GTOL: f64 = 1e-9;

/// The discrete triple: Galerkin space, `H` Gram matrix and `V` norm.
#[derive(Debug, Clone)]
pub struct GelfandTriple {
    pub space: GalerkinSpace,
    pub gram: HGram,
    pub v_norm: VNorm,
}

impl GelfandTriple {
    /// `V = W_0^{1,p}`, `H = L²`.
    pub fn sobolev(space: GalerkinSpace, p: f64) -> Self {
        let gram = match space.geometry() {
            Geometry::Fem => HGram::Mass(space.mass().clone()),
            Geometry::Euclidean => HGram::Identity,
        };
        GelfandTriple {
            space,
            gram,
            v_norm: VNorm::W1p(p),
        }
    }

    /// `V = L^{r+1}`, `H = (D(√-L))*`.
    pub fn porous(space: GalerkinSpace, r: f64) -> Result<Self> {
        let gram = HGram::negative_sobolev(&space)?;
        Ok(GelfandTriple {
            space,
            gram,
            v_norm: VNorm::Lr1(r),
        })
    }

    pub fn euclidean(n: usize) -> Result<Self> {
        Ok(GelfandTriple {
            space: GalerkinSpace::euclidean(n)?,
            gram: HGram::Identity,
            v_norm: VNorm::Euclidean,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.n_dof()
    }

    /// `⟨f, v⟩_{V*×V}`.
    pub fn pairing(&self, f: &[f64], v: &[f64]) -> Result<f64> {
        check_len(self.dim(), f)?;
        check_len(self.dim(), v)?;
        Ok(dot(f, v))
    }

    pub fn embed_h(&self, u: &[f64]) -> Vec<f64> {
        self.gram.apply(u)
    }

    pub fn h_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.gram.inner(u, v)
    }

    pub fn h_norm(&self, u: &[f64]) -> f64 {
        self.gram.norm(u)
    }

    pub fn v_norm(&self, v: &[f64]) -> f64 {
        match self.v_norm {
            VNorm::W1p(p) => libm::pow(self.space.gradient_power(v, p), 1.0 / p),
            VNorm::Lr1(r) => self.space.lq_norm(v, r + 1.0),
            VNorm::Euclidean => norm2(v),
        }
    }

    /// Exponent `q` with `‖·‖_V^q` the convex potential of the duality map.
    fn v_exponent(&self) -> f64 {
        match self.v_norm {
            VNorm::W1p(p) => p,
            VNorm::Lr1(r) => r + 1.0,
            VNorm::Euclidean => 2.0,
        }
    }

    /// `sup_{w≠0} ⟨f, w⟩ / ‖w‖_V`, via the dual problem
    /// `min_ψ (1/q)‖ψ‖_V^q − ⟨f, ψ⟩` whose minimizer attains the supremum.
    pub fn vstar_norm(&self, f: &[f64]) -> Result<f64> {
        if f.iter().all(|x| *x == 0.0) {
            return Ok(0.0);
        }
        match self.v_norm {
            VNorm::Euclidean => Ok(norm2(f)),
            VNorm::W1p(p) if p == 2.0 => {
                let psi = self.space.stiffness().solve(f)?;
                Ok(libm::sqrt(dot(f, &psi).max(0.0)))
            }
            _ => self.dual_problem(f),
        }
    }

    fn potential_power(&self, psi: &[f64]) -> f64 {
        match self.v_norm {
            VNorm::W1p(p) => self.space.gradient_power(psi, p),
            VNorm::Lr1(r) => self.space.lq_power(psi, r + 1.0),
            VNorm::Euclidean => dot(psi, psi),
        }
    }

    fn potential_gradient(&self, psi: &[f64]) -> Vec<f64> {
        match self.v_norm {
            VNorm::W1p(p) => self.space.p_laplace_action(psi, p),
            VNorm::Lr1(r) => self
                .space
                .load_vector(psi, |x| crate::space::signed_pow(x, r)),
            VNorm::Euclidean => psi.to_vec(),
        }
    }

    fn potential_hessian(&self, psi: &[f64], floor: f64) -> Tridiagonal {
        match self.v_norm {
            VNorm::W1p(p) => self.space.p_laplace_jacobian(psi, p, floor),
            VNorm::Lr1(r) => {
                let mut t = self
                    .space
                    .weighted_mass(psi, |x| r * libm::pow(libm::fabs(x), r - 1.0));
                let m = self.space.mass();
                // keeps the Hessian definite where psi vanishes
                for (d, md) in t.diag.iter_mut().zip(&m.diag) {
                    *d += floor * md;
                }
                t
            }
            VNorm::Euclidean => Tridiagonal::identity(psi.len()),
        }
    }

    fn dual_problem(&self, f: &[f64]) -> Result<f64> {
        let q = self.v_exponent();
        let objective = |psi: &[f64]| self.potential_power(psi) / q - dot(f, psi);
        // Start on the best multiple of the p = 2 representer.
        let psi0 = self.space.stiffness().solve(f)?;
        let n0 = self.potential_power(&psi0);
        let fp = dot(f, &psi0);
        let mut psi: Vec<f64> = if n0 > 0.0 && fp > 0.0 {
            let t = libm::pow(fp / n0, 1.0 / (q - 1.0));
            psi0.iter().map(|x| t * x).collect()
        } else {
            psi0
        };
        let f_scale = f.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)));
        let mut phi = objective(&psi);
        let mut history = Vec::new();
        // Every iterate gives a lower bound on the dual norm; the error of the
        // ratio is quadratic in the error of psi, so a moderate tolerance suffices.
        let mut best = self.dual_ratio(f, &psi);
        for _ in 0..DUAL_MAX_ITERS {
            let g: Vec<f64> = self
                .potential_gradient(&psi)
                .iter()
                .zip(f)
                .map(|(a, b)| a - b)
                .collect();
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x)));
            history.push(gmax);
            if gmax <= DUAL_GTOL * f_scale {
                return Ok(best);
            }
            let hess = self.potential_hessian(&psi, 1e-14);
            let step = hess.solve(&g)?;
            let slope = -dot(&g, &step);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = psi.iter().zip(&step).map(|(a, d)| a - lambda * d).collect();
                let phi_trial = objective(&trial);
                if phi_trial <= phi + 1e-4 * lambda * slope {
                    psi = trial;
                    phi = phi_trial;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                // Objective is flat to machine precision: the ratio is converged.
                return Ok(best);
            }
            let ratio = self.dual_ratio(f, &psi);
            let gain = ratio - best;
            best = best.max(ratio);
            if libm::fabs(gain) <= 1e-13 * best {
                return Ok(best);
            }
        }
        if best.is_finite() && best > 0.0 {
            return Ok(best);
        }
        Err(Error::NonConvergence {
            iterations: history.len(),
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        })
    }

    fn dual_ratio(&self, f: &[f64], psi: &[f64]) -> f64 {
        let n = self.v_norm(psi);
        if n > 0.0 {
            dot(f, psi) / n
        } else {
            0.0
        }
    }

    /// Norm of `v` in the requested space.
    pub fn norm(&self, space: SpaceTag, v: &[f64]) -> Result<f64> {
        check_len(self.dim(), v)?;
        check_finite("norm argument", v)?;
        match space {
            SpaceTag::H => Ok(self.h_norm(v)),
            SpaceTag::V => Ok(self.v_norm(v)),
            SpaceTag::VStar => self.vstar_norm(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn heat_triple(n: usize) -> GelfandTriple {
        GelfandTriple::sobolev(GalerkinSpace::fem(n).unwrap(), 2.0)
    }

    #[test]
    fn pairing_rejects_dimension_mismatch() {
        let t = heat_triple(4);
        assert!(matches!(
            t.pairing(&[0.0; 4], &[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn v_norm_of_sine_matches_continuum_value() {
        let t = GelfandTriple::sobolev(GalerkinSpace::fem(127).unwrap(), 2.0);
        let v = t.space.interpolate(|x| libm::sin(PI * x));
        let got = t.norm(SpaceTag::V, &v).unwrap();
        let want = PI * libm::sqrt(0.5);
        assert!((got - want).abs() / want < 0.01, "{got} vs {want}");
    }

    #[test]
    fn nonfinite_rejected() {
        let t = heat_triple(3);
        assert!(t.norm(SpaceTag::H, &[1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn dual_norm_attains_sup_for_p4() {
        let t = GelfandTriple::sobolev(GalerkinSpace::fem(15).unwrap(), 4.0);
        let f: Vec<f64> = (0..15).map(|i| libm::sin(0.7 * i as f64) + 0.3).collect();
        let dn = t.vstar_norm(&f).unwrap();
        // no test direction may beat the computed supremum
        for k in 1..15 {
            let w = t.space.sine_mode(k);
            let ratio = dot(&f, &w).abs() / t.v_norm(&w);
            assert!(ratio <= dn * (1.0 + 1e-9), "k={k}: {ratio} > {dn}");
        }
    }

    #[test]
    fn negative_sobolev_inner_is_inverse_eigenvalue() {
        let s = GalerkinSpace::fem(20).unwrap();
        let t = GelfandTriple::porous(s, 3.0).unwrap();
        for k in [1, 3, 9] {
            let mut phi = t.space.sine_mode(k);
            let l2 = libm::sqrt(dot(&phi, &t.space.mass().mul_vec(&phi)));
            phi.iter_mut().for_each(|x| *x /= l2);
            let lam = t.space.dirichlet_eigenvalue(k);
            assert!((t.h_inner(&phi, &phi) - 1.0 / lam).abs() < 1e-10);
        }
    }
}
