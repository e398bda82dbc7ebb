//! Concrete drift/diffusion pairs: the heat equation, a Burgers-type
//! equation with polynomial reaction, the p-Laplace equation, the porous
//! media equation, and a diagonal linear toy on `R^n`.
//!
//! Drifts are evaluated in weak form as dual coefficient vectors
//! `F_i(t, v) = ⟨A(t, v), φ_i⟩`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::audit::AssumptionParams;
use crate::error::{check_len, Error, Result};
use crate::framework::{GelfandTriple, HGram, SpaceTag};
use crate::linalg::{DenseMatrix, Jacobian, Tridiagonal};
use crate::noise::{DiffusionSpec, DEFAULT_MODES};
use crate::space::{signed_pow, GalerkinSpace, Geometry, GAUSS_POINTS, GAUSS_WEIGHTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelId {
    Heat,
    Burgers,
    PLaplace,
    Pme,
    Linear,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Heat => "heat",
            ModelId::Burgers => "burgers",
            ModelId::PLaplace => "plaplace",
            ModelId::Pme => "pme",
            ModelId::Linear => "linear",
        }
    }

    pub const ALL: [ModelId; 5] = [
        ModelId::Heat,
        ModelId::Burgers,
        ModelId::PLaplace,
        ModelId::Pme,
        ModelId::Linear,
    ];
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid("model", alloc::format!("unknown model id `{s}`")))
    }
}

/// Noise requested from a factory; resolved against the model's triple.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseSpec {
    Zero { m: usize },
    Additive { amplitudes: Vec<f64> },
    /// `w_k = amplitude · k^{-2} · sin(kπx)`
    Multiplicative { amplitude: f64, m: usize },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Multiplicative {
            amplitude: 1.0,
            m: DEFAULT_MODES,
        }
    }
}

impl NoiseSpec {
    /// `σ_k = amplitude · k^{-2}`
    pub fn additive_decaying(amplitude: f64, m: usize) -> Self {
        NoiseSpec::Additive {
            amplitudes: (1..=m).map(|k| amplitude / (k * k) as f64).collect(),
        }
    }

    fn build(&self, triple: &GelfandTriple) -> Result<DiffusionSpec> {
        match self {
            NoiseSpec::Zero { m } => DiffusionSpec::zero(triple, *m),
            NoiseSpec::Additive { amplitudes } => DiffusionSpec::additive(triple, amplitudes),
            NoiseSpec::Multiplicative { amplitude, m } => {
                DiffusionSpec::multiplicative_sine(triple, *amplitude, *m)
            }
        }
    }
}

/// `f(x) = f0 + f1·x` (Lipschitz convection speed) and
/// `g(x) = −x³ + c1·x² + c2·x` (reaction with growth `r = 3`, one-sided exponent `s = 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BurgersParams {
    pub d: u32,
    pub r: f64,
    pub s: f64,
    pub f0: f64,
    pub f1: f64,
    pub c1: f64,
    pub c2: f64,
    /// Set to false for `g ≡ 0`.
    pub reaction: bool,
}

impl Default for BurgersParams {
    fn default() -> Self {
        BurgersParams {
            d: 1,
            r: 3.0,
            s: 2.0,
            f0: 0.0,
            f1: 1.0,
            c1: 0.5,
            c2: 0.5,
            reaction: true,
        }
    }
}

impl BurgersParams {
    pub fn reaction_value(&self, x: f64) -> f64 {
        if self.reaction {
            -x * x * x + self.c1 * x * x + self.c2 * x
        } else {
            0.0
        }
    }

    pub fn reaction_derivative(&self, x: f64) -> f64 {
        if self.reaction {
            -3.0 * x * x + 2.0 * self.c1 * x + self.c2
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PLaplaceParams {
    pub p: f64,
    pub p_tilde: f64,
    pub c: f64,
}

impl Default for PLaplaceParams {
    fn default() -> Self {
        PLaplaceParams {
            p: 4.0,
            p_tilde: 2.0,
            c: 1.0,
        }
    }
}

/// `Ψ(t,x) = (psi0 + psi1·t)|x|^{r−1}x`, `Φ(t,x) = phi_amp·sin(t)·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PmeParams {
    pub r: f64,
    pub psi0: f64,
    pub psi1: f64,
    pub phi_amp: f64,
}

impl Default for PmeParams {
    fn default() -> Self {
        PmeParams {
            r: 3.0,
            psi0: 1.0,
            psi1: 0.5,
            phi_amp: 1.0,
        }
    }
}

impl PmeParams {
    pub fn psi_coefficient(&self, t: f64) -> f64 {
        self.psi0 + self.psi1 * t
    }

    pub fn phi_coefficient(&self, t: f64) -> f64 {
        self.phi_amp * libm::sin(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Drift {
    Heat,
    Burgers(BurgersParams),
    PLaplace(PLaplaceParams),
    Pme(PmeParams),
    /// `A(v) = −κ v` on `R^n`.
    Linear { kappa: f64 },
}

/// Local-monotonicity weight `ρ(v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Rho {
    Zero,
    /// `c (1 + ‖v‖_V²)(1 + ‖v‖_H²)`
    VhGrowth { c: f64 },
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub id: ModelId,
    pub triple: GelfandTriple,
    pub drift: Drift,
    pub diffusion: DiffusionSpec,
    pub params: AssumptionParams,
    pub rho: Rho,
}

/// Frozen constants from a pilot audit (seed 1000, n = 10^4, 32 dof, default
/// sampler) with a factor-2 margin.
mod frozen {
    pub const HEAT_C: f64 = 2.7;
    pub const LINEAR_C: f64 = 2.0;
    pub const BURGERS_K: f64 = 1.0;
    pub const BURGERS_RHO_C: f64 = 1.0;
    pub const BURGERS_C: f64 = 2.7;
    pub const PLAPLACE_C: f64 = 3.2;
    pub const PME_C: f64 = 2.5;
}

/// Calibration model: `dX = ΔX dt + B(X) dW`.
pub fn make_heat(n_dof: usize, noise: &NoiseSpec) -> Result<ModelSpec> {
    let triple = GelfandTriple::sobolev(GalerkinSpace::fem(n_dof)?, 2.0);
    let diffusion = noise.build(&triple)?;
    Ok(ModelSpec {
        id: ModelId::Heat,
        triple,
        drift: Drift::Heat,
        diffusion,
        params: AssumptionParams::new(2.0, 0.0, 2.0, 0.0, frozen::HEAT_C)?,
        rho: Rho::Zero,
    })
}

/// Semilinear Burgers-type model `dX = (ΔX + f(X) ∂_x X + g(X)) dt + B(X) dW`.
pub fn make_burgers(n_dof: usize, params: BurgersParams, noise: &NoiseSpec) -> Result<ModelSpec> {
    if params.d != 1 || params.r != 3.0 || params.s != 2.0 {
        return Err(Error::invalid(
            "burgers",
            "only the one-dimensional regime d=1, r=3, s=2 is supported",
        ));
    }
    if !(params.f0.is_finite() && params.f1.is_finite() && params.c1.is_finite() && params.c2.is_finite())
    {
        return Err(Error::NonFinite { what: "burgers parameters" });
    }
    let triple = GelfandTriple::sobolev(GalerkinSpace::fem(n_dof)?, 2.0);
    let diffusion = noise.build(&triple)?;
    Ok(ModelSpec {
        id: ModelId::Burgers,
        triple,
        drift: Drift::Burgers(params),
        diffusion,
        params: AssumptionParams::new(2.0, 6.0, 1.0, frozen::BURGERS_K, frozen::BURGERS_C)?,
        rho: Rho::VhGrowth {
            c: frozen::BURGERS_RHO_C,
        },
    })
}

/// `dX = [div(|∇X|^{p−2}∇X) − c|X|^{p̃−2}X] dt + B(X) dW`, globally monotone (`ρ ≡ 0`).
pub fn make_plaplace(n_dof: usize, params: PLaplaceParams, noise: &NoiseSpec) -> Result<ModelSpec> {
    let PLaplaceParams { p, p_tilde, c } = params;
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::invalid("p", "p-Laplace requires 2 <= p < inf"));
    }
    if !(1.0..=p).contains(&p_tilde) {
        return Err(Error::invalid("p_tilde", "requires 1 <= p_tilde <= p"));
    }
    if !(c >= 0.0) {
        return Err(Error::invalid("c", "must be nonnegative"));
    }
    let triple = GelfandTriple::sobolev(GalerkinSpace::fem(n_dof)?, p);
    let diffusion = noise.build(&triple)?;
    let eta = libm::pow(2.0, 2.0 - p);
    Ok(ModelSpec {
        id: ModelId::PLaplace,
        triple,
        drift: Drift::PLaplace(params),
        diffusion,
        params: AssumptionParams::new(p, 0.0, eta, 0.0, frozen::PLAPLACE_C)?,
        rho: Rho::Zero,
    })
}

/// `dX = [LΨ(t,X) + Φ(t,X)] dt + B(X) dW` on `V = L^{r+1} ⊂ H = (D(√-L))*`.
pub fn make_pme(n_dof: usize, params: PmeParams, noise: &NoiseSpec) -> Result<ModelSpec> {
    if !(params.r > 1.0) || !params.r.is_finite() {
        return Err(Error::invalid("r", "porous media exponent must satisfy r > 1"));
    }
    if !(params.psi0 > 0.0 && params.psi1 >= 0.0) {
        return Err(Error::invalid(
            "psi",
            "f(t) = psi0 + psi1 t must be strictly positive on [0, T]",
        ));
    }
    if !params.phi_amp.is_finite() {
        return Err(Error::NonFinite { what: "phi_amp" });
    }
    let triple = GelfandTriple::porous(GalerkinSpace::fem(n_dof)?, params.r)?;
    let diffusion = noise.build(&triple)?;
    // (|a|^{r-1}a − |b|^{r-1}b)(a − b) ≥ 2^{1−r}|a − b|^{r+1} and f ≥ psi0, |g| ≤ phi_amp.
    let eta = 2.0 * params.psi0 * libm::pow(2.0, 1.0 - params.r);
    let k = 2.0 * libm::fabs(params.phi_amp);
    Ok(ModelSpec {
        id: ModelId::Pme,
        triple,
        drift: Drift::Pme(params),
        diffusion,
        params: AssumptionParams::new(params.r + 1.0, 0.0, eta, k, frozen::PME_C)?,
        rho: Rho::Zero,
    })
}

/// `dX = −κ X dt + B(X) dW` on `R^n` with Euclidean norms.
pub fn make_linear(n: usize, kappa: f64, noise: &NoiseSpec) -> Result<ModelSpec> {
    if !kappa.is_finite() {
        return Err(Error::NonFinite { what: "kappa" });
    }
    let triple = GelfandTriple::euclidean(n)?;
    let diffusion = noise.build(&triple)?;
    let k = (1.0 - 2.0 * kappa).max(0.0);
    Ok(ModelSpec {
        id: ModelId::Linear,
        triple,
        drift: Drift::Linear { kappa },
        diffusion,
        params: AssumptionParams::new(2.0, 0.0, 1.0, k, frozen::LINEAR_C)?,
        rho: Rho::Zero,
    })
}

/// Factory by registry id with default parameters.
pub fn make_default(id: ModelId, n_dof: usize, noise: &NoiseSpec) -> Result<ModelSpec> {
    match id {
        ModelId::Heat => make_heat(n_dof, noise),
        ModelId::Burgers => make_burgers(n_dof, BurgersParams::default(), noise),
        ModelId::PLaplace => make_plaplace(n_dof, PLaplaceParams::default(), noise),
        ModelId::Pme => make_pme(n_dof, PmeParams::default(), noise),
        ModelId::Linear => make_linear(n_dof, 1.0, noise),
    }
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.triple.dim()
    }

    pub fn space(&self) -> &GalerkinSpace {
        &self.triple.space
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn with_diffusion(mut self, noise: &NoiseSpec) -> Result<Self> {
        self.diffusion = noise.build(&self.triple)?;
        Ok(self)
    }

    pub fn with_params(mut self, params: AssumptionParams) -> Self {
        self.params = params;
        self
    }

    pub fn rho(&self, v: &[f64]) -> f64 {
        match self.rho {
            Rho::Zero => 0.0,
            Rho::VhGrowth { c } => {
                let vn = self.triple.v_norm(v);
                let hn = self.triple.h_norm(v);
                c * (1.0 + vn * vn) * (1.0 + hn * hn)
            }
        }
    }

    /// Dual coefficients of `A(t, v)`.
    pub fn drift(&self, t: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v)?;
        let space = &self.triple.space;
        let out = match &self.drift {
            Drift::Heat => neg(space.stiffness().mul_vec(v)),
            Drift::Burgers(bp) => {
                let mut f = neg(space.stiffness().mul_vec(v));
                let conv = self.convection(v, v)?;
                let react = space.load_vector(v, |x| bp.reaction_value(x));
                for ((fi, ci), ri) in f.iter_mut().zip(&conv).zip(&react) {
                    *fi += ci + ri;
                }
                f
            }
            Drift::PLaplace(pp) => {
                let flux = space.p_laplace_action(v, pp.p);
                let low = space.load_vector(v, |x| signed_pow(x, pp.p_tilde - 1.0));
                flux.iter()
                    .zip(&low)
                    .map(|(a, b)| -a - pp.c * b)
                    .collect()
            }
            Drift::Pme(pm) => {
                let psi = space.load_vector(v, |x| signed_pow(x, pm.r));
                let gv = self.triple.embed_h(v);
                let (a, b) = (pm.psi_coefficient(t), pm.phi_coefficient(t));
                psi.iter().zip(&gv).map(|(p, g)| -a * p + b * g).collect()
            }
            Drift::Linear { kappa } => v.iter().map(|x| -kappa * x).collect(),
        };
        Ok(out)
    }

    /// `∂F/∂v` of [`Self::drift`].
    pub fn drift_jacobian(&self, t: f64, v: &[f64]) -> Result<Jacobian> {
        check_len(self.dim(), v)?;
        let space = &self.triple.space;
        let jac = match &self.drift {
            Drift::Heat => {
                let mut k = space.stiffness().clone();
                k.scale(-1.0);
                Jacobian::Tridiagonal(k)
            }
            Drift::Burgers(bp) => {
                let mut j = space.stiffness().clone();
                j.scale(-1.0);
                let conv = self.convection_jacobian(v);
                let react = space.weighted_mass(v, |x| bp.reaction_derivative(x));
                Jacobian::Tridiagonal(j.add_scaled(1.0, &conv).add_scaled(1.0, &react))
            }
            Drift::PLaplace(pp) => {
                let mut j = space.p_laplace_jacobian(v, pp.p, 0.0);
                j.scale(-1.0);
                let pt = pp.p_tilde;
                let low = space.weighted_mass(v, |x| {
                    if pt == 1.0 {
                        0.0
                    } else {
                        (pt - 1.0) * libm::pow(libm::fabs(x).max(1e-12), pt - 2.0)
                    }
                });
                Jacobian::Tridiagonal(j.add_scaled(-pp.c, &low))
            }
            Drift::Pme(pm) => {
                let r = pm.r;
                let w = space.weighted_mass(v, |x| r * libm::pow(libm::fabs(x), r - 1.0));
                let b = pm.phi_coefficient(t);
                let mut dense = match &self.triple.gram {
                    HGram::NegativeSobolev { dense, .. } => dense.clone(),
                    _ => DenseMatrix::zeros(self.dim()),
                };
                dense = DenseMatrix::zeros(self.dim()).add_scaled(b, &dense);
                dense.add_tridiagonal(-pm.psi_coefficient(t), &w);
                Jacobian::Dense(dense)
            }
            Drift::Linear { kappa } => {
                let mut id = Tridiagonal::identity(self.dim());
                id.scale(-kappa);
                Jacobian::Tridiagonal(id)
            }
        };
        Ok(jac)
    }

    /// Skew-symmetric convection form
    /// `c(u, v)_i = ∫ (f0 + ⅔ f1 u) ∂v φ_i + ⅓ f1 ∂u v φ_i`.
    ///
    /// `⟨c(u, v), v⟩ = 0` for all `u, v`, and `c(v, v) = ∫ f(v) ∂v φ_i`.
    /// Zero for models without convection.
    pub fn convection(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u)?;
        check_len(self.dim(), v)?;
        let space = &self.triple.space;
        let n = space.n_dof();
        let mut out = alloc::vec![0.0; n];
        let (f0, f1) = match &self.drift {
            Drift::Burgers(bp) => (bp.f0, bp.f1),
            _ => return Ok(out),
        };
        if space.geometry() != Geometry::Fem {
            return Ok(out);
        }
        let h = space.mesh_width();
        for c in 0..space.n_cells() {
            let (ul, ur) = space.cell_values(u, c);
            let (vl, vr) = space.cell_values(v, c);
            let du = (ur - ul) / h;
            let dv = (vr - vl) / h;
            let (mut to_l, mut to_r) = (0.0, 0.0);
            for (xi, w) in GAUSS_POINTS.iter().zip(GAUSS_WEIGHTS) {
                let uq = ul * (1.0 - xi) + ur * xi;
                let vq = vl * (1.0 - xi) + vr * xi;
                let integrand = (f0 + 2.0 / 3.0 * f1 * uq) * dv + f1 / 3.0 * du * vq;
                to_l += w * h * integrand * (1.0 - xi);
                to_r += w * h * integrand * xi;
            }
            if c > 0 {
                out[c - 1] += to_l;
            }
            if c < n {
                out[c] += to_r;
            }
        }
        Ok(out)
    }

    /// Jacobian of `v ↦ c(v, v) = ∫ f(v) ∂v φ_i`.
    fn convection_jacobian(&self, v: &[f64]) -> Tridiagonal {
        let space = &self.triple.space;
        let n = space.n_dof();
        let mut t = Tridiagonal::zeros(n);
        let (f0, f1) = match &self.drift {
            Drift::Burgers(bp) => (bp.f0, bp.f1),
            _ => return t,
        };
        let h = space.mesh_width();
        for c in 0..space.n_cells() {
            let (vl, vr) = space.cell_values(v, c);
            let dv = (vr - vl) / h;
            // local[i][j] = ∂(row i)/∂(v_j), i, j ∈ {left, right}
            let mut local = [[0.0f64; 2]; 2];
            for (xi, w) in GAUSS_POINTS.iter().zip(GAUSS_WEIGHTS) {
                let vq = vl * (1.0 - xi) + vr * xi;
                let phi = [1.0 - xi, *xi];
                let dphi = [-1.0 / h, 1.0 / h];
                for i in 0..2 {
                    for j in 0..2 {
                        let d = f0 * dphi[j] + f1 * (phi[j] * dv + vq * dphi[j]);
                        local[i][j] += w * h * d * phi[i];
                    }
                }
            }
            if c > 0 {
                t.diag[c - 1] += local[0][0];
            }
            if c < n {
                t.diag[c] += local[1][1];
            }
            if c > 0 && c < n {
                t.upper[c - 1] += local[0][1];
                t.lower[c - 1] += local[1][0];
            }
        }
        t
    }

    /// Norm of `v` in the model's triple.
    pub fn norm(&self, space: SpaceTag, v: &[f64]) -> Result<f64> {
        self.triple.norm(space, v)
    }

    pub fn describe(&self) -> String {
        alloc::format!("{} (n_dof = {}, m = {})", self.id, self.dim(), self.diffusion.m)
    }
}

fn neg(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = -*x);
    v
}
