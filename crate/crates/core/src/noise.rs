//! Truncated cylindrical Wiener noise and the diffusion operators `B`.
//!
//! The noise space `U` is truncated to `m` coordinates. Every diffusion in
//! this crate has the affine column form
//!
//! ```text
//! B(v) u_k = s_k + w_k ⊙ v,     k = 1..m
//! ```
//!
//! with `s_k` an additive shape (`σ_k φ_k`, `φ_k` the `H`-normalized discrete
//! sine modes) and `w_k` a multiplicative nodal weight. The pointwise product
//! is taken on nodal values, i.e. projected back to the P1 space by
//! interpolation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::framework::{GelfandTriple, SpaceTag};
use crate::space::Geometry;

/// Default truncation dimension of the noise space.
pub const DEFAULT_MODES: usize = 16;

/// Human-readable statement of the per-path seed rule, logged with every record.
pub const SEED_RULE: &str = "seed_i = splitmix64(splitmix64(master_seed) + i); ChaCha8 stream per seed";

/// Identification of the noise coordinates, logged with every record.
pub const NOISE_BASIS_NOTE: &str = "U truncated to m coordinates identified with H-normalized discrete Dirichlet sine modes";

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless per-path seed derivation; distinct indices give distinct seeds.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(index))
}

/// Gaussian increments of the truncated Wiener process, `n_steps × m`, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseStream {
    pub m: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    increments: Vec<f64>,
}

/// Header needed to regenerate a stream bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamHeader {
    pub m: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
}

/// I.i.d. centred Gaussian increments with variance `dt`, deterministic in `seed`.
pub fn sample_stream(m: usize, dt: f64, n_steps: usize, seed: u64) -> Result<NoiseStream> {
    if m == 0 {
        return Err(Error::invalid("m", "must be at least 1"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = libm::sqrt(dt);
    let increments = (0..m * n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(NoiseStream {
        m,
        dt,
        n_steps,
        seed,
        increments,
    })
}

impl NoiseStream {
    /// Wraps externally produced increments (e.g. a rescaled copy of another stream).
    pub fn from_increments(
        m: usize,
        dt: f64,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<NoiseStream> {
        if m == 0 || increments.len() % m != 0 {
            return Err(Error::invalid("increments", "length must be a multiple of m"));
        }
        Ok(NoiseStream {
            m,
            dt,
            n_steps: increments.len() / m,
            seed,
            increments,
        })
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            m: self.m,
            dt: self.dt,
            n_steps: self.n_steps,
            seed: self.seed,
        }
    }

    #[inline]
    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.m..(step + 1) * self.m]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Same increments multiplied by `factor`, relabelled with step `dt`.
    pub fn scaled(&self, factor: f64, dt: f64) -> NoiseStream {
        NoiseStream {
            m: self.m,
            dt,
            n_steps: self.n_steps,
            seed: self.seed,
            increments: self.increments.iter().map(|x| factor * x).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DiffusionKind {
    /// `B ≡ 0`.
    Zero,
    AdditiveTraceClass,
    LinearMultiplicative,
}

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    pub m: usize,
    /// `σ_k` (additive) or the weight amplitude of mode `k` (multiplicative).
    pub amplitudes: Vec<f64>,
    shapes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl DiffusionSpec {
    pub fn zero(triple: &GelfandTriple, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        let n = triple.dim();
        Ok(DiffusionSpec {
            kind: DiffusionKind::Zero,
            m,
            amplitudes: vec![0.0; m],
            shapes: vec![vec![0.0; n]; m],
            weights: vec![vec![0.0; n]; m],
        })
    }

    /// `B u_k = σ_k φ_k` with `φ_k` the `H`-normalized sine modes (unit vectors
    /// for the Euclidean geometry). Requires `|σ_k| ≤ |σ_1| k^{-2}`.
    pub fn additive(triple: &GelfandTriple, amplitudes: &[f64]) -> Result<Self> {
        let m = amplitudes.len();
        if m == 0 {
            return Err(Error::invalid("amplitudes", "at least one mode required"));
        }
        if triple.space.geometry() == Geometry::Euclidean && m > triple.dim() {
            return Err(Error::invalid("amplitudes", "more modes than coordinates"));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { what: "amplitudes" });
        }
        // Diagonal (Euclidean) models are not trace-class truncations of an
        // infinite sequence, so the decay requirement only applies on the grid.
        if triple.space.geometry() == Geometry::Fem {
            let lead = libm::fabs(amplitudes[0]);
            for (i, a) in amplitudes.iter().enumerate() {
                let k = (i + 1) as f64;
                if libm::fabs(*a) > lead / (k * k) * (1.0 + 1e-12) {
                    return Err(Error::invalid(
                        "amplitudes",
                        "additive amplitudes must decay at least like k^-2",
                    ));
                }
            }
        }
        let n = triple.dim();
        let shapes = amplitudes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut phi = triple.space.sine_mode(i + 1);
                let nrm = triple.h_norm(&phi);
                phi.iter_mut().for_each(|x| *x *= s / nrm);
                phi
            })
            .collect();
        Ok(DiffusionSpec {
            kind: DiffusionKind::AdditiveTraceClass,
            m,
            amplitudes: amplitudes.to_vec(),
            shapes,
            weights: vec![vec![0.0; n]; m],
        })
    }

    /// `B(v) u_k = w_k ⊙ v` with `w_k(x) = amplitude · k^{-2} · sin(kπx)`.
    pub fn multiplicative_sine(triple: &GelfandTriple, amplitude: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        let weights: Vec<Vec<f64>> = (1..=m)
            .map(|k| {
                let a = amplitude / (k * k) as f64;
                match triple.space.geometry() {
                    Geometry::Fem => triple
                        .space
                        .interpolate(|x| a * libm::sin(k as f64 * PI * x)),
                    Geometry::Euclidean => {
                        let mut e = vec![0.0; triple.dim()];
                        if k <= triple.dim() {
                            e[k - 1] = a;
                        }
                        e
                    }
                }
            })
            .collect();
        let amplitudes = (1..=m).map(|k| amplitude / (k * k) as f64).collect();
        Self::from_weights(triple, weights, amplitudes)
    }

    /// Multiplicative diffusion with explicit nodal weights.
    pub fn multiplicative(triple: &GelfandTriple, weights: Vec<Vec<f64>>) -> Result<Self> {
        let amplitudes = weights
            .iter()
            .map(|w| w.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x))))
            .collect();
        Self::from_weights(triple, weights, amplitudes)
    }

    fn from_weights(
        triple: &GelfandTriple,
        weights: Vec<Vec<f64>>,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        let n = triple.dim();
        let m = weights.len();
        if m == 0 {
            return Err(Error::invalid("weights", "at least one mode required"));
        }
        for w in &weights {
            check_len(n, w)?;
        }
        Ok(DiffusionSpec {
            kind: DiffusionKind::LinearMultiplicative,
            m,
            amplitudes,
            shapes: vec![vec![0.0; n]; m],
            weights,
        })
    }

    pub fn shape(&self, k: usize) -> &[f64] {
        &self.shapes[k]
    }

    pub fn weight(&self, k: usize) -> &[f64] {
        &self.weights[k]
    }

    /// `B(v) u_k`
    pub fn column(&self, v: &[f64], k: usize) -> Vec<f64> {
        self.shapes[k]
            .iter()
            .zip(&self.weights[k])
            .zip(v)
            .map(|((s, w), x)| s + w * x)
            .collect()
    }

    /// `B(v) ξ = Σ_k (s_k + w_k ⊙ v) ξ_k`, accumulated into `out`.
    pub fn apply_into(&self, v: &[f64], xi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &x) in xi.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            match self.kind {
                DiffusionKind::Zero => {}
                DiffusionKind::AdditiveTraceClass => {
                    for (o, s) in out.iter_mut().zip(&self.shapes[k]) {
                        *o += s * x;
                    }
                }
                DiffusionKind::LinearMultiplicative => {
                    for ((o, w), vi) in out.iter_mut().zip(&self.weights[k]).zip(v) {
                        *o += w * vi * x;
                    }
                }
            }
        }
    }

    /// Upper bound on `sup ‖B(v1) − B(v2)‖_HS / ‖v1 − v2‖_H` for the L² pivot.
    ///
    /// The P1 mass matrix lies between one third of and the full lumped mass,
    /// which costs a factor `√3` over the pointwise bound.
    pub fn lipschitz_bound(&self, triple: &GelfandTriple) -> f64 {
        let wmax = self
            .weights
            .iter()
            .map(|w| w.iter().fold(0.0f64, |m, x| m.max(libm::fabs(*x))))
            .fold(0.0f64, f64::max);
        let lumping = match triple.space.geometry() {
            Geometry::Fem => libm::sqrt(3.0),
            Geometry::Euclidean => 1.0,
        };
        lumping * wmax * libm::sqrt(self.m as f64)
    }
}

/// `B(v) ξ`
pub fn apply_diffusion(
    triple: &GelfandTriple,
    diffusion: &DiffusionSpec,
    v: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    check_len(triple.dim(), v)?;
    check_len(diffusion.m, xi)?;
    let mut out = vec![0.0; triple.dim()];
    diffusion.apply_into(v, xi, &mut out);
    Ok(out)
}

/// Hilbert–Schmidt norm `(Σ_k ‖B(v) u_k‖²)^{1/2}` with columns measured in `H` or `V`.
pub fn hs_norm(
    triple: &GelfandTriple,
    diffusion: &DiffusionSpec,
    v: &[f64],
    target: SpaceTag,
) -> Result<f64> {
    check_len(triple.dim(), v)?;
    let mut acc = 0.0;
    for k in 0..diffusion.m {
        let col = diffusion.column(v, k);
        let nk = match target {
            SpaceTag::H => triple.h_norm(&col),
            SpaceTag::V => triple.v_norm(&col),
            SpaceTag::VStar => triple.vstar_norm(&col)?,
        };
        acc += nk * nk;
    }
    Ok(libm::sqrt(acc))
}

/// `‖B(v1) − B(v2)‖_HS` into `H`.
pub fn hs_distance(
    triple: &GelfandTriple,
    diffusion: &DiffusionSpec,
    v1: &[f64],
    v2: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for k in 0..diffusion.m {
        let d: Vec<f64> = diffusion
            .column(v1, k)
            .iter()
            .zip(diffusion.column(v2, k))
            .map(|(a, b)| a - b)
            .collect();
        let nk = triple.h_norm(&d);
        acc += nk * nk;
    }
    libm::sqrt(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::GalerkinSpace;

    fn triple() -> GelfandTriple {
        GelfandTriple::sobolev(GalerkinSpace::fem(31).unwrap(), 2.0)
    }

    #[test]
    fn stream_is_deterministic_in_seed() {
        let a = sample_stream(1, 1.0, 1, 7).unwrap();
        let b = sample_stream(1, 1.0, 1, 7).unwrap();
        assert_eq!(a.increments()[0].to_bits(), b.increments()[0].to_bits());
        let c = sample_stream(1, 1.0, 1, 8).unwrap();
        assert_ne!(a.increments()[0], c.increments()[0]);
    }

    #[test]
    fn invalid_stream_parameters() {
        assert!(sample_stream(0, 1.0, 1, 0).is_err());
        assert!(sample_stream(2, 0.0, 1, 0).is_err());
        assert!(sample_stream(2, -1.0, 1, 0).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn additive_basis_case_exact() {
        let t = triple();
        let d = DiffusionSpec::additive(&t, &[0.5, 0.1, 0.05]).unwrap();
        let v = t.space.interpolate(|x| x * (1.0 - x));
        let out = apply_diffusion(&t, &d, &v, &[1.0, 0.0, 0.0]).unwrap();
        let mut phi = t.space.sine_mode(1);
        let nrm = t.h_norm(&phi);
        phi.iter_mut().for_each(|x| *x *= 0.5 / nrm);
        assert_eq!(out, phi);
    }

    #[test]
    fn additive_decay_enforced() {
        let t = triple();
        assert!(DiffusionSpec::additive(&t, &[1.0, 0.5]).is_err());
        assert!(DiffusionSpec::additive(&t, &[1.0, 0.25, 1.0 / 9.0]).is_ok());
    }

    #[test]
    fn zero_inputs_give_zero() {
        let t = triple();
        let d = DiffusionSpec::multiplicative_sine(&t, 1.0, 4).unwrap();
        let v = t.space.interpolate(|x| libm::sin(3.0 * x));
        let out = apply_diffusion(&t, &d, &v, &[0.0; 4]).unwrap();
        assert!(out.iter().all(|x| *x == 0.0));
        let out = apply_diffusion(&t, &d, &[0.0; 31], &[1.0, -2.0, 0.3, 0.1]).unwrap();
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn hs_norm_additive_is_state_independent() {
        let t = triple();
        let d = DiffusionSpec::additive(&t, &[1.0, 0.25, 0.1]).unwrap();
        let base = hs_norm(&t, &d, &[0.0; 31], SpaceTag::H).unwrap();
        assert!((base - libm::sqrt(1.0 + 0.0625 + 0.01)).abs() < 1e-12);
        for s in 0..10 {
            let v = t.space.interpolate(|x| libm::sin(s as f64 * x + 1.0) * s as f64);
            let h = hs_norm(&t, &d, &v, SpaceTag::H).unwrap();
            assert_eq!(h, base);
        }
    }

    #[test]
    fn hs_norm_multiplicative_homogeneous() {
        let t = triple();
        let d = DiffusionSpec::multiplicative_sine(&t, 0.8, 6).unwrap();
        let v = t.space.interpolate(|x| libm::cos(2.0 * x) - 0.4);
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        for tag in [SpaceTag::H, SpaceTag::V] {
            let a = hs_norm(&t, &d, &v, tag).unwrap();
            let b = hs_norm(&t, &d, &v2, tag).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = triple();
        let d = DiffusionSpec::multiplicative_sine(&t, 1.0, 3).unwrap();
        assert!(apply_diffusion(&t, &d, &[0.0; 31], &[1.0; 2]).is_err());
        assert!(apply_diffusion(&t, &d, &[0.0; 30], &[1.0; 3]).is_err());
    }
}
