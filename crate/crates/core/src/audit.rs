//! Sampling-based audit of hemicontinuity, local monotonicity, growth, the
//! noise bounds and the derived coercivity estimate.
//!
//! The constants in these conditions are existential, so the auditor reports,
//! per condition, the smallest constant that is feasible over the sample set
//! next to the violations of the declared constants.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::framework::SpaceTag;
use crate::linalg::dot;
use crate::models::ModelSpec;
use crate::noise::{derive_seed, hs_distance, hs_norm};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub big_k: f64,
    pub big_c: f64,
}

impl AssumptionParams {
    pub fn new(alpha: f64, beta: f64, eta: f64, big_k: f64, big_c: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::invalid("alpha", "must exceed 1"));
        }
        if !(beta >= 0.0) {
            return Err(Error::invalid("beta", "must be nonnegative"));
        }
        if !(eta > 0.0) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !big_k.is_finite() || !big_c.is_finite() {
            return Err(Error::NonFinite { what: "assumption constants" });
        }
        Ok(AssumptionParams {
            alpha,
            beta,
            eta,
            big_k,
            big_c,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ConditionId {
    /// Sampled continuity of `s ↦ ⟨A(t, v1 + s v2), v⟩`.
    A1Hemicontinuity,
    /// Fitted constant: smallest `K` for the declared `η` and `ρ`.
    A2LocalMonotonicity,
    /// Fitted constant: largest `η` for the declared `K` and `ρ`.
    A2Eta,
    /// `ρ(v) ≤ C(1 + ‖v‖_V^α)(1 + ‖v‖_H^β)`.
    A2RhoGrowth,
    A3Growth,
    /// `‖B(v)‖²_HS(U,V) ≤ C(1 + ‖v‖_V²)`.
    NoiseGrowth,
    /// `‖B(v1) − B(v2)‖²_HS(U,H) ≤ C‖v1 − v2‖_H²`.
    NoiseLipschitz,
    /// `⟨A(t,v), v⟩ + ‖B(v)‖²_HS + (η/2)‖v‖_V^α ≤ C(1 + ‖v‖_H²)`.
    Coercivity,
}

impl ConditionId {
    pub const ALL: [ConditionId; 8] = [
        ConditionId::A1Hemicontinuity,
        ConditionId::A2LocalMonotonicity,
        ConditionId::A2Eta,
        ConditionId::A2RhoGrowth,
        ConditionId::A3Growth,
        ConditionId::NoiseGrowth,
        ConditionId::NoiseLipschitz,
        ConditionId::Coercivity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditionId::A1Hemicontinuity => "a1_hemicontinuity",
            ConditionId::A2LocalMonotonicity => "a2_local_monotonicity",
            ConditionId::A2Eta => "a2_eta",
            ConditionId::A2RhoGrowth => "a2_rho_growth",
            ConditionId::A3Growth => "a3_growth",
            ConditionId::NoiseGrowth => "noise_growth",
            ConditionId::NoiseLipschitz => "noise_lipschitz",
            ConditionId::Coercivity => "coercivity",
        }
    }

    /// Conditions whose fitted constant is a `C` in the growth-type bounds.
    pub fn is_growth_constant(&self) -> bool {
        matches!(
            self,
            ConditionId::A2RhoGrowth
                | ConditionId::A3Growth
                | ConditionId::NoiseGrowth
                | ConditionId::NoiseLipschitz
                | ConditionId::Coercivity
        )
    }

    /// `A2Eta` is fitted as a minimum; everything else as a maximum.
    fn fits_minimum(&self) -> bool {
        matches!(self, ConditionId::A2Eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Violation {
    pub condition_id: ConditionId,
    pub sample_index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionSummary {
    pub condition_id: ConditionId,
    pub n_samples: usize,
    pub n_violations: usize,
    pub fitted_constant: f64,
    /// Smallest `rhs − lhs` under the declared constants (negative iff violated).
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AssumptionReport {
    pub model_id: String,
    pub seed: u64,
    pub n_samples: usize,
    pub params: AssumptionParams,
    pub conditions: Vec<ConditionSummary>,
    pub violations: Vec<Violation>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn condition(&self, id: ConditionId) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition_id == id)
    }

    pub fn fitted(&self, id: ConditionId) -> f64 {
        self.condition(id).map_or(f64::NAN, |c| c.fitted_constant)
    }

    /// Largest fitted growth-type constant.
    pub fn max_growth_constant(&self) -> f64 {
        self.conditions
            .iter()
            .filter(|c| c.condition_id.is_growth_constant())
            .map(|c| c.fitted_constant)
            .fold(0.0, f64::max)
    }

    /// Associative, order-independent merge of reports over disjoint sample ranges.
    pub fn merge(mut self, other: AssumptionReport) -> AssumptionReport {
        self.n_samples += other.n_samples;
        for oc in other.conditions {
            match self
                .conditions
                .iter_mut()
                .find(|c| c.condition_id == oc.condition_id)
            {
                Some(c) => {
                    c.n_samples += oc.n_samples;
                    c.n_violations += oc.n_violations;
                    c.fitted_constant = if c.condition_id.fits_minimum() {
                        c.fitted_constant.min(oc.fitted_constant)
                    } else {
                        c.fitted_constant.max(oc.fitted_constant)
                    };
                    c.worst_margin = c.worst_margin.min(oc.worst_margin);
                }
                None => self.conditions.push(oc),
            }
        }
        self.conditions.sort_by_key(|c| c.condition_id);
        self.violations.extend(other.violations);
        self.violations
            .sort_by(|a, b| (a.sample_index, a.condition_id).cmp(&(b.sample_index, b.condition_id)));
        self
    }
}

/// Random smooth states `Σ_k z_k k^{-decay} φ_k` rescaled to `‖v‖_V = radius · u`,
/// `u ~ U(0, 1)`; times uniform on `[0, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StateSampler {
    pub modes: usize,
    pub decay: f64,
    pub radius: f64,
    pub t_max: f64,
}

impl Default for StateSampler {
    fn default() -> Self {
        StateSampler {
            modes: 12,
            decay: 2.0,
            radius: 4.0,
            t_max: 1.0,
        }
    }
}

impl StateSampler {
    pub fn sample(&self, model: &ModelSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = model.dim();
        let modes = self.modes.min(n).max(1);
        let mut v = alloc::vec![0.0; n];
        for k in 1..=modes {
            let z: f64 = StandardNormal.sample(rng);
            let a = z / libm::pow(k as f64, self.decay);
            for (vi, pk) in v.iter_mut().zip(model.space().sine_mode(k)) {
                *vi += a * pk;
            }
        }
        let u: f64 = Uniform::new(0.0, 1.0).sample(rng);
        let nv = model.triple.v_norm(&v);
        if nv > 0.0 {
            let s = self.radius * u / nv;
            v.iter_mut().for_each(|x| *x *= s);
        }
        v
    }
}

struct Accumulator {
    id: ConditionId,
    n: usize,
    fitted: f64,
    margin: f64,
    violations: Vec<Violation>,
}

impl Accumulator {
    fn new(id: ConditionId) -> Self {
        Accumulator {
            id,
            n: 0,
            fitted: if id.fits_minimum() { f64::INFINITY } else { f64::NEG_INFINITY },
            margin: f64::INFINITY,
            violations: Vec::new(),
        }
    }

    /// Records one sample of `lhs ≤ rhs` together with the constant it implies.
    fn record(&mut self, index: usize, lhs: f64, rhs: f64, implied: f64) {
        self.n += 1;
        if !(lhs.is_finite() && rhs.is_finite()) {
            self.fail(index, lhs, rhs, String::from("non-finite evaluation"));
            return;
        }
        if implied.is_finite() {
            self.fitted = if self.id.fits_minimum() {
                self.fitted.min(implied)
            } else {
                self.fitted.max(implied)
            };
        }
        let margin = rhs - lhs;
        self.margin = self.margin.min(margin);
        let slack = 1e-9 * (libm::fabs(lhs) + libm::fabs(rhs)) + 1e-13;
        if margin < -slack {
            self.violations.push(Violation {
                condition_id: self.id,
                sample_index: index,
                lhs,
                rhs,
                diagnostic: None,
            });
        }
    }

    fn fail(&mut self, index: usize, lhs: f64, rhs: f64, diagnostic: String) {
        self.margin = f64::NEG_INFINITY;
        self.violations.push(Violation {
            condition_id: self.id,
            sample_index: index,
            lhs,
            rhs,
            diagnostic: Some(diagnostic),
        });
    }

    fn summary(&self) -> ConditionSummary {
        ConditionSummary {
            condition_id: self.id,
            n_samples: self.n,
            n_violations: self.violations.len(),
            fitted_constant: if self.fitted.is_finite() { self.fitted } else { 0.0 },
            worst_margin: self.margin,
        }
    }
}

/// Step used by the hemicontinuity secant test.
const SECANT_STEP: f64 = 1e-4;
/// Relative tolerance below which a secant jump counts as continuity.
const SECANT_RTOL: f64 = 1e-6;

/// Audits samples `0..n` of the given model.
pub fn audit_assumptions(
    model: &ModelSpec,
    sampler: &StateSampler,
    n: usize,
    params: &AssumptionParams,
    seed: u64,
) -> Result<AssumptionReport> {
    audit_range(model, sampler, 0..n, params, seed)
}

/// Audits the sample indices in `range`; sample `i` draws from its own
/// generator seeded with `derive_seed(seed, i)`, so disjoint ranges merge to
/// the same report as one sequential run.
pub fn audit_range(
    model: &ModelSpec,
    sampler: &StateSampler,
    range: core::ops::Range<usize>,
    params: &AssumptionParams,
    seed: u64,
) -> Result<AssumptionReport> {
    if range.is_empty() {
        return Err(Error::invalid("n", "at least one sample required"));
    }
    let mut acc: Vec<Accumulator> = ConditionId::ALL.iter().map(|id| Accumulator::new(*id)).collect();
    let slot = |id: ConditionId| ConditionId::ALL.iter().position(|c| *c == id).unwrap();
    let n_samples = range.len();
    let triple = &model.triple;
    let AssumptionParams {
        alpha,
        beta,
        eta,
        big_k,
        big_c,
    } = *params;

    for index in range {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
        let v1 = sampler.sample(model, &mut rng);
        let v2 = sampler.sample(model, &mut rng);
        let w = sampler.sample(model, &mut rng);
        let t: f64 = Uniform::new_inclusive(0.0, sampler.t_max).sample(&mut rng);
        let s0: f64 = Uniform::new(-1.0, 1.0).sample(&mut rng);

        // (A1) secant continuity of s ↦ ⟨A(t, v1 + s v2), w⟩
        {
            let a = &mut acc[slot(ConditionId::A1Hemicontinuity)];
            let f = |s: f64| -> Result<f64> {
                let x: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| p + s * q).collect();
                Ok(dot(&model.drift(t, &x)?, &w))
            };
            match (|| -> Result<(f64, f64, f64)> {
                let f0 = f(s0)?;
                let jump = |h: f64| -> Result<f64> {
                    Ok(libm::fabs(f(s0 + h)? - f0).max(libm::fabs(f(s0 - h)? - f0)))
                };
                Ok((f0, jump(SECANT_STEP)?, jump(0.1 * SECANT_STEP)?))
            })() {
                Ok((f0, coarse, fine)) => {
                    let tol = SECANT_RTOL * (1.0 + libm::fabs(f0));
                    let ratio = if coarse > 0.0 { fine / coarse } else { 0.0 };
                    // continuous iff the jump is negligible or shrinks with the step
                    let lhs = if fine <= tol { 0.0 } else { ratio };
                    a.record(index, lhs, 0.5, ratio);
                }
                Err(e) => a.fail(index, f64::NAN, f64::NAN, format!("drift evaluation: {e}")),
            }
        }

        let eval = (|| -> Result<_> {
            let d: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
            let a1 = model.drift(t, &v1)?;
            let a2 = model.drift(t, &v2)?;
            let da: Vec<f64> = a1.iter().zip(&a2).map(|(a, b)| a - b).collect();
            let pair = 2.0 * dot(&da, &d);
            let dv = triple.v_norm(&d);
            let dh = triple.h_norm(&d);
            let a1_star = triple.vstar_norm(&a1)?;
            Ok((d, a1, pair, dv, dh, a1_star))
        })();
        let (_d, a1, pair, dv, dh, a1_star) = match eval {
            Ok(x) => x,
            Err(e) => {
                for id in [
                    ConditionId::A2LocalMonotonicity,
                    ConditionId::A3Growth,
                    ConditionId::Coercivity,
                ] {
                    acc[slot(id)].fail(index, f64::NAN, f64::NAN, format!("model evaluation: {e}"));
                }
                continue;
            }
        };
        let rho2 = model.rho(&v2);
        let v1v = triple.v_norm(&v1);
        let v1h = triple.h_norm(&v1);
        let v2v = triple.v_norm(&v2);
        let v2h = triple.h_norm(&v2);
        let dva = libm::pow(dv, alpha);

        // (A2) with declared η, K and ρ
        if dh > 0.0 {
            let lhs = pair;
            let rhs = -eta * dva + (big_k + rho2) * dh * dh;
            let k_needed = (pair + eta * dva) / (dh * dh) - rho2;
            acc[slot(ConditionId::A2LocalMonotonicity)].record(index, lhs, rhs, k_needed);
            if dva > 0.0 {
                let eta_max = ((big_k + rho2) * dh * dh - pair) / dva;
                acc[slot(ConditionId::A2Eta)].record(index, eta, eta_max, eta_max);
            }
        }

        // ρ growth
        {
            let base = (1.0 + libm::pow(v2v, alpha)) * (1.0 + libm::pow(v2h, beta));
            acc[slot(ConditionId::A2RhoGrowth)].record(index, rho2, big_c * base, rho2 / base);
        }

        // (A3)
        {
            let lhs = libm::pow(a1_star, alpha / (alpha - 1.0));
            let base = (1.0 + libm::pow(v1v, alpha)) * (1.0 + libm::pow(v1h, beta));
            acc[slot(ConditionId::A3Growth)].record(index, lhs, big_c * base, lhs / base);
        }

        // noise bounds
        match hs_norm(triple, &model.diffusion, &v1, SpaceTag::V) {
            Ok(bv) => {
                let lhs = bv * bv;
                let base = 1.0 + v1v * v1v;
                acc[slot(ConditionId::NoiseGrowth)].record(index, lhs, big_c * base, lhs / base);
            }
            Err(e) => acc[slot(ConditionId::NoiseGrowth)].fail(
                index,
                f64::NAN,
                f64::NAN,
                format!("hs norm: {e}"),
            ),
        }
        if dh > 0.0 {
            let bd = hs_distance(triple, &model.diffusion, &v1, &v2);
            let lhs = bd * bd;
            let base = dh * dh;
            acc[slot(ConditionId::NoiseLipschitz)].record(index, lhs, big_c * base, lhs / base);
        }

        // coercivity with η/2
        match hs_norm(triple, &model.diffusion, &v1, SpaceTag::H) {
            Ok(bh) => {
                let lhs = dot(&a1, &v1) + bh * bh + 0.5 * eta * libm::pow(v1v, alpha);
                let base = 1.0 + v1h * v1h;
                acc[slot(ConditionId::Coercivity)].record(index, lhs, big_c * base, (lhs / base).max(0.0));
            }
            Err(e) => acc[slot(ConditionId::Coercivity)].fail(
                index,
                f64::NAN,
                f64::NAN,
                format!("hs norm: {e}"),
            ),
        }
    }

    let conditions = acc.iter().map(Accumulator::summary).collect();
    let mut violations: Vec<Violation> = acc.into_iter().flat_map(|a| a.violations).collect();
    violations.sort_by(|a, b| (a.sample_index, a.condition_id).cmp(&(b.sample_index, b.condition_id)));
    Ok(AssumptionReport {
        model_id: String::from(model.id.as_str()),
        seed,
        n_samples,
        params: *params,
        conditions,
        violations,
    })
}

/// Fits the growth constant `C` on a pilot sample and returns the model's
/// parameters with `C` replaced by `margin` times the largest fitted value.
pub fn calibrate(
    model: &ModelSpec,
    sampler: &StateSampler,
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<AssumptionParams> {
    let report = audit_assumptions(model, sampler, n, &model.params, seed)?;
    let mut params = model.params;
    params.big_c = margin * report.max_growth_constant();
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_default, make_heat, ModelId, NoiseSpec};

    #[test]
    fn heat_fitted_eta_is_exactly_two() {
        let model = make_heat(24, &NoiseSpec::default()).unwrap();
        let r = audit_assumptions(&model, &StateSampler::default(), 1000, &model.params, 5).unwrap();
        let eta = r.fitted(ConditionId::A2Eta);
        assert!((eta - 2.0).abs() < 0.02, "eta = {eta}");
        assert!(r.passed(), "{:?}", r.violations.first());
    }

    #[test]
    fn report_is_deterministic_and_partition_independent() {
        let model = make_default(ModelId::Burgers, 16, &NoiseSpec::default()).unwrap();
        let s = StateSampler::default();
        let a = audit_assumptions(&model, &s, 60, &model.params, 9).unwrap();
        let b = audit_assumptions(&model, &s, 60, &model.params, 9).unwrap();
        assert_eq!(a, b);
        let left = audit_range(&model, &s, 0..25, &model.params, 9).unwrap();
        let right = audit_range(&model, &s, 25..60, &model.params, 9).unwrap();
        let merged = right.merge(left);
        assert_eq!(merged.conditions, a.conditions);
        assert_eq!(merged.violations, a.violations);
    }

    #[test]
    fn loose_constant_produces_violations() {
        let model = make_heat(16, &NoiseSpec::default()).unwrap();
        let mut params = model.params;
        params.eta = 3.0; // true constant is 2
        let r = audit_assumptions(&model, &StateSampler::default(), 50, &params, 1).unwrap();
        assert!(!r.passed());
        assert!(r
            .violations
            .iter()
            .any(|v| v.condition_id == ConditionId::A2LocalMonotonicity));
        let summary = r.condition(ConditionId::A2LocalMonotonicity).unwrap();
        assert!(summary.worst_margin < 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(AssumptionParams::new(1.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(AssumptionParams::new(2.0, -1.0, 1.0, 0.0, 1.0).is_err());
        assert!(AssumptionParams::new(2.0, 0.0, 0.0, 0.0, 1.0).is_err());
    }
}
