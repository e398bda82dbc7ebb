//! Independent references: closed forms and a plain Euler brute force that
//! shares no kernels with the production stepper.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ldp::stats::{clopper_pearson, CONFIDENCE};

fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// `P(sup_{[0,1]} |W| ≥ c)` by the reflection series.
fn reflection_series(c: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..100_000u32 {
        let term = normal_sf((2 * k + 1) as f64 * c);
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-14 {
            break;
        }
    }
    (4.0 * sum).clamp(0.0, 1.0)
}

/// Same probability by the heat-kernel eigenfunction series, fast for small `c`.
fn eigen_series(c: f64) -> f64 {
    use core::f64::consts::PI;
    let mut stay = 0.0;
    for k in 0..100_000u32 {
        let j = (2 * k + 1) as f64;
        let term = libm::exp(-j * j * PI * PI / (8.0 * c * c)) / j;
        stay += if k % 2 == 0 { term } else { -term };
        if term < 1e-14 {
            break;
        }
    }
    (1.0 - 4.0 / PI * stay).clamp(0.0, 1.0)
}

/// `P(sup_{[0,T]} |b W_t| ≥ a)`.
pub fn gaussian_sup_tail(b: f64, big_t: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid("a", "threshold must be positive"));
    }
    if b == 0.0 || !b.is_finite() {
        return Err(Error::invalid("b", "must be finite and nonzero"));
    }
    if !(big_t > 0.0) {
        return Err(Error::invalid("big_t", "must be positive"));
    }
    let c = a / (libm::fabs(b) * libm::sqrt(big_t));
    Ok(if c >= 1.0 { reflection_series(c) } else { eigen_series(c) })
}

/// `‖B⁻¹(y − x)‖² / (2T)` for diagonal `B = diag(b)`; a scalar `b` is a slice of length one.
pub fn linear_rate(b: &[f64], x: &[f64], y: &[f64], big_t: f64) -> Result<f64> {
    if x.len() != y.len() || (b.len() != x.len() && b.len() != 1) {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: b.len().max(y.len()),
        });
    }
    if b.iter().any(|bk| *bk == 0.0 || !bk.is_finite()) {
        return Err(Error::Singular { what: "linear_rate: b has a zero entry" });
    }
    if !(big_t > 0.0) {
        return Err(Error::invalid("big_t", "must be positive"));
    }
    let mut sum = 0.0;
    for (k, (xk, yk)) in x.iter().zip(y).enumerate() {
        let bk = if b.len() == 1 { b[0] } else { b[k] };
        let d = (yk - xk) / bk;
        sum += d * d;
    }
    Ok(sum / (2.0 * big_t))
}

/// `dX = −ε κ X dt + √ε (b0 + b1 X) dW`, `X(0) = x0`, on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalarSde {
    pub x0: f64,
    pub kappa: f64,
    pub b0: f64,
    pub b1: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ScalarStatistic {
    /// `sup_t |X_t − x0|² > δ`.
    SupDeviation { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BruteForceEstimate {
    pub n_paths: usize,
    pub n_hits: usize,
    pub p_hat: f64,
    /// Binomial standard error at `p_hat`.
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Plain Euler–Maruyama estimate of the exceedance probability.
pub fn brute_force_tail(
    sde: &ScalarSde,
    epsilon: f64,
    statistic: ScalarStatistic,
    fine_dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<BruteForceEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    if !(fine_dt > 0.0 && sde.horizon > 0.0) || n_paths == 0 {
        return Err(Error::invalid("fine_dt", "need fine_dt > 0, horizon > 0 and n_paths >= 1"));
    }
    let ScalarStatistic::SupDeviation { delta } = statistic;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::invalid("delta", "must be nonnegative"));
    }
    let n_steps = libm::round(sde.horizon / fine_dt) as usize;
    let dt = sde.horizon / n_steps.max(1) as f64;
    let sq = libm::sqrt(epsilon * dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..n_paths {
        let mut x = sde.x0;
        let mut hit = false;
        for _ in 0..n_steps.max(1) {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += -epsilon * sde.kappa * x * dt + (sde.b0 + sde.b1 * x) * sq * z;
            let d = x - sde.x0;
            if d * d > delta {
                hit = true;
            }
        }
        if hit {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n_paths as f64;
    let (ci_lo, ci_hi) = clopper_pearson(hits, n_paths, CONFIDENCE);
    Ok(BruteForceEstimate {
        n_paths,
        n_hits: hits,
        p_hat,
        se: libm::sqrt(p_hat * (1.0 - p_hat) / n_paths as f64),
        ci_lo,
        ci_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn frozen_reference_value() {
        let p = gaussian_sup_tail(1.0, 1.0, 1.0).unwrap();
        assert!((p - 0.629_222_570_200_476_1).abs() < 1e-13, "{p}");
        let p = gaussian_sup_tail(1.0, 1.0, 2.0).unwrap();
        assert!((p - 0.091_000_523_846_366_25).abs() < 1e-13, "{p}");
    }

    #[test]
    fn series_agree_where_both_converge() {
        for c in grid(0.3, 3.0, 28) {
            let (r, e) = (reflection_series(c), eigen_series(c));
            assert!((r - e).abs() < 1e-12, "c={c}: {r} vs {e}");
        }
    }

    #[test]
    fn scaling_and_monotonicity() {
        for &(b, t, a) in &[(2.0, 1.0, 1.0), (-0.5, 3.0, 0.7), (1.3, 0.2, 2.0)] {
            let lhs = gaussian_sup_tail(b, t, a).unwrap();
            let rhs = gaussian_sup_tail(1.0, t, a / libm::fabs(b)).unwrap();
            assert!((lhs - rhs).abs() < 1e-15);
        }
        let mut prev = 1.0;
        for a in grid(0.05, 12.0, 200) {
            let p = gaussian_sup_tail(1.0, 1.0, a).unwrap();
            assert!(p <= prev);
            prev = p;
        }
        assert!(prev < 1e-30);
        assert!(gaussian_sup_tail(1.0, 1.0, 0.0).is_err());
        assert!(gaussian_sup_tail(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn linear_rate_closed_form() {
        assert_eq!(linear_rate(&[2.0], &[0.0], &[1.0], 1.0).unwrap(), 0.125);
        assert_eq!(linear_rate(&[2.0], &[0.3], &[0.3], 1.0).unwrap(), 0.0);
        let a = linear_rate(&[1.0, 2.0], &[0.0, 1.0], &[1.0, -1.0], 1.0).unwrap();
        let b = linear_rate(&[1.0, 2.0], &[0.0, 1.0], &[1.0, -1.0], 2.0).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        assert!(linear_rate(&[0.0], &[0.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn brute_force_degenerate_statistics() {
        let sde = ScalarSde {
            x0: 0.0,
            kappa: 0.0,
            b0: 1.0,
            b1: 0.0,
            horizon: 1.0,
        };
        let never = brute_force_tail(&sde, 0.5, ScalarStatistic::SupDeviation { delta: f64::INFINITY }, 0.01, 200, 3).unwrap();
        assert_eq!(never.n_hits, 0);
        let always = brute_force_tail(&sde, 0.5, ScalarStatistic::SupDeviation { delta: 0.0 }, 0.01, 200, 3).unwrap();
        assert_eq!(always.n_hits, 200);
    }

    #[test]
    fn brute_force_matches_series_on_grid() {
        // threshold a on |X|, so δ = a²; ε absorbs into b = √ε
        for &eps in &[0.25, 0.5, 1.0] {
            for &c in &[2.0, 2.3, 2.6] {
                let sde = ScalarSde {
                    x0: 0.0,
                    kappa: 0.0,
                    b0: 1.0,
                    b1: 0.0,
                    horizon: 1.0,
                };
                let a = c * libm::sqrt(eps);
                let est = brute_force_tail(&sde, eps, ScalarStatistic::SupDeviation { delta: a * a }, 1e-3, 10_000, 17)
                    .unwrap();
                let exact = gaussian_sup_tail(libm::sqrt(eps), 1.0, a).unwrap();
                let se = libm::sqrt(exact * (1.0 - exact) / est.n_paths as f64);
                assert!((est.p_hat - exact).abs() <= 3.0 * se, "eps={eps} c={c}: {} vs {exact}", est.p_hat);
            }
        }
    }
}
