//! Damped Newton solver for monotone residual maps and the drift-implicit
//! Euler–Maruyama step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{norm2, Jacobian};
use crate::models::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StepperConfig {
    pub dt: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
    /// Drift substep refinements tried on a failed step (`2, 4, ..., 2^max_halvings`).
    pub max_halvings: u32,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            solver_tol: 1e-10,
            max_iters: 60,
            max_halvings: 4,
        }
    }
}

impl StepperConfig {
    pub fn with_dt(dt: f64) -> Self {
        StepperConfig {
            dt,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid("solver_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// A residual map `R: R^n → R^n` with an optional derivative and the norm
/// in which convergence is measured.
pub trait ResidualMap {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `None` selects fixed-point relaxation `x − ω R(x)`.
    fn jacobian(&self, _x: &[f64]) -> Result<Option<Jacobian>> {
        Ok(None)
    }
    fn norm(&self, r: &[f64]) -> f64 {
        norm2(r)
    }
}

/// Closure adapter: Euclidean norm, no Jacobian.
pub struct FnResidual<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> ResidualMap for FnResidual<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Residual norms of the accepted iterates, starting with `x0`.
    pub history: Vec<f64>,
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Damped Newton with Armijo backtracking on the residual norm, falling back
/// to relaxation `x − ω R(x)` when the Newton direction does not decrease it.
/// Accepted iterates have strictly decreasing residual norms.
pub fn solve_monotone<R: ResidualMap + ?Sized>(
    map: &R,
    x0: &[f64],
    cfg: &StepperConfig,
) -> Result<Solution> {
    check_len(map.dim(), x0)?;
    check_finite("initial guess", x0)?;
    let mut x = x0.to_vec();
    let mut r = map.residual(&x)?;
    let mut rn = map.norm(&r);
    let mut history = vec![rn];
    let mut trial = vec![0.0; x.len()];
    for iter in 0..cfg.max_iters {
        if rn <= cfg.solver_tol {
            return Ok(Solution {
                x,
                iterations: iter,
                history,
            });
        }
        let mut accepted = false;
        if let Some(jac) = map.jacobian(&x)? {
            if let Ok(dx) = jac.solve(&r) {
                let mut lambda = 1.0;
                for _ in 0..MAX_BACKTRACKS {
                    for ((t, xi), d) in trial.iter_mut().zip(&x).zip(&dx) {
                        *t = xi - lambda * d;
                    }
                    if let Some((rt, rtn)) = try_eval(map, &trial) {
                        if rtn <= (1.0 - ARMIJO_C * lambda) * rn {
                            x.copy_from_slice(&trial);
                            r = rt;
                            rn = rtn;
                            accepted = true;
                            break;
                        }
                    }
                    lambda *= 0.5;
                }
            }
        }
        if !accepted {
            let mut omega = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                for ((t, xi), ri) in trial.iter_mut().zip(&x).zip(&r) {
                    *t = xi - omega * ri;
                }
                if let Some((rt, rtn)) = try_eval(map, &trial) {
                    if rtn < rn {
                        x.copy_from_slice(&trial);
                        r = rt;
                        rn = rtn;
                        accepted = true;
                        break;
                    }
                }
                omega *= 0.5;
            }
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations: iter,
                residual: rn,
                history,
            });
        }
        history.push(rn);
    }
    if rn <= cfg.solver_tol {
        return Ok(Solution {
            x,
            iterations: cfg.max_iters,
            history,
        });
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        residual: rn,
        history,
    })
}

fn try_eval<R: ResidualMap + ?Sized>(map: &R, x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let r = map.residual(x).ok()?;
    let n = map.norm(&r);
    n.is_finite().then_some((r, n))
}

/// `R(X) = G_H (X − b) − s·dt·F(t, X)`, measured in the dual H-norm.
struct StepResidual<'a> {
    model: &'a ModelSpec,
    t: f64,
    b: &'a [f64],
    sdt: f64,
}

impl ResidualMap for StepResidual<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let diff: Vec<f64> = x.iter().zip(self.b).map(|(a, b)| a - b).collect();
        let mut r = self.model.triple.embed_h(&diff);
        let f = self.model.drift(self.t, x)?;
        for (ri, fi) in r.iter_mut().zip(&f) {
            *ri -= self.sdt * fi;
        }
        Ok(r)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Option<Jacobian>> {
        let jf = self.model.drift_jacobian(self.t, x)?;
        let gram = &self.model.triple.gram;
        let n = self.dim();
        let jac = match (gram.as_tridiagonal(n), jf) {
            (Some(g), Jacobian::Tridiagonal(j)) => Jacobian::Tridiagonal(g.add_scaled(-self.sdt, &j)),
            (_, jf) => {
                let mut d = gram.to_dense(n);
                match jf {
                    Jacobian::Tridiagonal(j) => d.add_tridiagonal(-self.sdt, &j),
                    Jacobian::Dense(j) => d = d.add_scaled(-self.sdt, &j),
                }
                Jacobian::Dense(d)
            }
        };
        Ok(Some(jac))
    }

    fn norm(&self, r: &[f64]) -> f64 {
        self.model
            .triple
            .gram
            .dual_residual_norm(r)
            .unwrap_or(f64::INFINITY)
    }
}

/// One drift-implicit step `X = x + noise_term + drift_scale·dt·A(t, X)`,
/// solved to `solver_tol` in the H-norm. `t` is the drift time argument.
pub fn implicit_step(
    model: &ModelSpec,
    t: f64,
    x: &[f64],
    drift_scale: f64,
    noise_term: &[f64],
    cfg: &StepperConfig,
) -> Result<Vec<f64>> {
    check_len(model.dim(), x)?;
    check_len(model.dim(), noise_term)?;
    if !(drift_scale >= 0.0) {
        return Err(Error::invalid("drift_scale", "must be nonnegative"));
    }
    let b: Vec<f64> = x.iter().zip(noise_term).map(|(a, w)| a + w).collect();
    if drift_scale == 0.0 {
        return Ok(b);
    }
    solve_drift(model, t, &b, drift_scale * cfg.dt, cfg)
}

/// Solves `G_H (X − b) = sdt·F(t, X)` starting from `b`.
pub(crate) fn solve_drift(
    model: &ModelSpec,
    t: f64,
    b: &[f64],
    sdt: f64,
    cfg: &StepperConfig,
) -> Result<Vec<f64>> {
    let map = StepResidual { model, t, b, sdt };
    solve_monotone(&map, b, cfg).map(|s| s.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Tridiagonal;
    use crate::models::{make_default, make_heat, make_linear, ModelId, NoiseSpec};
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn tight() -> StepperConfig {
        StepperConfig {
            solver_tol: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn identity_minus_constant() {
        let c = [1.5, -2.0, 0.25];
        let map = FnResidual {
            dim: 3,
            f: |x: &[f64]| x.iter().zip(&c).map(|(a, b)| a - b).collect(),
        };
        let s = solve_monotone(&map, &[0.0; 3], &tight()).unwrap();
        for (a, b) in s.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_cubic_matches_bisection() {
        let (dt, b) = (0.1, 1.0);
        let g = |u: f64| u + dt * u * u * u - b;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let map = FnResidual {
            dim: 1,
            f: |x: &[f64]| vec![g(x[0])],
        };
        let s = solve_monotone(&map, &[0.0], &tight()).unwrap();
        assert!((s.x[0] - 0.5 * (lo + hi)).abs() < 1e-10);
        assert!(s.history.windows(2).all(|w| w[1] < w[0]));
    }

    struct Linear(Tridiagonal, Vec<f64>);
    impl ResidualMap for Linear {
        fn dim(&self) -> usize {
            self.1.len()
        }
        fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.mul_vec(x).iter().zip(&self.1).map(|(a, b)| a - b).collect())
        }
        fn jacobian(&self, _x: &[f64]) -> Result<Option<Jacobian>> {
            Ok(Some(Jacobian::Tridiagonal(self.0.clone())))
        }
    }

    #[test]
    fn spd_system_matches_direct_solve() {
        let a = Tridiagonal::toeplitz(20, -1.0, 3.0);
        let rhs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let direct = a.to_dense().solve(&rhs).unwrap();
        let s = solve_monotone(&Linear(a, rhs), &[0.0; 20], &tight()).unwrap();
        for (x, y) in s.x.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn relaxation_fallback_converges() {
        let map = FnResidual {
            dim: 2,
            f: |x: &[f64]| vec![x[0] + 0.1 * x[0].powi(3) - 1.0, 2.0 * x[1] + 0.5],
        };
        let s = solve_monotone(&map, &[0.0, 0.0], &StepperConfig { max_iters: 500, ..tight() }).unwrap();
        assert!((s.x[1] + 0.25).abs() < 1e-10);
    }

    #[test]
    fn nonconvergence_reports_history() {
        let map = FnResidual {
            dim: 1,
            f: |x: &[f64]| vec![x[0] * x[0] + 1.0],
        };
        match solve_monotone(&map, &[0.3], &tight()) {
            Err(Error::NonConvergence { history, .. }) => assert!(!history.is_empty()),
            other => panic!("expected nonconvergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_drift_step_is_exact_sum() {
        let model = make_default(ModelId::Burgers, 8, &NoiseSpec::default()).unwrap();
        let x: Vec<f64> = (0..8).map(|i| 0.1 * i as f64).collect();
        let w: Vec<f64> = (0..8).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let y = implicit_step(&model, 0.0, &x, 0.0, &w, &StepperConfig::default()).unwrap();
        for i in 0..8 {
            assert_eq!(y[i], x[i] + w[i]);
        }
    }

    #[test]
    fn heat_step_is_linear_implicit_euler() {
        let model = make_heat(255, &NoiseSpec::Zero { m: 1 }).unwrap();
        let space = model.space();
        let x = space.interpolate(|s| (core::f64::consts::PI * s).sin());
        let cfg = StepperConfig {
            dt: 1e-4,
            ..tight()
        };
        let y = implicit_step(&model, 0.0, &x, 1.0, &vec![0.0; 255], &cfg).unwrap();
        // (M + dt K) y = M x
        let lhs = space.mass().add_scaled(cfg.dt, space.stiffness());
        let direct = lhs.solve(&space.mass().mul_vec(&x)).unwrap();
        let diff: Vec<f64> = y.iter().zip(&direct).map(|(a, b)| a - b).collect();
        assert!(model.triple.h_norm(&diff) < 1e-10);
    }

    #[test]
    fn plaplace_step_residual_by_substitution() {
        let model = make_default(ModelId::PLaplace, 40, &NoiseSpec::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..40)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let cfg = StepperConfig {
            dt: 1e-3,
            ..Default::default()
        };
        let y = implicit_step(&model, 0.3, &x, 1.0, &vec![0.0; 40], &cfg).unwrap();
        let f = model.drift(0.3, &y).unwrap();
        let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let r: Vec<f64> = model
            .triple
            .embed_h(&diff)
            .iter()
            .zip(&f)
            .map(|(g, fi)| g - cfg.dt * fi)
            .collect();
        assert!(model.triple.gram.dual_residual_norm(&r).unwrap() <= cfg.solver_tol);
    }

    #[test]
    fn pme_and_linear_steps_converge() {
        let pme = make_default(ModelId::Pme, 24, &NoiseSpec::default()).unwrap();
        let x = pme.space().interpolate(|s| 3.0 * (core::f64::consts::PI * s).sin());
        implicit_step(&pme, 1.0, &x, 1.0, &vec![0.0; 24], &StepperConfig::with_dt(1e-2)).unwrap();
        let lin = make_linear(3, 2.0, &NoiseSpec::Additive { amplitudes: vec![1.0] }).unwrap();
        let y = implicit_step(&lin, 0.0, &[1.0, 2.0, 3.0], 1.0, &[0.0; 3], &StepperConfig::with_dt(0.5)).unwrap();
        assert!((y[2] - 1.5).abs() < 1e-10);
    }
}
