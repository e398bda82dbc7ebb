//! Upper bounds on the rate function at a terminal target,
//! `inf { ½∫|ḣ|² : g_h(T) = y }`, by penalty gradient descent with adjoint
//! gradients followed by a minimum-norm Gauss–Newton (SQP) phase that makes
//! the returned control feasible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_finite, check_len, Error, Result};
use crate::ldp::skeleton::{energy, forward, ControlPath, SkeletonStep};
use crate::linalg::{dot, DenseMatrix};
use crate::models::ModelSpec;
use crate::noise::derive_seed;

/// Stated in every record: only the endpoint of the skeleton is constrained.
pub const TERMINAL_TARGET_NOTE: &str =
    "terminal-target relaxation: i_value bounds inf{1/2 int |hdot|^2 : g_h(T) = y} from above; whole-path membership is not imposed";

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateTarget {
    pub terminal: Vec<f64>,
    /// Tolerance on `‖g_h(T) − y‖_H`.
    pub match_tol: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RateConfig {
    pub n_intervals: usize,
    pub substeps_per_interval: usize,
    /// Initial gradient step.
    pub step_size: f64,
    /// Gradient iterations per penalty level.
    pub max_iters: usize,
    pub lambda0: f64,
    pub lambda_growth: f64,
    pub lambda_max: f64,
    pub sqp_iters: usize,
    /// Restart 0 starts from `ḣ ≡ 0`; later ones from seeded random controls.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            n_intervals: 50,
            substeps_per_interval: 1,
            step_size: 1.0,
            max_iters: 400,
            lambda0: 1.0,
            lambda_growth: 10.0,
            lambda_max: 1e6,
            sqp_iters: 40,
            restarts: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateStatus {
    Converged,
    /// Feasible, but the optimizer stopped before reaching stationarity.
    Stalled,
    /// The terminal gap stayed above `match_tol`.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateEstimate {
    pub target: RateTarget,
    /// `energy(control)`.
    pub i_value: f64,
    pub control: ControlPath,
    pub terminal_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: RateStatus,
    pub lambda_final: f64,
    pub restarts_run: usize,
    pub note: String,
}

struct Problem<'a> {
    model: &'a ModelSpec,
    x0: &'a [f64],
    target: &'a RateTarget,
    dt: f64,
}

struct Evaluation {
    steps: Vec<SkeletonStep>,
    states: Vec<Vec<f64>>,
    residual: Vec<f64>,
    gap: f64,
    energy: f64,
}

impl Problem<'_> {
    fn evaluate(&self, c: &ControlPath) -> Result<Evaluation> {
        let (steps, states) = forward(self.model, self.x0, c, self.dt)?;
        let end = &states[states.len() - 1];
        let residual: Vec<f64> = end.iter().zip(&self.target.terminal).map(|(g, y)| g - y).collect();
        let gap = self.model.triple.h_norm(&residual);
        Ok(Evaluation {
            steps,
            states,
            residual,
            gap,
            energy: energy(c),
        })
    }

    /// `∂(p · g_N)/∂ḣ` by one backward sweep, laid out like the control.
    fn vjp(&self, c: &ControlPath, ev: &Evaluation, p_terminal: &[f64]) -> Vec<f64> {
        let diffusion = &self.model.diffusion;
        let m = c.m;
        let mut out = vec![0.0; c.raw().len()];
        let mut p = p_terminal.to_vec();
        for (n, step) in ev.steps.iter().enumerate().rev() {
            let (g0, g1) = (&ev.states[n], &ev.states[n + 1]);
            let h = step.h;
            let slot = &mut out[step.interval * m..(step.interval + 1) * m];
            let mut weighted = vec![0.0; p.len()];
            for i in 0..p.len() {
                let den = 1.0 - 0.5 * h * step.a[i];
                weighted[i] = p[i] / den;
                p[i] *= (1.0 + 0.5 * h * step.a[i]) / den;
            }
            for (j, sj) in slot.iter_mut().enumerate() {
                let shape = diffusion.shape(j);
                let weight = diffusion.weight(j);
                let mut acc = 0.0;
                for i in 0..weighted.len() {
                    acc += weighted[i] * (0.5 * h * (g0[i] + g1[i]) * weight[i] + h * shape[i]);
                }
                *sj += acc;
            }
        }
        out
    }

    /// `E + λ gap²` and its gradient.
    fn penalized(&self, c: &ControlPath, lambda: f64) -> Result<(f64, Vec<f64>, Evaluation)> {
        let ev = self.evaluate(c)?;
        let pn: Vec<f64> = self
            .model
            .triple
            .embed_h(&ev.residual)
            .iter()
            .map(|x| 2.0 * lambda * x)
            .collect();
        let mut grad = self.vjp(c, &ev, &pn);
        for k in 0..c.n_intervals() {
            let w = c.width(k);
            for (g, u) in grad[k * c.m..(k + 1) * c.m].iter_mut().zip(c.hdot(k)) {
                *g += w * u;
            }
        }
        Ok((ev.energy + lambda * ev.gap * ev.gap, grad, ev))
    }

    /// Terminal Jacobian `∂g_N/∂ḣ`, one row per state coordinate.
    fn jacobian(&self, c: &ControlPath, ev: &Evaluation) -> Vec<Vec<f64>> {
        let n = self.model.dim();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                self.vjp(c, ev, &e)
            })
            .collect()
    }
}

fn weights(c: &ControlPath) -> Vec<f64> {
    (0..c.n_intervals())
        .flat_map(|k| core::iter::repeat(c.width(k)).take(c.m))
        .collect()
}

struct Outcome {
    control: ControlPath,
    gap: f64,
    energy: f64,
    iterations: usize,
    stationary: bool,
    lambda: f64,
}

fn descend(problem: &Problem, mut c: ControlPath, cfg: &RateConfig) -> Result<Outcome> {
    let w = weights(&c);
    let mut lambda = cfg.lambda0;
    let mut iterations = 0;
    let mut alpha = cfg.step_size;
    loop {
        let (mut phi, mut grad, mut ev) = problem.penalized(&c, lambda)?;
        for _ in 0..cfg.max_iters {
            // L² (Riesz) gradient: divide by the interval widths
            let dir: Vec<f64> = grad.iter().zip(&w).map(|(g, wk)| -g / wk).collect();
            let slope: f64 = dot(&grad, &dir);
            let scale = libm::sqrt(dot(c.raw(), &c.raw().iter().zip(&w).map(|(u, wk)| u * wk).collect::<Vec<_>>()));
            if libm::sqrt(-slope) <= 1e-10 * (1.0 + scale) {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial = c.clone();
                for (t, d) in trial.raw_mut().iter_mut().zip(&dir) {
                    *t += alpha * d;
                }
                if let Ok((phi_t, grad_t, ev_t)) = problem.penalized(&trial, lambda) {
                    if phi_t <= phi + 1e-4 * alpha * slope {
                        c = trial;
                        phi = phi_t;
                        grad = grad_t;
                        ev = ev_t;
                        accepted = true;
                        alpha = (2.0 * alpha).min(1e6);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
        }
        if ev.gap <= problem.target.match_tol || lambda >= cfg.lambda_max {
            break;
        }
        lambda = (lambda * cfg.lambda_growth).min(cfg.lambda_max);
    }
    let (c, gap, energy, sqp_iters, stationary) = restore(problem, c, cfg)?;
    Ok(Outcome {
        control: c,
        gap,
        energy,
        iterations: iterations + sqp_iters,
        stationary,
        lambda,
    })
}

/// Gauss–Newton steps for `min ½‖ḣ‖² s.t. g_h(T) = y`: each step solves the
/// problem with the terminal map linearized, via the minimum-norm formula
/// `ḣ⁺ = W⁻¹Jᵀ (J W⁻¹ Jᵀ)⁻¹ (y − g + J ḣ)`.
fn restore(problem: &Problem, mut c: ControlPath, cfg: &RateConfig) -> Result<(ControlPath, f64, f64, usize, bool)> {
    let w = weights(&c);
    let n = problem.model.dim();
    let mut ev = problem.evaluate(&c)?;
    let mut iterations = 0;
    let mut stationary = false;
    for _ in 0..cfg.sqp_iters {
        iterations += 1;
        let jac = problem.jacobian(&c, &ev);
        let mut s = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = jac[i].iter().zip(&jac[j]).zip(&w).map(|((a, b), wk)| a * b / wk).sum();
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        let trace: f64 = (0..n).map(|i| s.get(i, i)).sum();
        if !(trace > 0.0) {
            break;
        }
        for i in 0..n {
            s.add_to(i, i, 1e-14 * trace / n as f64);
        }
        let rhs: Vec<f64> = (0..n)
            .map(|i| -ev.residual[i] + dot(&jac[i], c.raw()))
            .collect();
        let Ok(mu) = s.solve(&rhs) else { break };
        let mut candidate = vec![0.0; c.raw().len()];
        for (i, mi) in mu.iter().enumerate() {
            for ((cand, jr), wk) in candidate.iter_mut().zip(&jac[i]).zip(&w) {
                *cand += mi * jr / wk;
            }
        }
        let step: Vec<f64> = candidate.iter().zip(c.raw()).map(|(a, b)| a - b).collect();
        let step_norm = libm::sqrt(step.iter().zip(&w).map(|(d, wk)| d * d * wk).sum::<f64>());
        let u_norm = libm::sqrt(c.raw().iter().zip(&w).map(|(d, wk)| d * d * wk).sum::<f64>());
        // exact-penalty merit with a weight above the multiplier size
        let nu = 1.0 + 2.0 * libm::sqrt(dot(&mu, &problem.model.triple.gram.solve(&mu)?));
        let merit = |e: &Evaluation| e.energy + nu * e.gap;
        let base = merit(&ev);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = c.clone();
            for (u, d) in trial.raw_mut().iter_mut().zip(&step) {
                *u += t * d;
            }
            if let Ok(ev_t) = problem.evaluate(&trial) {
                if merit(&ev_t) <= base || ev_t.gap < 0.5 * ev.gap {
                    c = trial;
                    ev = ev_t;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if step_norm <= 1e-10 * (1.0 + u_norm) {
            stationary = ev.gap <= problem.target.match_tol;
            break;
        }
        if !accepted {
            break;
        }
    }
    Ok((c, ev.gap, ev.energy, iterations, stationary))
}

/// Upper bound on the rate function at `target.terminal` reached at `target.horizon`.
pub fn estimate_rate(model: &ModelSpec, x0: &[f64], target: &RateTarget, cfg: &RateConfig) -> Result<RateEstimate> {
    check_len(model.dim(), x0)?;
    check_len(model.dim(), &target.terminal)?;
    check_finite("x0", x0)?;
    check_finite("target", &target.terminal)?;
    if !(target.match_tol > 0.0) {
        return Err(Error::invalid("match_tol", "must be positive"));
    }
    if cfg.n_intervals == 0 || cfg.substeps_per_interval == 0 {
        return Err(Error::invalid("n_intervals", "need at least one interval and substep"));
    }
    if !(cfg.lambda0 > 0.0 && cfg.lambda_growth > 1.0 && cfg.lambda_max >= cfg.lambda0) {
        return Err(Error::invalid("lambda", "need lambda0 > 0, growth > 1, lambda_max >= lambda0"));
    }
    let dt = target.horizon / (cfg.n_intervals * cfg.substeps_per_interval) as f64;
    let problem = Problem { model, x0, target, dt };
    let m = model.diffusion.m;
    let mut best: Option<Outcome> = None;
    let mut iterations = 0;
    let runs = cfg.restarts.max(1);
    for r in 0..runs {
        let mut start = ControlPath::zeros(target.horizon, cfg.n_intervals, m)?;
        if r > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
            for u in start.raw_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *u = 0.5 * z;
            }
        }
        let out = match descend(&problem, start, cfg) {
            Ok(o) => o,
            Err(_) if r > 0 => continue,
            Err(e) => return Err(e),
        };
        iterations += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => {
                let feasible = out.gap <= target.match_tol;
                let b_feasible = b.gap <= target.match_tol;
                (feasible && !b_feasible)
                    || (feasible == b_feasible && feasible && out.energy < b.energy)
                    || (!feasible && !b_feasible && out.gap < b.gap)
            }
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.ok_or(Error::Singular { what: "every rate restart failed" })?;
    let status = if best.gap > target.match_tol {
        RateStatus::Infeasible
    } else if best.stationary {
        RateStatus::Converged
    } else {
        RateStatus::Stalled
    };
    Ok(RateEstimate {
        target: target.clone(),
        i_value: best.energy,
        control: best.control,
        terminal_gap: best.gap,
        iterations,
        converged: status == RateStatus::Converged,
        status,
        lambda_final: best.lambda,
        restarts_run: runs,
        note: String::from(TERMINAL_TARGET_NOTE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_default, make_linear, ModelId, NoiseSpec};
    use crate::noise::DiffusionSpec;

    fn target(y: Vec<f64>) -> RateTarget {
        RateTarget {
            terminal: y,
            match_tol: 1e-8,
            horizon: 1.0,
        }
    }

    #[test]
    fn staying_put_costs_nothing() {
        let model = make_default(ModelId::Heat, 8, &NoiseSpec::default()).unwrap();
        let x0 = model.space().interpolate(|s| s * (1.0 - s));
        let est = estimate_rate(&model, &x0, &target(x0.clone()), &RateConfig::default()).unwrap();
        assert!(est.i_value <= 1e-10);
        assert_eq!(est.status, RateStatus::Converged);
    }

    #[test]
    fn scalar_additive_closed_form() {
        let model = make_linear(1, 1.0, &NoiseSpec::Additive { amplitudes: vec![2.0] }).unwrap();
        let est = estimate_rate(&model, &[0.0], &target(vec![1.0]), &RateConfig::default()).unwrap();
        assert!(est.converged, "{:?}", est.status);
        assert!((est.i_value - 0.125).abs() < 1e-9, "{}", est.i_value);
    }

    #[test]
    fn multiplicative_scalar_matches_log_distance() {
        // g' = g u: reaching y from x costs (ln(y/x))² / (2T)
        let mut model = make_linear(1, 0.0, &NoiseSpec::Zero { m: 1 }).unwrap();
        model.diffusion = DiffusionSpec::multiplicative(&model.triple, vec![vec![1.0]]).unwrap();
        let cfg = RateConfig {
            n_intervals: 200,
            ..Default::default()
        };
        let est = estimate_rate(&model, &[1.0], &target(vec![2.0]), &cfg).unwrap();
        let exact = libm::log(2.0) * libm::log(2.0) / 2.0;
        assert!(est.terminal_gap <= 1e-8);
        assert!((est.i_value / exact - 1.0).abs() < 1e-3, "{} vs {exact}", est.i_value);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let model = make_linear(2, 1.0, &NoiseSpec::Additive { amplitudes: vec![1.0] }).unwrap();
        let est = estimate_rate(&model, &[0.0, 0.0], &target(vec![1.0, 1.0]), &RateConfig::default()).unwrap();
        assert_eq!(est.status, RateStatus::Infeasible);
        assert!(!est.converged);
    }
}
