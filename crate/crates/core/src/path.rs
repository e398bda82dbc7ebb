//! Discrete trajectories and the small-time simulation driver.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::models::ModelSpec;
use crate::noise::NoiseStream;
use crate::solver::{solve_drift, StepperConfig};

/// States with an H-norm above this are declared a blow-up.
pub const BLOW_UP_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    /// `dX = ε A(εt, X) dt + √ε B(X) dW`
    Full,
    /// `dY = √ε B(Y) dW`
    ZeroDrift,
    /// Controlled `g' = B(g) ḣ`.
    Skeleton,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::ZeroDrift => "zero_drift",
            Mode::Skeleton => "skeleton",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathMeta {
    pub model_id: String,
    pub mode: Mode,
    pub epsilon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Steps that needed drift substeps to converge.
    pub refined_steps: usize,
}

/// Time grid plus one state per grid point, stored row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Path {
    pub times: Vec<f64>,
    dim: usize,
    states: Vec<f64>,
    pub meta: PathMeta,
}

impl Path {
    pub fn from_parts(times: Vec<f64>, dim: usize, states: Vec<f64>, meta: PathMeta) -> Result<Path> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::invalid("times", "grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times", "grid must be strictly increasing"));
        }
        if dim == 0 || states.len() != dim * times.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * times.len(),
                found: states.len(),
            });
        }
        check_finite("path states", &states)?;
        Ok(Path {
            times,
            dim,
            states,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Flat row-major payload.
    pub fn raw_states(&self) -> &[f64] {
        &self.states
    }
}

/// Number of steps of size `dt` covering `[0, horizon]`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("horizon", "must be positive and finite"));
    }
    if !(dt > 0.0) || dt > horizon {
        return Err(Error::invalid("dt", "must satisfy 0 < dt <= T"));
    }
    let n = libm::round(horizon / dt);
    if libm::fabs(n * dt - horizon) > 1e-9 * horizon {
        return Err(Error::invalid("dt", "must divide the horizon"));
    }
    Ok(n as usize)
}

/// Incremental simulator; yields one state per step without storing the path.
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    noise: &'a NoiseStream,
    cfg: StepperConfig,
    mode: Mode,
    epsilon: f64,
    sqrt_eps: f64,
    step: usize,
    n_steps: usize,
    state: Vec<f64>,
    noise_term: Vec<f64>,
    pub refined_steps: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        model: &'a ModelSpec,
        x0: &[f64],
        epsilon: f64,
        horizon: f64,
        cfg: &StepperConfig,
        noise: &'a NoiseStream,
        mode: Mode,
    ) -> Result<Self> {
        cfg.validate()?;
        check_len(model.dim(), x0)?;
        check_finite("x0", x0)?;
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1]"));
        }
        if mode == Mode::Skeleton {
            return Err(Error::invalid("mode", "skeleton paths come from skeleton_solve"));
        }
        let n_steps = step_count(horizon, cfg.dt)?;
        if noise.m != model.diffusion.m {
            return Err(Error::DimensionMismatch {
                expected: model.diffusion.m,
                found: noise.m,
            });
        }
        if noise.n_steps < n_steps {
            return Err(Error::invalid("noise", "stream has fewer steps than the horizon needs"));
        }
        if libm::fabs(noise.dt - cfg.dt) > 1e-12 * cfg.dt {
            return Err(Error::invalid("noise", "stream dt differs from the stepper dt"));
        }
        Ok(Stepper {
            model,
            noise,
            cfg: *cfg,
            mode,
            epsilon,
            sqrt_eps: libm::sqrt(epsilon),
            step: 0,
            n_steps,
            state: x0.to_vec(),
            noise_term: vec![0.0; x0.len()],
            refined_steps: 0,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_steps
    }

    /// Advances one step; `Ok(false)` once the horizon is reached.
    pub fn advance(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        let k = self.step;
        let model = self.model;
        model
            .diffusion
            .apply_into(&self.state, self.noise.increment(k), &mut self.noise_term);
        // noise_term becomes b = x + √ε B(x) Δ_k in place
        for (w, x) in self.noise_term.iter_mut().zip(&self.state) {
            *w = x + self.sqrt_eps * *w;
        }
        let next = match self.mode {
            Mode::ZeroDrift => core::mem::replace(&mut self.noise_term, Vec::new()),
            _ => {
                let t = self.epsilon * ((k + 1) as f64 * self.cfg.dt);
                let sdt = self.epsilon * self.cfg.dt;
                match solve_drift(model, t, &self.noise_term, sdt, &self.cfg) {
                    Ok(x) => x,
                    Err(first) => {
                        let b = self.noise_term.clone();
                        let x = self.refine(&b, k, first)?;
                        self.refined_steps += 1;
                        x
                    }
                }
            }
        };
        let norm = model.triple.h_norm(&next);
        if !norm.is_finite() || norm > BLOW_UP_NORM || next.iter().any(|x| !x.is_finite()) {
            if self.noise_term.is_empty() {
                self.noise_term = next;
            }
            return Err(Error::BlowUp {
                step: k + 1,
                norm,
                last_state: self.state.clone(),
            });
        }
        let previous = core::mem::replace(&mut self.state, next);
        if self.noise_term.is_empty() {
            self.noise_term = previous;
        }
        self.step += 1;
        Ok(true)
    }

    /// Retries a failed drift solve with `2^j` implicit substeps over the same interval.
    fn refine(&self, b: &[f64], k: usize, first: Error) -> Result<Vec<f64>> {
        let mut last = first;
        for j in 1..=self.cfg.max_halvings {
            let parts = 1usize << j;
            let h = self.cfg.dt / parts as f64;
            let mut x = b.to_vec();
            let mut ok = true;
            for q in 0..parts {
                let t = self.epsilon * (k as f64 * self.cfg.dt + (q + 1) as f64 * h);
                match solve_drift(self.model, t, &x, self.epsilon * h, &self.cfg) {
                    Ok(y) => x = y,
                    Err(e) => {
                        last = e;
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(x);
            }
        }
        Err(Error::Step {
            step: k + 1,
            source: alloc::boxed::Box::new(last),
        })
    }
}

/// Simulates `X^ε` (mode `Full`) or `Y^ε` (mode `ZeroDrift`) on `[0, horizon]`.
/// Both modes consume the increments of `noise` scaled by `√ε`.
pub fn simulate(
    model: &ModelSpec,
    x0: &[f64],
    epsilon: f64,
    horizon: f64,
    cfg: &StepperConfig,
    noise: &NoiseStream,
    mode: Mode,
) -> Result<Path> {
    let mut stepper = Stepper::new(model, x0, epsilon, horizon, cfg, noise, mode)?;
    let n = stepper.n_steps();
    let dim = model.dim();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(dim * (n + 1));
    times.push(0.0);
    states.extend_from_slice(x0);
    while stepper.advance()? {
        times.push(stepper.time());
        states.extend_from_slice(stepper.state());
    }
    Ok(Path {
        times,
        dim,
        states,
        meta: PathMeta {
            model_id: String::from(model.id.as_str()),
            mode,
            epsilon,
            dt: cfg.dt,
            seed: noise.seed,
            refined_steps: stepper.refined_steps,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::models::{make_default, make_heat, ModelId, NoiseSpec};
    use crate::noise::{derive_seed, sample_stream};

    #[test]
    fn zero_noise_zero_drift_is_constant() {
        let model = make_default(ModelId::Burgers, 16, &NoiseSpec::Zero { m: 4 }).unwrap();
        let x0 = model.space().interpolate(|s| s * (1.0 - s));
        let cfg = StepperConfig::with_dt(0.01);
        let noise = sample_stream(4, 0.01, 100, 3).unwrap();
        let p = simulate(&model, &x0, 0.5, 1.0, &cfg, &noise, Mode::ZeroDrift).unwrap();
        assert_eq!(p.len(), 101);
        for s in p.states() {
            assert_eq!(s, &x0[..]);
        }
    }

    #[test]
    fn heat_decay_matches_first_eigenvalue() {
        let model = make_heat(256, &NoiseSpec::Zero { m: 1 }).unwrap();
        let x0 = model.space().interpolate(|s| (core::f64::consts::PI * s).sin());
        let cfg = StepperConfig::with_dt(1e-4);
        let noise = sample_stream(1, 1e-4, 1000, 0).unwrap();
        let p = simulate(&model, &x0, 1.0, 0.1, &cfg, &noise, Mode::Full).unwrap();
        let ratio = model.triple.h_norm(p.last()) / model.triple.h_norm(&x0);
        let exact = libm::exp(-core::f64::consts::PI * core::f64::consts::PI * 0.1);
        assert!((ratio / exact - 1.0).abs() < 0.02, "{ratio} vs {exact}");
    }

    #[test]
    fn discrete_energy_inequality_holds_per_step() {
        for id in [ModelId::Heat, ModelId::Burgers, ModelId::PLaplace, ModelId::Pme] {
            let model = make_default(id, 16, &NoiseSpec::default()).unwrap();
            let x0 = model.space().interpolate(|s| (core::f64::consts::PI * s).sin());
            let (eps, dt) = (0.5, 0.01);
            let cfg = StepperConfig::with_dt(dt);
            let noise = sample_stream(model.diffusion.m, dt, 50, 17).unwrap();
            let p = simulate(&model, &x0, eps, 0.5, &cfg, &noise, Mode::Full).unwrap();
            for k in 0..50 {
                let xk = p.state(k);
                let xn = p.state(k + 1);
                let bw = crate::noise::apply_diffusion(&model.triple, &model.diffusion, xk, noise.increment(k)).unwrap();
                let b: Vec<f64> = xk.iter().zip(&bw).map(|(x, w)| x + eps.sqrt() * w).collect();
                let a = model.drift(eps * (k + 1) as f64 * dt, xn).unwrap();
                let lhs = model.triple.h_norm(xn).powi(2);
                let rhs = model.triple.h_norm(&b).powi(2) + 2.0 * eps * dt * dot(&a, xn);
                assert!(lhs <= rhs + 1e-8 * (1.0 + rhs.abs()), "{id}: step {k}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn scaling_identity_for_every_model() {
        for (i, id) in [ModelId::Heat, ModelId::Burgers, ModelId::PLaplace, ModelId::Pme]
            .into_iter()
            .enumerate()
        {
            let model = make_default(id, 12, &NoiseSpec::default()).unwrap();
            let x0 = model.space().interpolate(|s| 2.0 * (core::f64::consts::PI * s).sin());
            let (eps, dt, t) = (0.3, 0.02, 1.0);
            let noise = sample_stream(model.diffusion.m, dt, 50, derive_seed(5, i as u64)).unwrap();
            let a = simulate(&model, &x0, eps, t, &StepperConfig::with_dt(dt), &noise, Mode::Full).unwrap();
            let scaled = noise.scaled(eps.sqrt(), eps * dt);
            let b = simulate(&model, &x0, 1.0, eps * t, &StepperConfig::with_dt(eps * dt), &scaled, Mode::Full)
                .unwrap();
            for k in 0..a.len() {
                let d: Vec<f64> = a.state(k).iter().zip(b.state(k)).map(|(x, y)| x - y).collect();
                assert!(model.triple.h_norm(&d) < 1e-8, "{id} step {k}");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let model = make_default(ModelId::PLaplace, 10, &NoiseSpec::default()).unwrap();
        let x0 = model.space().interpolate(|s| s * (1.0 - s));
        let noise = sample_stream(16, 0.01, 30, 8).unwrap();
        let cfg = StepperConfig::with_dt(0.01);
        let a = simulate(&model, &x0, 0.2, 0.3, &cfg, &noise, Mode::Full).unwrap();
        let b = simulate(&model, &x0, 0.2, 0.3, &cfg, &noise, Mode::Full).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let model = make_heat(8, &NoiseSpec::default()).unwrap();
        let x0 = vec![0.0; 8];
        let cfg = StepperConfig::with_dt(0.1);
        let short = sample_stream(16, 0.1, 3, 0).unwrap();
        assert!(simulate(&model, &x0, 0.5, 1.0, &cfg, &short, Mode::Full).is_err());
        let wrong_m = sample_stream(4, 0.1, 10, 0).unwrap();
        assert!(simulate(&model, &x0, 0.5, 1.0, &cfg, &wrong_m, Mode::Full).is_err());
        let ok = sample_stream(16, 0.1, 10, 0).unwrap();
        assert!(simulate(&model, &x0, 1.5, 1.0, &cfg, &ok, Mode::Full).is_err());
        assert!(simulate(&model, &[0.0; 3], 0.5, 1.0, &cfg, &ok, Mode::Full).is_err());
    }
}
