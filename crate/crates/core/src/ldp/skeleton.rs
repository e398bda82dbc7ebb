//! Controls, the skeleton equation `g' = B(g) ḣ` and the energy `½∫|ḣ|²`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::models::ModelSpec;
use crate::noise::{DiffusionKind, DiffusionSpec};
use crate::path::{Mode, Path, PathMeta};
use crate::solver::StepperConfig;

/// Piecewise-constant `ḣ`: interval `k` is `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlPath {
    pub times: Vec<f64>,
    pub m: usize,
    hdot: Vec<f64>,
}

impl ControlPath {
    pub fn new(times: Vec<f64>, m: usize, hdot: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::invalid("times", "need a grid starting at 0 with one interval or more"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times", "grid must be strictly increasing"));
        }
        if m == 0 || hdot.len() != m * (times.len() - 1) {
            return Err(Error::DimensionMismatch {
                expected: m * (times.len() - 1),
                found: hdot.len(),
            });
        }
        check_finite("control", &hdot)?;
        Ok(ControlPath { times, m, hdot })
    }

    /// Uniform grid of `n` intervals on `[0, horizon]` with `ḣ ≡ u`.
    pub fn constant(horizon: f64, n: usize, u: &[f64]) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::invalid("grid", "need n >= 1 and a positive horizon"));
        }
        let times = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        let hdot = (0..n).flat_map(|_| u.iter().copied()).collect();
        ControlPath::new(times, u.len(), hdot)
    }

    pub fn zeros(horizon: f64, n: usize, m: usize) -> Result<Self> {
        ControlPath::constant(horizon, n, &vec![0.0; m])
    }

    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn hdot(&self, k: usize) -> &[f64] {
        &self.hdot[k * self.m..(k + 1) * self.m]
    }

    pub fn hdot_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.hdot[k * self.m..(k + 1) * self.m]
    }

    pub fn raw(&self) -> &[f64] {
        &self.hdot
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.hdot
    }

    /// `h(T) = ∫ ḣ`.
    pub fn terminal(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.m];
        for k in 0..self.n_intervals() {
            let w = self.width(k);
            for (hj, uj) in h.iter_mut().zip(self.hdot(k)) {
                *hj += w * uj;
            }
        }
        h
    }
}

/// `½ Σ_k |ḣ_k|² Δt_k`.
pub fn energy(control: &ControlPath) -> f64 {
    let mut e = 0.0;
    for k in 0..control.n_intervals() {
        let u = control.hdot(k);
        e += control.width(k) * u.iter().map(|x| x * x).sum::<f64>();
    }
    0.5 * e
}

/// One implicit-midpoint substep of the skeleton ODE.
#[derive(Debug, Clone)]
pub(crate) struct SkeletonStep {
    pub interval: usize,
    pub h: f64,
    /// `a = Σ_j u_j w_j` (nodal).
    pub a: Vec<f64>,
}

/// Substeps of every control interval: `ceil(Δt_k / dt)` equal pieces.
pub(crate) fn substeps(control: &ControlPath, dt: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for k in 0..control.n_intervals() {
        let w = control.width(k);
        let pieces = libm::ceil(w / dt - 1e-9).max(1.0) as usize;
        let h = w / pieces as f64;
        out.extend(core::iter::repeat((k, h)).take(pieces));
    }
    out
}

fn combine(diffusion: &DiffusionSpec, u: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    for (k, &uk) in u.iter().enumerate() {
        if uk == 0.0 {
            continue;
        }
        match diffusion.kind {
            DiffusionKind::Zero => {}
            DiffusionKind::AdditiveTraceClass => {
                for (ci, s) in c.iter_mut().zip(diffusion.shape(k)) {
                    *ci += uk * s;
                }
            }
            DiffusionKind::LinearMultiplicative => {
                for (ai, w) in a.iter_mut().zip(diffusion.weight(k)) {
                    *ai += uk * w;
                }
            }
        }
    }
    (a, c)
}

/// Forward sweep; returns every substep and the states before and after it.
pub(crate) fn forward(
    model: &ModelSpec,
    x0: &[f64],
    control: &ControlPath,
    dt: f64,
) -> Result<(Vec<SkeletonStep>, Vec<Vec<f64>>)> {
    let dim = model.dim();
    let mut steps = Vec::new();
    let mut states = Vec::new();
    let mut g = x0.to_vec();
    states.push(g.clone());
    for (interval, h) in substeps(control, dt) {
        let (a, c) = combine(&model.diffusion, control.hdot(interval), dim);
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            let den = 1.0 - 0.5 * h * a[i];
            if !(den > 0.0) {
                return Err(Error::Singular { what: "skeleton step: control too large for the step" });
            }
            next[i] = (g[i] * (1.0 + 0.5 * h * a[i]) + h * c[i]) / den;
        }
        check_finite("skeleton state", &next)?;
        steps.push(SkeletonStep { interval, h, a });
        g = next;
        states.push(g.clone());
    }
    Ok((steps, states))
}

/// Solves `g(t) = x0 + ∫ B(g) ḣ` by the implicit midpoint rule on the control
/// grid refined to steps of at most `cfg.dt`.
pub fn skeleton_solve(model: &ModelSpec, x0: &[f64], control: &ControlPath, cfg: &StepperConfig) -> Result<Path> {
    cfg.validate()?;
    check_len(model.dim(), x0)?;
    check_finite("x0", x0)?;
    if control.m != model.diffusion.m {
        return Err(Error::DimensionMismatch {
            expected: model.diffusion.m,
            found: control.m,
        });
    }
    let (steps, states) = forward(model, x0, control, cfg.dt)?;
    let mut times = Vec::with_capacity(states.len());
    times.push(0.0);
    let mut t = 0.0;
    let mut last_interval = 0;
    for s in &steps {
        if s.interval != last_interval {
            t = control.times[s.interval];
            last_interval = s.interval;
        }
        t += s.h;
        times.push(t);
    }
    let dim = model.dim();
    Path::from_parts(
        times,
        dim,
        states.into_iter().flatten().collect(),
        PathMeta {
            model_id: String::from(model.id.as_str()),
            mode: Mode::Skeleton,
            epsilon: 0.0,
            dt: cfg.dt,
            seed: 0,
            refined_steps: 0,
        },
    )
}
