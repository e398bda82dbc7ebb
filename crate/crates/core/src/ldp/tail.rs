//! Coupled Monte Carlo estimators: exponential-equivalence tails, energy-ball
//! exits and zero-drift deviations.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{check_finite, check_len, Error, Result};
use crate::framework::GelfandTriple;
use crate::ldp::stats::{clopper_pearson, zero_hit_bound, CONFIDENCE};
use crate::models::ModelSpec;
use crate::noise::{derive_seed, sample_stream, StreamHeader, SEED_RULE};
use crate::path::{step_count, Mode, Path, Stepper};
use crate::solver::StepperConfig;

/// `sup_k ‖a_k − b_k‖_H²` over a shared time grid.
pub fn sup_h_distance(triple: &GelfandTriple, a: &Path, b: &Path) -> Result<f64> {
    if a.times != b.times || a.dim() != b.dim() {
        return Err(Error::GridMismatch);
    }
    check_len(triple.dim(), a.state(0))?;
    let mut sup = 0.0f64;
    let mut diff = alloc::vec![0.0; a.dim()];
    for (x, y) in a.states().zip(b.states()) {
        for ((d, p), q) in diff.iter_mut().zip(x).zip(y) {
            *d = p - q;
        }
        let h = triple.h_norm(&diff);
        sup = sup.max(h * h);
    }
    Ok(sup)
}

/// Running value of `sup_t ‖X‖_H^p + ε ∫ ‖X‖_H^{p−2} ‖X‖_V^α dt` (trapezoidal in time).
#[derive(Debug, Clone)]
pub struct EnergyAccumulator {
    p: f64,
    alpha: f64,
    epsilon: f64,
    sup: f64,
    integral: f64,
    last: Option<(f64, f64)>,
}

impl EnergyAccumulator {
    pub fn new(p: f64, alpha: f64, epsilon: f64) -> Self {
        EnergyAccumulator {
            p,
            alpha,
            epsilon,
            sup: 0.0,
            integral: 0.0,
            last: None,
        }
    }

    pub fn push(&mut self, triple: &GelfandTriple, t: f64, x: &[f64]) {
        let h = triple.h_norm(x);
        let v = triple.v_norm(x);
        let integrand = libm::pow(h, self.p - 2.0) * libm::pow(v, self.alpha);
        self.sup = self.sup.max(libm::pow(h, self.p));
        if let Some((t0, f0)) = self.last {
            self.integral += 0.5 * (t - t0) * (f0 + integrand);
        }
        self.last = Some((t, integrand));
    }

    pub fn value(&self) -> f64 {
        self.sup + self.epsilon * self.integral
    }
}

/// `(|X|_{H,V}(T))^p` of a full-mode path.
pub fn hv_energy(path: &Path, epsilon: f64, p: f64, model: &ModelSpec) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::invalid("p_exponent", "must be at least 2"));
    }
    check_len(model.dim(), path.state(0))?;
    let mut acc = EnergyAccumulator::new(p, model.alpha(), epsilon);
    for (t, x) in path.times.iter().zip(path.states()) {
        acc.push(&model.triple, *t, x);
    }
    Ok(acc.value())
}

/// Path functional whose exceedance probability is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Statistic {
    /// `sup_t ‖X^ε − Y^ε‖_H² > δ` on one shared noise stream.
    EquivSupDistance { delta: f64 },
    /// `|X^ε|_{H,V}(T) > M`, i.e. the energy functional exceeds `M^p`.
    EnergyBallExit { radius: f64, p: f64 },
    /// `sup_t ‖Y^ε − x0‖_H² > δ`.
    ZeroDriftDeviation { delta: f64 },
}

impl Statistic {
    pub fn threshold(&self) -> f64 {
        match *self {
            Statistic::EquivSupDistance { delta } | Statistic::ZeroDriftDeviation { delta } => delta,
            Statistic::EnergyBallExit { radius, .. } => radius,
        }
    }

    fn with_threshold(self, t: f64) -> Statistic {
        match self {
            Statistic::EquivSupDistance { .. } => Statistic::EquivSupDistance { delta: t },
            Statistic::ZeroDriftDeviation { .. } => Statistic::ZeroDriftDeviation { delta: t },
            Statistic::EnergyBallExit { p, .. } => Statistic::EnergyBallExit { radius: t, p },
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.threshold();
        if t.is_nan() || t < 0.0 {
            return Err(Error::invalid("threshold", "must be nonnegative"));
        }
        if let Statistic::EnergyBallExit { p, .. } = self {
            if !(*p >= 2.0) {
                return Err(Error::invalid("p_exponent", "must be at least 2"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TailExperiment {
    pub statistic: Statistic,
    pub epsilon: f64,
    pub n_paths: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub cfg: StepperConfig,
}

impl TailExperiment {
    fn validate(&self, model: &ModelSpec) -> Result<usize> {
        self.statistic.validate()?;
        self.cfg.validate()?;
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1]"));
        }
        check_len(model.dim(), &self.x0)?;
        check_finite("x0", &self.x0)?;
        step_count(self.horizon, self.cfg.dt)
    }
}

/// Result of one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathOutcome {
    /// Statistic value on the scale of its threshold (a lower bound when stopped early).
    pub value: f64,
    pub hit: bool,
    pub blow_up: bool,
}

/// Runs one ensemble member on the stream seeded with `seed`. With
/// `early_stop` the path ends as soon as the event is certain.
pub fn path_outcome(
    model: &ModelSpec,
    exp: &TailExperiment,
    seed: u64,
    early_stop: bool,
) -> Result<PathOutcome> {
    let n_steps = exp.validate(model)?;
    let noise = sample_stream(model.diffusion.m, exp.cfg.dt, n_steps, seed)?;
    let triple = &model.triple;
    let threshold = exp.statistic.threshold();
    let blown = |e: Error| -> Result<PathOutcome> {
        match e {
            Error::BlowUp { .. } => Ok(PathOutcome {
                value: f64::INFINITY,
                hit: !matches!(exp.statistic, Statistic::EquivSupDistance { .. }),
                blow_up: true,
            }),
            other => Err(other),
        }
    };
    let mut diff = alloc::vec![0.0; model.dim()];
    match exp.statistic {
        Statistic::EquivSupDistance { .. } => {
            let mut x = Stepper::new(model, &exp.x0, exp.epsilon, exp.horizon, &exp.cfg, &noise, Mode::Full)?;
            let mut y =
                Stepper::new(model, &exp.x0, exp.epsilon, exp.horizon, &exp.cfg, &noise, Mode::ZeroDrift)?;
            let mut sup = 0.0f64;
            loop {
                match x.advance() {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => return blown(e),
                }
                if let Err(e) = y.advance() {
                    return blown(e);
                }
                for ((d, a), b) in diff.iter_mut().zip(x.state()).zip(y.state()) {
                    *d = a - b;
                }
                let h = triple.h_norm(&diff);
                sup = sup.max(h * h);
                if early_stop && sup > threshold {
                    break;
                }
            }
            Ok(PathOutcome {
                value: sup,
                hit: sup > threshold,
                blow_up: false,
            })
        }
        Statistic::ZeroDriftDeviation { .. } => {
            let mut y =
                Stepper::new(model, &exp.x0, exp.epsilon, exp.horizon, &exp.cfg, &noise, Mode::ZeroDrift)?;
            let mut sup = 0.0f64;
            loop {
                match y.advance() {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => return blown(e),
                }
                for ((d, a), b) in diff.iter_mut().zip(y.state()).zip(&exp.x0) {
                    *d = a - b;
                }
                let h = triple.h_norm(&diff);
                sup = sup.max(h * h);
                if early_stop && sup > threshold {
                    break;
                }
            }
            Ok(PathOutcome {
                value: sup,
                hit: sup > threshold,
                blow_up: false,
            })
        }
        Statistic::EnergyBallExit { radius, p } => {
            let mut x = Stepper::new(model, &exp.x0, exp.epsilon, exp.horizon, &exp.cfg, &noise, Mode::Full)?;
            let mut acc = EnergyAccumulator::new(p, model.alpha(), exp.epsilon);
            acc.push(triple, 0.0, &exp.x0);
            let level = libm::pow(radius, p);
            loop {
                match x.advance() {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(e) => return blown(e),
                }
                acc.push(triple, x.time(), x.state());
                // both terms are nondecreasing in time
                if early_stop && acc.value() > level {
                    break;
                }
            }
            let value = libm::pow(acc.value(), 1.0 / p);
            Ok(PathOutcome {
                value,
                hit: acc.value() > level,
                blow_up: false,
            })
        }
    }
}

/// Executes ensemble members; implementations must return results in index order.
pub trait Ensemble {
    fn map_paths(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Result<PathOutcome> + Sync),
    ) -> Vec<Result<PathOutcome>>;
}

/// In-order execution on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Ensemble for Sequential {
    fn map_paths(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Result<PathOutcome> + Sync),
    ) -> Vec<Result<PathOutcome>> {
        (0..n).map(f).collect()
    }
}

fn collect_outcomes(results: Vec<Result<PathOutcome>>) -> Result<Vec<PathOutcome>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TailEstimate {
    pub statistic: Statistic,
    pub epsilon: f64,
    pub threshold: f64,
    pub n_paths: usize,
    pub n_hits: usize,
    /// Paths whose H-norm exceeded the blow-up level (see [`PathOutcome::blow_up`]).
    pub n_blowups: usize,
    pub p_hat: f64,
    /// One-sided 95% upper bound on `p`, present iff `n_hits = 0`.
    pub p_bound: Option<f64>,
    /// `ε log p̂`, or `ε log p_bound` when there were no hits.
    pub log_scaled: f64,
    pub is_bound: bool,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub confidence: f64,
    pub master_seed: u64,
    pub seed_rule: String,
    /// Stream parameters; each path uses `seed = derive_seed(master_seed, index)`.
    pub stream: StreamHeader,
}

fn summarize(
    exp: &TailExperiment,
    statistic: Statistic,
    outcomes: &[PathOutcome],
    master_seed: u64,
    m: usize,
    n_steps: usize,
) -> TailEstimate {
    let n = outcomes.len();
    let hits = outcomes.iter().filter(|o| o.hit).count();
    let blowups = outcomes.iter().filter(|o| o.blow_up).count();
    let p_hat = hits as f64 / n as f64;
    let (ci_lo, ci_hi) = clopper_pearson(hits, n, CONFIDENCE);
    let (p_bound, log_scaled, is_bound) = if hits == 0 {
        let b = zero_hit_bound(n);
        (Some(b), exp.epsilon * libm::log(b), true)
    } else {
        (None, exp.epsilon * libm::log(p_hat), false)
    };
    TailEstimate {
        statistic,
        epsilon: exp.epsilon,
        threshold: statistic.threshold(),
        n_paths: n,
        n_hits: hits,
        n_blowups: blowups,
        p_hat,
        p_bound,
        log_scaled,
        is_bound,
        ci_lo,
        ci_hi,
        confidence: CONFIDENCE,
        master_seed,
        seed_rule: String::from(SEED_RULE),
        stream: StreamHeader {
            m,
            dt: exp.cfg.dt,
            n_steps,
            seed: master_seed,
        },
    }
}

pub fn estimate_tail(model: &ModelSpec, exp: &TailExperiment, master_seed: u64) -> Result<TailEstimate> {
    estimate_tail_with(&Sequential, model, exp, master_seed)
}

pub fn estimate_tail_with<E: Ensemble + ?Sized>(
    ens: &E,
    model: &ModelSpec,
    exp: &TailExperiment,
    master_seed: u64,
) -> Result<TailEstimate> {
    let n_steps = exp.validate(model)?;
    let outcomes = collect_outcomes(ens.map_paths(exp.n_paths, &|i| {
        path_outcome(model, exp, derive_seed(master_seed, i as u64), true)
    }))?;
    Ok(summarize(exp, exp.statistic, &outcomes, master_seed, model.diffusion.m, n_steps))
}

/// Exceedance curve over several thresholds from one ensemble: every path is
/// run to the horizon once and compared with each threshold, so the hit
/// counts are nested exactly.
pub fn threshold_curve_with<E: Ensemble + ?Sized>(
    ens: &E,
    model: &ModelSpec,
    exp: &TailExperiment,
    thresholds: &[f64],
    master_seed: u64,
) -> Result<Vec<TailEstimate>> {
    let n_steps = exp.validate(model)?;
    for t in thresholds {
        exp.statistic.with_threshold(*t).validate()?;
    }
    let outcomes = collect_outcomes(ens.map_paths(exp.n_paths, &|i| {
        path_outcome(model, exp, derive_seed(master_seed, i as u64), false)
    }))?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let stat = exp.statistic.with_threshold(t);
            let relabelled: Vec<PathOutcome> = outcomes
                .iter()
                .map(|o| PathOutcome {
                    hit: if o.blow_up { o.hit } else { o.value > t },
                    ..*o
                })
                .collect();
            summarize(exp, stat, &relabelled, master_seed, model.diffusion.m, n_steps)
        })
        .collect())
}

/// Energy-ball exit probabilities for increasing radii `M` at fixed `ε`.
pub fn exit_curve(
    model: &ModelSpec,
    exp: &TailExperiment,
    radii: &[f64],
    master_seed: u64,
) -> Result<Vec<TailEstimate>> {
    if !matches!(exp.statistic, Statistic::EnergyBallExit { .. }) {
        return Err(Error::invalid("statistic", "exit curves need an energy-ball statistic"));
    }
    threshold_curve_with(&Sequential, model, exp, radii, master_seed)
}

/// Index used to derive the pilot-run master seed from the curve's master seed.
pub const PILOT_SEED_INDEX: u64 = u64::MAX;
/// Pilot quantile at which `δ` is self-calibrated.
pub const PILOT_QUANTILE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivCurveSpec {
    /// `None` calibrates `δ` from a pilot run at the largest `ε`.
    pub delta: Option<f64>,
    /// Strictly decreasing in `(0, 1]`.
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub pilot_paths: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub cfg: StepperConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveRow {
    pub epsilon: f64,
    pub level_seed: u64,
    pub estimate: Option<TailEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivCurve {
    pub delta: f64,
    pub delta_calibrated: bool,
    pub pilot_seed: Option<u64>,
    pub master_seed: u64,
    pub rows: Vec<CurveRow>,
    /// Consecutive strict decreases of `log_scaled` at the tail of the list.
    pub trend: usize,
}

impl EquivCurve {
    /// `log_scaled` strictly decreasing over the last `k` levels.
    pub fn decreasing_over_last(&self, k: usize) -> bool {
        k <= 1 || self.trend + 1 >= k
    }
}

/// Consecutive strict decreases at the end of the sequence; `None` breaks the run.
pub fn trailing_decreases(values: &[Option<f64>]) -> usize {
    let mut count = 0;
    for w in values.windows(2).rev() {
        match (w[0], w[1]) {
            (Some(a), Some(b)) if b < a => count += 1,
            _ => break,
        }
    }
    count
}

/// `q`-quantile of the values (lower order statistic).
pub fn lower_quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let idx = libm::floor(q * (values.len() - 1) as f64) as usize;
    values[idx]
}

pub fn equiv_curve(model: &ModelSpec, spec: &EquivCurveSpec, master_seed: u64) -> Result<EquivCurve> {
    equiv_curve_with(&Sequential, model, spec, master_seed)
}

pub fn equiv_curve_with<E: Ensemble + ?Sized>(
    ens: &E,
    model: &ModelSpec,
    spec: &EquivCurveSpec,
    master_seed: u64,
) -> Result<EquivCurve> {
    if spec.epsilons.is_empty() {
        return Err(Error::invalid("epsilons", "at least one level required"));
    }
    if spec.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("epsilons", "must be strictly decreasing"));
    }
    let experiment = |epsilon: f64, delta: f64, n_paths: usize| TailExperiment {
        statistic: Statistic::EquivSupDistance { delta },
        epsilon,
        n_paths,
        x0: spec.x0.clone(),
        horizon: spec.horizon,
        cfg: spec.cfg,
    };
    let (delta, pilot_seed) = match spec.delta {
        Some(d) => (d, None),
        None => {
            if spec.pilot_paths == 0 {
                return Err(Error::invalid("pilot_paths", "must be at least 1 when delta is calibrated"));
            }
            let pilot_seed = derive_seed(master_seed, PILOT_SEED_INDEX);
            let exp = experiment(spec.epsilons[0], f64::INFINITY, spec.pilot_paths);
            exp.validate(model)?;
            let outcomes = collect_outcomes(ens.map_paths(spec.pilot_paths, &|i| {
                path_outcome(model, &exp, derive_seed(pilot_seed, i as u64), false)
            }))?;
            let mut values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
            (lower_quantile(&mut values, PILOT_QUANTILE), Some(pilot_seed))
        }
    };
    let mut rows = Vec::with_capacity(spec.epsilons.len());
    for (level, &epsilon) in spec.epsilons.iter().enumerate() {
        let level_seed = derive_seed(master_seed, level as u64);
        let exp = experiment(epsilon, delta, spec.n_paths);
        let row = match estimate_tail_with(ens, model, &exp, level_seed) {
            Ok(est) => CurveRow {
                epsilon,
                level_seed,
                estimate: Some(est),
                error: None,
            },
            Err(e) => CurveRow {
                epsilon,
                level_seed,
                estimate: None,
                error: Some(format!("{e}")),
            },
        };
        rows.push(row);
    }
    let values: Vec<Option<f64>> = rows
        .iter()
        .map(|r| r.estimate.as_ref().map(|e| e.log_scaled))
        .collect();
    Ok(EquivCurve {
        delta,
        delta_calibrated: spec.delta.is_none(),
        pilot_seed,
        master_seed,
        trend: trailing_decreases(&values),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_default, make_linear, ModelId, NoiseSpec};
    use crate::noise::sample_stream;
    use crate::oracles::gaussian_sup_tail;
    use crate::path::simulate;
    use alloc::vec;

    fn heat_exit(n_paths: usize) -> (ModelSpec, TailExperiment) {
        let model = make_default(ModelId::Heat, 16, &NoiseSpec::Multiplicative { amplitude: 1.0, m: 4 }).unwrap();
        let x0 = model.space().interpolate(|s| libm::sin(core::f64::consts::PI * s));
        let exp = TailExperiment {
            statistic: Statistic::EnergyBallExit { radius: 1.0, p: 2.0 },
            epsilon: 0.1,
            n_paths,
            x0,
            horizon: 1.0,
            cfg: StepperConfig::with_dt(0.02),
        };
        (model, exp)
    }

    #[test]
    fn exit_counts_are_nested_in_radius() {
        let (model, exp) = heat_exit(200);
        let radii = [0.5, 0.72, 0.74, 0.8, 1.0];
        let curve = exit_curve(&model, &exp, &radii, 5).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].n_hits <= w[0].n_hits);
            assert!(w[1].log_scaled <= w[0].log_scaled);
        }
        // the early-stopping estimator agrees with the curve at every radius
        for (r, est) in radii.iter().zip(&curve) {
            let single = TailExperiment {
                statistic: Statistic::EnergyBallExit { radius: *r, p: 2.0 },
                ..exp.clone()
            };
            assert_eq!(estimate_tail(&model, &single, 5).unwrap().n_hits, est.n_hits);
        }
    }

    #[test]
    fn zero_noise_never_separates() {
        let model = make_default(ModelId::Burgers, 12, &NoiseSpec::Zero { m: 3 }).unwrap();
        let x0 = model.space().interpolate(|s| s * (1.0 - s));
        let exp = TailExperiment {
            statistic: Statistic::ZeroDriftDeviation { delta: 0.0 },
            epsilon: 0.5,
            n_paths: 20,
            x0,
            horizon: 0.5,
            cfg: StepperConfig::with_dt(0.05),
        };
        let est = estimate_tail(&model, &exp, 1).unwrap();
        assert_eq!(est.n_hits, 0);
        assert!(est.is_bound);
        assert!((est.p_bound.unwrap() - zero_hit_bound(20)).abs() < 1e-15);
    }

    #[test]
    fn sup_distance_matches_naive_loop() {
        let model = make_default(ModelId::PLaplace, 10, &NoiseSpec::additive_decaying(0.5, 4)).unwrap();
        let x0 = model.space().interpolate(|s| libm::sin(3.0 * s));
        let cfg = StepperConfig::with_dt(0.01);
        let noise = sample_stream(4, 0.01, 50, 9).unwrap();
        let x = simulate(&model, &x0, 0.3, 0.5, &cfg, &noise, Mode::Full).unwrap();
        let y = simulate(&model, &x0, 0.3, 0.5, &cfg, &noise, Mode::ZeroDrift).unwrap();
        let fast = sup_h_distance(&model.triple, &x, &y).unwrap();
        let mut naive = 0.0f64;
        for i in 0..x.len() {
            let d: Vec<f64> = x.state(i).iter().zip(y.state(i)).map(|(a, b)| a - b).collect();
            naive = naive.max(model.triple.h_norm(&d).powi(2));
        }
        assert!((fast - naive).abs() <= 1e-14 * (1.0 + naive));
        let short = simulate(&model, &x0, 0.3, 0.25, &cfg, &noise, Mode::Full).unwrap();
        assert_eq!(sup_h_distance(&model.triple, &x, &short), Err(Error::GridMismatch));
    }

    #[test]
    fn hv_energy_matches_direct_quadrature() {
        let model = make_default(ModelId::PLaplace, 10, &NoiseSpec::additive_decaying(0.5, 4)).unwrap();
        let x0 = model.space().interpolate(|s| libm::sin(3.0 * s));
        let cfg = StepperConfig::with_dt(0.01);
        let noise = sample_stream(4, 0.01, 100, 2).unwrap();
        let (eps, p) = (0.4, 3.0);
        let path = simulate(&model, &x0, eps, 1.0, &cfg, &noise, Mode::Full).unwrap();
        let e = hv_energy(&path, eps, p, &model).unwrap();
        let f: Vec<f64> = path
            .states()
            .map(|x| model.triple.h_norm(x).powf(p - 2.0) * model.triple.v_norm(x).powf(model.alpha()))
            .collect();
        let sup = path.states().map(|x| model.triple.h_norm(x).powf(p)).fold(0.0, f64::max);
        let integral: f64 = (1..f.len())
            .map(|i| 0.5 * (path.times[i] - path.times[i - 1]) * (f[i] + f[i - 1]))
            .sum();
        let direct = sup + eps * integral;
        assert!((e - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn zero_drift_deviation_matches_reflection_series() {
        let model = make_linear(1, 1.0, &NoiseSpec::Additive { amplitudes: vec![1.0] }).unwrap();
        let (eps, delta) = (0.25, 1.0);
        let exp = TailExperiment {
            statistic: Statistic::ZeroDriftDeviation { delta },
            epsilon: eps,
            n_paths: 4000,
            x0: vec![0.0],
            horizon: 1.0,
            cfg: StepperConfig::with_dt(5e-4),
        };
        let est = estimate_tail(&model, &exp, 21).unwrap();
        let exact = gaussian_sup_tail(libm::sqrt(eps), 1.0, libm::sqrt(delta)).unwrap();
        let half = 0.5 * (est.ci_hi - est.ci_lo);
        assert!((est.p_hat - exact).abs() <= 3.0 * half, "{} vs {exact}", est.p_hat);
    }

    #[test]
    fn equiv_curve_is_deterministic_and_labels_seeds() {
        let model = make_default(ModelId::Heat, 8, &NoiseSpec::Multiplicative { amplitude: 1.0, m: 3 }).unwrap();
        let spec = EquivCurveSpec {
            delta: None,
            epsilons: vec![0.5, 0.25, 0.125],
            n_paths: 40,
            pilot_paths: 20,
            x0: model.space().interpolate(|s| libm::sin(core::f64::consts::PI * s)),
            horizon: 0.5,
            cfg: StepperConfig::with_dt(0.05),
        };
        let a = equiv_curve(&model, &spec, 11).unwrap();
        let b = equiv_curve(&model, &spec, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.delta_calibrated && a.delta > 0.0);
        assert_eq!(a.pilot_seed, Some(derive_seed(11, PILOT_SEED_INDEX)));
        for (level, row) in a.rows.iter().enumerate() {
            assert_eq!(row.level_seed, derive_seed(11, level as u64));
        }
        let bad = EquivCurveSpec {
            epsilons: vec![0.25, 0.5],
            ..spec
        };
        assert!(equiv_curve(&model, &bad, 11).is_err());
    }

    #[test]
    fn trend_counts_trailing_strict_decreases() {
        assert_eq!(trailing_decreases(&[Some(1.0), Some(0.5), Some(0.2)]), 2);
        assert_eq!(trailing_decreases(&[Some(1.0), Some(2.0), Some(0.2)]), 1);
        assert_eq!(trailing_decreases(&[Some(1.0), None, Some(0.2)]), 0);
        assert_eq!(trailing_decreases(&[Some(1.0), Some(1.0)]), 0);
    }
}
