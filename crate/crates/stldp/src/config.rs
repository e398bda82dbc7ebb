//! Experiment configuration: TOML with every field defaulted and unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stldp_core::audit::StateSampler;
use stldp_core::ldp::RateConfig;
use stldp_core::models::{BurgersParams, ModelId, PLaplaceParams, PmeParams};

use crate::error::{Result, RunError};
use crate::numfmt::to_json_compact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Audit,
    Simulate,
    Tail,
    EquivCurve,
    Rate,
    ExitCurve,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Audit => "audit",
            Kind::Simulate => "simulate",
            Kind::Tail => "tail",
            Kind::EquivCurve => "equiv-curve",
            Kind::Rate => "rate",
            Kind::ExitCurve => "exit-curve",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Not part of the config hash.
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub noise: NoiseConfig,
    pub initial: ProfileConfig,
    pub statistic: StatisticConfig,
    pub ensemble: EnsembleConfig,
    pub audit: AuditConfig,
    pub rate: RateSection,
    pub simulate: SimulateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: Kind::EquivCurve,
            output_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            noise: NoiseConfig::default(),
            initial: ProfileConfig::default(),
            statistic: StatisticConfig::default(),
            ensemble: EnsembleConfig::default(),
            audit: AuditConfig::default(),
            rate: RateSection::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub id: ModelId,
    pub burgers: BurgersParams,
    pub plaplace: PLaplaceParams,
    pub pme: PmeParams,
    pub linear: LinearParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            id: ModelId::Heat,
            burgers: BurgersParams::default(),
            plaplace: PLaplaceParams::default(),
            pme: PmeParams::default(),
            linear: LinearParams::default(),
        }
    }
}

/// `dX = −κ X dt + B dW` on `R^n`; `n` replaces `grid.n_dof`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub n: usize,
    pub kappa: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { n: 1, kappa: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_dof: usize,
    pub dt: f64,
    pub horizon: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
    pub max_halvings: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = stldp_core::solver::StepperConfig::default();
        GridConfig {
            n_dof: 32,
            dt: 1e-2,
            horizon: 1.0,
            solver_tol: s.solver_tol,
            max_iters: s.max_iters,
            max_halvings: s.max_halvings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Zero,
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub m: usize,
    /// Scale of the decaying amplitudes `amplitude · k^{-2}`.
    pub amplitude: f64,
    /// Explicit additive amplitudes; overrides `m` and `amplitude` when non-empty.
    pub amplitudes: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: NoiseKind::Multiplicative,
            m: 4,
            amplitude: 1.0,
            amplitudes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `amplitude · sin(mode π x)` at the nodes.
    Sine,
    /// `4 · amplitude · x (1 − x)`.
    Bump,
    /// `amplitude` in every coordinate.
    Constant,
    /// `values` verbatim.
    Values,
}

/// A state given by a formula or by explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub profile: Profile,
    pub amplitude: f64,
    pub mode: u32,
    pub values: Vec<f64>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            profile: Profile::Sine,
            amplitude: 1.0,
            mode: 1,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    EquivSupDistance,
    EnergyBallExit,
    ZeroDriftDeviation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticConfig {
    pub kind: StatisticKind,
    /// Absent: self-calibrated in equiv-curve runs, required elsewhere.
    pub delta: Option<f64>,
    pub radius: f64,
    /// Exit-curve radii; increasing.
    pub radii: Vec<f64>,
    pub p_exponent: f64,
}

impl Default for StatisticConfig {
    fn default() -> Self {
        StatisticConfig {
            kind: StatisticKind::EquivSupDistance,
            delta: None,
            radius: 1.0,
            radii: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            p_exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    pub epsilon: f64,
    /// Equiv-curve levels, strictly decreasing.
    pub epsilons: Vec<f64>,
    pub pilot_paths: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_paths: 1000,
            master_seed: 0,
            epsilon: 0.1,
            epsilons: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            pilot_paths: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub n: usize,
    pub seed: u64,
    pub sampler: StateSampler,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            n: 10_000,
            seed: 1,
            sampler: StateSampler::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub target: ProfileConfig,
    pub match_tol: f64,
    pub optimizer: RateConfig,
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection {
            target: ProfileConfig::default(),
            match_tol: 1e-8,
            optimizer: RateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Full,
    ZeroDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub mode: SimMode,
    /// Path seed; the noise stream is regenerable from it.
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            mode: SimMode::Full,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| RunError::config(origin, e.to_string()))?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        ExperimentConfig::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| RunError::Format(e.to_string()))
    }

    /// Checks that do not need a built model.
    pub fn validate(&self, origin: &str) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(RunError::config(origin, format!("key `{key}`: {msg}")));
        let g = &self.grid;
        if g.n_dof == 0 {
            return bad("grid.n_dof", "must be at least 1");
        }
        if !(g.dt > 0.0 && g.horizon > 0.0) {
            return bad("grid", "dt and horizon must be positive");
        }
        if self.noise.m == 0 && self.noise.amplitudes.is_empty() {
            return bad("noise.m", "must be at least 1");
        }
        let e = &self.ensemble;
        match self.kind {
            Kind::Tail | Kind::ExitCurve | Kind::Simulate => {
                if !(e.epsilon > 0.0 && e.epsilon <= 1.0) {
                    return bad("ensemble.epsilon", "must lie in (0, 1]");
                }
            }
            Kind::EquivCurve => {
                if e.epsilons.is_empty() || e.epsilons.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
                    return bad("ensemble.epsilons", "need one or more levels in (0, 1]");
                }
                if e.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                    return bad("ensemble.epsilons", "must be strictly decreasing");
                }
            }
            Kind::Audit | Kind::Rate => {}
        }
        if matches!(self.kind, Kind::Tail | Kind::ExitCurve | Kind::EquivCurve) && e.n_paths == 0 {
            return bad("ensemble.n_paths", "must be at least 1");
        }
        if self.kind == Kind::Tail {
            match self.statistic.kind {
                StatisticKind::EnergyBallExit => {}
                _ if self.statistic.delta.is_none() => return bad("statistic.delta", "required for tail runs"),
                _ => {}
            }
        }
        if self.kind == Kind::ExitCurve {
            if self.statistic.kind != StatisticKind::EnergyBallExit {
                return bad("statistic.kind", "exit curves need energy_ball_exit");
            }
            if self.statistic.radii.is_empty() {
                return bad("statistic.radii", "need one or more radii");
            }
        }
        if self.kind == Kind::EquivCurve && self.statistic.kind != StatisticKind::EquivSupDistance {
            return bad("statistic.kind", "equiv curves need equiv_sup_distance");
        }
        if self.kind == Kind::Audit && self.audit.n == 0 {
            return bad("audit.n", "must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key, 17-digit) JSON form, excluding `output_dir`.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        let canonical = to_json_compact(&v)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
