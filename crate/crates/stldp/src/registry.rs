//! Builds core objects from a configuration.

use stldp_core::models::{make_burgers, make_heat, make_linear, make_plaplace, make_pme, ModelId, ModelSpec, NoiseSpec};
use stldp_core::solver::StepperConfig;

use crate::config::{ExperimentConfig, NoiseKind, Profile, ProfileConfig};
use crate::error::{Result, RunError};

pub fn noise_spec(cfg: &ExperimentConfig) -> NoiseSpec {
    let n = &cfg.noise;
    match n.kind {
        NoiseKind::Zero => NoiseSpec::Zero { m: n.m },
        NoiseKind::Additive if !n.amplitudes.is_empty() => NoiseSpec::Additive {
            amplitudes: n.amplitudes.clone(),
        },
        NoiseKind::Additive => NoiseSpec::additive_decaying(n.amplitude, n.m),
        NoiseKind::Multiplicative => NoiseSpec::Multiplicative {
            amplitude: n.amplitude,
            m: n.m,
        },
    }
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<ModelSpec> {
    let noise = noise_spec(cfg);
    let n = cfg.grid.n_dof;
    let m = &cfg.model;
    Ok(match m.id {
        ModelId::Heat => make_heat(n, &noise)?,
        ModelId::Burgers => make_burgers(n, m.burgers, &noise)?,
        ModelId::PLaplace => make_plaplace(n, m.plaplace, &noise)?,
        ModelId::Pme => make_pme(n, m.pme, &noise)?,
        ModelId::Linear => make_linear(m.linear.n, m.linear.kappa, &noise)?,
    })
}

pub fn stepper(cfg: &ExperimentConfig) -> StepperConfig {
    StepperConfig {
        dt: cfg.grid.dt,
        solver_tol: cfg.grid.solver_tol,
        max_iters: cfg.grid.max_iters,
        max_halvings: cfg.grid.max_halvings,
    }
}

/// Nodal values of a profile in the model's space.
pub fn state(model: &ModelSpec, p: &ProfileConfig, key: &str) -> Result<Vec<f64>> {
    let (a, k) = (p.amplitude, p.mode as f64);
    let v = match p.profile {
        Profile::Sine => model.space().interpolate(|x| a * (k * std::f64::consts::PI * x).sin()),
        Profile::Bump => model.space().interpolate(|x| 4.0 * a * x * (1.0 - x)),
        Profile::Constant => vec![a; model.dim()],
        Profile::Values => p.values.clone(),
    };
    if v.len() != model.dim() {
        return Err(RunError::config(
            key,
            format!("expected {} values, found {}", model.dim(), v.len()),
        ));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    #[test]
    fn burgers_outside_one_dimension_is_rejected() {
        let cfg = ExperimentConfig::from_toml("[model]\nid = \"burgers\"\n[model.burgers]\nd = 2\n", "t").unwrap();
        let err = build_model(&cfg).unwrap_err();
        assert_eq!(err.kind(), "model_rejected");
    }

    #[test]
    fn every_registry_id_builds() {
        for id in ["heat", "burgers", "plaplace", "pme", "linear"] {
            let cfg = ExperimentConfig::from_toml(&format!("[model]\nid = \"{id}\"\n"), "t").unwrap();
            let model = build_model(&cfg).unwrap();
            let x0 = state(&model, &cfg.initial, "initial").unwrap();
            assert_eq!(x0.len(), model.dim());
        }
    }
}
