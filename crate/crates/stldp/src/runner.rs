//! Executes a configuration into its output directory.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stldp_core::audit::{audit_range, AssumptionReport};
use stldp_core::ldp::tail::{threshold_curve_with, PILOT_QUANTILE};
use stldp_core::ldp::{
    equiv_curve_with, estimate_rate, estimate_tail_with, EquivCurve, EquivCurveSpec, RateEstimate, RateTarget,
    Statistic, TailEstimate, TailExperiment,
};
use stldp_core::noise::{sample_stream, StreamHeader, NOISE_BASIS_NOTE, SEED_RULE};
use stldp_core::path::{simulate, step_count, Mode, PathMeta};

use crate::config::{ExperimentConfig, Kind, SimMode, StatisticKind};
use crate::error::{Result, RunError};
use crate::numfmt::{fmt_f64, to_csv, to_json};
use crate::parallel::Pool;
use crate::pathio::{to_path_csv, write_binary};
use crate::registry::{build_model, state, stepper};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";
pub const ERROR_FILE: &str = "error.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const AUDIT_SEED_RULE: &str = "sample_i drawn from ChaCha8 seeded with derive_seed(seed, i)";
pub const RATE_SEED_RULE: &str = "restart 0 starts from hdot = 0; restart r > 0 from ChaCha8 seeded with derive_seed(seed, r)";
pub const SIMULATE_SEED_RULE: &str = "one ChaCha8 stream seeded with seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub label: String,
    pub epsilon: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub kind: Kind,
    pub wall_time_s: f64,
    pub workers: usize,
    pub master_seed: u64,
    pub seed_rule: String,
    pub noise_basis: String,
    pub seeds: Vec<SeedEntry>,
    pub outputs: Vec<OutputFile>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub passed: bool,
    pub seed_rule: String,
    pub sampler: stldp_core::audit::StateSampler,
    pub report: AssumptionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub meta: PathMeta,
    pub stream: StreamHeader,
    pub seed_rule: String,
    pub horizon: f64,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitCurveRecord {
    pub epsilon: f64,
    pub radii: Vec<f64>,
    pub master_seed: u64,
    pub seed_rule: String,
    pub estimates: Vec<TailEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub seed: u64,
    pub seed_rule: String,
    pub estimate: RateEstimate,
}

struct Artifact {
    file: String,
    bytes: Vec<u8>,
}

impl Artifact {
    fn text(file: &str, s: String) -> Artifact {
        Artifact {
            file: file.to_string(),
            bytes: s.into_bytes(),
        }
    }
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(dir: &FsPath) -> Result<LockGuard> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked(dir.to_path_buf())),
            Err(e) => Err(RunError::io(path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn curve_row(x: f64, e: &TailEstimate) -> Vec<String> {
    vec![
        fmt_f64(x),
        fmt_f64(e.log_scaled),
        fmt_f64(e.ci_lo),
        fmt_f64(e.ci_hi),
        e.is_bound.to_string(),
        e.n_hits.to_string(),
        e.n_paths.to_string(),
        fmt_f64(e.p_hat),
    ]
}

const CURVE_TAIL: [&str; 7] = ["log_scaled", "ci_lo", "ci_hi", "is_bound", "n_hits", "n_paths", "p_hat"];

fn curve_header(first: &'static str) -> Vec<&'static str> {
    std::iter::once(first).chain(CURVE_TAIL).collect()
}

fn statistic(cfg: &ExperimentConfig, delta: f64) -> Statistic {
    let s = &cfg.statistic;
    match s.kind {
        StatisticKind::EquivSupDistance => Statistic::EquivSupDistance { delta },
        StatisticKind::ZeroDriftDeviation => Statistic::ZeroDriftDeviation { delta },
        StatisticKind::EnergyBallExit => Statistic::EnergyBallExit {
            radius: s.radius,
            p: s.p_exponent,
        },
    }
}

/// Audits `n` samples in parallel chunks; the merge makes the result independent of the chunking.
pub fn parallel_audit(
    pool: &Pool,
    model: &stldp_core::models::ModelSpec,
    sampler: &stldp_core::audit::StateSampler,
    n: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let chunk = n.div_ceil(4 * pool.workers().max(1)).max(1);
    let ranges: Vec<_> = (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();
    let parts: Vec<_> = pool.install(|| {
        ranges
            .into_par_iter()
            .map(|r| audit_range(model, sampler, r, &model.params, seed))
            .collect()
    });
    let mut merged: Option<AssumptionReport> = None;
    for p in parts {
        let p = p?;
        merged = Some(match merged {
            None => p,
            Some(m) => m.merge(p),
        });
    }
    merged.ok_or_else(|| RunError::config("audit.n", "must be at least 1"))
}

fn execute(cfg: &ExperimentConfig, pool: &Pool) -> Result<(Vec<Artifact>, Vec<SeedEntry>, u64, String)> {
    let model = build_model(cfg)?;
    let scfg = stepper(cfg);
    let e = &cfg.ensemble;
    let mut out = Vec::new();
    let mut seeds = Vec::new();
    match cfg.kind {
        Kind::Audit => {
            let a = &cfg.audit;
            let report = parallel_audit(pool, &model, &a.sampler, a.n, a.seed)?;
            let rows: Vec<Vec<String>> = report
                .conditions
                .iter()
                .map(|c| {
                    vec![
                        c.condition_id.as_str().to_string(),
                        c.n_samples.to_string(),
                        c.n_violations.to_string(),
                        fmt_f64(c.fitted_constant),
                        fmt_f64(c.worst_margin),
                    ]
                })
                .collect();
            out.push(Artifact::text(
                "audit.csv",
                to_csv(&["condition_id", "n_samples", "n_violations", "fitted_constant", "worst_margin"], &rows)?,
            ));
            let record = AuditRecord {
                passed: report.passed(),
                seed_rule: AUDIT_SEED_RULE.to_string(),
                sampler: a.sampler,
                report,
            };
            out.push(Artifact::text("audit.json", to_json(&record)?));
            seeds.push(SeedEntry {
                label: "audit".into(),
                epsilon: None,
                seed: a.seed,
            });
            Ok((out, seeds, a.seed, AUDIT_SEED_RULE.to_string()))
        }
        Kind::Simulate => {
            let x0 = state(&model, &cfg.initial, "initial")?;
            let n_steps = step_count(cfg.grid.horizon, scfg.dt)?;
            let seed = cfg.simulate.seed;
            let noise = sample_stream(model.diffusion.m, scfg.dt, n_steps, seed)?;
            let mode = match cfg.simulate.mode {
                SimMode::Full => Mode::Full,
                SimMode::ZeroDrift => Mode::ZeroDrift,
            };
            let mut path = simulate(&model, &x0, e.epsilon, cfg.grid.horizon, &scfg, &noise, mode)?;
            path.meta.seed = seed;
            let mut bin = Vec::new();
            write_binary(&path, &mut bin).map_err(|err| RunError::io("path.bin", err))?;
            out.push(Artifact {
                file: "path.bin".into(),
                bytes: bin,
            });
            out.push(Artifact::text("path.csv", to_path_csv(&path)?));
            let record = SimulateRecord {
                meta: path.meta.clone(),
                stream: noise.header(),
                seed_rule: SIMULATE_SEED_RULE.to_string(),
                horizon: cfg.grid.horizon,
                final_state: path.last().to_vec(),
            };
            out.push(Artifact::text("path.json", to_json(&record)?));
            seeds.push(SeedEntry {
                label: "path".into(),
                epsilon: Some(e.epsilon),
                seed,
            });
            Ok((out, seeds, seed, SIMULATE_SEED_RULE.to_string()))
        }
        Kind::Tail => {
            let exp = TailExperiment {
                statistic: statistic(cfg, cfg.statistic.delta.unwrap_or(0.0)),
                epsilon: e.epsilon,
                n_paths: e.n_paths,
                x0: state(&model, &cfg.initial, "initial")?,
                horizon: cfg.grid.horizon,
                cfg: scfg,
            };
            let est = estimate_tail_with(pool, &model, &exp, e.master_seed)?;
            out.push(Artifact::text(
                "curve.csv",
                to_csv(&curve_header("epsilon"), &[curve_row(est.epsilon, &est)])?,
            ));
            out.push(Artifact::text("tail.json", to_json(&est)?));
            seeds.push(SeedEntry {
                label: "master".into(),
                epsilon: Some(e.epsilon),
                seed: e.master_seed,
            });
            Ok((out, seeds, e.master_seed, SEED_RULE.to_string()))
        }
        Kind::EquivCurve => {
            let spec = EquivCurveSpec {
                delta: cfg.statistic.delta,
                epsilons: e.epsilons.clone(),
                n_paths: e.n_paths,
                pilot_paths: e.pilot_paths,
                x0: state(&model, &cfg.initial, "initial")?,
                horizon: cfg.grid.horizon,
                cfg: scfg,
            };
            let curve: EquivCurve = equiv_curve_with(pool, &model, &spec, e.master_seed)?;
            let mut rows = Vec::new();
            for r in &curve.rows {
                match &r.estimate {
                    Some(est) => {
                        let mut row = curve_row(r.epsilon, est);
                        row.push(r.level_seed.to_string());
                        row.push(String::new());
                        rows.push(row);
                    }
                    None => {
                        let mut row = vec![fmt_f64(r.epsilon)];
                        row.extend(std::iter::repeat(String::new()).take(CURVE_TAIL.len()));
                        row.push(r.level_seed.to_string());
                        row.push(r.error.clone().unwrap_or_default());
                        rows.push(row);
                    }
                }
                seeds.push(SeedEntry {
                    label: "level".into(),
                    epsilon: Some(r.epsilon),
                    seed: r.level_seed,
                });
            }
            if let Some(p) = curve.pilot_seed {
                seeds.push(SeedEntry {
                    label: format!("pilot (quantile {PILOT_QUANTILE})"),
                    epsilon: e.epsilons.first().copied(),
                    seed: p,
                });
            }
            let mut header = curve_header("epsilon");
            header.extend(["level_seed", "error"]);
            out.push(Artifact::text("curve.csv", to_csv(&header, &rows)?));
            out.push(Artifact::text("equiv_curve.json", to_json(&curve)?));
            Ok((out, seeds, e.master_seed, SEED_RULE.to_string()))
        }
        Kind::ExitCurve => {
            let exp = TailExperiment {
                statistic: statistic(cfg, 0.0),
                epsilon: e.epsilon,
                n_paths: e.n_paths,
                x0: state(&model, &cfg.initial, "initial")?,
                horizon: cfg.grid.horizon,
                cfg: scfg,
            };
            let radii = cfg.statistic.radii.clone();
            let estimates = threshold_curve_with(pool, &model, &exp, &radii, e.master_seed)?;
            let rows: Vec<Vec<String>> = radii.iter().zip(&estimates).map(|(r, est)| curve_row(*r, est)).collect();
            out.push(Artifact::text("curve.csv", to_csv(&curve_header("radius"), &rows)?));
            let record = ExitCurveRecord {
                epsilon: e.epsilon,
                radii,
                master_seed: e.master_seed,
                seed_rule: SEED_RULE.to_string(),
                estimates,
            };
            out.push(Artifact::text("exit_curve.json", to_json(&record)?));
            seeds.push(SeedEntry {
                label: "master".into(),
                epsilon: Some(e.epsilon),
                seed: e.master_seed,
            });
            Ok((out, seeds, e.master_seed, SEED_RULE.to_string()))
        }
        Kind::Rate => {
            let r = &cfg.rate;
            let x0 = state(&model, &cfg.initial, "initial")?;
            let target = RateTarget {
                terminal: state(&model, &r.target, "rate.target")?,
                match_tol: r.match_tol,
                horizon: cfg.grid.horizon,
            };
            let estimate = estimate_rate(&model, &x0, &target, &r.optimizer)?;
            let c = &estimate.control;
            let header: Vec<String> = ["t_start", "t_end"]
                .into_iter()
                .map(String::from)
                .chain((0..c.m).map(|j| format!("hdot_{j}")))
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = (0..c.n_intervals())
                .map(|k| {
                    [c.times[k], c.times[k + 1]]
                        .into_iter()
                        .chain(c.hdot(k).iter().copied())
                        .map(fmt_f64)
                        .collect()
                })
                .collect();
            out.push(Artifact::text("control.csv", to_csv(&header, &rows)?));
            let seed = r.optimizer.seed;
            out.push(Artifact::text(
                "rate.json",
                to_json(&RateRecord {
                    seed,
                    seed_rule: RATE_SEED_RULE.to_string(),
                    estimate,
                })?,
            ));
            seeds.push(SeedEntry {
                label: "restarts".into(),
                epsilon: None,
                seed,
            });
            Ok((out, seeds, seed, RATE_SEED_RULE.to_string()))
        }
    }
}

/// Runs `cfg` into `cfg.output_dir`, holding the directory's lock file for the duration.
pub fn run(cfg: &ExperimentConfig, pool: &Pool) -> Result<RunManifest> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
    let _lock = LockGuard::acquire(&dir)?;
    let _ = fs::remove_file(dir.join(ERROR_FILE));
    let started = Instant::now();
    let result = run_locked(cfg, pool, &dir, started);
    if let Err(e) = &result {
        if let Ok(text) = to_json(&e.record()) {
            let _ = fs::write(dir.join(ERROR_FILE), text);
        }
    }
    result
}

fn run_locked(cfg: &ExperimentConfig, pool: &Pool, dir: &FsPath, started: Instant) -> Result<RunManifest> {
    let config_hash = cfg.hash()?;
    let (mut artifacts, seeds, master_seed, seed_rule) = execute(cfg, pool)?;
    artifacts.push(Artifact::text(CONFIG_FILE, cfg.to_toml()?));
    let mut outputs = Vec::new();
    for a in &artifacts {
        let path = dir.join(&a.file);
        fs::write(&path, &a.bytes).map_err(|e| RunError::io(&path, e))?;
        outputs.push(OutputFile {
            file: a.file.clone(),
            bytes: a.bytes.len() as u64,
            sha256: sha256_hex(&a.bytes),
        });
    }
    let manifest = RunManifest {
        config_hash,
        tool_version: TOOL_VERSION.to_string(),
        kind: cfg.kind,
        wall_time_s: started.elapsed().as_secs_f64(),
        workers: pool.workers(),
        master_seed,
        seed_rule,
        noise_basis: NOISE_BASIS_NOTE.to_string(),
        seeds,
        outputs,
        config: cfg.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, to_json(&manifest)?).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &FsPath) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| RunError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| RunError::Manifest {
        path,
        message: e.to_string(),
    })
}
