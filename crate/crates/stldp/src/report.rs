//! Human-readable summaries of finished runs, read back from their outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use stldp_core::ldp::{EquivCurve, TailEstimate};

use crate::config::Kind;
use crate::error::{Result, RunError};
use crate::numfmt::{fmt_f64, to_csv};
use crate::runner::{read_manifest, AuditRecord, ExitCurveRecord, RateRecord, RunManifest, SimulateRecord};

pub const REPORT_CSV: &str = "report.csv";

/// Levels over which the equiv-curve trend flag is evaluated.
pub const TREND_LEVELS: usize = 3;

pub struct Report {
    pub table: String,
    pub csv: String,
}

fn load<T: DeserializeOwned>(dir: &FsPath, m: &RunManifest, file: &str) -> Result<T> {
    let path = dir.join(file);
    let corrupt = |message: String| RunError::Manifest {
        path: path.clone(),
        message,
    };
    let entry = m
        .outputs
        .iter()
        .find(|o| o.file == file)
        .ok_or_else(|| corrupt("not listed in the manifest".into()))?;
    let bytes = fs::read(&path).map_err(|e| corrupt(e.to_string()))?;
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    if digest != entry.sha256 {
        return Err(corrupt("checksum differs from the manifest".into()));
    }
    serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6e}"))
}

fn curve_table(out: &mut String, xname: &str, rows: &[(f64, Option<&TailEstimate>, Option<&str>)]) -> Vec<Vec<String>> {
    let _ = writeln!(
        out,
        "{:>12}  {:>13}  {:>13}  {:>13}  {:>5}  {:>8}",
        xname, "log_scaled", "ci_lo", "ci_hi", "bound", "hits"
    );
    let mut csv = Vec::new();
    for (x, est, err) in rows {
        match est {
            Some(e) => {
                let _ = writeln!(
                    out,
                    "{:>12.6e}  {:>13.6e}  {:>13.6e}  {:>13.6e}  {:>5}  {:>8}",
                    x, e.log_scaled, e.ci_lo, e.ci_hi, e.is_bound, e.n_hits
                );
                csv.push(vec![
                    fmt_f64(*x),
                    fmt_f64(e.log_scaled),
                    fmt_f64(e.ci_lo),
                    fmt_f64(e.ci_hi),
                    e.is_bound.to_string(),
                    e.n_hits.to_string(),
                ]);
            }
            None => {
                let _ = writeln!(out, "{:>12.6e}  failed: {}", x, err.unwrap_or("unknown error"));
                csv.push(vec![fmt_f64(*x), String::new(), String::new(), String::new(), String::new(), String::new()]);
            }
        }
    }
    csv
}

/// Builds the summary of the run in `dir` without recomputing anything.
pub fn build(dir: &FsPath) -> Result<Report> {
    let m = read_manifest(dir)?;
    let mut t = String::new();
    let _ = writeln!(t, "run: {}", dir.display());
    let _ = writeln!(t, "kind: {}  config_hash: {}", m.kind.as_str(), m.config_hash);
    let _ = writeln!(t, "master_seed: {}  seed rule: {}", m.master_seed, m.seed_rule);
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match m.kind {
        Kind::EquivCurve => {
            let c: EquivCurve = load(dir, &m, "equiv_curve.json")?;
            let _ = writeln!(
                t,
                "delta: {:.6e} ({})",
                c.delta,
                if c.delta_calibrated { "self-calibrated" } else { "fixed" }
            );
            let rows: Vec<_> = c
                .rows
                .iter()
                .map(|r| (r.epsilon, r.estimate.as_ref(), r.error.as_deref()))
                .collect();
            let csv = curve_table(&mut t, "epsilon", &rows);
            let _ = writeln!(
                t,
                "trend: {} trailing strict decreases; decreasing over last {}: {}",
                c.trend,
                TREND_LEVELS,
                if c.decreasing_over_last(TREND_LEVELS) { "yes" } else { "no" }
            );
            (vec!["epsilon", "log_scaled", "ci_lo", "ci_hi", "is_bound", "n_hits"], csv)
        }
        Kind::ExitCurve => {
            let c: ExitCurveRecord = load(dir, &m, "exit_curve.json")?;
            let _ = writeln!(t, "epsilon: {:.6e}", c.epsilon);
            let rows: Vec<_> = c.radii.iter().zip(&c.estimates).map(|(r, e)| (*r, Some(e), None)).collect();
            let csv = curve_table(&mut t, "radius", &rows);
            (vec!["radius", "log_scaled", "ci_lo", "ci_hi", "is_bound", "n_hits"], csv)
        }
        Kind::Tail => {
            let e: TailEstimate = load(dir, &m, "tail.json")?;
            let _ = writeln!(t, "threshold: {:.6e}  p_hat: {:.6e}  bound: {}", e.threshold, e.p_hat, opt(e.p_bound));
            let csv = curve_table(&mut t, "epsilon", &[(e.epsilon, Some(&e), None)]);
            (vec!["epsilon", "log_scaled", "ci_lo", "ci_hi", "is_bound", "n_hits"], csv)
        }
        Kind::Audit => {
            let a: AuditRecord = load(dir, &m, "audit.json")?;
            let r = &a.report;
            let _ = writeln!(
                t,
                "model: {}  samples: {}  result: {}",
                r.model_id,
                r.n_samples,
                if a.passed { "PASS" } else { "FAIL" }
            );
            let _ = writeln!(t, "{:<24}  {:>10}  {:>15}  {:>15}  {}", "condition", "violations", "fitted", "worst_margin", "");
            let mut csv = Vec::new();
            for c in &r.conditions {
                let _ = writeln!(
                    t,
                    "{:<24}  {:>10}  {:>15.6e}  {:>15.6e}  {}",
                    c.condition_id.as_str(),
                    c.n_violations,
                    c.fitted_constant,
                    c.worst_margin,
                    if c.n_violations == 0 { "pass" } else { "FAIL" }
                );
                csv.push(vec![
                    c.condition_id.as_str().to_string(),
                    c.n_violations.to_string(),
                    fmt_f64(c.fitted_constant),
                    fmt_f64(c.worst_margin),
                    (c.n_violations == 0).to_string(),
                ]);
            }
            (vec!["condition_id", "n_violations", "fitted_constant", "worst_margin", "pass"], csv)
        }
        Kind::Rate => {
            let r: RateRecord = load(dir, &m, "rate.json")?;
            let e = &r.estimate;
            let _ = writeln!(
                t,
                "i_value: {:.10e}  terminal_gap: {:.3e}  status: {:?}  iterations: {}",
                e.i_value, e.terminal_gap, e.status, e.iterations
            );
            let _ = writeln!(t, "note: {}", e.note);
            let c = &e.control;
            let csv = (0..c.n_intervals())
                .map(|k| {
                    let u = c.hdot(k);
                    vec![fmt_f64(c.times[k]), fmt_f64(c.times[k + 1]), fmt_f64(u.iter().map(|x| x * x).sum::<f64>().sqrt())]
                })
                .collect();
            (vec!["t_start", "t_end", "hdot_norm"], csv)
        }
        Kind::Simulate => {
            let s: SimulateRecord = load(dir, &m, "path.json")?;
            let _ = writeln!(
                t,
                "model: {}  mode: {}  epsilon: {:.6e}  dt: {:.6e}  steps: {}  refined steps: {}",
                s.meta.model_id,
                s.meta.mode.as_str(),
                s.meta.epsilon,
                s.meta.dt,
                s.stream.n_steps,
                s.meta.refined_steps
            );
            let csv = s.final_state.iter().enumerate().map(|(i, x)| vec![i.to_string(), fmt_f64(*x)]).collect();
            (vec!["index", "final_value"], csv)
        }
    };
    Ok(Report {
        table: t,
        csv: to_csv(&header, &rows)?,
    })
}

/// Writes `report.csv` into `dir` and returns the table; nothing is written on error.
pub fn report(dir: &FsPath) -> Result<String> {
    let r = build(dir)?;
    let path = dir.join(REPORT_CSV);
    fs::write(&path, &r.csv).map_err(|e| RunError::io(&path, e))?;
    Ok(r.table)
}
