//! Invariant checks over freshly computed stages. Failing checks, stage
//! failures and foreign artifacts in the output directory are report entries.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{compute, violations, PipelineError, RunOptions, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stage: Stage,
    pub name: String,
    pub realization: Option<usize>,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

struct Collector {
    checks: Vec<Check>,
}

impl Collector {
    /// Records `value <= threshold`.
    fn at_most(&mut self, stage: Stage, name: &str, r: Option<usize>, value: f64, threshold: f64) {
        self.checks.push(Check {
            stage,
            name: name.into(),
            realization: r,
            value,
            threshold,
            pass: value <= threshold,
            detail: String::new(),
        });
    }

    fn at_least(&mut self, stage: Stage, name: &str, r: Option<usize>, value: f64, threshold: f64) {
        self.checks.push(Check {
            stage,
            name: name.into(),
            realization: r,
            value,
            threshold,
            pass: value >= threshold,
            detail: String::new(),
        });
    }

    fn failed(&mut self, stage: Stage, name: &str, detail: String) {
        self.checks.push(Check {
            stage,
            name: name.into(),
            realization: None,
            value: f64::NAN,
            threshold: f64::NAN,
            pass: false,
            detail,
        });
    }
}

/// Every `config_hash` found in the artifacts under `dir`, except earlier
/// verify reports.
pub fn artifact_hashes(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "verify.json") {
                continue;
            } else if let Some(h) = hash_of(&p) {
                out.push((p.display().to_string(), h));
            }
        }
    }
    out.sort();
    out
}

fn hash_of(p: &Path) -> Option<String> {
    let ext = p.extension()?.to_str()?;
    let head = fs::read(p).ok()?;
    let text = String::from_utf8_lossy(&head[..head.len().min(4096)]).into_owned();
    match ext {
        "json" => {
            let v: serde_json::Value = serde_json::from_slice(&head).ok()?;
            v.get("config_hash")?.as_str().map(str::to_string)
        }
        "csv" | "ekf" | "txt" => {
            let at = text.find("config_hash=")? + "config_hash=".len();
            Some(text[at..].chars().take_while(|c| c.is_ascii_hexdigit()).collect())
        }
        _ => None,
    }
}

/// Artifacts under `dir` written by another configuration.
pub fn foreign_artifacts(dir: &Path, expected: &str) -> Vec<String> {
    artifact_hashes(dir)
        .into_iter()
        .filter(|(_, h)| h != expected)
        .map(|(p, h)| format!("{p} ({h})"))
        .collect()
}

pub fn verify(cfg: &RunConfig, stages: &[Stage], opts: RunOptions, out_dir: Option<&Path>) -> VerifyReport {
    let hash = cfg.hash(opts.seed_offset);
    let mut c = Collector { checks: Vec::new() };
    if stages.is_empty() {
        return finish(hash, c);
    }
    if let Some(d) = out_dir {
        let foreign = foreign_artifacts(d, &hash);
        if !foreign.is_empty() {
            c.failed(Stage::Generate, "artifact_hashes", foreign.join(", "));
        }
    }
    let outputs = match compute(cfg, stages, opts, None) {
        Ok((o, _)) => o,
        Err(PipelineError::Stage { stage, realization, message }) => {
            let at = realization.map(|r| format!("realization {r}: ")).unwrap_or_default();
            c.failed(stage, "stage_failure", format!("{at}{message}"));
            return finish(hash, c);
        }
        Err(e) => {
            c.failed(Stage::Generate, "io", e.to_string());
            return finish(hash, c);
        }
    };
    let want = |s: Stage| stages.contains(&s);
    let tol = cfg.solver.tol;
    let spec = cfg.spec();
    let sc = cfg.surface_charge();

    for r in &outputs.realizations {
        let ri = Some(r.index);
        if want(Stage::Generate) {
            c.at_most(Stage::Generate, "disperse_violations", ri, violations(r) as f64, 0.0);
        }
        if want(Stage::Pb) {
            let (g, eq) = (r.grid.as_ref().unwrap(), r.eq.as_ref().unwrap());
            let b = eq.bounds;
            let (lo, hi) = eq
                .psi
                .data
                .iter()
                .enumerate()
                .filter(|(k, _)| g.is_fluid(*k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), (_, &v)| (a.min(v), z.max(v)));
            let excess = (b.psi_min - lo).max(hi - b.psi_max).max(0.0);
            c.at_most(Stage::Pb, "psi_within_bounds", ri, excess, 1e-12);
            c.at_most(Stage::Pb, "psi_below_cutoff", ri, eq.psi.max_abs() - eq.cutoff, 0.0);
            let (fluid, surface) = ekhom_core::pb::charge_balance(g, &spec, &sc, eq);
            let mismatch = (fluid - surface).abs() / surface.abs().max(1e-12);
            c.at_most(Stage::Pb, "charge_balance", ri, mismatch, 1e-6);
            let rises = eq
                .energy_history
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(0.0f64, f64::max);
            c.at_most(Stage::Pb, "energy_monotone", ri, rises, 1e-12 * eq.energy.abs().max(1.0));
        }
        if want(Stage::Cells) {
            for s in r.cells.as_ref().unwrap() {
                let name = format!("{:?}/{}", s.family, ["x", "y"][s.k]);
                c.at_most(Stage::Cells, &format!("residual {name}"), ri, s.residuals.coupled, 10.0 * tol);
                let leak = s.residuals.leakage.iter().fold(0.0f64, |m, v| m.max(*v));
                c.at_most(Stage::Cells, &format!("leakage {name}"), ri, leak, 1e-10);
                c.at_most(Stage::Cells, &format!("energy {name}"), ri, s.residuals.energy, 1e-6f64.max(10.0 * tol));
            }
        }
        if want(Stage::Onsager) {
            let ch = r.check.unwrap();
            c.at_most(Stage::Onsager, "symmetry", ri, ch.asym, 1e-6);
            c.at_least(Stage::Onsager, "lambda_min", ri, ch.lambda_min, f64::MIN_POSITIVE);
            c.at_least(Stage::Onsager, "lambda_min_k", ri, ch.lambda_min_k, f64::MIN_POSITIVE);
        }
    }
    if want(Stage::Macro) {
        let sol = outputs.macro_solution.as_ref().unwrap();
        c.at_most(Stage::Macro, "energy_identity", None, sol.energy.residual(), 1e-6);
        c.at_most(Stage::Macro, "flux_balance", None, sol.balance, 1e-6);
    }
    if want(Stage::Epsilon) {
        let mut rows: Vec<_> = outputs.epsilon.iter().map(|r| &r.metrics).collect();
        for m in &rows {
            c.at_most(Stage::Epsilon, &format!("energy_identity eps={}", m.epsilon), None, m.energy_residual, 1e-8);
        }
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let growth = rows
            .windows(2)
            .map(|w| w[1].velocity_error - w[0].velocity_error)
            .fold(0.0f64, f64::max);
        if rows.len() >= 2 {
            c.at_most(Stage::Epsilon, "velocity_error_nonincreasing", None, growth, 0.0);
        }
    }
    finish(hash, c)
}

fn finish(hash: String, c: Collector) -> VerifyReport {
    let pass = c.checks.iter().all(|k| k.pass);
    VerifyReport {
        config_hash: hash,
        checks: c.checks,
        pass,
    }
}
