//! Stage orchestration: realizations in parallel, ordered reductions, and
//! the artifact tree under the output directory.
//!
//! ```text
//! manifest.json
//! realizations/r000/microstructure.txt
//! realizations/r000/psi.ekf, n1.ekf, ..., pb.json
//! realizations/r000/cells/p_x_v.ekf, ..., cells.json
//! realizations/r000/tensor.json
//! ensemble/ensemble.csv, ensemble.json
//! macro/p.ekf, phi1.ekf, mu1.ekf, ..., sections.csv, macro.json
//! epsilon/metrics.csv, metrics.json
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use ekhom_core::cell::{solve_all, CellSolution, Family};
use ekhom_core::epsilon::{
    build_perforated_domain, convergence_metrics, dissipation_form, homogenized_dissipation, metrics_csv,
    reconstruct, solve_linearized, ConvergenceMetrics,
};
use ekhom_core::geometry::{check_disperse, voxelize, Microstructure};
use ekhom_core::grid::field::FieldFile;
use ekhom_core::grid::{FluidGrid, ScalarField};
use ekhom_core::macrosolve::{solve_macro, MacroProblem, MacroSolution};
use ekhom_core::onsager::{
    assemble_tensor, check_onsager, ensemble_average, mean_stderr, EnsembleEstimate, OnsagerCheck, OnsagerTensor,
};
use ekhom_core::pb::{charge_balance, solve_equilibrium, EquilibriumState};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Pb,
    Cells,
    Onsager,
    Macro,
    Epsilon,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Pb,
        Stage::Cells,
        Stage::Onsager,
        Stage::Macro,
        Stage::Epsilon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Pb => "pb",
            Stage::Cells => "cells",
            Stage::Onsager => "onsager",
            Stage::Macro => "macro",
            Stage::Epsilon => "epsilon",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Every stage depends on all earlier ones, so the closure of a request is a
/// prefix of `Stage::ALL`.
pub fn expand(stages: &[Stage]) -> Vec<Stage> {
    match stages.iter().max() {
        None => Vec::new(),
        Some(&last) => Stage::ALL.into_iter().filter(|s| *s <= last).collect(),
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} failed{}: {message}", realization.map(|r| format!(" on realization {r}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        realization: Option<usize>,
        message: String,
    },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("artifacts from different configurations: {0}")]
    HashMismatch(String),
    #[error("missing artifact {0}")]
    MissingArtifact(String),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub seed_offset: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, seed_offset: 0 }
    }
}

fn fail(stage: Stage, realization: Option<usize>) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage {
        stage,
        realization,
        message,
    }
}

/// Writes artifacts below the output root and records every path.
pub(crate) struct Sink {
    root: PathBuf,
    hash: String,
    files: Mutex<Vec<String>>,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl Sink {
    pub(crate) fn new(root: &Path, hash: &str) -> Self {
        Sink {
            root: root.to_path_buf(),
            hash: hash.to_string(),
            files: Mutex::new(Vec::new()),
        }
    }

    fn write(&self, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        let io = |source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io)?;
        self.files.lock().unwrap().push(rel.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&self, rel: &str, body: &T) -> Result<(), PipelineError> {
        let tagged = Tagged {
            config_hash: &self.hash,
            body,
        };
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, &tagged)?;
            writeln!(w)
        })
    }

    fn csv(&self, rel: &str, body: &str) -> Result<(), PipelineError> {
        self.write(rel, |w| {
            writeln!(w, "# config_hash={}", self.hash)?;
            w.write_all(body.as_bytes())
        })
    }

    fn field(&self, rel: &str, file: FieldFile) -> Result<(), PipelineError> {
        let file = file.with_hash(&self.hash);
        self.write(rel, |w| file.write_to(w))
    }

    fn micro(&self, rel: &str, m: &Microstructure) -> Result<(), PipelineError> {
        self.write(rel, |w| m.write_tagged(w, Some(&self.hash)))
    }
}

/// Everything computed for one realization, up to the requested stage.
#[derive(Debug, Clone)]
pub struct Realization {
    pub index: usize,
    pub seed: u64,
    pub micro: Microstructure,
    pub grid: Option<FluidGrid>,
    pub eq: Option<EquilibriumState>,
    pub cells: Option<Vec<CellSolution>>,
    pub tensor: Option<OnsagerTensor>,
    pub check: Option<OnsagerCheck>,
    /// Seconds per stage.
    pub timings: Vec<(Stage, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonRow {
    pub metrics: ConvergenceMetrics,
    pub grains: usize,
    pub dropped: usize,
    pub solver: String,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub config_hash: String,
    pub stages: Vec<Stage>,
    pub realizations: Vec<Realization>,
    pub ensemble: Option<EnsembleEstimate>,
    pub macro_problem: Option<MacroProblem>,
    pub macro_solution: Option<MacroSolution>,
    pub epsilon: Vec<EpsilonRow>,
    /// Summed seconds per stage.
    pub stage_seconds: Vec<(Stage, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: Stage,
    pub status: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Run record; the only output that changes between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub jobs: usize,
    pub seed_offset: u64,
    pub stages: Vec<StageStatus>,
    pub wall_clock_s: f64,
    pub epsilon_runtimes_s: Vec<f64>,
    pub files: Vec<FileEntry>,
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

fn first_error<T>(results: Vec<Result<T, PipelineError>>) -> Result<Vec<T>, PipelineError> {
    results.into_iter().collect()
}

fn family_tag(f: Family) -> String {
    match f {
        Family::Pressure => "p".into(),
        Family::Species(j) => format!("s{}", j + 1),
    }
}

#[derive(Serialize)]
struct PbRecord<'a> {
    realization: usize,
    seed: u64,
    porosity: f64,
    energy: f64,
    energy_history: &'a [f64],
    cutoff: f64,
    max_abs_psi: f64,
    bounds: ekhom_core::model::BoundConstants,
    charge_fluid: f64,
    charge_surface: f64,
    newton: &'a ekhom_core::grid::SolveReport,
}

#[derive(Serialize)]
struct CellRecord<'a> {
    family: String,
    k: usize,
    residuals: &'a ekhom_core::cell::CellResiduals,
    report: &'a ekhom_core::grid::SolveReport,
}

#[derive(Serialize)]
struct TensorRecord<'a> {
    realization: usize,
    #[serde(flatten)]
    tensor: &'a OnsagerTensor,
    asym: f64,
    lambda_min: f64,
    lambda_min_k: f64,
    reciprocity: f64,
}

/// Runs one realization through the stages in `stages` (already expanded).
fn realization(
    cfg: &RunConfig,
    stages: &[Stage],
    index: usize,
    seed: u64,
    sink: Option<&Sink>,
) -> Result<Realization, PipelineError> {
    let has = |s: Stage| stages.contains(&s);
    let dir = format!("realizations/r{index:03}");
    let spec = cfg.spec();
    let mut timings = Vec::new();

    let t = Instant::now();
    let micro = cfg
        .generate(seed)
        .map_err(|e| fail(Stage::Generate, Some(index))(e.to_string()))?;
    if let Some(s) = sink {
        s.micro(&format!("{dir}/microstructure.txt"), &micro)?;
    }
    timings.push((Stage::Generate, t.elapsed().as_secs_f64()));
    let mut out = Realization {
        index,
        seed,
        micro,
        grid: None,
        eq: None,
        cells: None,
        tensor: None,
        check: None,
        timings,
    };
    if !has(Stage::Pb) {
        return Ok(out);
    }

    let t = Instant::now();
    let err = fail(Stage::Pb, Some(index));
    let grid = voxelize(&out.micro, cfg.grid.n).map_err(|e| err(e.to_string()))?;
    let sc = cfg.surface_charge();
    let eq = solve_equilibrium(&grid, &spec, &sc).map_err(|e| err(e.to_string()))?;
    if let Some(s) = sink {
        s.field(&format!("{dir}/psi.ekf"), FieldFile::scalar(&eq.psi, grid.h))?;
        for (j, n) in eq.n0.iter().enumerate() {
            s.field(&format!("{dir}/n{}.ekf", j + 1), FieldFile::scalar(n, grid.h))?;
        }
        let (charge_fluid, charge_surface) = charge_balance(&grid, &spec, &sc, &eq);
        s.json(
            &format!("{dir}/pb.json"),
            &PbRecord {
                realization: index,
                seed,
                porosity: grid.porosity(),
                energy: eq.energy,
                energy_history: &eq.energy_history,
                cutoff: eq.cutoff,
                max_abs_psi: eq.psi.max_abs(),
                bounds: eq.bounds,
                charge_fluid,
                charge_surface,
                newton: &eq.report,
            },
        )?;
    }
    out.timings.push((Stage::Pb, t.elapsed().as_secs_f64()));
    out.grid = Some(grid);
    out.eq = Some(eq);
    if !has(Stage::Cells) {
        return Ok(out);
    }

    let t = Instant::now();
    let (grid, eq) = (out.grid.as_ref().unwrap(), out.eq.as_ref().unwrap());
    let cells = solve_all(eq, grid, &spec, cfg.cell_options())
        .map_err(|e| fail(Stage::Cells, Some(index))(e.to_string()))?;
    if let Some(s) = sink {
        let mut records = Vec::new();
        for c in &cells {
            let stem = format!("{dir}/cells/{}_{}", family_tag(c.family), ["x", "y"][c.k]);
            s.field(&format!("{stem}_v.ekf"), FieldFile::vector(&c.v, grid.h))?;
            s.field(&format!("{stem}_pi.ekf"), FieldFile::scalar(&c.pi, grid.h))?;
            for (j, th) in c.theta.iter().enumerate() {
                s.field(&format!("{stem}_theta{}.ekf", j + 1), FieldFile::scalar(th, grid.h))?;
            }
            records.push(CellRecord {
                family: family_tag(c.family),
                k: c.k,
                residuals: &c.residuals,
                report: &c.report,
            });
        }
        s.json(&format!("{dir}/cells.json"), &serde_json::json!({ "cells": records }))?;
    }
    out.timings.push((Stage::Cells, t.elapsed().as_secs_f64()));
    if !has(Stage::Onsager) {
        out.cells = Some(cells);
        return Ok(out);
    }

    let t = Instant::now();
    let mut tensor = assemble_tensor(&cells, eq, grid, &spec)
        .map_err(|e| fail(Stage::Onsager, Some(index))(e.to_string()))?;
    tensor.seed = Some(seed);
    let check = check_onsager(&tensor);
    if let Some(s) = sink {
        s.json(
            &format!("{dir}/tensor.json"),
            &TensorRecord {
                realization: index,
                tensor: &tensor,
                asym: check.asym,
                lambda_min: check.lambda_min,
                lambda_min_k: check.lambda_min_k,
                reciprocity: check.reciprocity,
            },
        )?;
    }
    out.timings.push((Stage::Onsager, t.elapsed().as_secs_f64()));
    out.cells = Some(cells);
    out.tensor = Some(tensor);
    out.check = Some(check);
    Ok(out)
}

/// Element-wise ensemble mean of B, summed in sorted order.
pub fn mean_tensor(tensors: &[OnsagerTensor]) -> OnsagerTensor {
    let first = &tensors[0];
    let dim = first.b.len();
    let b = (0..dim)
        .map(|r| {
            (0..dim)
                .map(|c| {
                    let mut v: Vec<f64> = tensors.iter().map(|t| t.b[r][c]).collect();
                    v.sort_by(f64::total_cmp);
                    mean_stderr(&v).0
                })
                .collect()
        })
        .collect();
    let mut t = OnsagerTensor::from_matrix(&first.z, b);
    let mut por: Vec<f64> = tensors.iter().map(|t| t.porosity).collect();
    por.sort_by(f64::total_cmp);
    t.porosity = mean_stderr(&por).0;
    t.grid_n = first.grid_n;
    t
}

fn nodal(values: &[f64], m: usize) -> FieldFile {
    let mut f = FieldFile::scalar(
        &ScalarField {
            nx: m + 1,
            ny: m + 1,
            data: values.to_vec(),
        },
        1.0 / m as f64,
    );
    f.l = 1.0;
    f
}

#[derive(Serialize)]
struct MacroRecord<'a> {
    m: usize,
    tensor: &'a OnsagerTensor,
    energy: &'a ekhom_core::macrosolve::MacroEnergy,
    energy_residual: f64,
    balance: f64,
    report: &'a ekhom_core::grid::SolveReport,
}

/// Computes the requested stages (with prerequisites). Artifacts are written
/// when `out_dir` is given.
pub fn compute(
    cfg: &RunConfig,
    stages: &[Stage],
    opts: RunOptions,
    out_dir: Option<&Path>,
) -> Result<(RunOutputs, Option<Vec<String>>), PipelineError> {
    let hash = cfg.hash(opts.seed_offset);
    let stages = expand(stages);
    let sink = out_dir.map(|d| Sink::new(d, &hash));
    let sink = sink.as_ref();
    let workers = pool(opts.jobs);
    let mut outputs = RunOutputs {
        config_hash: hash,
        stages: stages.clone(),
        realizations: Vec::new(),
        ensemble: None,
        macro_problem: None,
        macro_solution: None,
        epsilon: Vec::new(),
        stage_seconds: Vec::new(),
    };
    if stages.is_empty() {
        return Ok((outputs, sink.map(|_| Vec::new())));
    }

    let per: Vec<Result<Realization, PipelineError>> = workers.install(|| {
        (0..cfg.ensemble.m)
            .into_par_iter()
            .map(|r| realization(cfg, &stages, r, cfg.realization_seed(r, opts.seed_offset), sink))
            .collect()
    });
    outputs.realizations = first_error(per)?;
    for st in Stage::ALL.into_iter().take_while(|s| *s <= Stage::Onsager) {
        if stages.contains(&st) {
            let secs = outputs
                .realizations
                .iter()
                .flat_map(|r| r.timings.iter())
                .filter(|(s, _)| *s == st)
                .map(|(_, t)| t)
                .sum();
            outputs.stage_seconds.push((st, secs));
        }
    }

    if stages.contains(&Stage::Onsager) {
        let tensors: Vec<OnsagerTensor> = outputs
            .realizations
            .iter()
            .map(|r| r.tensor.clone().unwrap())
            .collect();
        let est = ensemble_average(&tensors).map_err(|e| fail(Stage::Onsager, None)(e.to_string()))?;
        if let Some(s) = sink {
            s.csv("ensemble/ensemble.csv", &est.to_csv())?;
            s.json("ensemble/ensemble.json", &est)?;
        }
        outputs.ensemble = Some(est);
    }

    if stages.contains(&Stage::Macro) {
        let t = Instant::now();
        let tensors: Vec<OnsagerTensor> = outputs
            .realizations
            .iter()
            .map(|r| r.tensor.clone().unwrap())
            .collect();
        let prob = MacroProblem::new(cfg.macro_.m, mean_tensor(&tensors), cfg.macro_.forcing.forcing());
        let sol = solve_macro(&prob, cfg.solver.tol).map_err(|e| fail(Stage::Macro, None)(e.to_string()))?;
        if let Some(s) = sink {
            let m = sol.m;
            s.field("macro/p.ekf", nodal(&sol.p, m))?;
            for (j, (phi, mu)) in sol.phi.iter().zip(&sol.mu).enumerate() {
                s.field(&format!("macro/phi{}.ekf", j + 1), nodal(phi, m))?;
                s.field(&format!("macro/mu{}.ekf", j + 1), nodal(mu, m))?;
            }
            s.csv("macro/sections.csv", &sol.section_csv())?;
            s.json(
                "macro/macro.json",
                &MacroRecord {
                    m,
                    tensor: &prob.tensor,
                    energy: &sol.energy,
                    energy_residual: sol.energy.residual(),
                    balance: sol.balance,
                    report: &sol.report,
                },
            )?;
        }
        outputs.stage_seconds.push((Stage::Macro, t.elapsed().as_secs_f64()));
        outputs.macro_problem = Some(prob);
        outputs.macro_solution = Some(sol);
    }

    if stages.contains(&Stage::Epsilon) {
        let t = Instant::now();
        let rows = epsilon_stage(cfg, &outputs, opts, &workers)?;
        if let Some(s) = sink {
            let metrics: Vec<ConvergenceMetrics> = rows.iter().map(|r| r.metrics.clone()).collect();
            s.csv("epsilon/metrics.csv", &metrics_csv(&metrics, None))?;
            s.json("epsilon/metrics.json", &serde_json::json!({ "rows": rows }))?;
        }
        outputs.stage_seconds.push((Stage::Epsilon, t.elapsed().as_secs_f64()));
        outputs.epsilon = rows;
    }

    let files = sink.map(|s| {
        let mut f = s.files.lock().unwrap().clone();
        f.sort();
        f
    });
    Ok((outputs, files))
}

fn epsilon_stage(
    cfg: &RunConfig,
    outputs: &RunOutputs,
    opts: RunOptions,
    workers: &rayon::ThreadPool,
) -> Result<Vec<EpsilonRow>, PipelineError> {
    if cfg.epsilon.eps_list.is_empty() {
        return Ok(Vec::new());
    }
    let err = fail(Stage::Epsilon, None);
    let seed = cfg.epsilon_seed(opts.seed_offset);
    let fresh;
    let rve = match outputs.realizations.iter().find(|r| r.seed == seed) {
        Some(r) => r,
        None => {
            let stages = expand(&[Stage::Cells]);
            fresh = realization(cfg, &stages, usize::MAX, seed, None)?;
            &fresh
        }
    };
    let (grid, eq, cells) = (
        rve.grid.as_ref().unwrap(),
        rve.eq.as_ref().unwrap(),
        rve.cells.as_ref().unwrap(),
    );
    let spec = cfg.spec();
    let msol = outputs.macro_solution.as_ref().unwrap();
    let forcing = cfg.macro_.forcing.forcing();
    let form = dissipation_form(cells, eq, grid, &spec).map_err(|e| err(e.to_string()))?;
    let dh = homogenized_dissipation(&form, msol);
    let pairs: Vec<(f64, usize)> = cfg
        .epsilon
        .eps_list
        .iter()
        .copied()
        .zip(cfg.epsilon.m_list.iter().copied())
        .collect();
    let rows: Vec<Result<EpsilonRow, PipelineError>> = workers.install(|| {
        pairs
            .par_iter()
            .map(|&(eps, m)| {
                let t = Instant::now();
                let err = fail(Stage::Epsilon, None);
                let dom = build_perforated_domain(&rve.micro, grid, eq, &spec, eps, m)
                    .map_err(|e| err(format!("eps {eps}: {e}")))?;
                let sol = solve_linearized(&dom, &spec, &forcing, cfg.solver_options())
                    .map_err(|e| err(format!("eps {eps}: {e}")))?;
                let rec = reconstruct(msol, cells, grid, &forcing, &dom).map_err(|e| err(format!("eps {eps}: {e}")))?;
                Ok(EpsilonRow {
                    metrics: convergence_metrics(&sol, &rec, &dom, &forcing, dh),
                    grains: dom.grains.len(),
                    dropped: dom.dropped,
                    solver: sol.report.to_string(),
                    seconds: t.elapsed().as_secs_f64(),
                })
            })
            .collect()
    });
    first_error(rows)
}

fn file_entry(root: &Path, rel: &str) -> Result<FileEntry, PipelineError> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(FileEntry {
        path: rel.to_string(),
        bytes: bytes.len() as u64,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Runs the stages and writes every artifact plus `manifest.json` under `out`.
pub fn run_pipeline(
    cfg: &RunConfig,
    stages: &[Stage],
    opts: RunOptions,
    out: &Path,
) -> Result<(RunOutputs, Manifest), PipelineError> {
    let start = Instant::now();
    let (outputs, files) = compute(cfg, stages, opts, Some(out))?;
    let files = files
        .unwrap_or_default()
        .iter()
        .map(|f| file_entry(out, f))
        .collect::<Result<Vec<_>, _>>()?;
    let stages = Stage::ALL
        .into_iter()
        .map(|st| {
            let secs = outputs.stage_seconds.iter().find(|(s, _)| *s == st).map(|(_, t)| *t);
            StageStatus {
                stage: st,
                status: if secs.is_some() { "done" } else { "skipped" }.into(),
                seconds: secs.unwrap_or(0.0),
            }
        })
        .collect();
    let manifest = Manifest {
        config_hash: outputs.config_hash.clone(),
        jobs: opts.jobs,
        seed_offset: opts.seed_offset,
        stages,
        wall_clock_s: start.elapsed().as_secs_f64(),
        epsilon_runtimes_s: outputs.epsilon.iter().map(|r| r.seconds).collect(),
        files,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((outputs, manifest))
}

/// Disperse-rule violations of a realization, for the verify report.
pub fn violations(r: &Realization) -> usize {
    check_disperse(&r.micro, &r.micro.constraints).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_is_a_prefix() {
        assert_eq!(expand(&[]), vec![]);
        assert_eq!(expand(&[Stage::Generate]), vec![Stage::Generate]);
        assert_eq!(expand(&[Stage::Onsager, Stage::Pb]), Stage::ALL[..4].to_vec());
        assert_eq!(expand(&[Stage::Epsilon]), Stage::ALL.to_vec());
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("cell".parse::<Stage>().is_err());
    }
}
