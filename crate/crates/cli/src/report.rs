//! Tidy (long-format) CSV tables from the artifacts of a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::pipeline::PipelineError;
use crate::verify::artifact_hashes;

fn read_json(path: &Path) -> Result<Value, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| PipelineError::MissingArtifact(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::MissingArtifact(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, hash: &str, body: &str) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, format!("# config_hash={hash}\n{body}")))
        .map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(path)
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:e}"),
        None => v.to_string(),
    }
}

/// Writes `report/*.csv` below `out` and returns the paths. All artifacts
/// must carry one configuration hash, `expected` if given.
pub fn write_report(out: &Path, expected: Option<&str>) -> Result<Vec<PathBuf>, PipelineError> {
    let report_dir = out.join("report");
    let hashes: Vec<(String, String)> = artifact_hashes(out)
        .into_iter()
        .filter(|(p, _)| !Path::new(p).starts_with(&report_dir))
        .collect();
    let Some((_, first)) = hashes.first() else {
        return Err(PipelineError::MissingArtifact(format!("no artifacts in {}", out.display())));
    };
    let hash = expected.unwrap_or(first).to_string();
    let foreign: Vec<String> = hashes
        .iter()
        .filter(|(_, h)| *h != hash)
        .map(|(p, h)| format!("{p} ({h})"))
        .collect();
    if !foreign.is_empty() {
        return Err(PipelineError::HashMismatch(format!("expected {hash}, found {}", foreign.join(", "))));
    }

    let mut written = Vec::new();
    let mut realizations: Vec<PathBuf> = fs::read_dir(out.join("realizations"))
        .map(|d| d.flatten().map(|e| e.path()).collect())
        .unwrap_or_default();
    realizations.sort();

    let mut tensors = String::from("realization,seed,entry,value\n");
    let mut checks = String::from("realization,seed,asym,lambda_min,lambda_min_k,reciprocity\n");
    let mut any_tensor = false;
    for dir in &realizations {
        let path = dir.join("tensor.json");
        if !path.exists() {
            continue;
        }
        any_tensor = true;
        let t = read_json(&path)?;
        let (r, seed) = (&t["realization"], &t["seed"]);
        let blocks: Vec<(String, &Value)> = std::iter::once(("K".to_string(), &t["K"]))
            .chain(t["J"].as_array().into_iter().flatten().enumerate().map(|(i, b)| (format!("J{}", i + 1), b)))
            .chain(t["L"].as_array().into_iter().flatten().enumerate().map(|(i, b)| (format!("L{}", i + 1), b)))
            .chain(t["D"].as_array().into_iter().flatten().enumerate().flat_map(|(a, row)| {
                row.as_array()
                    .into_iter()
                    .flatten()
                    .enumerate()
                    .map(move |(c, b)| (format!("D{}{}", a + 1, c + 1), b))
            }))
            .collect();
        for (name, blk) in blocks {
            for rr in 0..2 {
                for cc in 0..2 {
                    tensors.push_str(&format!("{r},{seed},{name}[{rr}][{cc}],{}\n", num(&blk[rr][cc])));
                }
            }
        }
        tensors.push_str(&format!("{r},{seed},porosity,{}\n", num(&t["porosity"])));
        checks.push_str(&format!(
            "{r},{seed},{},{},{},{}\n",
            num(&t["asym"]),
            num(&t["lambda_min"]),
            num(&t["lambda_min_k"]),
            num(&t["reciprocity"])
        ));
    }
    if any_tensor {
        written.push(write(&report_dir, "tensors.csv", &hash, &tensors)?);
        written.push(write(&report_dir, "checks.csv", &hash, &checks)?);
    }

    let ens = out.join("ensemble/ensemble.json");
    if ens.exists() {
        let e = read_json(&ens)?;
        let mut body = String::from("entry,mean,stderr,M\n");
        for row in e["entries"].as_array().into_iter().flatten() {
            body.push_str(&format!(
                "{},{},{},{}\n",
                row["name"].as_str().unwrap_or(""),
                num(&row["mean"]),
                num(&row["stderr"]),
                e["m"]
            ));
        }
        written.push(write(&report_dir, "ensemble.csv", &hash, &body)?);
    }

    let mac = out.join("macro/macro.json");
    if mac.exists() {
        let m = read_json(&mac)?;
        let body = format!(
            "quantity,value\nm,{}\ndissipation,{}\nwork,{}\nenergy_residual,{}\nbalance,{}\n",
            m["m"],
            num(&m["energy"]["dissipation"]),
            num(&m["energy"]["work"]),
            num(&m["energy_residual"]),
            num(&m["balance"])
        );
        written.push(write(&report_dir, "macro.csv", &hash, &body)?);
    }

    let eps = out.join("epsilon/metrics.json");
    if eps.exists() {
        let e = read_json(&eps)?;
        let mut body = String::from("epsilon,m,metric,value\n");
        for row in e["rows"].as_array().into_iter().flatten() {
            let met = &row["metrics"];
            let (ep, m) = (num(&met["epsilon"]), &met["m"]);
            for key in [
                "velocity_error",
                "energy_residual",
                "dissipation_eps",
                "dissipation_hom",
                "poincare_ratio",
                "apriori_constant",
                "u_norm",
                "grad_u_norm",
            ] {
                body.push_str(&format!("{ep},{m},{key},{}\n", num(&met[key])));
            }
            for (s, v) in met["species_errors"].as_array().into_iter().flatten().enumerate() {
                body.push_str(&format!("{ep},{m},species_error_{},{}\n", s + 1, num(v)));
            }
            body.push_str(&format!("{ep},{m},grains,{}\n", row["grains"]));
        }
        written.push(write(&report_dir, "epsilon.csv", &hash, &body)?);
    }
    Ok(written)
}
