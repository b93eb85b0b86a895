mod common;

use std::fs;
use std::path::Path;

use ekhom_cli::pipeline::Manifest;
use ekhom_cli::{run_pipeline, verify, write_report, PipelineError, RunOptions, Stage};

fn listing(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().display().to_string());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_only_writes_microstructures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::smoke(dir.path());
    run_pipeline(&cfg, &[Stage::Generate], RunOptions::default(), dir.path()).unwrap();
    assert_eq!(
        listing(dir.path()),
        vec![
            "manifest.json",
            "realizations/r000/microstructure.txt",
            "realizations/r001/microstructure.txt"
        ]
    );
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.config_hash, cfg.hash(0));
    assert_eq!(m.stages.iter().filter(|s| s.status == "done").count(), 1);
    let text = fs::read_to_string(dir.path().join("realizations/r001/microstructure.txt")).unwrap();
    assert!(text.starts_with("EKMICRO1 L=2.0 generator=bernoulli seed=2 config_hash="));
}

#[test]
fn seed_offset_shifts_every_realization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::smoke(dir.path());
    let opts = RunOptions { jobs: 1, seed_offset: 5 };
    let (out, _) = run_pipeline(&cfg, &[Stage::Generate], opts, dir.path()).unwrap();
    let seeds: Vec<u64> = out.realizations.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![6, 7]);
}

#[test]
fn full_smoke_run_is_deterministic_and_verifies() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = common::smoke(a.path());
    let (out, manifest) = run_pipeline(&cfg, &[Stage::Epsilon], RunOptions { jobs: 1, seed_offset: 0 }, a.path()).unwrap();
    run_pipeline(&cfg, &[Stage::Epsilon], RunOptions { jobs: 3, seed_offset: 0 }, b.path()).unwrap();
    assert!(manifest.stages.iter().all(|s| s.status == "done"));
    assert_eq!(out.epsilon.len(), 1);
    assert!(out.epsilon[0].metrics.energy_residual <= 1e-8);

    let files = listing(a.path());
    assert_eq!(files, listing(b.path()));
    assert!(files.contains(&"ensemble/ensemble.csv".to_string()));
    assert!(files.contains(&"macro/sections.csv".to_string()));
    assert!(files.contains(&"epsilon/metrics.csv".to_string()));
    for f in files.iter().filter(|f| *f != "manifest.json") {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    for f in files.iter().filter(|f| f.ends_with(".csv")) {
        let text = fs::read_to_string(a.path().join(f)).unwrap();
        assert!(text.starts_with(&format!("# config_hash={}\n", cfg.hash(0))), "{f}");
    }

    let report = write_report(a.path(), Some(&cfg.hash(0))).unwrap();
    assert_eq!(report.len(), 5);
    let tidy = fs::read_to_string(a.path().join("report/tensors.csv")).unwrap();
    // 2 realizations x (9 blocks x 4 entries + porosity)
    assert_eq!(tidy.lines().count(), 2 + 2 * 37);

    let rep = verify(&cfg, &Stage::ALL, RunOptions::default(), Some(a.path()));
    assert!(rep.pass, "{:?}", rep.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
}

#[test]
fn loose_tolerance_is_reported_as_asymmetry() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::smoke(dir.path());
    cfg.solver.tol = 1e-3;
    let rep = verify(&cfg, &[Stage::Onsager], RunOptions::default(), None);
    assert!(!rep.pass);
    let sym: Vec<_> = rep.checks.iter().filter(|c| c.name == "symmetry").collect();
    assert_eq!(sym.len(), 2);
    assert!(sym.iter().any(|c| !c.pass && c.value > 1e-6), "{sym:?}");
}

#[test]
fn empty_stage_list_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::smoke(dir.path());
    let rep = verify(&cfg, &[], RunOptions::default(), None);
    assert!(rep.checks.is_empty());
    assert!(rep.pass);
}

#[test]
fn artifacts_of_another_configuration_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::smoke(dir.path());
    run_pipeline(&cfg, &[Stage::Generate], RunOptions::default(), dir.path()).unwrap();
    let mut other = cfg.clone();
    other.ensemble.base_seed = 9;
    let shifted = dir.path().join("shifted");
    run_pipeline(&other, &[Stage::Generate], RunOptions::default(), &shifted).unwrap();
    let rep = verify(&cfg, &[Stage::Generate], RunOptions::default(), Some(dir.path()));
    assert!(!rep.pass);
    let mixed = rep.checks.iter().find(|c| c.name == "artifact_hashes").unwrap();
    assert!(mixed.detail.contains("shifted"), "{}", mixed.detail);
    assert!(matches!(
        write_report(dir.path(), None),
        Err(PipelineError::HashMismatch(_))
    ));
}
