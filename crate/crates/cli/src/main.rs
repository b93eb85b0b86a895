use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ekhom_cli::{parse_config, run_pipeline, verify, write_report, RunConfig, RunOptions, Stage};

/// Exit codes: 0 success, 2 configuration error, 3 stage or I/O failure,
/// 4 verification failed.
#[derive(Parser)]
#[command(name = "ekhom", version, about = "Effective electrokinetic coefficients of random porous media")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "ekhom.toml")]
    config: PathBuf,
    /// Output directory, overriding output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Added to every seed of the configuration.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Microstructure realizations.
    Generate,
    /// Equilibrium potential and concentrations.
    Pb,
    /// Corrector cell problems.
    Cells,
    /// Per-realization tensors and the ensemble average.
    Onsager,
    /// Homogenized problem on the unit square.
    Macro,
    /// Direct eps-scale solves against the reconstruction.
    Epsilon,
    /// Every stage.
    Run,
    /// Invariant checks; writes verify.json.
    Verify {
        /// Comma-separated stages to check; empty checks nothing.
        #[arg(long, value_delimiter = ',', default_value = "generate,pb,cells,onsager,macro")]
        stages: Vec<String>,
    },
    /// Tidy CSV tables from existing artifacts.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(o) = &cli.out {
        cfg.output.dir = o.display().to_string();
    }
    let out = PathBuf::from(&cfg.output.dir);
    let opts = RunOptions {
        jobs: cli.jobs,
        seed_offset: cli.seed_offset,
    };
    let stage = match &cli.command {
        Command::Generate => Some(Stage::Generate),
        Command::Pb => Some(Stage::Pb),
        Command::Cells => Some(Stage::Cells),
        Command::Onsager => Some(Stage::Onsager),
        Command::Macro => Some(Stage::Macro),
        Command::Epsilon | Command::Run => Some(Stage::Epsilon),
        _ => None,
    };
    let result = match (&cli.command, stage) {
        (_, Some(st)) => run_pipeline(&cfg, &[st], opts, &out).map(|(_, m)| {
            for s in m.stages.iter().filter(|s| s.status == "done") {
                eprintln!("{:<8} {:>10.2} s", s.stage, s.seconds);
            }
            println!("{} files under {}", m.files.len(), out.display());
            0
        }),
        (Command::Verify { stages }, None) => {
            let parsed: Result<Vec<Stage>, String> =
                stages.iter().filter(|s| !s.is_empty()).map(|s| s.parse()).collect();
            let stages = match parsed {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            Ok(run_verify(&cfg, &stages, opts, &out))
        }
        _ => write_report(&out, Some(&cfg.hash(cli.seed_offset))).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

/// Writes verify.json and returns the exit code.
fn run_verify(cfg: &RunConfig, stages: &[Stage], opts: RunOptions, out: &Path) -> u8 {
    let rep = verify(cfg, stages, opts, Some(out));
    let path = out.join("verify.json");
    let text = serde_json::to_string_pretty(&rep).expect("report serializes");
    if let Err(e) = std::fs::create_dir_all(out).and_then(|_| std::fs::write(&path, text + "\n")) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return 3;
    }
    for c in rep.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "FAIL {} {} {:?}: {:e} vs {:e} {}",
            c.stage, c.name, c.realization, c.value, c.threshold, c.detail
        );
    }
    println!("{} checks, {}", rep.checks.len(), if rep.pass { "all pass" } else { "failures" });
    if rep.pass {
        0
    } else {
        4
    }
}
