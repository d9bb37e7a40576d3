//! Thin batch front-end over the library: run a configured experiment,
//! execute a verification suite, or list the available experiment kinds.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use photocorr::experiment::{self, ExperimentConfig, EXPERIMENT_KINDS};
use photocorr::verify;
use photocorr::Error;

#[derive(Parser)]
#[command(name = "photocorr", version, about = "photon-correlation experiment runner")]
struct Cli {
    /// Worker threads; defaults to PHOTOCORR_THREADS or all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed (stochastic experiments only).
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for result files.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run a named verification suite ("all" chains every suite).
    Verify {
        /// One of the suite names from list-experiments, or "all".
        suite: String,
    },
    /// List experiment kinds and verification suites.
    ListExperiments,
}

/// Exit codes: 2 for schema/validation problems, 3 for numerical failures.
fn classify(error: &Error) -> u8 {
    match error {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::Json(_) => 2,
        _ => 3,
    }
}

fn fail(error: Error) -> ExitCode {
    let code = classify(&error);
    let payload = serde_json::json!({
        "error": error.to_string(),
        "exit_code": code,
    });
    eprintln!("{payload}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("PHOTOCORR_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(threads) = threads {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
        {
            eprintln!("failed to size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    match cli.command {
        Command::Run { config, seed, out_dir } => {
            let parsed = match ExperimentConfig::from_json_file(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let parsed = match seed {
                Some(s) => parsed.with_seed(s),
                None => parsed,
            };
            match experiment::run(&parsed, &out_dir) {
                Ok(summary) => {
                    for path in &summary.outputs {
                        println!("wrote {}", path.display());
                    }
                    println!("wrote {}", out_dir.join("summary.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify { suite } => match verify::run_suite(&suite) {
            Ok(results) => {
                let mut failures = 0;
                for r in &results {
                    println!("{}", r.render());
                    if !r.pass {
                        failures += 1;
                    }
                }
                println!("{} checks, {} failed", results.len(), failures);
                if failures == 0 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => fail(e),
        },
        Command::ListExperiments => {
            println!("experiment kinds (run --config <file.json>):");
            for (name, description) in EXPERIMENT_KINDS {
                println!("  {name:<16} {description}");
            }
            println!("verification suites (verify <name>):");
            for suite in verify::SUITES {
                println!("  {suite}");
            }
            ExitCode::SUCCESS
        }
    }
}
