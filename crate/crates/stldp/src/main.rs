use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stldp::config::{ExperimentConfig, Kind};
use stldp::numfmt::{to_json, to_json_compact};
use stldp::runner::parallel_audit;
use stldp::{registry, report, run, Pool, RunError};
use stldp_core::models::ModelId;

#[derive(Parser)]
#[command(name = "stldp", version, about = "Small-time large deviation experiments for monotone SPDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Summarize a finished run directory.
    Report { dir: PathBuf },
    /// Audit a registry model with its default parameters and print the JSON report.
    Audit {
        model: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        n_dof: usize,
    },
}

fn fail(e: &RunError) -> ExitCode {
    match to_json_compact(&e.record()) {
        Ok(line) => eprintln!("{line}"),
        Err(_) => eprintln!("{e}"),
    }
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = Pool::from_env();
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(dir) = output {
                cfg.output_dir = dir;
            }
            match run(&cfg, &pool) {
                Ok(m) => {
                    println!(
                        "{} run written to {} ({} files, config {})",
                        m.kind.as_str(),
                        cfg.output_dir.display(),
                        m.outputs.len(),
                        &m.config_hash[..12]
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Report { dir } => match report::report(&dir) {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Audit { model, n, seed, n_dof } => {
            let id: ModelId = match model.parse() {
                Ok(id) => id,
                Err(e) => return fail(&RunError::Core(e)),
            };
            let mut cfg = ExperimentConfig::default();
            cfg.kind = Kind::Audit;
            cfg.model.id = id;
            cfg.grid.n_dof = n_dof;
            let result = registry::build_model(&cfg)
                .and_then(|m| parallel_audit(&pool, &m, &cfg.audit.sampler, n, seed))
                .and_then(|r| {
                    let passed = r.passed();
                    to_json(&r).map(|s| (s, passed))
                });
            match result {
                Ok((json, passed)) => {
                    print!("{json}");
                    eprintln!("{}: {}", model, if passed { "PASS" } else { "FAIL" });
                    if passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
