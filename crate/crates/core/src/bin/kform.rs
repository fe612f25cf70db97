//! `kform run <config>`, `kform validate <config>`, `kform list`.
//!
//! Exit codes: 0 all checks passed, 1 a numeric check failed or a computation
//! errored, 2 usage or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kform::runner::{self, parse_config, RunOptions, ScenarioConfig};
use kform::Error;

#[derive(Parser)]
#[command(name = "kform", version, about = "Scenario runner for stochastic k-form advection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and write its reports.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=kform::runner::config::MAX_SEED))]
        seed: Option<u64>,
        /// Output directory (overrides the config and KFORM_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-path trajectories where the scenario has them.
        #[arg(long)]
        dump_paths: bool,
        /// Worker threads.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        threads: Option<u64>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List scenarios, parameters and field primitives.
    List,
}

const USAGE: u8 = 2;

fn load(path: &Path) -> Result<ScenarioConfig, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(USAGE)
    })?;
    parse_config(&text).map_err(|diags| {
        for d in diags {
            eprintln!("error: {d}");
        }
        ExitCode::from(USAGE)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", runner::list_scenarios());
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            seed,
            out,
            dump_paths,
            threads,
        } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let opts = RunOptions {
                out_dir: out,
                dump_paths,
                threads: threads.map(|t| t as usize),
            };
            let dir = runner::output_dir(&cfg, &opts);
            match runner::run(&cfg, &opts) {
                Ok(m) => {
                    for v in &m.verdicts {
                        println!("{}", v.line());
                    }
                    println!(
                        "{} {} in {:.1}s, reports in {}",
                        if m.passed { "PASSED" } else { "FAILED" },
                        m.scenario,
                        m.wall_time_seconds,
                        dir.display()
                    );
                    if m.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e @ (Error::Io(_) | Error::Config(_))) => {
                    eprintln!("error: {e}");
                    ExitCode::from(USAGE)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
