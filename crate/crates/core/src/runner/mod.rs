//! Scenario orchestration: config parsing and validation, execution inside a
//! sized thread pool, and report plus manifest emission.
//!
//! CSV outputs depend only on the effective config: every parallel loop in
//! the library collects in index order and reduces sequentially, so the
//! worker count never changes a byte.

pub mod config;
pub mod output;
pub mod scenarios;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{parse_config, Diagnostic, ParamInfo, ParamKind, Scenario, ScenarioConfig, TimeSpec};
pub use output::{config_hash, Artifacts, RunManifest, Verdict};
pub use scenarios::{execute, Outcome};

use crate::error::{Error, Result};

/// Environment variable that overrides the output directory of a config.
pub const OUT_ENV: &str = "KFORM_OUT";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Highest-precedence output directory.
    pub out_dir: Option<PathBuf>,
    pub dump_paths: bool,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
}

/// `--out`, then the environment override, then the config, then `kform-out/<scenario>`.
pub fn output_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("kform-out").join(cfg.scenario.name()))
}

/// Executes a scenario in memory on a pool of the requested size.
pub fn execute_with_threads(cfg: &ScenarioConfig, dump_paths: bool, threads: Option<usize>) -> Result<Outcome> {
    let diags = cfg.validate();
    if !diags.is_empty() {
        return Err(Error::Config(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| execute(cfg, dump_paths))
}

/// Runs the scenario, writes every report plus `manifest.json` and returns
/// the manifest.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest> {
    let dir = output_dir(cfg, opts);
    // Fail on an unwritable directory before spending compute.
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let started = Instant::now();
    let outcome = execute_with_threads(cfg, opts.dump_paths, opts.threads)?;
    let wall = started.elapsed().as_secs_f64();
    let mut outputs: Vec<String> = outcome.artifacts.names().map(String::from).collect();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        scenario: cfg.scenario.name().into(),
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: wall,
        threads: opts.threads.unwrap_or_else(rayon::current_num_threads),
        passed: outcome.passed(),
        verdicts: outcome.verdicts.clone(),
        outputs,
    };
    let mut artifacts = outcome.artifacts;
    artifacts.json("manifest.json", &manifest);
    artifacts.write_all(&dir)?;
    Ok(manifest)
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<Diagnostic> {
    cfg.validate()
}

/// Human-readable catalogue of scenarios and their parameters.
pub fn list_scenarios() -> String {
    let mut s = String::new();
    for sc in Scenario::ALL {
        let (n, k) = sc.default_shape();
        s.push_str(&format!("{}\n  {}\n", sc.name(), sc.description()));
        let keys: Vec<&str> = sc.keys().iter().map(|k| k.name()).collect();
        if !keys.is_empty() {
            s.push_str(&format!("  keys: {} (default n = {n}, k = {k})\n", keys.join(", ")));
        }
        for p in sc.params() {
            s.push_str(&format!("  params.{:<20} {:<8} {}\n", p.name, p.default, p.help));
        }
    }
    s.push_str(&format!("field primitives: {}\n", crate::registry::FIELD_PRIMITIVES.join(", ")));
    s.push_str(&format!("scalar primitives: {}\n", crate::registry::SCALAR_PRIMITIVES.join(", ")));
    s
}
