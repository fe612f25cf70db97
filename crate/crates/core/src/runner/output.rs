//! Verdicts, in-memory report files and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::report::{fmt_num, io_err};

/// One pass/fail check of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// `value <= threshold`, `value >= threshold` or a plain flag.
    pub comparison: &'static str,
    pub threshold: f64,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: value <= threshold,
            value,
            comparison: "<=",
            threshold,
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: value >= threshold,
            value,
            comparison: ">=",
            threshold,
        }
    }

    /// A boolean check; `value` carries the quantity it was decided on.
    pub fn flag(name: &str, passed: bool, value: f64) -> Self {
        Verdict {
            name: name.into(),
            passed,
            value,
            comparison: "flag",
            threshold: f64::NAN,
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        if self.comparison == "flag" {
            format!("{status} {} (value {})", self.name, fmt_num(self.value))
        } else {
            format!(
                "{status} {}: {} {} {}",
                self.name,
                fmt_num(self.value),
                self.comparison,
                fmt_num(self.threshold)
            )
        }
    }
}

/// Named report files held in memory until the run is written out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn insert(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn json(&mut self, name: impl Into<String>, value: &impl Serialize) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serialises");
        bytes.push(b'\n');
        self.insert(name, bytes);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(|v| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(|s| s.as_str())
    }

    /// Only the CSV files, which are the reproducible outputs.
    pub fn csv_files(&self) -> BTreeMap<&str, &[u8]> {
        self.files
            .iter()
            .filter(|(k, _)| k.ends_with(".csv"))
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect()
    }

    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut out = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// RFC-4180 table with a header row.
pub struct Table {
    wtr: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(header).expect("in-memory csv");
        Table { wtr }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        self.wtr.write_record(&fields).expect("in-memory csv");
    }

    pub fn finish(self) -> Result<Vec<u8>> {
        self.wtr.into_inner().map_err(|e| io_err(e.into_error().into()))
    }
}

pub fn verdict_table(verdicts: &[Verdict]) -> Result<Vec<u8>> {
    let mut t = Table::new(&["check", "passed", "value", "comparison", "threshold"]);
    for v in verdicts {
        t.row(vec![
            v.name.clone(),
            v.passed.to_string(),
            fmt_num(v.value),
            v.comparison.into(),
            fmt_num(v.threshold),
        ]);
    }
    t.finish()
}

/// What a run produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the effective config (after command-line overrides).
    pub config_hash: String,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    pub threads: usize,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::Scenario;

    #[test]
    fn hash_depends_on_seed_only_through_content() {
        let a = ScenarioConfig::new(Scenario::Kiw, 1);
        let b = ScenarioConfig::new(Scenario::Kiw, 2);
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn verdict_lines() {
        assert!(Verdict::at_most("gap", 1e-9, 1e-6).line().starts_with("PASS gap: 1e-9 <= 1e-6"));
        assert!(!Verdict::at_least("rate", 0.3, 0.4).passed);
        let csv = String::from_utf8(verdict_table(&[Verdict::flag("ok", true, 1.0)]).unwrap()).unwrap();
        assert_eq!(csv, "check,passed,value,comparison,threshold\nok,true,1,flag,NaN\n");
    }
}
