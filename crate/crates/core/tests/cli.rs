//! The `kform` binary: exit codes, diagnostics, output directory precedence
//! and byte-identical reports across thread counts.

use std::path::Path;
use std::process::{Command, Output};

fn kform(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kform"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KFORM_OUT")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: &str = "scenario = \"specializations\"\nseed = 3\n[params]\ncases = 2\n";

#[test]
fn passing_run_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ok.toml", QUICK);
    let out = dir.path().join("out");
    let o = kform(&["run", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("PASSED specializations"));
    for f in ["verdicts.csv", "summary.json", "manifest.json", "specializations.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "specializations");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "strict.toml",
        "scenario = \"specializations\"\nseed = 3\n[params]\ncases = 2\ntolerance = 1e-30\n",
    );
    let o = kform(&["run", &cfg, "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL "));
    assert!(stdout(&o).contains("FAILED specializations"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "scenario = \"kiw\"\nseed = 1\nn = 2\nk = 3\nwarp = 9\n");
    let o = kform(&["run", &bad], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("warp"), "{err}");
    assert!(
        !dir.path().join("kform-out").exists(),
        "nothing should be written for an invalid config"
    );

    assert_eq!(kform(&["run", "missing.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(kform(&["frobnicate"], dir.path()).status.code(), Some(2));
    let ok = write(dir.path(), "ok.toml", QUICK);
    assert_eq!(kform(&["run", &ok, "--threads", "0"], dir.path()).status.code(), Some(2));
    let blocker = write(dir.path(), "file", "");
    let o = kform(&["run", &ok, "--out", &format!("{blocker}/sub")], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn validate_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.toml",
        "scenario = \"weak-residual\"\nseed = 1\nn = 2\nk = 3\neps_list = [0.1, 0.2]\n[params]\nbogus = 1\n",
    );
    let o = kform(&["validate", &bad], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("k <= n"), "{err}");
    assert!(err.contains("eps_list"), "{err}");
    assert!(err.contains("bogus"), "{err}");

    let ok = write(dir.path(), "ok.toml", QUICK);
    let o = kform(&["validate", &ok], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with(": ok\n"));
}

#[test]
fn shipped_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let p = entry.unwrap().path();
        let o = kform(&["validate", p.to_str().unwrap()], &configs);
        assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), stderr(&o));
        seen += 1;
    }
    assert!(seen >= 9);
}

#[test]
fn list_names_all_scenarios() {
    let o = kform(&["list"], Path::new("."));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for s in [
        "calculus-identities",
        "commutator-sweep",
        "flow-convergence",
        "weak-residual",
        "kiw",
        "conservation",
        "counterexample",
        "noise-selection",
        "specializations",
        "radial-holder",
    ] {
        assert!(text.contains(s), "{s}");
    }
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "scenario = \"specializations\"\nseed = 3\noutput = \"from-config\"\n[params]\ncases = 2\n",
    );

    assert_eq!(kform(&["run", &cfg], dir.path()).status.code(), Some(0));
    assert!(dir.path().join("from-config/manifest.json").is_file());

    let o = Command::new(env!("CARGO_BIN_EXE_kform"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("KFORM_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-env/manifest.json").is_file());

    let o = Command::new(env!("CARGO_BIN_EXE_kform"))
        .args(["run", &cfg, "--out", "from-flag"])
        .current_dir(dir.path())
        .env("KFORM_OUT", "from-env-2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-flag/manifest.json").is_file());
    assert!(!dir.path().join("from-env-2").exists());

    let plain = write(dir.path(), "plain.toml", QUICK);
    assert_eq!(kform(&["run", &plain], dir.path()).status.code(), Some(0));
    assert!(dir.path().join("kform-out/specializations/manifest.json").is_file());
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reports_identical_across_thread_counts_and_seed_override_changes_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ns.toml",
        "scenario = \"noise-selection\"\nseed = 5\nn_paths = 16\neps_list = [0.2, 0.1, 0.05]\n",
    );
    for (out, threads) in [("t1", "1"), ("t3", "3")] {
        let o = kform(&["run", &cfg, "--out", out, "--threads", threads], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = csvs(&dir.path().join("t1"));
    assert!(a.len() >= 3);
    assert_eq!(a, csvs(&dir.path().join("t3")));

    let o = kform(&["run", &cfg, "--out", "s9", "--seed", "9"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(a, csvs(&dir.path().join("s9")));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("s9/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
}
