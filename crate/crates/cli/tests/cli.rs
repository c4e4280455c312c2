//! End-to-end checks of the `absq` binary: exit codes, artifact layout,
//! output-directory precedence, determinism, and the snapshot -> budget
//! pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn absq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_absq"))
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

/// Small, fast, flag-free: n2 = 128 keeps the Gaussian envelope's spectral
/// tail below the wall-spill monitor at L = 8.
const SMALL_RUN: &str = r#"
n1 = 32
n2 = 128
half_width = 8.0
dt = 0.01
T = 0.1
nu = 0.5
kappa = 0.5
epsilon = 1e-2
ic_preset = "gaussian_pair"
"#;

#[test]
fn zero_preset_runs_clean_from_the_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = absq()
        .arg("run")
        .arg(repo_root().join("presets/zero.toml"))
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is the summary JSON");
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["ic_preset"], "zero");
    assert_eq!(summary["e0"], 0.0);

    assert!(dir.path().join("summary.json").is_file());
    assert!(dir.path().join("records.csv").is_file());
}

#[test]
fn identical_configs_produce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = absq()
            .arg("run")
            .arg(&cfg)
            .arg("--output-dir")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    let sa = std::fs::read(a.join("summary.json")).unwrap();
    let sb = std::fs::read(b.join("summary.json")).unwrap();
    assert_eq!(sa, sb);
    let ra = std::fs::read(a.join("records.csv")).unwrap();
    let rb = std::fs::read(b.join("records.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn output_dir_precedence_is_flag_env_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let from_config = dir.path().join("from_config");
    std::fs::write(
        &cfg,
        format!("{SMALL_RUN}output_dir = \"{}\"\n", from_config.display()),
    )
    .unwrap();

    // env beats config
    let from_env = dir.path().join("from_env");
    let out = absq()
        .arg("run")
        .arg(&cfg)
        .env("ABSQ_OUTPUT_DIR", &from_env)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(from_env.join("summary.json").is_file());
    assert!(!from_config.exists());

    // flag beats env
    let from_flag = dir.path().join("from_flag");
    let out = absq()
        .arg("run")
        .arg(&cfg)
        .env("ABSQ_OUTPUT_DIR", dir.path().join("ignored"))
        .arg("--output-dir")
        .arg(&from_flag)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(from_flag.join("summary.json").is_file());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn config_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();

    let out = absq().arg("run").arg("no_such_file.toml").output().unwrap();
    assert_eq!(code(&out), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL_RUN.replace("dt = 0.01", "dt = -1.0")).unwrap();
    let out = absq().arg("run").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dt"), "stderr: {stderr}");

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, format!("{SMALL_RUN}not_a_key = 3\n")).unwrap();
    let out = absq().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn blow_up_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("explode.toml");
    std::fs::write(
        &cfg,
        SMALL_RUN
            .replace("dt = 0.01", "dt = 0.5")
            .replace("T = 0.1", "T = 50.0")
            .replace("nu = 0.5", "nu = 0.0")
            .replace("kappa = 0.5", "kappa = 0.0")
            .replace("epsilon = 1e-2", "epsilon = 50.0"),
    )
    .unwrap();
    let out = absq()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_prints_a_report_and_rejects_unknown_suites() {
    let out = absq()
        .args(["check", "decomposition", "--seeds", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["suite"], "decomposition");
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 4);

    let out = absq().args(["check", "vibes"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vibes"));
}

#[test]
fn snapshots_feed_the_budget_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("snap.toml");
    std::fs::write(&cfg, format!("{SMALL_RUN}snapshot_every = 2\n")).unwrap();
    let out_dir = dir.path().join("out");
    let out = absq()
        .arg("run")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let snap_dir = out_dir.join("snapshots");
    assert!(snap_dir.join("manifest.json").is_file());

    let out = absq().arg("budget").arg(&snap_dir).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(snap_dir.join("budget.csv")).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,m,m1,"));
    assert!(header.ends_with("h1_closure,h2_closure"));
    // initial state plus steps 2, 4, 6, 8, 10
    assert_eq!(lines.count(), 6);

    let out = absq().arg("budget").arg(dir.path().join("nowhere")).output().unwrap();
    assert_eq!(code(&out), 2);
}
