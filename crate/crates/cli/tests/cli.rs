use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/mini")
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_report() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let input = fixture_dir();
    let r = forge(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--out",
        o,
        "--seed",
        "3",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let table = stdout(&forge(&["report", o]));
    for v in ["v1", "v2", "v3", "v4", "v5"] {
        assert!(table.lines().any(|l| l.starts_with(v)), "{table}");
    }
    assert!(table.contains("random_forest"));
}

#[test]
fn report_truncates_at_last_version() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let input = fixture_dir();
    let r = forge(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--out",
        o,
        "--stages",
        "parse,clean,construct,encode",
    ]);
    assert_eq!(r.status.code(), Some(0));
    let table = stdout(&forge(&["report", o]));
    assert!(table.lines().any(|l| l.starts_with("v4")));
    assert!(!table.lines().any(|l| l.starts_with("v5")));
    assert!(!table.contains("single_linear"));
}

#[test]
fn stage_gating_runs_only_imputation() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    let input = fixture_dir();
    assert_eq!(
        forge(&[
            "run",
            "--input",
            input.to_str().unwrap(),
            "--out",
            o,
            "--stages",
            "parse,clean,construct,encode"
        ])
        .status
        .code(),
        Some(0)
    );
    let r = forge(&[
        "run",
        "--out",
        o,
        "--stages",
        "impute",
        "--corr",
        "spearman",
        "--ridge-threshold",
        "0.5",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("run_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["stages_run"], serde_json::json!(["impute"]));
    assert_eq!(report["config"]["correlation"], "spearman");
    assert_eq!(report["config"]["ridge_threshold"], 0.5);
}

#[test]
fn config_errors_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let o = out.path().to_str().unwrap();
    // Resuming without the input snapshot.
    assert_eq!(
        forge(&["run", "--out", o, "--stages", "impute"])
            .status
            .code(),
        Some(2)
    );
    // Missing input directory.
    assert_eq!(
        forge(&["run", "--input", "/nonexistent/forge", "--out", o])
            .status
            .code(),
        Some(2)
    );
    // Unknown config key.
    let cfg = out.path().join("bad.json");
    std::fs::write(&cfg, r#"{"ridge_treshold": 0.4}"#).unwrap();
    let input = fixture_dir();
    let r = forge(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--out",
        o,
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    // Out-of-range override.
    let r = forge(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--out",
        o,
        "--ridge-threshold",
        "1.5",
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_3_and_keeps_earlier_snapshots() {
    let out = tempfile::tempdir().unwrap();
    let input = tempfile::tempdir().unwrap();
    // A directory without entity files fails in the parse stage.
    std::fs::write(input.path().join("notes.txt"), "nothing").unwrap();
    let r = forge(&[
        "run",
        "--input",
        input.path().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));

    // Corrupt v2 after a successful clean: construct fails, v1/v2 stay.
    let o = out.path().to_str().unwrap();
    let fixtures = fixture_dir();
    assert_eq!(
        forge(&[
            "run",
            "--input",
            fixtures.to_str().unwrap(),
            "--out",
            o,
            "--stages",
            "parse,clean"
        ])
        .status
        .code(),
        Some(0)
    );
    std::fs::write(out.path().join("v2.csv"), "garbage\r\n").unwrap();
    let r = forge(&["run", "--out", o, "--stages", "construct"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(out.path().join("v1.csv").is_file());
    assert!(!out.path().join("v3.csv").exists());
}
