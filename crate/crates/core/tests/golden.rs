use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use forge_core::exec::ExecMode;
use forge_core::parser::parse_directory;
use forge_core::pipeline::{run, snapshot_path, PipelineConfig, PipelineStage};
use forge_core::table::{schema_path, write_snapshot, Version};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn assert_same_file(actual: &Path, expected: &Path) {
    let a = fs::read(actual).unwrap();
    let e = fs::read(expected).unwrap();
    assert!(
        a == e,
        "{} differs from {}",
        actual.display(),
        expected.display()
    );
}

fn assert_snapshot(out: &Path, v: Version) {
    let got = snapshot_path(out, v);
    let want = fixture(&format!("golden/{}.csv", v.as_str()));
    assert_same_file(&got, &want);
    assert_same_file(&schema_path(&got), &schema_path(&want));
}

fn config(out: &Path, stages: Vec<PipelineStage>, mode: ExecMode) -> PipelineConfig {
    PipelineConfig {
        input_dir: Some(fixture("mini")),
        output_dir: Some(out.to_path_buf()),
        stages,
        exec: mode,
        ..Default::default()
    }
}

#[test]
fn parser_output_matches_golden_v1() {
    let started = Instant::now();
    for mode in [ExecMode::Parallel, ExecMode::Sequential] {
        let dir = tempfile::tempdir().unwrap();
        let (out, warnings) = parse_directory(&fixture("mini"), mode).unwrap();
        assert!(warnings.is_empty());
        let path = dir.path().join("v1.csv");
        write_snapshot(&out.table, &path).unwrap();
        assert_snapshot(dir.path(), Version::V1);
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn full_run_matches_golden_versions() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&config(
        dir.path(),
        PipelineStage::ALL.to_vec(),
        ExecMode::Parallel,
    ))
    .unwrap();
    for v in Version::ALL {
        assert_snapshot(dir.path(), v);
    }
    assert_eq!(report.versions.len(), 5);
    for name in [
        "parse_audit.jsonl",
        "cleaning_report.json",
        "construct_report.json",
        "encoding_plan.json",
        "imputation_report.json",
        "run_report.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn resumed_stages_reproduce_the_full_run() {
    let full = tempfile::tempdir().unwrap();
    run(&config(
        full.path(),
        PipelineStage::ALL.to_vec(),
        ExecMode::Sequential,
    ))
    .unwrap();
    for k in 1..PipelineStage::ALL.len() {
        let split = tempfile::tempdir().unwrap();
        run(&config(
            split.path(),
            PipelineStage::ALL[..k].to_vec(),
            ExecMode::Sequential,
        ))
        .unwrap();
        assert!(!snapshot_path(split.path(), PipelineStage::ALL[k].output()).exists());
        let resumed = run(&config(
            split.path(),
            PipelineStage::ALL[k..].to_vec(),
            ExecMode::Parallel,
        ))
        .unwrap();
        assert_eq!(resumed.stages_run, PipelineStage::ALL[k..]);
        assert_eq!(resumed.versions.len(), 5);
        for v in Version::ALL {
            assert_same_file(
                &snapshot_path(split.path(), v),
                &snapshot_path(full.path(), v),
            );
        }
    }
}

#[test]
fn impute_only_touches_v5() {
    let dir = tempfile::tempdir().unwrap();
    run(&config(
        dir.path(),
        PipelineStage::ALL[..4].to_vec(),
        ExecMode::Parallel,
    ))
    .unwrap();
    let v4_before = fs::read(snapshot_path(dir.path(), Version::V4)).unwrap();
    let report = run(&config(
        dir.path(),
        vec![PipelineStage::Impute],
        ExecMode::Parallel,
    ))
    .unwrap();
    assert_eq!(report.timings.len(), 1);
    assert_eq!(report.timings[0].stage, PipelineStage::Impute);
    assert!(
        report.cleaning.is_some(),
        "cleaning report reloaded from disk"
    );
    assert_eq!(
        fs::read(snapshot_path(dir.path(), Version::V4)).unwrap(),
        v4_before
    );
    assert_snapshot(dir.path(), Version::V5);
}
