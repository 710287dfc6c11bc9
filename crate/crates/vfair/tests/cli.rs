mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vfair(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vfair"))
        .current_dir(dir)
        .env_remove("VFAIR_DATA_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn project(dir: &Path) {
    common::write_project(
        dir,
        &[("english", [6, 6, 6, 6])],
        "[split]\ntest_users_per_group = 3\n[trials]\nn_same = 4\nn_diff = 4\n[synth]\ndim = 8\n[training]\nepochs = 10\n",
    );
}

#[test]
fn unknown_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = vfair(dir.path(), &["eval", "--bogus"]);
    assert!(!o.status.success());
    let o = vfair(dir.path(), &["split", "--train-recipe", "4", "--seed", "1"]);
    assert!(!o.status.success());
}

#[test]
fn missing_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = vfair(dir.path(), &["ingest", "--seed", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("vfair.toml"), "{}", stderr(&o));
}

#[test]
fn missing_seed_fails() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path());
    let o = vfair(dir.path(), &["ingest"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn eval_without_scores_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path());
    let o = vfair(dir.path(), &["eval", "--seed", "3"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`vfair score`"), "{}", stderr(&o));
}

#[test]
fn full_pipeline_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path());
    for stage in [
        "ingest", "split", "trials", "synth", "score", "eval", "report",
    ] {
        let o = vfair(dir.path(), &[stage, "--seed", "3", "--out", "runs"]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
        assert!(
            stderr(&o).contains("warning: "),
            "training section is flagged"
        );
        assert!(!o.stdout.is_empty(), "{stage} lists its outputs");
    }
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs.into_iter().next().unwrap().unwrap().path();
    assert!(run
        .file_name()
        .unwrap()
        .to_string_lossy()
        .ends_with("-seed3"));
    assert!(run.join("fold0/report/summary__fold0.md").is_file());

    // a second fold and a mode subset
    let o = vfair(
        dir.path(),
        &["split", "--seed", "3", "--out", "runs", "--fold", "2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = vfair(
        dir.path(),
        &[
            "trials", "--seed", "3", "--out", "runs", "--fold", "2", "--mode", "test2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1);
    let o = vfair(
        dir.path(),
        &["split", "--seed", "3", "--out", "runs", "--fold", "3"],
    );
    assert!(!o.status.success());
}

#[test]
fn force_is_needed_to_replace_changed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path());
    for stage in ["ingest", "split"] {
        assert!(vfair(dir.path(), &[stage, "--seed", "3", "--out", "o"])
            .status
            .success());
    }
    let run = fs::read_dir(dir.path().join("o"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let roster = run.join("fold0/split/roster.csv");
    let original = fs::read(&roster).unwrap();
    fs::write(&roster, b"fold,language,gender,age_bucket,speaker_id\n").unwrap();

    let o = vfair(dir.path(), &["split", "--seed", "3", "--out", "o"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    let o = vfair(
        dir.path(),
        &["split", "--seed", "3", "--out", "o", "--force"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&roster).unwrap(), original);
}

#[test]
fn data_root_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_vfair"))
        .current_dir(dir.path())
        .env("VFAIR_DATA_ROOT", dir.path().join("absent"))
        .args(["ingest", "--seed", "1"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absent"), "{}", stderr(&o));
}
