use std::path::Path;
use std::process::{Command, Output};

fn cefkit(args: &[&str], out: &Path) -> Output {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml");
    Command::new(env!("CARGO_BIN_EXE_cefkit"))
        .args(["--config", config, "--out"])
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_run_one_by_one() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["motionset", "cef", "fi", "plan", "compare"] {
        let o = cefkit(&[stage, "--kind", "A2", "--kind", "A4", "--jobs", "2"], dir.path());
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let fi = String::from_utf8_lossy(&cefkit(&["fi", "--kind", "A2", "--kind", "A4"], dir.path()).stdout).into_owned();
    assert!(fi.contains("A2/D1:") && fi.contains("speedup"), "{fi}");
    assert!(dir.path().join("plan/A2/box_volume_tmr.csv").exists());
    assert!(dir.path().join("compare/cef_cdf.csv").exists());
    assert!(!dir.path().join("cef/A1.cefr").exists());
}

#[test]
fn missing_upstream_exits_with_two_and_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = cefkit(&["plan"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cefkit motionset"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nseed = 1\nwarp = 9\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cefkit"))
        .args(["motionset", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warp"), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_cefkit")).arg("motionset").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn oversized_motion_set_is_a_pipeline_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("big.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\nseed = 1\ngrid = { resolution = 8, extent_cm = 84.0 }\n\
         motion_set = { n_poses = 4, n_motions = 100 }\nscenarios = { count = 10 }\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cefkit"))
        .args(["motionset", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(0));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(cefkit(&["motionset", "--seed", "42"], a.path()).status.success());
    assert!(cefkit(&["motionset", "--seed", "42", "--jobs", "3"], b.path()).status.success());
    let read = |d: &Path| std::fs::read(d.join("motion_set.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn oracle_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cefkit(&["oracle", "--kind", "A3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}
