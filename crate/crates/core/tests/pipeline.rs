use cefkit::config::ExperimentConfig;
use cefkit::fi::FiMode;
use cefkit::pipeline::{Pipeline, PipelineError, RunManifest, Stage};

fn tiny(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(include_str!("../../../configs/tiny.toml")).unwrap();
    c.seed = seed;
    c.scenarios.count = 40;
    c.motion_set.n_motions = 16;
    c
}

#[test]
fn full_run_lists_every_artifact_with_its_digest() {
    let dir = tempfile::tempdir().unwrap();
    let m = Pipeline::new(tiny(3), dir.path()).unwrap().run_all().unwrap();
    for stage in Stage::PIPELINE {
        assert!(m.stages.contains_key(&stage), "{stage} missing");
    }
    let digests = m.artifact_digests();
    for rel in ["motion_set.json", "cef/A3.cefr", "fi/A1_D1.exh", "plan/A2/box_volume.csv", "plan/A2/ideal_tmr.csv", "compare/fit.csv"] {
        assert!(digests.contains_key(rel), "{rel} not recorded");
    }
    for (rel, d) in &digests {
        let bytes = std::fs::read(dir.path().join(rel)).unwrap();
        assert_eq!(&cefkit::pipeline::sha256_hex(&bytes), d, "{rel}");
    }
    assert!(!digests.contains_key("plan/A1/box_volume.csv"));
    assert!(!digests.contains_key("plan/A1/cef_ecc.csv"));
    assert_eq!(m.stages[&Stage::Fi].fi_runs.len(), 16);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = tiny(11);
    c.fi.mode = FiMode::CefAware;
    c.fi.m_bits_per_group = 8;
    let ma = Pipeline::new(c.clone(), a.path()).unwrap().with_jobs(1).run_all().unwrap();
    let mb = Pipeline::new(c, b.path()).unwrap().with_jobs(4).run_all().unwrap();
    assert_eq!(ma.artifact_digests(), mb.artifact_digests());
}

#[test]
fn missing_and_stale_upstream_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(5), dir.path()).unwrap();
    let e = p.run_stage(Stage::Cef).unwrap_err();
    assert!(matches!(e, PipelineError::Missing { .. }), "{e}");
    assert!(e.to_string().contains("cefkit motionset"), "{e}");
    assert_eq!(e.exit_code(), 2);

    p.run_stage(Stage::Motionset).unwrap();
    p.run_stage(Stage::Cef).unwrap();
    let other = Pipeline::new(tiny(6), dir.path()).unwrap();
    let e = other.run_stage(Stage::Fi).unwrap_err();
    assert!(matches!(e, PipelineError::Stale { .. }), "{e}");

    // Rerunning an upstream stage drops everything that consumed it.
    p.run_stage(Stage::Fi).unwrap();
    p.run_stage(Stage::Motionset).unwrap();
    let m = RunManifest::load(dir.path()).unwrap().unwrap();
    assert_eq!(m.stages.keys().copied().collect::<Vec<_>>(), vec![Stage::Motionset]);
}

#[test]
fn tampered_artifact_is_stale() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(8), dir.path()).unwrap();
    p.run_stage(Stage::Motionset).unwrap();
    let path = dir.path().join("motion_set.json");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push(' ');
    std::fs::write(&path, text).unwrap();
    let e = p.run_stage(Stage::Cef).unwrap_err();
    assert!(matches!(e, PipelineError::Stale { .. }), "{e}");
}

#[test]
fn uniform_mode_cannot_feed_the_planner() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(9);
    c.fi.mode = FiMode::UniformStatistical;
    c.fi.uniform_samples = Some(200);
    let p = Pipeline::new(c, dir.path()).unwrap();
    for s in [Stage::Motionset, Stage::Cef, Stage::Fi, Stage::Compare] {
        p.run_stage(s).unwrap();
    }
    assert!(matches!(p.run_stage(Stage::Plan), Err(PipelineError::Unsupported(_))));
}

#[test]
fn oracle_stage_passes_on_the_tiny_instance() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(2);
    c.oracle.n_motions = 8;
    c.oracle.pairs = 200;
    Pipeline::new(c, dir.path()).unwrap().run_stage(Stage::Oracle).unwrap();
    assert!(dir.path().join("oracle/report.json").exists());
}

#[test]
fn bad_config_maps_to_exit_code_one() {
    let mut c = tiny(1);
    c.fi.margin = 0.0;
    let e = Pipeline::new(c, "unused").err().unwrap();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn every_csv_names_its_seed_and_config_digest() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(12);
    c.output.bit_csv = true;
    let m = Pipeline::new(c.clone(), dir.path()).unwrap().run_all().unwrap();
    let csvs: Vec<String> = m.artifact_digests().into_keys().filter(|k| k.ends_with(".csv")).collect();
    assert!(csvs.len() > 50);
    for rel in csvs {
        let text = std::fs::read_to_string(dir.path().join(&rel)).unwrap();
        let stage = rel.split('/').next().unwrap();
        let stage = match stage {
            "cef" | "fi" | "plan" | "compare" => stage.parse::<Stage>().unwrap(),
            other => panic!("unexpected csv under {other}"),
        };
        let key = cefkit::pipeline::stage_key(&c, stage);
        assert!(text.contains(&format!("# seed={}", c.seed)), "{rel}");
        assert!(text.contains(&format!("# config_digest={key}")), "{rel}");
    }
}
