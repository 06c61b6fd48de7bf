//! Offline end-to-end pipeline runs on the bundled synthetic mini-dataset.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rhythmkit_core::pipeline::{
    run_stage, EvalReport, RunConfig, RuntimeFlags, Stage, StressRunReport,
};
use rhythmkit_core::Error;

fn demo_run_config(root: &Path, seed: u64) -> RunConfig {
    let text = format!(
        r#"{{
            "dataset": {{
                "name": "synthetic-demo",
                "dir": "{data}",
                "records": ["s01","s02","s03","s04","s05","s06","s07","s08"],
                "ds1": ["s01","s02","s03","s04","s05","s06"],
                "ds2": ["s07","s08"]
            }},
            "out_dir": "{out}",
            "seed": {seed}
        }}"#,
        data = root.join("data").display(),
        out = root.join("run").display(),
    );
    let config: RunConfig = serde_json::from_str(&text).expect("demo config");
    config.validate().expect("demo config validates");
    config
}

const STAGES: [Stage; 9] = [
    Stage::Synth,
    Stage::Ingest,
    Stage::Augment,
    Stage::Detect,
    Stage::Features,
    Stage::Train,
    Stage::Sweep,
    Stage::Evaluate,
    Stage::Stress,
];

fn run_all(config: &RunConfig) {
    let flags = RuntimeFlags::default();
    for stage in STAGES {
        run_stage(stage, config, &flags).unwrap_or_else(|e| panic!("{}: {e}", stage.name()));
    }
    run_stage(Stage::Report, config, &flags).expect("report");
}

fn eval_report(out_dir: &Path) -> EvalReport {
    serde_json::from_slice(&fs::read(out_dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn full_offline_pipeline_produces_a_consistent_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 7);
    run_all(&config);
    let out = &config.out_dir;

    for file in [
        "segments.jsonl",
        "class_counts.json",
        "split.json",
        "augmented.jsonl",
        "augment_plan.json",
        "peaks.jsonl",
        "detector_report.json",
        "features.csv",
        "features.txt",
        "model_minimal.json",
        "model_rich.json",
        "threshold.json",
        "metrics.json",
        "routed.jsonl",
        "confidence_profile.csv",
        "stress.csv",
        "report/summary.txt",
        "report/metrics.csv",
        "report/routing.csv",
        "report/stress.csv",
    ] {
        assert!(out.join(file).exists(), "missing artifact {file}");
    }

    let report = eval_report(out);
    assert!(
        report.beats > 200,
        "too few evaluated beats: {}",
        report.beats
    );
    // The rich tier must outperform the timing-only tier on this dataset,
    // and routing can never fall below the better pure branch by more than
    // chance on the induction side (checked exactly in acceptance).
    assert!(report.rich.micro_f1 > report.minimal.micro_f1);
    assert!(report.routed.micro_f1 > 0.9);

    // Augmented windows exist, only for d1 subjects, and never duplicate a
    // base-grid window.
    let split: rhythmkit_core::ingest::SplitManifest =
        serde_json::from_slice(&fs::read(out.join("split.json")).unwrap()).unwrap();
    let base_keys: BTreeSet<(String, usize)> = read_segments(&out.join("segments.jsonl"))
        .into_iter()
        .map(|s| (s.record_ref, s.start_sample))
        .collect();
    let augmented = read_segments(&out.join("augmented.jsonl"));
    assert!(!augmented.is_empty());
    for seg in &augmented {
        assert!(
            split.d1_subjects.contains(&seg.record_ref),
            "augmented leak: {}",
            seg.record_ref
        );
        assert!(!base_keys.contains(&(seg.record_ref.clone(), seg.start_sample)));
        assert_eq!(seg.origin, rhythmkit_core::SegmentOrigin::Augmented);
    }
}

fn read_segments(path: &Path) -> Vec<rhythmkit_core::Segment> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn identical_config_and_seed_reproduce_byte_identical_artifacts() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config_a = demo_run_config(dir_a.path(), 11);
    let config_b = demo_run_config(dir_b.path(), 11);
    run_all(&config_a);
    run_all(&config_b);

    for file in [
        "metrics.json",
        "threshold.json",
        "features.csv",
        "routed.jsonl",
        "stress.json",
    ] {
        let a = fs::read(config_a.out_dir.join(file)).unwrap();
        let b = fs::read(config_b.out_dir.join(file)).unwrap();
        assert_eq!(a, b, "artifact {file} differs between identical runs");
    }
}

#[test]
fn rerunning_a_stage_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 3);
    run_all(&config);
    let before = fs::read(config.out_dir.join("metrics.json")).unwrap();
    run_stage(Stage::Evaluate, &config, &RuntimeFlags::default()).unwrap();
    let after = fs::read(config.out_dir.join("metrics.json")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn tau_override_zero_reproduces_the_pure_minimal_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 5);
    run_all(&config);

    let flags = RuntimeFlags {
        tau_override: Some(0.0),
        ..Default::default()
    };
    run_stage(Stage::Evaluate, &config, &flags).unwrap();
    let report = eval_report(&config.out_dir);
    assert_eq!(report.tau_source, "override");
    assert_eq!(report.routed, report.minimal);
    assert_eq!(report.routing.avg_tool_calls, 2.0);
    assert_eq!(report.routing.rich_fraction, 0.0);

    let flags = RuntimeFlags {
        tau_override: Some(1.5),
        ..Default::default()
    };
    run_stage(Stage::Evaluate, &config, &flags).unwrap();
    let report = eval_report(&config.out_dir);
    assert_eq!(report.routed, report.rich);
    assert_eq!(report.routing.rich_fraction, 1.0);
}

#[test]
fn min_mode_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = demo_run_config(dir.path(), 9);
    config.routing.mode = rhythmkit_core::routing::AggMode::Min;
    run_all(&config);
    let threshold: rhythmkit_core::routing::ThresholdArtifact =
        serde_json::from_slice(&fs::read(config.out_dir.join("threshold.json")).unwrap()).unwrap();
    assert_eq!(threshold.mode, rhythmkit_core::routing::AggMode::Min);
    let report = eval_report(&config.out_dir);
    assert_eq!(report.mode, rhythmkit_core::routing::AggMode::Min);
    assert!(report.routed.micro_f1 > 0.8);
}

#[test]
fn missing_upstream_artifact_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 2);
    run_stage(Stage::Synth, &config, &RuntimeFlags::default()).unwrap();
    let err = run_stage(Stage::Train, &config, &RuntimeFlags::default()).unwrap_err();
    match err {
        Error::MissingArtifact { stage, .. } => assert_eq!(stage, "ingest"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn report_refuses_to_mix_configs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = demo_run_config(dir.path(), 2);
    run_all(&config);
    // Same artifacts, different seed -> different config hash.
    config.seed = 99;
    let err = run_stage(Stage::Report, &config, &RuntimeFlags::default()).unwrap_err();
    assert!(matches!(err, Error::HashMismatch(_)), "got {err:?}");
}

#[test]
fn stress_outcomes_cover_both_perturbations() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 13);
    run_all(&config);
    let report: StressRunReport =
        serde_json::from_slice(&fs::read(config.out_dir.join("stress.json")).unwrap()).unwrap();
    assert_eq!(report.outcomes.len(), 2);
    assert!(
        report.outcomes[0].interfered_delta_f1.is_none(),
        "masked beats are never scored"
    );
    assert!(report.outcomes[1].interfered_delta_f1.is_some());
    assert!(report.segments_perturbed > 10);
}

#[test]
fn synthetic_round_trip_matches_the_generation_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_run_config(dir.path(), 21);
    run_stage(Stage::Synth, &config, &RuntimeFlags::default()).unwrap();
    run_stage(Stage::Ingest, &config, &RuntimeFlags::default()).unwrap();

    let manifest: rhythmkit_core::synth::SynthManifest =
        serde_json::from_slice(&fs::read(config.data_dir().join("manifest.json")).unwrap())
            .unwrap();
    let counts: rhythmkit_core::pipeline::ClassCounts =
        serde_json::from_slice(&fs::read(config.out_dir.join("class_counts.json")).unwrap())
            .unwrap();
    let expected: u64 = manifest.records.iter().map(|r| r.beats.len() as u64).sum();
    assert_eq!(counts.total_beats, expected);
    let expected_n: u64 = manifest
        .records
        .iter()
        .map(|r| {
            r.class_counts
                .get(&rhythmkit_core::AamiClass::N)
                .copied()
                .unwrap_or(0)
        })
        .sum();
    assert_eq!(counts.n, expected_n);
}
