use std::fs;
use std::path::Path;

use epmd::dataset::{generate_synthetic, Dataset, SyntheticConfig};
use epmd::harness::{run_experiment_on, ExperimentPlan, LabelAudit, ModalitySet, SubsetSize, Task};

fn tiny_dataset() -> Dataset {
    let cfg = SyntheticConfig {
        episodes: 80,
        variables: SyntheticConfig::default().variables.into_iter().take(3).collect(),
        note_types: vec!["NOTE NURSING BOW".into()],
        ..Default::default()
    };
    generate_synthetic(&cfg, 21).unwrap()
}

fn tiny_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        tasks: vec![Task::Mort, Task::Los],
        sizes: vec![SubsetSize::Count(20), SubsetSize::All],
        repeats: 3,
        modality_sets: vec![ModalitySet::TimeseriesOnly],
        seed: 5,
        ..Default::default()
    };
    plan.embedding.iterations = 3;
    plan
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    fs::read(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

const REPORT_FILES: [&str; 5] = ["report.md", "report.json", "results.csv", "per_seed.csv", "significance.csv"];

#[test]
fn resume_matches_uninterrupted_run() {
    let ds = tiny_dataset();
    let plan = tiny_plan();
    let full = tempfile::tempdir().unwrap();
    run_experiment_on(&plan, &ds, full.path()).unwrap();

    // a run that stopped after some units: keep every other checkpoint
    let partial = tempfile::tempdir().unwrap();
    let ck = partial.path().join("checkpoints");
    fs::create_dir_all(&ck).unwrap();
    let mut entries: Vec<_> = fs::read_dir(full.path().join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    assert!(entries.len() >= 4, "expected several checkpoints, found {}", entries.len());
    for p in entries.iter().step_by(2) {
        fs::copy(p, ck.join(p.file_name().unwrap())).unwrap();
    }
    run_experiment_on(&plan, &ds, partial.path()).unwrap();
    for f in REPORT_FILES {
        assert_eq!(read(full.path(), f), read(partial.path(), f), "{f} differs after resume");
    }

    // a complete rerun in place reuses cached embeddings and checkpoints
    run_experiment_on(&plan, &ds, full.path()).unwrap();
    for f in REPORT_FILES {
        assert_eq!(read(full.path(), f), read(partial.path(), f), "{f} differs after rerun");
    }
}

#[test]
fn stale_checkpoints_are_ignored() {
    let ds = tiny_dataset();
    let plan = tiny_plan();
    let dir = tempfile::tempdir().unwrap();
    run_experiment_on(&plan, &ds, dir.path()).unwrap();

    let changed = ExperimentPlan { seed: 6, ..tiny_plan() };
    let fresh = tempfile::tempdir().unwrap();
    run_experiment_on(&changed, &ds, fresh.path()).unwrap();
    run_experiment_on(&changed, &ds, dir.path()).unwrap();
    for f in REPORT_FILES {
        assert_eq!(read(dir.path(), f), read(fresh.path(), f), "{f} reused a stale checkpoint");
    }
}

#[test]
fn test_labels_read_only_after_fitting() {
    let ds = tiny_dataset();
    let dir = tempfile::tempdir().unwrap();
    run_experiment_on(&tiny_plan(), &ds, dir.path()).unwrap();
    let audit: LabelAudit = serde_json::from_slice(&read(dir.path(), "label_audit.json")).unwrap();
    assert_eq!(audit.denied_reads, 0);
    assert!(audit.test_reads > 0);
}

#[test]
fn oversized_subset_is_rejected_before_work() {
    let ds = tiny_dataset();
    let plan = ExperimentPlan {
        sizes: vec![SubsetSize::Count(10_000)],
        ..tiny_plan()
    };
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment_on(&plan, &ds, dir.path()).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(!dir.path().join("checkpoints").exists());
}
