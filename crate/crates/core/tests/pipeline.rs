//! End-to-end runs through the public API on a small synthetic profile.

use fairshift_core::audit::{
    aggregate, heatmap_matrix, run_audit, synthetic_split, AuditConfig, AuditRecord, Metric, Sweep,
};
use fairshift_core::bias::BiasGrid;
use fairshift_core::classifiers::{ClassifierId, DEFAULT_LAMBDAS};
use fairshift_core::dataset::LabeledDataset;
use fairshift_core::report::{read_manifest_reference, read_results_csv, rounded, write_report_csv, write_results_csv};
use fairshift_core::synthetic::SyntheticProfile;

const SMALL: SyntheticProfile = SyntheticProfile {
    dim: 4,
    n_train: 800,
    n_test: 400,
    sigma: 1.0,
};

fn grid(seed: u64) -> BiasGrid {
    BiasGrid {
        beta_pos_values: vec![0.5, 1.0],
        beta_neg_values: vec![0.5, 1.0],
        nu_values: vec![0.2],
        runs: 2,
        master_seed: seed,
    }
}

fn data(seed: u64) -> (LabeledDataset, LabeledDataset) {
    let (_, train, test) = synthetic_split(&SMALL, seed).unwrap();
    (train, test)
}

fn all_classifiers() -> AuditConfig {
    let mut cfg = AuditConfig::new(ClassifierId::ALL.to_vec());
    cfg.expgrad.iterations = 10;
    cfg
}

#[test]
fn every_cell_and_classifier_is_recorded() {
    let (train, test) = data(1);
    let g = grid(1);
    let out = run_audit(&train, &test, &g, &all_classifiers()).unwrap();
    let per_cell: usize = ClassifierId::ALL
        .iter()
        .map(|c| if c.uses_lambda() { DEFAULT_LAMBDAS.len() } else { 1 })
        .sum();
    assert_eq!(out.records.len(), g.len() * per_cell);
    assert_eq!(out.test_hash, test.fingerprint());
    let nu_records = out.records.iter().filter(|r| r.sweep == Sweep::Nu).count();
    assert_eq!(nu_records, g.runs * per_cell);
    // Under-representation never touches the privileged group or grows data.
    assert!(out.records.iter().all(|r| r.n_train_effective <= train.len()));
}

#[test]
fn thread_count_does_not_change_results() {
    let (train, test) = data(2);
    let cfg = AuditConfig::new(vec![ClassifierId::BaseLr, ClassifierId::Rew, ClassifierId::PluginEod]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_audit(&train, &test, &grid(2), &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn results_round_trip_and_reference_the_manifest() {
    let (train, test) = data(3);
    let out = run_audit(&train, &test, &grid(3), &all_classifiers()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    write_results_csv(&path, &out.records, Some("abc123")).unwrap();
    let back = read_results_csv(&path).unwrap();
    let want: Vec<AuditRecord> = out.records.iter().map(rounded).collect();
    assert_eq!(back, want);
    assert_eq!(read_manifest_reference(&path).unwrap().as_deref(), Some("abc123"));

    let report = aggregate(&back).unwrap();
    let report_path = dir.path().join("report.csv");
    write_report_csv(&report_path, &report, &back, Some("abc123")).unwrap();
    assert_eq!(read_manifest_reference(&report_path).unwrap().as_deref(), Some("abc123"));
}

#[test]
fn aggregates_cover_each_series() {
    let (train, test) = data(4);
    let out = run_audit(&train, &test, &grid(4), &all_classifiers()).unwrap();
    let report = aggregate(&out.records).unwrap();
    assert!(report.baseline.is_some());
    for s in &report.beta {
        assert_eq!(s.cells + s.excluded, 4, "{}", s.key);
    }
    let m = heatmap_matrix(&out.records, ClassifierId::PluginSpd, Some(0.4), Metric::Spd).unwrap();
    assert_eq!((m.beta_pos.len(), m.beta_neg.len()), (2, 2));
    assert_eq!(m.missing(), 0);
}

#[test]
fn oracle_posterior_makes_plugins_ignore_fitting() {
    let (model, train, test) = synthetic_split(&SMALL, 5).unwrap();
    let mut cfg = AuditConfig::new(vec![ClassifierId::PluginSpd]);
    cfg.lambdas = vec![0.0];
    cfg.oracle = Some(model);
    let out = run_audit(&train, &test, &grid(5), &cfg).unwrap();
    // With the exact posterior and equal betas the rule is the Bayes rule on
    // every diagonal cell, so those cells agree on error.
    let diag: Vec<f64> = out
        .records
        .iter()
        .filter(|r| r.sweep == Sweep::Beta && r.run == 0 && r.setting.beta_pos == r.setting.beta_neg)
        .filter_map(|r| r.err)
        .collect();
    assert_eq!(diag.len(), 2);
    assert_eq!(diag[0], diag[1]);
}
