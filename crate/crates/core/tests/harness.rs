use std::sync::OnceLock;

use bps_core::harness::{
    parse_csv, run_experiment, sample_eligible, write_csv, ExperimentConfig, Models, PheMode,
};
use bps_core::oracle::{DistanceTable, REACHABLE};
use bps_core::phe::{calibrate_transition, heuristic_variant};
use bps_core::policies::Policy;
use bps_core::{Error, GoalSpec, HeuristicVariant, PheModel};

fn table() -> &'static DistanceTable {
    static TABLE: OnceLock<DistanceTable> = OnceLock::new();
    TABLE.get_or_init(|| DistanceTable::build(GoalSpec::default()))
}

fn csv(cfg: &ExperimentConfig) -> String {
    let models = Models::calibrate(table(), cfg).unwrap();
    let out = run_experiment(cfg, &models).unwrap();
    assert!(out.errors.is_empty());
    let mut buf = Vec::new();
    write_csv(&out.records, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn eligibility_is_respected() {
    let eligible = table().reachable().filter(|(_, d)| *d >= 1).count();
    assert_eq!(eligible, REACHABLE - 1);
    for horizon in [1, 10, 25, 31] {
        for s in sample_eligible(table(), horizon, 500, horizon as u64).unwrap() {
            assert!(table().exact_distance(&s).unwrap() >= horizon);
        }
    }
    // only two states sit at distance 31
    let far = sample_eligible(table(), 31, 200, 0).unwrap();
    let mut distinct = far.clone();
    distinct.sort_by_key(|s| *s.cells());
    distinct.dedup();
    assert_eq!(distinct.len(), 2);
    assert!(matches!(
        sample_eligible(table(), 32, 1, 0),
        Err(Error::EmptyEligibleSet { horizon: 32, .. })
    ));
}

#[test]
fn golden_csv_is_byte_stable() {
    let mut cfg = ExperimentConfig::new(Policy::Bps);
    cfg.horizons = vec![2, 3];
    cfg.instances = 20;
    cfg.seed = 7;
    assert_eq!(csv(&cfg), include_str!("fixtures/golden_bps_tiny.csv"));
}

#[test]
fn csv_round_trips() {
    let text = include_str!("fixtures/golden_bps_tiny.csv");
    let records = parse_csv(text).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].n_toward, 12);
    let mut buf = Vec::new();
    write_csv(&records, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    for policy in [Policy::Bps, Policy::Minimin, Policy::Random] {
        let mut cfg = ExperimentConfig::new(policy);
        cfg.horizons = vec![1, 4];
        cfg.instances = 60;
        cfg.seed = 99;
        cfg.random_ties = true;
        if policy == Policy::Bps {
            cfg.phe_mode = PheMode::Sampled {
                n_random: 1000,
                n_nearest: 500,
            };
        }
        let one = csv(&cfg);
        cfg.workers = 4;
        assert_eq!(one, csv(&cfg), "{policy}");
    }
}

#[test]
fn reported_stderr_is_consistent_with_repeat_runs() {
    let mut cfg = ExperimentConfig::new(Policy::Random);
    cfg.horizons = vec![5];
    cfg.instances = 600;
    let models = Models::calibrate(table(), &cfg).unwrap();
    let mut qs = Vec::new();
    let mut se = 0.0;
    for seed in 0..10 {
        cfg.seed = seed;
        let r = &run_experiment(&cfg, &models).unwrap().records[0];
        assert_eq!(r.n, 600);
        qs.push(r.quality);
        se = r.stderr;
    }
    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    for q in qs {
        assert!((q - mean).abs() <= 3.0 * se * (1.0 + 1.0 / 10f64.sqrt()), "{q} vs {mean}");
    }
}

#[test]
fn instance_failures_are_collected_not_fatal() {
    let cfg = {
        let mut c = ExperimentConfig::new(Policy::Bps);
        c.horizons = vec![1];
        c.instances = 50;
        c
    };
    // a model that has never seen heuristic values above 5
    let models = Models {
        table: table(),
        heuristic: heuristic_variant(table(), HeuristicVariant::Plain),
        phe: Some(PheModel::uniform(5, table().max_distance())),
        transition: Some(calibrate_transition(table())),
    };
    let out = run_experiment(&cfg, &models).unwrap();
    assert!(!out.errors.is_empty());
    assert_eq!(out.records[0].n + out.errors.len(), 50);
}

#[test]
fn bad_configurations_are_rejected() {
    let mut cfg = ExperimentConfig::new(Policy::Minimin);
    cfg.horizons = vec![20];
    let models = Models::calibrate(table(), &cfg).unwrap();
    assert!(matches!(run_experiment(&cfg, &models), Err(Error::Config(_))));

    let mut bps = ExperimentConfig::new(Policy::Bps);
    bps.horizons = vec![1];
    let models = Models::calibrate(table(), &bps).unwrap();
    bps.variant = HeuristicVariant::AllBeaconsRemoved;
    assert!(matches!(run_experiment(&bps, &models), Err(Error::Config(_))));
}
