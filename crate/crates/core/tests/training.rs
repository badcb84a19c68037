use std::fs;
use std::path::Path;

use segnn::nbody::{generate, write_dataset, SimParams, SplitCounts};
use segnn::segnn::{ModelConfig, Network};
use segnn::tensor::ops::{metric_value, Metric};
use segnn::train::{
    evaluate, load_checkpoint, match_budget, prepare, restore, score, train, zero_baseline, RunConfig, Target,
    BEST_FILE, CHECKPOINT_FILE, METRICS_FILE, SUMMARY_FILE,
};
use segnn::Error;

fn small_run(dir: &Path, params: SimParams, counts: SplitCounts) -> RunConfig {
    let ds = generate(&params, counts, 3).unwrap();
    write_dataset(&ds, &dir.join("data")).unwrap();
    let mut c = RunConfig::for_system(params.system);
    c.model.hidden_dim = 12;
    c.model.num_layers = 2;
    c.dataset = dir.join("data");
    c.output_dir = dir.join("run");
    c.epochs = 2;
    c.batch_size = 8;
    c.micro_batch = 3;
    c.eval_batch_size = 5;
    c.model.optimizer.lr = 1e-3;
    c
}

fn charged_run(dir: &Path) -> RunConfig {
    small_run(dir, SimParams::charged(), SplitCounts { train: 20, val: 6, test: 6 })
}

#[test]
fn same_seed_gives_identical_metrics_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = charged_run(tmp.path());
    let a = train(&c).unwrap();
    let first = fs::read(c.output_dir.join(METRICS_FILE)).unwrap();
    let summary = fs::read(c.output_dir.join(SUMMARY_FILE)).unwrap();
    c.output_dir = tmp.path().join("again");
    let b = train(&c).unwrap();
    assert_eq!(first, fs::read(c.output_dir.join(METRICS_FILE)).unwrap());
    assert_eq!(summary, fs::read(c.output_dir.join(SUMMARY_FILE)).unwrap());
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 3);
    // training moved the parameters
    assert_ne!(a.history[0].val_mse, a.history[2].val_mse);
    c.seed = 1;
    c.output_dir = tmp.path().join("other");
    train(&c).unwrap();
    assert_ne!(first, fs::read(c.output_dir.join(METRICS_FILE)).unwrap());
}

#[test]
fn micro_batch_split_does_not_change_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = charged_run(tmp.path());
    c.epochs = 1;
    let a = train(&c).unwrap();
    c.micro_batch = 8;
    c.output_dir = tmp.path().join("whole");
    let b = train(&c).unwrap();
    let (x, y) = (a.history[1].val_mse, b.history[1].val_mse);
    assert!((x - y).abs() <= 1e-12 * x, "{x} vs {y}");
}

#[test]
fn zero_epochs_only_scores_the_initial_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = charged_run(tmp.path());
    c.epochs = 0;
    let out = train(&c).unwrap();
    let text = fs::read_to_string(c.output_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with(r#"{"epoch":0,"#));
    assert_eq!(out.summary.best_epoch, 0);
    let init = Network::new(&ModelConfig { seed: c.seed, ..c.model.clone() }).unwrap();
    let best = load_checkpoint(&c.output_dir.join(BEST_FILE)).unwrap();
    for (p, q) in init.params().iter().zip(best.params().iter()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn best_checkpoint_reproduces_the_reported_test_error() {
    let tmp = tempfile::tempdir().unwrap();
    let c = charged_run(tmp.path());
    let out = train(&c).unwrap();
    let net = load_checkpoint(&c.output_dir.join(BEST_FILE)).unwrap();
    let ds = segnn::nbody::read_dataset(&c.dataset).unwrap();
    let test = prepare(ds.split(segnn::nbody::Split::Test), net.config(), Target::Position).unwrap();
    let report = evaluate(&net, &test, Metric::Mse, 4).unwrap();
    assert_eq!(report.value, out.summary.test_mse);
    assert_eq!(report.batches, 2);
    assert!(report.mean_forward_seconds > 0.0);
    assert!(c.output_dir.join(CHECKPOINT_FILE).exists());
}

#[test]
fn mismatched_checkpoint_is_a_layout_error() {
    let tmp = tempfile::tempdir().unwrap();
    let c = charged_run(tmp.path());
    train(&c).unwrap();
    let net = load_checkpoint(&c.output_dir.join(BEST_FILE)).unwrap();
    let wider = ModelConfig {
        hidden_dim: 20,
        ..net.config().clone()
    };
    assert!(matches!(restore(&wider, net.params()), Err(Error::LayoutMismatch { .. })));
}

#[test]
fn divergence_aborts_and_keeps_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = charged_run(tmp.path());
    c.model.optimizer.lr = 1e300;
    c.epochs = 5;
    match train(&c) {
        Err(Error::TrainingDiverged { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.summary)),
    }
    assert!(load_checkpoint(&c.output_dir.join(CHECKPOINT_FILE)).is_ok());
}

#[test]
fn oracle_symmetry_and_zero_baseline() {
    let ds = generate(&SimParams::charged(), SplitCounts { train: 6, val: 0, test: 0 }, 8).unwrap();
    let model = RunConfig::charged().model;
    let ex = prepare(&ds.samples, &model, Target::Position).unwrap();
    for e in &ex {
        assert_eq!(metric_value(Metric::Mse, &e.target, &e.target), 0.0);
    }
    let a: Vec<f64> = ex[0].target.clone();
    let b: Vec<f64> = ex[1].target.clone();
    assert_eq!(metric_value(Metric::Mse, &a, &b), metric_value(Metric::Mse, &b, &a));
    assert_eq!(metric_value(Metric::Mae, &a, &b), metric_value(Metric::Mae, &b, &a));

    // mean squared displacement computed straight from the trajectories
    let mut sum = 0.0;
    for s in &ds.samples {
        for (p, q) in s.input.positions.iter().zip(&s.target_positions) {
            sum += (0..3).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>();
        }
    }
    let direct = sum / (ds.samples.len() * 5 * 3) as f64;
    let base = zero_baseline(&ex, Metric::Mse);
    assert!((base - direct).abs() < 1e-14 * direct);
}

#[test]
fn gravity_force_targets_train() {
    let tmp = tempfile::tempdir().unwrap();
    let params = SimParams {
        num_particles: 12,
        ..SimParams::gravity()
    };
    let mut c = small_run(tmp.path(), params, SplitCounts { train: 6, val: 3, test: 3 });
    c.model.neighbors = segnn::segnn::NeighborRule::Knn { k: 4 };
    c.target = Target::Force;
    c.epochs = 1;
    let out = train(&c).unwrap();
    assert!(out.summary.test_mse.is_finite());
    let ds = segnn::nbody::read_dataset(&c.dataset).unwrap();
    let ex = prepare(ds.split(segnn::nbody::Split::Val), &c.model, Target::Force).unwrap();
    let net = load_checkpoint(&c.output_dir.join(BEST_FILE)).unwrap();
    assert_eq!(score(&net, &ex, Metric::Mse, 2).unwrap(), out.summary.best_val_mse);
}

#[test]
fn budget_matching_picks_the_closest_width() {
    let base = ModelConfig {
        num_layers: 2,
        ..RunConfig::charged().model
    };
    let target = Network::new(&ModelConfig { l_f: 0, l_a: 0, hidden_dim: 16, ..base.clone() })
        .unwrap()
        .num_parameters();
    let matched = match_budget(&base, target, 40).unwrap();
    let got = Network::new(&matched).unwrap().num_parameters();
    for dim in 1..=40 {
        if let Ok(n) = Network::new(&ModelConfig { hidden_dim: dim, ..base.clone() }) {
            assert!(n.num_parameters().abs_diff(target) >= got.abs_diff(target));
        }
    }
}
