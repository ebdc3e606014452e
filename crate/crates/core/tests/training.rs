use conformal_core::metrics::majority_baseline_error;
use conformal_core::models::{confusion_on, log_loss};
use conformal_core::simulate::{run_simulation, ProbabilitySource, SimulationConfig};
use conformal_core::{generate, split, train_softmax, CostWeights, Dataset, GeneratorSpec, TrainConfig};

fn single_feature_split() -> (Dataset, Dataset) {
    let (data, _) = generate(&GeneratorSpec::single_feature(2000, 7)).unwrap();
    let (train, test, _) = split(&data, &[0.5, 0.5], 11).unwrap();
    (train, test)
}

fn marginal_log_loss(train: &Dataset, test: &Dataset) -> f64 {
    let k = 3;
    let mut counts = vec![0usize; k];
    for y in train.outcomes() {
        counts[y] += 1;
    }
    let n = train.len() as f64;
    -test
        .outcomes()
        .iter()
        .map(|&y| (counts[y] as f64 / n).ln())
        .sum::<f64>()
        / test.len() as f64
}

#[test]
fn held_out_log_loss_beats_marginal_frequencies() {
    let (train, test) = single_feature_split();
    let model = train_softmax(&train, &CostWeights::ones(3).unwrap(), &TrainConfig::default()).unwrap();
    assert!(model.info.converged);
    let fitted = log_loss(&model, &test).unwrap();
    let baseline = marginal_log_loss(&train, &test);
    assert!(fitted < baseline, "fitted {fitted} vs marginal {baseline}");
}

#[test]
fn heavier_class_two_weight_forecasts_class_two_more() {
    let (train, test) = single_feature_split();
    let config = TrainConfig::default();
    let count_two = |w: &str| {
        let model = train_softmax(&train, &CostWeights::parse(w).unwrap(), &config).unwrap();
        let t = confusion_on(&model, &test).unwrap();
        t.column_total(2)
    };
    let plain = count_two("1,1,1");
    let heavy = count_two("1,1,10");
    assert!(heavy >= plain, "{heavy} < {plain}");
}

#[test]
fn rescaled_weights_give_the_same_model() {
    let (train, _) = single_feature_split();
    let config = TrainConfig::default();
    for (a, b) in [("1,1,1", "2,2,2"), ("1,1,10", "3,3,30")] {
        let ma = train_softmax(&train, &CostWeights::parse(a).unwrap(), &config).unwrap();
        let mb = train_softmax(&train, &CostWeights::parse(b).unwrap(), &config).unwrap();
        for (x, y) in ma.coefficients().iter().zip(mb.coefficients()) {
            assert!((x - y).abs() <= 1e-6, "{a} vs {b}: {x} vs {y}");
        }
    }
}

#[test]
fn unit_weights_are_reproducible_bit_for_bit() {
    let (train, _) = single_feature_split();
    let config = TrainConfig::default();
    let a = train_softmax(&train, &CostWeights::ones(3).unwrap(), &config).unwrap();
    let b = train_softmax(&train, &CostWeights::parse("1,1,1").unwrap(), &config).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn default_spec_beats_majority_baseline() {
    let (data, _) = generate(&GeneratorSpec::default_with(8000, 3)).unwrap();
    let (train, test, _) = split(&data, &[0.5, 0.5], 5).unwrap();
    let model = train_softmax(&train, &CostWeights::ones(3).unwrap(), &TrainConfig::default()).unwrap();
    let error = confusion_on(&model, &test).unwrap().error_rate().unwrap();
    let baseline = majority_baseline_error(&test.outcomes(), 3).unwrap();
    assert!(baseline - error >= 0.05, "error {error} baseline {baseline}");
}

fn small_study(source: ProbabilitySource, seed: u64) -> SimulationConfig {
    SimulationConfig {
        spec: GeneratorSpec::default_with(0, 0),
        n_train: 600,
        n_cal: 400,
        n_test: 2000,
        replications: 4,
        alphas: vec![0.1, 0.3],
        master_seed: seed,
        weights: CostWeights::ones(3).unwrap(),
        train: TrainConfig::default(),
        source,
    }
}

#[test]
fn simulation_report_is_reproducible() {
    let config = small_study(ProbabilitySource::Trained, 99);
    let a = run_simulation(&config).unwrap().to_text();
    let b = run_simulation(&config).unwrap().to_text();
    assert_eq!(a, b);
    let other = run_simulation(&small_study(ProbabilitySource::Trained, 100)).unwrap().to_text();
    assert_ne!(a, other);
}

#[test]
fn replication_count_does_not_change_earlier_replications() {
    let mut config = small_study(ProbabilitySource::TrueProbabilities, 5);
    let four = run_simulation(&config).unwrap();
    config.replications = 2;
    let two = run_simulation(&config).unwrap();
    assert_eq!(two.replications[..], four.replications[..2]);
}
