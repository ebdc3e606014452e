//! Monte Carlo coverage study on synthetic data.
//!
//! Each replication generates a fresh dataset, splits it into training,
//! calibration and test parts, obtains probability estimates (a trained
//! softmax model, or the true conditionals), calibrates nested and localized
//! thresholds for every requested `α`, and scores the resulting sets on the
//! test part alongside the oracle sets built from the true conditionals.
//!
//! Replications run in parallel; each derives its seeds from the master seed
//! and its index, and results are collected in index order, so the report is
//! identical for any thread count.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::conformal::{calibrate, conformity_scores, nested_set, oracle_threshold, ConformityScores, PredictionSet};
use crate::data::Dataset;
use crate::distribution::ClassDistribution;
use crate::error::{Error, Result};
use crate::localized::{localized_calibrate, localized_set, LocalizedCalibration};
use crate::metrics::{build_confusion, coverage_by_forecast, CoverageTally};
use crate::models::{predict_proba, train_softmax, CostWeights, TrainConfig};
use crate::synthetic::{derive_seed, generate, split_counts, GeneratorSpec, RNG_ALGORITHM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilitySource {
    /// Fit the reference softmax model on the training part.
    Trained,
    /// Feed the generator's true conditionals to the conformal engine.
    TrueProbabilities,
}

impl ProbabilitySource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbabilitySource::Trained => "trained",
            ProbabilitySource::TrueProbabilities => "true",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Generator; its `n` and `seed` are replaced per replication.
    pub spec: GeneratorSpec,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub replications: usize,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
    pub weights: CostWeights,
    pub train: TrainConfig,
    pub source: ProbabilitySource,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter("at least one replication is required".into()));
        }
        if self.n_cal == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter("calibration and test sizes must be positive".into()));
        }
        if self.source == ProbabilitySource::Trained && self.n_train == 0 {
            return Err(Error::InvalidParameter("training size must be positive".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidParameter("no alpha levels given".into()));
        }
        for &a in &self.alphas {
            crate::conformal::check_alpha(a)?;
        }
        if self.weights.num_classes() != self.spec.num_classes() {
            return Err(Error::ClassCountMismatch {
                expected: self.spec.num_classes(),
                actual: self.weights.num_classes(),
            });
        }
        Ok(())
    }
}

/// Coverage of one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub covered: usize,
    pub n: usize,
    pub mean_size: f64,
    /// Grouped by each set's forecast class.
    pub by_forecast: Vec<CoverageTally>,
}

impl MethodOutcome {
    fn from_sets(sets: &[PredictionSet], outcomes: &[usize], classes: usize) -> Self {
        let pairs = || sets.iter().zip(outcomes.iter().copied());
        let covered = pairs().filter(|(s, y)| s.contains(*y)).count();
        let total_size: usize = sets.iter().map(PredictionSet::len).sum();
        Self {
            covered,
            n: sets.len(),
            mean_size: total_size as f64 / sets.len() as f64,
            by_forecast: coverage_by_forecast(pairs(), classes),
        }
    }

    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaOutcome {
    pub alpha: f64,
    pub gamma_hat: f64,
    pub k: usize,
    pub localized_gammas: Vec<f64>,
    pub localized_sizes: Vec<usize>,
    pub nested: MethodOutcome,
    pub localized: MethodOutcome,
    pub oracle: MethodOutcome,
    /// Share of test cases whose nested set equals the oracle set.
    pub nested_oracle_agreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub alphas: Vec<AlphaOutcome>,
    /// Error rate of argmax forecasts on the test part.
    pub forecast_error: f64,
    /// Error of always forecasting the training majority class, on the test part.
    pub baseline_error: f64,
    pub train_iterations: usize,
    pub train_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub replications: Vec<ReplicationOutcome>,
}

fn case_index(id: &str) -> usize {
    id.parse().expect("generated ids are row numbers")
}

fn run_replication(config: &SimulationConfig, index: usize) -> Result<ReplicationOutcome> {
    let classes = config.spec.num_classes();
    let seed = derive_seed(config.master_seed, index as u64);
    let spec = GeneratorSpec {
        n: config.n_train + config.n_cal + config.n_test,
        seed: derive_seed(seed, 0),
        ..config.spec.clone()
    };
    let (data, truth) = generate(&spec)?;
    let (train, cal, test) = split_counts(
        &data,
        [config.n_train, config.n_cal, config.n_test],
        derive_seed(seed, 1),
    )?;
    let true_rows = |part: &Dataset| -> Vec<ClassDistribution> {
        part.ids.iter().map(|id| truth.rows()[case_index(id)].clone()).collect()
    };

    let (estimate_cal, estimate_test, iterations, converged) = match config.source {
        ProbabilitySource::TrueProbabilities => (true_rows(&cal), true_rows(&test), 0, true),
        ProbabilitySource::Trained => {
            let model = train_softmax(&train, &config.weights, &config.train)?;
            let predict = |part: &Dataset| -> Result<Vec<ClassDistribution>> {
                part.cases.iter().map(|c| predict_proba(&model, &c.features)).collect()
            };
            (predict(&cal)?, predict(&test)?, model.info.iterations, model.info.converged)
        }
    };

    let cal_scores: Vec<ConformityScores> = estimate_cal.iter().map(conformity_scores).collect();
    let cal_outcomes = cal.outcomes();
    let cal_labeled: Vec<f64> = cal_scores
        .iter()
        .zip(&cal_outcomes)
        .map(|(s, &y)| s.score(y))
        .collect::<Result<_>>()?;
    let test_scores: Vec<ConformityScores> = estimate_test.iter().map(conformity_scores).collect();
    let test_outcomes = test.outcomes();
    let test_truth = true_rows(&test);

    let confusion = build_confusion(
        test_outcomes
            .iter()
            .zip(&test_scores)
            .map(|(&y, s)| (y, s.forecast())),
        classes,
    )?;
    let forecast_error = confusion.error_rate()?;
    let train_majority = {
        let mut counts = vec![0usize; classes];
        for y in train.outcomes() {
            counts[y] += 1;
        }
        crate::distribution::rank_order(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>())[0]
    };
    let baseline_error =
        test_outcomes.iter().filter(|&&y| y != train_majority).count() as f64 / test_outcomes.len() as f64;

    let mut alphas = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let nested_cal = calibrate(&cal_labeled, alpha)?;
        let local: LocalizedCalibration =
            localized_calibrate(cal_scores.iter().zip(cal_outcomes.iter().copied()), alpha)?;
        let nested_sets: Vec<PredictionSet> = test_scores
            .iter()
            .map(|s| nested_set(s, nested_cal.gamma_hat(), alpha))
            .collect();
        let local_sets: Vec<PredictionSet> = test_scores
            .iter()
            .map(|s| localized_set(s, &local))
            .collect::<Result<_>>()?;
        let oracle_sets: Vec<PredictionSet> = test_truth
            .iter()
            .map(|d| oracle_threshold(d, alpha).map(|(_, s)| s))
            .collect::<Result<_>>()?;
        let agree = nested_sets
            .iter()
            .zip(&oracle_sets)
            .filter(|(a, b)| a.members() == b.members())
            .count();
        alphas.push(AlphaOutcome {
            alpha,
            gamma_hat: nested_cal.gamma_hat(),
            k: nested_cal.k(),
            localized_gammas: local.thresholds(),
            localized_sizes: local.sizes(),
            nested: MethodOutcome::from_sets(&nested_sets, &test_outcomes, classes),
            localized: MethodOutcome::from_sets(&local_sets, &test_outcomes, classes),
            oracle: MethodOutcome::from_sets(&oracle_sets, &test_outcomes, classes),
            nested_oracle_agreement: agree as f64 / test_outcomes.len() as f64,
        });
    }

    Ok(ReplicationOutcome {
        index,
        seed,
        alphas,
        forecast_error,
        baseline_error,
        train_iterations: iterations,
        train_converged: converged,
    })
}

pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let replications = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport {
        config: config.clone(),
        replications,
    })
}

/// Across-replication summary of one method at one `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub mean_size: f64,
    /// Binomial standard error of a single replication's coverage at the mean.
    pub replication_se: f64,
    /// Binomial standard error of the mean over all replications.
    pub pooled_se: f64,
    /// Pooled coverage per forecast class over all replications.
    pub by_forecast: Vec<CoverageTally>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Nested,
    Localized,
    Oracle,
}

impl SimulationReport {
    pub fn summary(&self, alpha_index: usize, which: Which) -> CoverageSummary {
        let outcomes: Vec<&MethodOutcome> = self
            .replications
            .iter()
            .map(|r| {
                let a = &r.alphas[alpha_index];
                match which {
                    Which::Nested => &a.nested,
                    Which::Localized => &a.localized,
                    Which::Oracle => &a.oracle,
                }
            })
            .collect();
        let r = outcomes.len() as f64;
        let covs: Vec<f64> = outcomes.iter().map(|o| o.coverage()).collect();
        let mean = covs.iter().sum::<f64>() / r;
        let n_test = self.config.n_test as f64;
        let classes = self.config.spec.num_classes();
        let mut by_forecast = vec![CoverageTally::default(); classes];
        for o in &outcomes {
            for (acc, t) in by_forecast.iter_mut().zip(&o.by_forecast) {
                acc.n += t.n;
                acc.covered += t.covered;
            }
        }
        CoverageSummary {
            mean,
            min: covs.iter().copied().fold(f64::INFINITY, f64::min),
            max: covs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_size: outcomes.iter().map(|o| o.mean_size).sum::<f64>() / r,
            replication_se: (mean * (1.0 - mean) / n_test).sqrt(),
            pooled_se: (mean * (1.0 - mean) / (n_test * r)).sqrt(),
            by_forecast,
        }
    }

    /// Deterministic plain-text report; the resolved configuration is echoed first.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::from("# coverage study\n");
        let _ = writeln!(out, "rng: {RNG_ALGORITHM}");
        let _ = writeln!(out, "master_seed: {}", c.master_seed);
        let _ = writeln!(out, "replications: {}", c.replications);
        let _ = writeln!(out, "n_train: {}  n_cal: {}  n_test: {}", c.n_train, c.n_cal, c.n_test);
        let _ = writeln!(out, "classes: {}  dim: {}", c.spec.num_classes(), c.spec.dim());
        let _ = writeln!(out, "features: {:?}", c.spec.features);
        let _ = writeln!(out, "probabilities: {}", c.source.as_str());
        let _ = writeln!(out, "weights: {:?}", c.weights.as_slice());
        let alphas: Vec<String> = c.alphas.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "alphas: {}", alphas.join(","));
        out.push('\n');

        for (i, &alpha) in c.alphas.iter().enumerate() {
            let _ = writeln!(out, "## alpha = {alpha}  (target coverage {})", 1.0 - alpha);
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "method", "mean", "min", "max", "se_rep", "se_mean", "mean_size"
            );
            for (name, which) in [("nested", Which::Nested), ("localized", Which::Localized), ("oracle", Which::Oracle)] {
                let s = self.summary(i, which);
                let _ = writeln!(
                    out,
                    "{:<10} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.5} {:>9.4}",
                    name, s.mean, s.min, s.max, s.replication_se, s.pooled_se, s.mean_size
                );
            }
            out.push_str("per-forecast pooled coverage (n):\n");
            for (name, which) in [("nested", Which::Nested), ("localized", Which::Localized)] {
                let s = self.summary(i, which);
                let cells: Vec<String> = s
                    .by_forecast
                    .iter()
                    .enumerate()
                    .map(|(j, t)| match t.coverage() {
                        Some(v) => format!("Yhat={j}: {v:.5} ({})", t.n),
                        None => format!("Yhat={j}: NA (0)"),
                    })
                    .collect();
                let _ = writeln!(out, "  {:<10} {}", name, cells.join("  "));
            }
            out.push('\n');
        }

        out.push_str("## replications\n");
        out.push_str("rep seed forecast_err baseline_err iters converged");
        for &alpha in &c.alphas {
            let _ = write!(out, " gamma@{alpha} nested@{alpha} localized@{alpha} oracle@{alpha} agree@{alpha}");
        }
        out.push('\n');
        for r in &self.replications {
            let _ = write!(
                out,
                "{} {} {:.5} {:.5} {} {}",
                r.index, r.seed, r.forecast_error, r.baseline_error, r.train_iterations, r.train_converged
            );
            for a in &r.alphas {
                let _ = write!(
                    out,
                    " {:.6} {:.5} {:.5} {:.5} {:.4}",
                    a.gamma_hat,
                    a.nested.coverage(),
                    a.localized.coverage(),
                    a.oracle.coverage(),
                    a.nested_oracle_agreement
                );
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(source: ProbabilitySource) -> SimulationConfig {
        SimulationConfig {
            spec: GeneratorSpec::default_with(0, 0),
            n_train: 400,
            n_cal: 300,
            n_test: 1000,
            replications: 3,
            alphas: vec![0.1, 0.3],
            master_seed: 17,
            weights: CostWeights::ones(3).unwrap(),
            train: TrainConfig::default(),
            source,
        }
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = small(ProbabilitySource::Trained);
        let a = run_simulation(&cfg).unwrap().to_text();
        let b = run_simulation(&cfg).unwrap().to_text();
        assert_eq!(a, b);
        assert!(a.contains("ChaCha20"));
    }

    #[test]
    fn true_probability_passthrough() {
        let report = run_simulation(&small(ProbabilitySource::TrueProbabilities)).unwrap();
        for r in &report.replications {
            assert_eq!(r.train_iterations, 0);
            for a in &r.alphas {
                assert_eq!(a.nested.n, 1000);
                assert!(a.localized_sizes.iter().sum::<usize>() == 300);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(ProbabilitySource::Trained);
        cfg.replications = 0;
        assert!(run_simulation(&cfg).is_err());
        let mut cfg = small(ProbabilitySource::Trained);
        cfg.alphas = vec![1.2];
        assert!(run_simulation(&cfg).is_err());
        let mut cfg = small(ProbabilitySource::Trained);
        cfg.weights = CostWeights::ones(2).unwrap();
        assert!(run_simulation(&cfg).is_err());
    }
}
