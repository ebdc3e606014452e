//! Calibrated prediction sets for multi-class probability estimators.
//!
//! The crate turns per-case class probabilities into prediction sets with a
//! finite-sample marginal coverage guarantee, using split (nested) conformal
//! calibration and its localized variant that calibrates one threshold per
//! forecast class. Around that engine it provides confusion-table
//! diagnostics, a reference cost-weighted softmax classifier, a seeded
//! synthetic data generator with known conditionals, and a Monte Carlo
//! coverage harness.
//!
//! ```
//! use conformal_core::{calibrate, conformity_scores, predict_set, ClassDistribution};
//!
//! let dist = ClassDistribution::new(vec![0.43, 0.35, 0.22]).unwrap();
//! let scores = conformity_scores(&dist);
//! assert_eq!(scores.score(0).unwrap(), 1.0);
//!
//! let cal = calibrate(&[1.0, 1.0, 0.6, 0.5], 0.3).unwrap();
//! assert_eq!(cal.gamma_hat(), 0.5);
//! assert_eq!(predict_set(&dist, &cal).members(), &[0, 1]);
//! ```

pub mod calfile;
pub mod conformal;
pub mod data;
pub mod distribution;
pub mod error;
pub mod localized;
pub mod metrics;
pub mod models;
pub mod simulate;
pub mod synthetic;

pub use calfile::Calibration;
pub use conformal::{
    calibrate, conformity_scores, naive_set, nested_set, oracle_threshold, order_statistic_index,
    predict_set, score_labeled, CalibrationModel, ConformityScores, Method, PredictionSet,
};
pub use data::{load_dataset, load_probability_table, Dataset, ProbabilityTable, TableSource};
pub use distribution::{
    rank_distribution, ClassDistribution, ClassLabel, LabelSpace, LabeledCase, RankedDistribution,
};
pub use error::{Error, Result};
pub use localized::{
    localized_calibrate, localized_predict, localized_set, set_size_report, LocalizedCalibration,
    PartitionStatus, SetSizeReport,
};
pub use metrics::{
    build_confusion, empirical_coverage, nonconformity_histogram, ConfusionTable, ErrorReport,
    Histogram,
};
pub use models::{predict_proba, train_softmax, CostWeights, SoftmaxModel, TrainConfig};
pub use synthetic::{generate, split, GeneratorSpec};
