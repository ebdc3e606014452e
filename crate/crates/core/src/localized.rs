//! Localized conformal prediction: one threshold per forecast class.
//!
//! Calibration cases are partitioned by their forecast (the argmax class) and
//! split calibration is run inside each partition. A new case is routed to the
//! threshold of its own forecast. Partitions that are empty, or too small for
//! the requested level, get a zero threshold and therefore full sets.

use std::fmt::Write as _;

use crate::conformal::{
    calibrate_unchecked, check_alpha, conformity_scores, CalibrationModel, ConformityScores,
    Method, PredictionSet,
};
use crate::distribution::ClassDistribution;
use crate::error::{Error, Result};

/// State of one forecast partition after calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStatus {
    Calibrated,
    /// No calibration case had this forecast.
    Empty,
    /// Cases exist but `k > n`, so the threshold fell back to 0.
    FullSet,
}

impl PartitionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionStatus::Calibrated => "ok",
            PartitionStatus::Empty => "empty",
            PartitionStatus::FullSet => "full_set",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedCalibration {
    alpha: f64,
    partitions: Vec<CalibrationModel>,
}

impl LocalizedCalibration {
    /// Assembles per-forecast models, e.g. after reading them back from disk.
    pub fn from_models(partitions: Vec<CalibrationModel>) -> Result<Self> {
        if partitions.len() < 2 {
            return Err(Error::TooFewClasses(partitions.len()));
        }
        let alpha = partitions[0].alpha();
        if partitions.iter().any(|p| p.alpha() != alpha) {
            return Err(Error::InvalidParameter(
                "partitions calibrated at different alpha levels".into(),
            ));
        }
        Ok(Self { alpha, partitions })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition(&self, forecast: usize) -> Option<&CalibrationModel> {
        self.partitions.get(forecast)
    }

    pub fn partitions(&self) -> &[CalibrationModel] {
        &self.partitions
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.partitions.iter().map(|p| p.gamma_hat()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.partitions.iter().map(|p| p.n_cal()).collect()
    }

    pub fn total_size(&self) -> usize {
        self.partitions.iter().map(|p| p.n_cal()).sum()
    }

    pub fn status(&self, forecast: usize) -> Option<PartitionStatus> {
        self.partitions.get(forecast).map(|p| {
            if p.n_cal() == 0 {
                PartitionStatus::Empty
            } else if p.is_full_set_regime() {
                PartitionStatus::FullSet
            } else {
                PartitionStatus::Calibrated
            }
        })
    }

    /// Forecast classes whose threshold is not data-driven (empty or `k > n`).
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.partitions.len())
            .filter(|&j| self.status(j) != Some(PartitionStatus::Calibrated))
            .collect()
    }
}

/// Calibrates one threshold per forecast class from scored, labeled cases.
pub fn localized_calibrate<'a>(
    cases: impl IntoIterator<Item = (&'a ConformityScores, usize)>,
    alpha: f64,
) -> Result<LocalizedCalibration> {
    check_alpha(alpha)?;
    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut classes = None;
    for (scores, outcome) in cases {
        let k = scores.num_classes();
        match classes {
            None => {
                classes = Some(k);
                groups = vec![Vec::new(); k];
            }
            Some(expected) if expected != k => {
                return Err(Error::ClassCountMismatch {
                    expected,
                    actual: k,
                })
            }
            Some(_) => {}
        }
        groups[scores.forecast()].push(scores.score(outcome)?);
    }
    if classes.is_none() {
        return Err(Error::EmptyInput("localized calibration"));
    }
    let partitions = groups
        .iter()
        .map(|group| calibrate_unchecked(group, alpha))
        .collect();
    Ok(LocalizedCalibration { alpha, partitions })
}

/// Convenience wrapper over [`localized_calibrate`] for raw distributions.
pub fn localized_calibrate_distributions<'a>(
    cases: impl IntoIterator<Item = (&'a ClassDistribution, usize)>,
    alpha: f64,
) -> Result<LocalizedCalibration> {
    let scored: Vec<(ConformityScores, usize)> = cases
        .into_iter()
        .map(|(d, y)| (conformity_scores(d), y))
        .collect();
    localized_calibrate(scored.iter().map(|(s, y)| (s, *y)), alpha)
}

/// Routes scored input to the threshold of its forecast class.
pub fn localized_set(scores: &ConformityScores, loc: &LocalizedCalibration) -> Result<PredictionSet> {
    if scores.num_classes() != loc.num_classes() {
        return Err(Error::ClassCountMismatch {
            expected: loc.num_classes(),
            actual: scores.num_classes(),
        });
    }
    let forecast = scores.forecast();
    let gamma = loc.partitions[forecast].gamma_hat();
    Ok(PredictionSet::new(
        scores.members_at(gamma),
        Some(loc.alpha),
        Method::Localized,
        gamma,
        forecast,
        scores.num_classes(),
    ))
}

pub fn localized_predict(dist: &ClassDistribution, loc: &LocalizedCalibration) -> Result<PredictionSet> {
    localized_set(&conformity_scores(dist), loc)
}

/// Set-size counts for the cases sharing one forecast class.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSizeRow {
    pub forecast: usize,
    /// `counts[s - 1]` is the number of sets with `s` members.
    pub counts: Vec<usize>,
}

impl SetSizeRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// True when no set had this forecast; proportions are then all zero.
    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }
}

/// Proportion of prediction sets of each size, per forecast class.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSizeReport {
    pub rows: Vec<SetSizeRow>,
}

pub fn set_size_report(sets: &[PredictionSet], num_classes: usize) -> Result<SetSizeReport> {
    let mut rows: Vec<SetSizeRow> = (0..num_classes)
        .map(|forecast| SetSizeRow {
            forecast,
            counts: vec![0; num_classes],
        })
        .collect();
    for set in sets {
        if set.forecast >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: set.forecast,
                classes: num_classes,
            });
        }
        let size = set.len();
        if size == 0 || size > num_classes {
            return Err(Error::InvalidParameter(format!(
                "prediction set of size {size} in a {num_classes}-class report"
            )));
        }
        rows[set.forecast].counts[size - 1] += 1;
    }
    Ok(SetSizeReport { rows })
}

fn size_name(size: usize) -> String {
    const NAMES: [&str; 10] = [
        "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten",
    ];
    NAMES
        .get(size - 1)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Size{size}"))
}

impl SetSizeReport {
    pub fn num_classes(&self) -> usize {
        self.rows.len()
    }

    /// Plain-text table with one row per forecast class, proportions to three digits.
    pub fn to_text(&self) -> String {
        let k = self.num_classes();
        let mut out = format!("{:<10}", "");
        for size in 1..=k {
            let _ = write!(out, "{:>8}", size_name(size));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<10}", format!("Yhat={}", row.forecast));
            for p in row.proportions() {
                let _ = write!(out, "{:>8.3}", p);
            }
            if row.is_empty() {
                out.push_str("  (no cases)");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with header `forecast,n,<size names>,empty`; proportions at full precision.
    pub fn to_csv(&self) -> String {
        let k = self.num_classes();
        let mut out = String::from("forecast,n");
        for size in 1..=k {
            out.push(',');
            out.push_str(&size_name(size).to_ascii_lowercase());
        }
        out.push_str(",empty\n");
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.forecast, row.total());
            for p in row.proportions() {
                let _ = write!(out, ",{p}");
            }
            let _ = writeln!(out, ",{}", row.is_empty());
        }
        out
    }
}
