//! Confusion tables, error decompositions, coverage and score histograms.

use std::fmt::Write as _;

use crate::conformal::PredictionSet;
use crate::error::{Error, Result};

/// `K × K` counts indexed `(actual, predicted)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTable {
    counts: Vec<Vec<u64>>,
}

impl ConfusionTable {
    pub fn zeros(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        Ok(Self {
            counts: vec![vec![0; classes]; classes],
        })
    }

    /// Wraps precomputed counts; rows are actual classes.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::ClassCountMismatch {
                expected: k,
                actual: row.len(),
            });
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, actual: usize) -> u64 {
        self.counts[actual].iter().sum()
    }

    pub fn column_total(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|row| row[predicted]).sum()
    }

    fn check(&self, class: usize) -> Result<()> {
        if class < self.counts.len() {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange {
                label: class,
                classes: self.counts.len(),
            })
        }
    }

    /// Share of the actual class that was forecast as something else.
    pub fn classification_error(&self, class: usize) -> Result<f64> {
        self.check(class)?;
        let total = self.row_total(class);
        if total == 0 {
            return Err(Error::UndefinedRate(format!("no cases with actual class {class}")));
        }
        Ok((total - self.counts[class][class]) as f64 / total as f64)
    }

    /// Share of forecasts of the class that were wrong.
    pub fn forecasting_error(&self, class: usize) -> Result<f64> {
        self.check(class)?;
        let total = self.column_total(class);
        if total == 0 {
            return Err(Error::UndefinedRate(format!("no cases forecast as class {class}")));
        }
        Ok((total - self.counts[class][class]) as f64 / total as f64)
    }

    /// `counts[a][p] / counts[b][q]`.
    pub fn empirical_cost_ratio(
        &self,
        actual_a: usize,
        pred_p: usize,
        actual_b: usize,
        pred_q: usize,
    ) -> Result<f64> {
        for c in [actual_a, pred_p, actual_b, pred_q] {
            self.check(c)?;
        }
        let denominator = self.counts[actual_b][pred_q];
        if denominator == 0 {
            return Err(Error::UndefinedRate(format!(
                "cost ratio denominator count[{actual_b}][{pred_q}] is zero"
            )));
        }
        Ok(self.counts[actual_a][pred_p] as f64 / denominator as f64)
    }

    /// Share of cases in each actual class.
    pub fn marginal_distribution(&self) -> Vec<f64> {
        let total = self.total();
        (0..self.counts.len())
            .map(|a| {
                if total == 0 {
                    0.0
                } else {
                    self.row_total(a) as f64 / total as f64
                }
            })
            .collect()
    }

    /// Overall share of off-diagonal cases.
    pub fn error_rate(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::UndefinedRate("empty confusion table".into()));
        }
        let diagonal: u64 = (0..self.counts.len()).map(|c| self.counts[c][c]).sum();
        Ok((total - diagonal) as f64 / total as f64)
    }

    pub fn error_report(&self) -> ErrorReport {
        let k = self.counts.len();
        let mut cost_ratios = Vec::with_capacity(k * (k - 1));
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    cost_ratios.push(CostRatio {
                        numerator: (a, b),
                        denominator: (b, a),
                        ratio: self.empirical_cost_ratio(a, b, b, a).ok(),
                    });
                }
            }
        }
        ErrorReport {
            classification: (0..k).map(|c| self.classification_error(c).ok()).collect(),
            forecasting: (0..k).map(|c| self.forecasting_error(c).ok()).collect(),
            cost_ratios,
            marginal: self.marginal_distribution(),
        }
    }

    /// Table-1 style layout: counts with classification errors on the right
    /// margin and forecasting errors on the bottom margin, two decimals.
    pub fn to_text(&self) -> String {
        let k = self.counts.len();
        let report = self.error_report();
        let mut out = format!("{:<12}", "actual\\pred");
        for p in 0..k {
            let _ = write!(out, "{:>10}", p);
        }
        let _ = writeln!(out, "{:>12}", "class_err");
        for a in 0..k {
            let _ = write!(out, "{:<12}", a);
            for p in 0..k {
                let _ = write!(out, "{:>10}", self.counts[a][p]);
            }
            let _ = writeln!(out, "{:>12}", fmt_rate(report.classification[a]));
        }
        let _ = write!(out, "{:<12}", "forecast_err");
        for p in 0..k {
            let _ = write!(out, "{:>10}", fmt_rate(report.forecasting[p]));
        }
        out.push('\n');
        out
    }

    /// Long-format CSV `actual,predicted,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual,predicted,count\n");
        for (a, row) in self.counts.iter().enumerate() {
            for (p, c) in row.iter().enumerate() {
                let _ = writeln!(out, "{a},{p},{c}");
            }
        }
        out
    }
}

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "NA".into())
}

fn fmt_full(rate: Option<f64>) -> String {
    rate.map(|r| r.to_string()).unwrap_or_else(|| "NA".into())
}

pub fn build_confusion(
    cases: impl IntoIterator<Item = (usize, usize)>,
    classes: usize,
) -> Result<ConfusionTable> {
    let mut table = ConfusionTable::zeros(classes)?;
    for (actual, forecast) in cases {
        table.check(actual)?;
        table.check(forecast)?;
        table.counts[actual][forecast] += 1;
    }
    Ok(table)
}

/// Off-diagonal count ratio `counts[a][b] / counts[b][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRatio {
    pub numerator: (usize, usize),
    pub denominator: (usize, usize),
    /// `None` when the denominator count is zero.
    pub ratio: Option<f64>,
}

/// Rates derived from a confusion table, at full precision.
/// Undefined rates (empty row or column) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub classification: Vec<Option<f64>>,
    pub forecasting: Vec<Option<f64>>,
    pub cost_ratios: Vec<CostRatio>,
    pub marginal: Vec<f64>,
}

impl ErrorReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("class  class_err  forecast_err  marginal\n");
        for c in 0..self.classification.len() {
            let _ = writeln!(
                out,
                "{:<6} {:>9}  {:>12}  {:>8.3}",
                c,
                fmt_rate(self.classification[c]),
                fmt_rate(self.forecasting[c]),
                self.marginal[c]
            );
        }
        out.push_str("cost ratios (actual>pred / actual>pred)\n");
        for r in &self.cost_ratios {
            let _ = writeln!(
                out,
                "  {}>{} / {}>{} = {}",
                r.numerator.0,
                r.numerator.1,
                r.denominator.0,
                r.denominator.1,
                r.ratio.map(|v| format!("{v:.2}")).unwrap_or_else(|| "NA".into())
            );
        }
        out
    }

    /// CSV with one row per class, then one row per cost ratio.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,a,b,value\n");
        for (c, rate) in self.classification.iter().enumerate() {
            let _ = writeln!(out, "classification_error,{c},,{}", fmt_full(*rate));
        }
        for (c, rate) in self.forecasting.iter().enumerate() {
            let _ = writeln!(out, "forecasting_error,{c},,{}", fmt_full(*rate));
        }
        for (c, share) in self.marginal.iter().enumerate() {
            let _ = writeln!(out, "marginal,{c},,{share}");
        }
        for r in &self.cost_ratios {
            let _ = writeln!(
                out,
                "cost_ratio,{}>{},{}>{},{}",
                r.numerator.0,
                r.numerator.1,
                r.denominator.0,
                r.denominator.1,
                fmt_full(r.ratio)
            );
        }
        out
    }
}

/// Fraction of cases whose observed class lies in its prediction set.
pub fn empirical_coverage<'a>(
    cases: impl IntoIterator<Item = (&'a PredictionSet, usize)>,
) -> Result<f64> {
    let mut n = 0usize;
    let mut covered = 0usize;
    for (set, actual) in cases {
        n += 1;
        covered += set.contains(actual) as usize;
    }
    if n == 0 {
        return Err(Error::EmptyInput("coverage"));
    }
    Ok(covered as f64 / n as f64)
}

/// Coverage count for a group of cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoverageTally {
    pub n: usize,
    pub covered: usize,
}

impl CoverageTally {
    pub fn coverage(&self) -> Option<f64> {
        (self.n > 0).then(|| self.covered as f64 / self.n as f64)
    }
}

/// Coverage counts grouped by the forecast class recorded on each set.
pub fn coverage_by_forecast<'a>(
    cases: impl IntoIterator<Item = (&'a PredictionSet, usize)>,
    classes: usize,
) -> Vec<CoverageTally> {
    let mut tallies = vec![CoverageTally::default(); classes];
    for (set, actual) in cases {
        if let Some(t) = tallies.get_mut(set.forecast) {
            t.n += 1;
            t.covered += set.contains(actual) as usize;
        }
    }
    tallies
}

/// Error of always forecasting the most frequent class: `1 − max share`.
pub fn majority_baseline_error(outcomes: &[usize], classes: usize) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("baseline"));
    }
    let mut counts = vec![0usize; classes];
    for &y in outcomes {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        counts[y] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    Ok(1.0 - max as f64 / outcomes.len() as f64)
}

/// Fixed-width histogram of non-conformity scores `1 − s` over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    /// Inputs discarded because they were NaN or outside `[0, 1]`.
    pub dropped: usize,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// No score survived filtering.
    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        let width = 1.0 / self.counts.len() as f64;
        (0..self.counts.len())
            .map(|i| (i as f64 * width, (i + 1) as f64 * width))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for ((lo, hi), c) in self.bin_edges().into_iter().zip(&self.counts) {
            let _ = writeln!(out, "{lo},{hi},{c}");
        }
        out
    }
}

/// Bins `1 − s` for each conformity score `s`; bin `i` covers
/// `[i/bins, (i+1)/bins)` and the last bin also takes 1.
pub fn nonconformity_histogram(scores: &[f64], bins: usize) -> Result<Histogram> {
    if bins < 1 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    let mut dropped = 0;
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            dropped += 1;
            continue;
        }
        let v = 1.0 - s;
        let bin = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { counts, dropped })
}
