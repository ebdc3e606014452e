//! Plain-text calibration file.
//!
//! ```text
//! format: confset-calibration
//! version: 1
//! method: nested
//! classes: 3
//! alpha: 0.3
//! n: 4
//! k: 4
//! gamma_hat: 0.5
//! nonconformity_threshold: 0.5
//! full_set: false
//! ```
//!
//! Localized files replace the last five lines with `n` (the total) and one
//! `partition.<j>.{n,k,gamma_hat,status}` block per forecast class. Keys are
//! written in a fixed order and reals in shortest round-trip form, so equal
//! calibrations serialize to identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::conformal::{CalibrationModel, ConformityScores, Method, PredictionSet, nested_set};
use crate::data::write_file;
use crate::error::{Error, Result};
use crate::localized::{localized_set, LocalizedCalibration};

const MAGIC: &str = "confset-calibration";
pub const CALIBRATION_FORMAT_VERSION: u32 = 1;

/// A fitted calibration of either kind, with its label-space size.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Nested { classes: usize, model: CalibrationModel },
    Localized(LocalizedCalibration),
}

impl Calibration {
    pub fn method(&self) -> Method {
        match self {
            Calibration::Nested { .. } => Method::Nested,
            Calibration::Localized(_) => Method::Localized,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Calibration::Nested { classes, .. } => *classes,
            Calibration::Localized(loc) => loc.num_classes(),
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Calibration::Nested { model, .. } => model.alpha(),
            Calibration::Localized(loc) => loc.alpha(),
        }
    }

    /// Prediction set for already-scored input.
    pub fn predict(&self, scores: &ConformityScores) -> Result<PredictionSet> {
        if scores.num_classes() != self.num_classes() {
            return Err(Error::ClassCountMismatch {
                expected: self.num_classes(),
                actual: scores.num_classes(),
            });
        }
        match self {
            Calibration::Nested { model, .. } => Ok(nested_set(scores, model.gamma_hat(), model.alpha())),
            Calibration::Localized(loc) => localized_set(scores, loc),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("format: {MAGIC}\nversion: {CALIBRATION_FORMAT_VERSION}\n");
        let _ = writeln!(out, "method: {}", self.method());
        let _ = writeln!(out, "classes: {}", self.num_classes());
        let _ = writeln!(out, "alpha: {}", self.alpha());
        match self {
            Calibration::Nested { model, .. } => {
                let _ = writeln!(out, "n: {}", model.n_cal());
                let _ = writeln!(out, "k: {}", model.k());
                let _ = writeln!(out, "gamma_hat: {}", model.gamma_hat());
                let _ = writeln!(out, "nonconformity_threshold: {}", model.nonconformity_threshold());
                let _ = writeln!(out, "full_set: {}", model.is_full_set_regime());
            }
            Calibration::Localized(loc) => {
                let _ = writeln!(out, "n: {}", loc.total_size());
                for (j, p) in loc.partitions().iter().enumerate() {
                    let _ = writeln!(out, "partition.{j}.n: {}", p.n_cal());
                    let _ = writeln!(out, "partition.{j}.k: {}", p.k());
                    let _ = writeln!(out, "partition.{j}.gamma_hat: {}", p.gamma_hat());
                    let status = loc.status(j).map(|s| s.as_str()).unwrap_or("ok");
                    let _ = writeln!(out, "partition.{j}.status: {status}");
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(path, line_no, "expected `key: value`"))?;
            fields.insert(key.trim().to_string(), (line_no, value.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, &str)> {
            fields
                .get(key)
                .map(|(l, v)| (*l, v.as_str()))
                .ok_or_else(|| Error::parse(path, 0, format!("missing key `{key}`")))
        };
        let number = |key: &str| -> Result<usize> {
            let (line, v) = get(key)?;
            v.parse()
                .map_err(|_| Error::parse(path, line, format!("`{key}` must be an integer")))
        };
        let real = |key: &str| -> Result<f64> {
            let (line, v) = get(key)?;
            v.parse()
                .map_err(|_| Error::parse(path, line, format!("`{key}` must be a number")))
        };

        if get("format")?.1 != MAGIC {
            return Err(Error::parse(path, 1, format!("not a `{MAGIC}` file")));
        }
        if number("version")? != CALIBRATION_FORMAT_VERSION as usize {
            return Err(Error::parse(path, 2, "unsupported calibration format version"));
        }
        let classes = number("classes")?;
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        let alpha = real("alpha")?;
        let (method_line, method) = get("method")?;
        let wrap = |line: usize, e: Error| Error::parse(path, line, e.to_string());
        match method.parse::<Method>().map_err(|e| wrap(method_line, e))? {
            Method::Nested => {
                let model = CalibrationModel::from_parts(real("gamma_hat")?, alpha, number("n")?, number("k")?)
                    .map_err(|e| wrap(0, e))?;
                Ok(Calibration::Nested { classes, model })
            }
            Method::Localized => {
                let partitions = (0..classes)
                    .map(|j| {
                        CalibrationModel::from_parts(
                            real(&format!("partition.{j}.gamma_hat"))?,
                            alpha,
                            number(&format!("partition.{j}.n"))?,
                            number(&format!("partition.{j}.k"))?,
                        )
                        .map_err(|e| wrap(0, e))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let loc = LocalizedCalibration::from_models(partitions)?;
                if let Ok(total) = number("n") {
                    if total != loc.total_size() {
                        return Err(Error::parse(path, 0, "partition sizes do not sum to `n`"));
                    }
                }
                Ok(Calibration::Localized(loc))
            }
            other => Err(Error::parse(
                path,
                method_line,
                format!("method `{other}` has no calibration file"),
            )),
        }
    }
}
