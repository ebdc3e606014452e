//! Datasets and probability tables, and their CSV formats.
//!
//! * dataset: header `id,y,x_1,...,x_d`, `y` an integer class index
//! * probabilities: header `id,p_0,...,p_{K-1}`
//!
//! Both are UTF-8 with a decimal dot, one row per case. Reals are written with
//! the shortest representation that round-trips, so write → read is lossless.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::distribution::{ClassDistribution, LabeledCase};
use crate::error::{Error, Result};

/// A set of labeled cases with row ids and a fixed feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub cases: Vec<LabeledCase>,
    dim: usize,
}

impl Dataset {
    pub fn new(ids: Vec<String>, cases: Vec<LabeledCase>) -> Result<Self> {
        if ids.len() != cases.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ids for {} cases",
                ids.len(),
                cases.len()
            )));
        }
        let dim = cases.first().map_or(0, |c| c.features.len());
        if let Some(bad) = cases.iter().find(|c| c.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.features.len(),
            });
        }
        check_unique(&ids)?;
        Ok(Self { ids, cases, dim })
    }

    /// Cases numbered `0..n` as ids.
    pub fn from_cases(cases: Vec<LabeledCase>) -> Result<Self> {
        let ids = (0..cases.len()).map(|i| i.to_string()).collect();
        Self::new(ids, cases)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> Vec<usize> {
        self.cases.iter().map(|c| c.outcome).collect()
    }

    /// Largest outcome index plus one.
    pub fn observed_classes(&self) -> usize {
        self.cases.iter().map(|c| c.outcome + 1).max().unwrap_or(0)
    }

    /// Rows selected by position, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            cases: rows.iter().map(|&i| self.cases[i].clone()).collect(),
            dim: self.dim,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,y");
        for j in 1..=self.dim {
            let _ = write!(out, ",x_{j}");
        }
        out.push('\n');
        for (id, case) in self.ids.iter().zip(&self.cases) {
            let _ = write!(out, "{id},{}", case.outcome);
            for x in &case.features {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidParameter(format!("duplicate id `{id}`")));
        }
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<String> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_real(path: &Path, line: usize, column: &str, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line, format!("column `{column}`: `{field}` is not a number")))
}

/// Reads a dataset CSV. With `classes` given, outcomes must lie in `0..classes`.
pub fn load_dataset(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_dataset(&open(path)?, path, classes)
}

pub fn parse_dataset(text: &str, path: &Path, classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv_reader(text);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let id_col = headers
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| Error::parse(path, 1, "missing id column `id`"))?;
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::parse(path, 1, "missing outcome column `y`"))?;
    let mut x_cols = Vec::new();
    for j in 1.. {
        match headers.iter().position(|h| h == format!("x_{j}")) {
            Some(c) => x_cols.push(c),
            None => break,
        }
    }
    let known = 2 + x_cols.len();
    if headers.len() != known {
        return Err(Error::parse(
            path,
            1,
            "unexpected columns: header must be `id,y,x_1,...,x_d`",
        ));
    }

    let mut ids = Vec::new();
    let mut cases = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let id = record[id_col].to_string();
        let outcome: usize = record[y_col].parse().map_err(|_| {
            Error::parse(path, line, format!("outcome `{}` is not a class index", &record[y_col]))
        })?;
        if let Some(k) = classes {
            if outcome >= k {
                return Err(Error::parse(
                    path,
                    line,
                    format!("outcome {outcome} out of range for {k} classes"),
                ));
            }
        }
        let features = x_cols
            .iter()
            .map(|&c| {
                let v = parse_real(path, line, &headers[c], &record[c])?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(path, line, format!("column `{}` is not finite", &headers[c])))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        cases.push(LabeledCase { features, outcome });
    }
    let dataset = Dataset::new(ids, cases).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(dataset)
}

/// Where the rows of a [`ProbabilityTable`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableSource {
    Internal,
    External,
}

/// Estimated class distributions keyed by case id.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    classes: usize,
    ids: Vec<String>,
    rows: Vec<ClassDistribution>,
    pub source: TableSource,
}

impl ProbabilityTable {
    pub fn new(
        classes: usize,
        ids: Vec<String>,
        rows: Vec<ClassDistribution>,
        source: TableSource,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        if ids.len() != rows.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.num_classes() != classes) {
            return Err(Error::ClassCountMismatch {
                expected: classes,
                actual: bad.num_classes(),
            });
        }
        check_unique(&ids)?;
        Ok(Self {
            classes,
            ids,
            rows,
            source,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> &[ClassDistribution] {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ClassDistribution)> {
        self.ids.iter().map(String::as_str).zip(&self.rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for c in 0..self.classes {
            let _ = write!(out, ",p_{c}");
        }
        out.push('\n');
        for (id, row) in self.iter() {
            out.push_str(id);
            for p in row.probs() {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }
}

/// Reads a probability CSV for a `classes`-class label space.
pub fn load_probability_table(path: impl AsRef<Path>, classes: usize) -> Result<ProbabilityTable> {
    let path = path.as_ref();
    parse_probability_table(&open(path)?, path, classes)
}

pub fn parse_probability_table(text: &str, path: &Path, classes: usize) -> Result<ProbabilityTable> {
    let mut reader = csv_reader(text);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((0..classes).map(|c| format!("p_{c}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(
            path,
            1,
            format!(
                "header must be `{}` for {classes} classes, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id `{id}`")));
        }
        let probs = (1..=classes)
            .map(|c| parse_real(path, line, &headers[c], &record[c]))
            .collect::<Result<Vec<f64>>>()?;
        let dist = ClassDistribution::new(probs).map_err(|e| Error::parse(path, line, e.to_string()))?;
        ids.push(id);
        rows.push(dist);
    }
    ProbabilityTable::new(classes, ids, rows, TableSource::External)
}

/// Outcome of every row of `table`, looked up by id in `dataset`.
pub fn outcomes_for(table: &ProbabilityTable, dataset: &Dataset) -> Result<Vec<usize>> {
    let index: std::collections::HashMap<&str, usize> = dataset
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    table
        .ids()
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .map(|&i| dataset.cases[i].outcome)
                .ok_or_else(|| Error::InvalidParameter(format!("no outcome for id `{id}`")))
        })
        .collect()
}

/// Placeholder path used when parsing in-memory text.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_probs(text: &str, k: usize) -> Result<ProbabilityTable> {
        parse_probability_table(text, &memory_path(), k)
    }

    #[test]
    fn single_row_table() {
        let t = parse_probs("id,p_0,p_1,p_2\n1,0.43,0.35,0.22\n", 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.ids(), &["1".to_string()]);
        assert_eq!(t.rows()[0].probs(), &[0.43, 0.35, 0.22]);
        assert_eq!(t.source, TableSource::External);
    }

    #[test]
    fn bad_row_reports_line() {
        let err = parse_probs("id,p_0,p_1,p_2\n1,0.43,0.35,0.22\n2,0.4,0.2,0.2\n", 3).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let t = parse_probs("id,p_0,p_1,p_2\n", 3).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn duplicate_ids_and_wrong_header() {
        let dup = "id,p_0,p_1\na,0.5,0.5\na,0.4,0.6\n";
        assert!(matches!(parse_probs(dup, 2), Err(Error::Parse { line: 3, .. })));
        assert!(parse_probs("id,p_0,p_1\n", 3).is_err());
        assert!(parse_probs("id,q_0,p_1\n", 2).is_err());
    }

    #[test]
    fn probability_round_trip() {
        let rows = vec![
            ClassDistribution::new(vec![0.1, 0.2, 0.7]).unwrap(),
            ClassDistribution::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        ];
        let t = ProbabilityTable::new(3, vec!["a".into(), "b".into()], rows, TableSource::Internal)
            .unwrap();
        let back = parse_probs(&t.to_csv(), 3).unwrap();
        assert_eq!(back.rows(), t.rows());
        assert_eq!(back.ids(), t.ids());
    }

    #[test]
    fn dataset_parsing() {
        let text = "id,y,x_1,x_2\n7,0,1.5,-2\n8,2,0.25,3e-1\n";
        let d = parse_dataset(text, &memory_path(), Some(3)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.cases[1].features, vec![0.25, 0.3]);
        assert_eq!(d.outcomes(), vec![0, 2]);
        let back = parse_dataset(&d.to_csv(), &memory_path(), None).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn dataset_errors_name_the_problem() {
        let err = parse_dataset("id,x_1\n1,0.5\n", &memory_path(), None).unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
        let err = parse_dataset("id,y\n1,3\n", &memory_path(), Some(3)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_dataset("id,y,x_1\n1,0,abc\n", &memory_path(), None).unwrap_err();
        assert!(err.to_string().contains("x_1"));
        // outcomes-only file
        let d = parse_dataset("id,y\n1,0\n2,1\n", &memory_path(), None).unwrap();
        assert_eq!(d.dim(), 0);
    }

    #[test]
    fn outcome_lookup_by_id() {
        let t = parse_probs("id,p_0,p_1\nb,0.5,0.5\na,0.9,0.1\n", 2).unwrap();
        let d = parse_dataset("id,y\na,1\nb,0\n", &memory_path(), None).unwrap();
        assert_eq!(outcomes_for(&t, &d).unwrap(), vec![0, 1]);
        let d = parse_dataset("id,y\na,1\n", &memory_path(), None).unwrap();
        assert!(outcomes_for(&t, &d).is_err());
    }
}
