//! Prediction CSV: `id,forecast,set,set_size,gamma_used`.

use std::fmt::Write as _;
use std::path::Path;

use conformal_core::PredictionSet;

use crate::CliError;

pub const HEADER: &str = "id,forecast,set,set_size,gamma_used";

pub fn to_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a PredictionSet)>) -> String {
    let mut out = format!("{HEADER}\n");
    for (id, set) in rows {
        let _ = writeln!(
            out,
            "{id},{},{},{},{}",
            set.forecast,
            set.to_label_list(),
            set.len(),
            set.threshold
        );
    }
    out
}

/// One parsed prediction row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub forecast: usize,
    pub members: Vec<usize>,
    pub gamma: f64,
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<PredictionRow>, CliError> {
    let err = |line: usize, msg: String| CliError::input(format!("{}: line {line}: {msg}", path.display()));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        Some(h) => return Err(err(1, format!("header must be `{HEADER}`, found `{}`", h.trim()))),
        None => return Err(err(1, "empty prediction file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let index = |s: &str, what: &str| -> Result<usize, CliError> {
            s.parse().map_err(|_| err(line_no, format!("{what} `{s}` is not a class index")))
        };
        let forecast = index(fields[1], "forecast")?;
        let members = if fields[2].is_empty() {
            Vec::new()
        } else {
            fields[2].split(';').map(|m| index(m, "set member")).collect::<Result<Vec<_>, _>>()?
        };
        let size: usize = fields[3]
            .parse()
            .map_err(|_| err(line_no, format!("set_size `{}` is not a count", fields[3])))?;
        if size != members.len() {
            return Err(err(line_no, format!("set_size {size} but set has {} members", members.len())));
        }
        let gamma: f64 = fields[4]
            .parse()
            .map_err(|_| err(line_no, format!("gamma_used `{}` is not a number", fields[4])))?;
        rows.push(PredictionRow {
            id: fields[0].to_string(),
            forecast,
            members,
            gamma,
        });
    }
    Ok(rows)
}
