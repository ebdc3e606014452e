//! Reference probability estimator: cost-weighted multinomial logistic regression.
//!
//! Any classifier can feed the conformal engine through a probability CSV; this
//! model exists so the pipeline is usable end to end without one. Training
//! minimizes the weighted negative log-likelihood
//!
//! ```text
//! L(θ) = Σ_i w[y_i] · (−log softmax(θ x̃_i)[y_i]) / Σ_i w[y_i]
//! ```
//!
//! with `x̃ = (1, x)` and the class-0 row of `θ` pinned to zero, by full-batch
//! gradient descent with Armijo backtracking. Normalizing by the total weight
//! makes the objective invariant to rescaling all weights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{write_file, Dataset, ProbabilityTable, TableSource};
use crate::distribution::ClassDistribution;
use crate::error::{Error, Result};
use crate::metrics::{build_confusion, ConfusionTable};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "confset-softmax";

/// Relative cost of misclassifying each true class.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights(Vec<f64>);

impl CostWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewClasses(weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cost weights must be positive and finite, got {w}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn ones(classes: usize) -> Result<Self> {
        Self::new(vec![1.0; classes])
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Comma-separated, as accepted on the command line.
    pub fn parse(text: &str) -> Result<Self> {
        let weights = text
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad weight `{w}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::new(weights)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop once the largest absolute gradient entry falls below this.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            gradient_tolerance: 1e-6,
            initial_step: 1.0,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// Training trace kept with a fitted model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingInfo {
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    /// `(iteration, loss)` at iteration 0, powers of two, and the last iteration.
    pub loss_curve: Vec<(usize, f64)>,
}

/// Linear softmax model with `K × (d + 1)` coefficients, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    classes: usize,
    dim: usize,
    coefficients: Vec<f64>,
    trained: bool,
    pub info: TrainingInfo,
}

impl SoftmaxModel {
    /// All-zero, untrained model.
    pub fn new(classes: usize, dim: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        Ok(Self {
            classes,
            dim,
            coefficients: vec![0.0; classes * (dim + 1)],
            trained: false,
            info: TrainingInfo::default(),
        })
    }

    /// Model with fixed coefficients, usable for prediction. Rows are classes,
    /// each `[intercept, x_1, ..., x_d]`.
    pub fn from_coefficients(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.len();
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(Error::InvalidParameter("coefficient rows need an intercept".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width - 1,
                actual: r.len().saturating_sub(1),
            });
        }
        let coefficients: Vec<f64> = rows.into_iter().flatten().collect();
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(Self {
            classes,
            dim: width - 1,
            coefficients,
            trained: true,
            info: TrainingInfo::default(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn row(&self, class: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.coefficients[class * w..(class + 1) * w]
    }

    /// Versioned text format: one header line, then one comma-separated
    /// coefficient row per class.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MODEL_MAGIC} version={MODEL_FORMAT_VERSION} classes={} dim={}\n",
            self.classes, self.dim
        );
        for k in 0..self.classes {
            let row: Vec<String> = self.row(k).iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
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
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty model file"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MODEL_MAGIC) {
            return Err(Error::parse(path, 1, format!("not a `{MODEL_MAGIC}` model file")));
        }
        let (mut version, mut classes, mut dim) = (None, None, None);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("bad header field `{field}`")))?;
            let value: usize = value
                .parse()
                .map_err(|_| Error::parse(path, 1, format!("bad header value `{field}`")))?;
            match key {
                "version" => version = Some(value),
                "classes" => classes = Some(value),
                "dim" => dim = Some(value),
                _ => return Err(Error::parse(path, 1, format!("unknown header key `{key}`"))),
            }
        }
        if version != Some(MODEL_FORMAT_VERSION as usize) {
            return Err(Error::parse(path, 1, "unsupported or missing model format version"));
        }
        let classes = classes.ok_or_else(|| Error::parse(path, 1, "missing `classes`"))?;
        let dim = dim.ok_or_else(|| Error::parse(path, 1, "missing `dim`"))?;
        let mut rows = Vec::with_capacity(classes);
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path, i + 2, format!("bad coefficient `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != dim + 1 {
                return Err(Error::parse(
                    path,
                    i + 2,
                    format!("expected {} coefficients, found {}", dim + 1, row.len()),
                ));
            }
            rows.push(row);
        }
        if rows.len() != classes {
            return Err(Error::parse(
                path,
                rows.len() + 1,
                format!("expected {classes} coefficient rows, found {}", rows.len()),
            ));
        }
        Self::from_coefficients(rows).map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Linear scores `θ_k · (1, x)` written into `out`.
fn scores_into(coef: &[f64], classes: usize, x: &[f64], out: &mut [f64]) {
    let w = x.len() + 1;
    for k in 0..classes {
        let row = &coef[k * w..(k + 1) * w];
        let mut z = row[0];
        for (c, v) in row[1..].iter().zip(x) {
            z += c * v;
        }
        out[k] = z;
    }
}

/// In-place softmax; returns `log Σ exp(z)`.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

pub fn predict_proba(model: &SoftmaxModel, features: &[f64]) -> Result<ClassDistribution> {
    if !model.trained {
        return Err(Error::Untrained);
    }
    if features.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: features.len(),
        });
    }
    let mut z = vec![0.0; model.classes];
    scores_into(&model.coefficients, model.classes, features, &mut z);
    softmax_in_place(&mut z);
    let sum: f64 = z.iter().sum();
    for p in z.iter_mut() {
        *p = (*p / sum).clamp(0.0, 1.0);
    }
    ClassDistribution::new(z)
}

/// Predicted distributions for every case of `data`, keyed by its ids.
pub fn predict_table(model: &SoftmaxModel, data: &Dataset) -> Result<ProbabilityTable> {
    let rows = data
        .cases
        .iter()
        .map(|c| predict_proba(model, &c.features))
        .collect::<Result<Vec<_>>>()?;
    ProbabilityTable::new(model.classes, data.ids.clone(), rows, TableSource::Internal)
}

/// Weighted loss and (optionally) its gradient over the free rows `1..K`.
struct Objective<'a> {
    data: &'a Dataset,
    case_weights: Vec<f64>,
    total_weight: f64,
    classes: usize,
}

impl Objective<'_> {
    fn loss(&self, coef: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let k = self.classes;
        let w = self.data.dim() + 1;
        let mut z = vec![0.0; k];
        let mut loss = 0.0;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (case, &cw) in self.data.cases.iter().zip(&self.case_weights) {
            scores_into(coef, k, &case.features, &mut z);
            let observed = z[case.outcome];
            let log_norm = softmax_in_place(&mut z);
            loss += cw * (log_norm - observed);
            if let Some(g) = grad.as_deref_mut() {
                for class in 1..k {
                    let residual = cw * (z[class] - (class == case.outcome) as u8 as f64);
                    let row = &mut g[class * w..(class + 1) * w];
                    row[0] += residual;
                    for (gj, x) in row[1..].iter_mut().zip(&case.features) {
                        *gj += residual * x;
                    }
                }
            }
        }
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v /= self.total_weight);
        }
        loss / self.total_weight
    }
}

/// Fits a [`SoftmaxModel`] by weighted maximum likelihood.
///
/// The number of classes is taken from `weights`; every class must occur in
/// `data`. Deterministic for a given data order and configuration.
pub fn train_softmax(data: &Dataset, weights: &CostWeights, config: &TrainConfig) -> Result<SoftmaxModel> {
    let classes = weights.num_classes();
    if data.is_empty() {
        return Err(Error::EmptyInput("training"));
    }
    let mut seen = vec![false; classes];
    for case in &data.cases {
        if case.outcome >= classes {
            return Err(Error::LabelOutOfRange {
                label: case.outcome,
                classes,
            });
        }
        seen[case.outcome] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::DegenerateData(format!("class {missing} does not occur")));
    }

    let case_weights: Vec<f64> = data
        .cases
        .iter()
        .map(|c| weights.as_slice()[c.outcome])
        .collect();
    let total_weight = case_weights.iter().sum();
    let objective = Objective {
        data,
        case_weights,
        total_weight,
        classes,
    };

    let mut model = SoftmaxModel::new(classes, data.dim())?;
    let n_coef = model.coefficients.len();
    let mut grad = vec![0.0; n_coef];
    let mut candidate = vec![0.0; n_coef];
    let mut loss = objective.loss(&model.coefficients, Some(&mut grad));
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut curve = vec![(0, loss)];
    let mut step = config.initial_step;
    let mut iteration = 0;
    let mut grad_norm = max_abs(&grad);

    while grad_norm >= config.gradient_tolerance && iteration < config.max_iterations {
        iteration += 1;
        let sq_norm: f64 = grad.iter().map(|g| g * g).sum();
        let mut accepted = None;
        while step > 1e-16 {
            for ((c, &theta), &g) in candidate.iter_mut().zip(&model.coefficients).zip(&grad) {
                *c = theta - step * g;
            }
            let trial = objective.loss(&candidate, None);
            if !trial.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            if trial <= loss - config.armijo * step * sq_norm {
                accepted = Some(trial);
                break;
            }
            step *= config.backtrack;
        }
        if accepted.is_none() {
            // no decrease representable at this precision
            break;
        }
        std::mem::swap(&mut model.coefficients, &mut candidate);
        loss = objective.loss(&model.coefficients, Some(&mut grad));
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        grad_norm = max_abs(&grad);
        if iteration.is_power_of_two() {
            curve.push((iteration, loss));
        }
        step = (step * 2.0).min(1e6);
    }
    if curve.last().map(|c| c.0) != Some(iteration) {
        curve.push((iteration, loss));
    }
    model.trained = true;
    model.info = TrainingInfo {
        iterations: iteration,
        final_loss: loss,
        gradient_norm: grad_norm,
        converged: grad_norm < config.gradient_tolerance,
        loss_curve: curve,
    };
    Ok(model)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Confusion table of argmax forecasts of `model` on `data`.
pub fn confusion_on(model: &SoftmaxModel, data: &Dataset) -> Result<ConfusionTable> {
    let pairs = data
        .cases
        .iter()
        .map(|c| Ok((c.outcome, predict_proba(model, &c.features)?.argmax())))
        .collect::<Result<Vec<_>>>()?;
    build_confusion(pairs, model.classes)
}

/// Trains once per weight vector and reports the confusion table on `eval`,
/// for tuning weights toward target off-diagonal ratios.
pub fn weight_sweep(
    train: &Dataset,
    eval: &Dataset,
    ladder: &[CostWeights],
    config: &TrainConfig,
) -> Result<Vec<(CostWeights, ConfusionTable)>> {
    ladder
        .iter()
        .map(|w| {
            let model = train_softmax(train, w, config)?;
            Ok((w.clone(), confusion_on(&model, eval)?))
        })
        .collect()
}

/// Mean negative log-likelihood of the observed outcomes under `model`.
pub fn log_loss(model: &SoftmaxModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyInput("log loss"));
    }
    let mut total = 0.0;
    for case in &data.cases {
        let p = predict_proba(model, &case.features)?.prob(case.outcome)?;
        total -= p.max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / data.len() as f64)
}
