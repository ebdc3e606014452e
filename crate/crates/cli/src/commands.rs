use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use conformal_core::data::outcomes_for;
use conformal_core::localized::localized_calibrate;
use conformal_core::metrics::coverage_by_forecast;
use conformal_core::models::{predict_table, weight_sweep};
use conformal_core::simulate::{run_simulation, ProbabilitySource, SimulationConfig};
use conformal_core::synthetic::derive_seed;
use conformal_core::{
    build_confusion, conformity_scores, empirical_coverage, load_dataset,
    load_probability_table, naive_set, oracle_threshold, set_size_report, split, train_softmax,
    Calibration, ConformityScores, CostWeights, Dataset, GeneratorSpec, Method, PredictionSet,
    ProbabilityTable, SoftmaxModel, TableSource, TrainConfig,
};

use crate::config::{ConfigFile, Resolver};
use crate::{predictions, CalibrateArgs, CliError, Common, EvaluateArgs, GenerateArgs, PredictArgs};
use crate::{ProbsArgs, SimulateArgs, SweepArgs, TrainArgs};

type CliResult<T = ()> = Result<T, CliError>;

fn load_config(common: &Common) -> CliResult<ConfigFile> {
    match &common.config {
        Some(path) => ConfigFile::load(path),
        None => Ok(ConfigFile::default()),
    }
}

/// Resolves `--out` and creates the directory.
fn out_dir(r: &mut Resolver, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = r.path("out", flag)?.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_output(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

/// Reads a probability CSV, taking K from its header.
fn load_probs(path: &Path) -> CliResult<ProbabilityTable> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let columns = text.lines().next().map(|h| h.split(',').count()).unwrap_or(0);
    if columns < 3 {
        return Err(CliError::input(format!(
            "{}: line 1: header must be `id,p_0,...,p_{{K-1}}` with K >= 2",
            path.display()
        )));
    }
    Ok(load_probability_table(path, columns - 1)?)
}

/// Probability rows from `--probs`, or from `--model` applied to `--data`.
fn probability_source(
    r: &mut Resolver,
    probs: Option<PathBuf>,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    data_required: bool,
) -> CliResult<(ProbabilityTable, Option<Dataset>)> {
    let probs = r.path("probs", probs)?;
    let model = r.path("model", model)?;
    let data = r.path("data", data)?;
    for p in [&probs, &model, &data].into_iter().flatten() {
        if !p.is_file() {
            return Err(CliError::input(format!("{} does not exist", p.display())));
        }
    }
    match (probs, model) {
        (Some(_), Some(_)) => Err(CliError::input("give either `--probs` or `--model`, not both")),
        (None, None) => Err(CliError::input("missing probabilities: give `--probs` or `--model` with `--data`")),
        (Some(p), None) => {
            let table = load_probs(&p)?;
            let dataset = match data {
                Some(d) => Some(load_dataset(d, Some(table.num_classes()))?),
                None if data_required => return Err(CliError::input("missing required setting `--data`")),
                None => None,
            };
            Ok((table, dataset))
        }
        (None, Some(m)) => {
            let model = SoftmaxModel::load(m)?;
            let d = data.ok_or_else(|| CliError::input("`--model` needs `--data` with features"))?;
            let dataset = load_dataset(d, Some(model.num_classes()))?;
            Ok((predict_table(&model, &dataset)?, Some(dataset)))
        }
    }
}

fn parse_method(text: &str) -> CliResult<Method> {
    text.parse::<Method>().map_err(|e| CliError::input(e.to_string()))
}

fn check_alpha(alpha: f64) -> CliResult<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::input(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn parse_spec(name: &str, n: usize, seed: u64) -> CliResult<GeneratorSpec> {
    match name {
        "default" => Ok(GeneratorSpec::default_with(n, seed)),
        "single-feature" => Ok(GeneratorSpec::single_feature(n, seed)),
        other => Err(CliError::input(format!("unknown generator spec `{other}` (default | single-feature)"))),
    }
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::input(format!("bad {what} value `{v}`"))))
        .collect()
}

pub fn train(a: TrainArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let data_path = r.existing_path("data", a.data)?;
    let weights = r.optional::<String>("weights", a.weights)?;
    let classes = r.optional("classes", a.classes)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        max_iterations: r.or_default("max-iter", a.max_iter, defaults.max_iterations)?,
        gradient_tolerance: r.or_default("tolerance", a.tolerance, defaults.gradient_tolerance)?,
        ..defaults
    };
    let out = out_dir(&mut r, a.common.out)?;

    let weights = weights.map(|w| CostWeights::parse(&w)).transpose()?;
    if let (Some(w), Some(k)) = (&weights, classes) {
        if w.num_classes() != k {
            return Err(CliError::input(format!("{} weights given for {k} classes", w.num_classes())));
        }
    }
    let hint = weights.as_ref().map(|w| w.num_classes()).or(classes);
    let data = load_dataset(&data_path, hint)?;
    let weights = match weights {
        Some(w) => w,
        None => CostWeights::ones(hint.unwrap_or_else(|| data.observed_classes()))?,
    };
    let model = train_softmax(&data, &weights, &config)?;
    let confusion = conformal_core::models::confusion_on(&model, &data)?;

    let info = &model.info;
    let mut report = r.header("train");
    let _ = writeln!(report, "cases: {}", data.len());
    let _ = writeln!(report, "classes: {}", model.num_classes());
    let _ = writeln!(report, "dim: {}", model.dim());
    let _ = writeln!(report, "iterations: {}", info.iterations);
    let _ = writeln!(report, "converged: {}", info.converged);
    let _ = writeln!(report, "final_loss: {:.8}", info.final_loss);
    let _ = writeln!(report, "gradient_norm: {:.3e}", info.gradient_norm);
    report.push_str("\nloss curve (iteration, weighted loss)\n");
    for (it, loss) in &info.loss_curve {
        let _ = writeln!(report, "  {it:>6} {loss:.8}");
    }
    report.push_str("\nheld-in confusion table (rows actual, columns forecast)\n");
    report.push_str(&confusion.to_text());
    report.push('\n');
    report.push_str(&confusion.error_report().to_text());

    write_output(&out.join("model.txt"), &model.to_text())?;
    write_output(&out.join("train_report.txt"), &report)
}

pub fn calibrate(a: CalibrateArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let alpha = check_alpha(r.required("alpha", a.alpha)?)?;
    let method = parse_method(&r.or_default("method", a.method, "nested".to_string())?)?;
    if !matches!(method, Method::Nested | Method::Localized) {
        return Err(CliError::input(format!("method `{method}` needs no calibration")));
    }
    let (table, data) = probability_source(&mut r, a.probs, a.model, a.data, true)?;
    let out = out_dir(&mut r, a.common.out)?;
    let data = data.expect("outcomes are required");
    let outcomes = outcomes_for(&table, &data)?;
    let scores: Vec<ConformityScores> = table.rows().iter().map(conformity_scores).collect();
    let k = table.num_classes();

    let cal = match method {
        Method::Nested => {
            let labeled: Vec<f64> = scores
                .iter()
                .zip(&outcomes)
                .map(|(s, &y)| s.score(y))
                .collect::<Result<_, _>>()?;
            Calibration::Nested {
                classes: k,
                model: conformal_core::calibrate(&labeled, alpha)?,
            }
        }
        _ => Calibration::Localized(localized_calibrate(scores.iter().zip(outcomes.iter().copied()), alpha)?),
    };
    let text = r.header("calibrate") + &cal.to_text();
    write_output(&out.join("calibration.txt"), &text)
}

pub fn predict(a: PredictArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let cal_path = r.path("calibration", a.calibration)?;
    let method = r.optional::<String>("method", a.method)?.map(|m| parse_method(&m)).transpose()?;

    enum Rule {
        Calibrated(Calibration),
        Naive(f64),
        Oracle(f64),
    }
    let rule = match (cal_path, method) {
        (Some(path), m) => {
            if !path.is_file() {
                return Err(CliError::input(format!("{} does not exist", path.display())));
            }
            let cal = Calibration::load(&path)?;
            if let Some(m) = m {
                if m != cal.method() {
                    return Err(CliError::input(format!(
                        "`--method {m}` conflicts with the {} calibration file",
                        cal.method()
                    )));
                }
            }
            Rule::Calibrated(cal)
        }
        (None, Some(Method::Naive)) => Rule::Naive(r.required("gamma", a.gamma)?),
        (None, Some(Method::Oracle)) => Rule::Oracle(check_alpha(r.required("alpha", a.alpha)?)?),
        (None, _) => {
            return Err(CliError::input(
                "missing `--calibration` (or `--method naive --gamma G` / `--method oracle --alpha A`)",
            ))
        }
    };
    let (table, _) = probability_source(&mut r, a.probs, a.model, a.data, false)?;
    let out = out_dir(&mut r, a.common.out)?;

    let sets = table
        .rows()
        .iter()
        .map(|dist| -> CliResult<PredictionSet> {
            Ok(match &rule {
                Rule::Calibrated(cal) => cal.predict(&conformity_scores(dist))?,
                Rule::Naive(gamma) => naive_set(dist, *gamma)?,
                Rule::Oracle(alpha) => oracle_threshold(dist, *alpha)?.1,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let csv = predictions::to_csv(table.ids().iter().map(String::as_str).zip(sets.iter()));
    write_output(&out.join("predictions.csv"), &csv)
}

pub fn evaluate(a: EvaluateArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let pred_path = r.existing_path("predictions", a.predictions)?;
    let data_path = r.existing_path("data", a.data)?;
    let classes = r.optional("classes", a.classes)?;
    let out = out_dir(&mut r, a.common.out)?;

    let text = fs::read_to_string(&pred_path)
        .map_err(|e| CliError::input(format!("{}: {e}", pred_path.display())))?;
    let rows = predictions::parse(&text, &pred_path)?;
    let data = load_dataset(&data_path, classes)?;
    let index: HashMap<&str, usize> = data.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut seen = HashSet::new();
    let mut outcomes = Vec::with_capacity(rows.len());
    for row in &rows {
        if !seen.insert(row.id.as_str()) {
            return Err(CliError::input(format!("duplicate prediction id `{}`", row.id)));
        }
        let i = index
            .get(row.id.as_str())
            .ok_or_else(|| CliError::input(format!("id mismatch: prediction `{}` has no outcome in the data", row.id)))?;
        outcomes.push(data.cases[*i].outcome);
    }
    if rows.len() != data.len() {
        return Err(CliError::input(format!(
            "id mismatch: {} predictions for {} outcome rows",
            rows.len(),
            data.len()
        )));
    }
    if rows.is_empty() {
        return Err(CliError::input("no predictions to evaluate"));
    }
    let largest = rows
        .iter()
        .flat_map(|p| p.members.iter().copied().chain([p.forecast]))
        .chain(outcomes.iter().copied())
        .max()
        .unwrap_or(0);
    let k = classes.unwrap_or((largest + 1).max(2));
    if largest >= k {
        return Err(CliError::input(format!("label {largest} out of range for {k} classes")));
    }
    r.or_default("classes", Some(k), k)?;

    let sets: Vec<PredictionSet> = rows
        .iter()
        .map(|p| PredictionSet::new(p.members.clone(), None, Method::Nested, p.gamma, p.forecast, k))
        .collect();
    let confusion = build_confusion(outcomes.iter().copied().zip(rows.iter().map(|p| p.forecast)), k)?;
    let coverage = empirical_coverage(sets.iter().zip(outcomes.iter().copied()))?;
    let by_forecast = coverage_by_forecast(sets.iter().zip(outcomes.iter().copied()), k);
    let sizes = set_size_report(&sets, k)?;
    let mean_size = sets.iter().map(|s| s.len()).sum::<usize>() as f64 / sets.len() as f64;

    let mut report = r.header("evaluate");
    let _ = writeln!(report, "cases: {}", rows.len());
    let _ = writeln!(report, "coverage: {coverage:.6}");
    let _ = writeln!(report, "mean_set_size: {mean_size:.6}");
    report.push_str("coverage by forecast\n");
    for (j, t) in by_forecast.iter().enumerate() {
        match t.coverage() {
            Some(c) => {
                let _ = writeln!(report, "  Yhat={j}: {c:.6} (n={})", t.n);
            }
            None => {
                let _ = writeln!(report, "  Yhat={j}: NA (n=0)");
            }
        }
    }
    report.push_str("\nconfusion table (rows actual, columns forecast)\n");
    report.push_str(&confusion.to_text());
    report.push('\n');
    report.push_str(&confusion.error_report().to_text());
    report.push_str("\nprediction set sizes by forecast (proportions)\n");
    report.push_str(&sizes.to_text());

    write_output(&out.join("evaluation.txt"), &report)?;
    write_output(&out.join("confusion.csv"), &confusion.to_csv())?;
    write_output(&out.join("errors.csv"), &confusion.error_report().to_csv())?;
    let mut coverage_csv = String::from("forecast,n,covered,coverage\n");
    for (j, t) in by_forecast.iter().enumerate() {
        let c = t.coverage().map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        let _ = writeln!(coverage_csv, "{j},{},{},{c}", t.n, t.covered);
    }
    let _ = writeln!(
        coverage_csv,
        "all,{},{},{coverage}",
        rows.len(),
        by_forecast.iter().map(|t| t.covered).sum::<usize>()
    );
    write_output(&out.join("coverage.csv"), &coverage_csv)?;
    write_output(&out.join("set_sizes.csv"), &sizes.to_csv())
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let alphas = parse_list(&r.or_default("alpha", a.alpha, "0.05,0.1,0.3".to_string())?, "alpha")?;
    for &alpha in &alphas {
        check_alpha(alpha)?;
    }
    let replications = r.or_default("replications", a.replications, 20)?;
    let seed = r.or_default("seed", a.seed, 2021u64)?;
    let n_train = r.or_default("n-train", a.n_train, 5000)?;
    let n_cal = r.or_default("n-cal", a.n_cal, 2000)?;
    let n_test = r.or_default("n-test", a.n_test, 20000)?;
    let spec = parse_spec(&r.or_default("spec", a.spec, "default".to_string())?, 0, seed)?;
    let weights = match r.optional::<String>("weights", a.weights)? {
        Some(w) => CostWeights::parse(&w)?,
        None => CostWeights::ones(spec.num_classes())?,
    };
    let source = match r.or_default("source", a.source, "trained".to_string())?.as_str() {
        "trained" => ProbabilitySource::Trained,
        "true" => ProbabilitySource::TrueProbabilities,
        other => return Err(CliError::input(format!("unknown source `{other}` (trained | true)"))),
    };
    let out = out_dir(&mut r, a.common.out)?;

    let config = SimulationConfig {
        spec,
        n_train,
        n_cal,
        n_test,
        replications,
        alphas,
        master_seed: seed,
        weights,
        train: TrainConfig::default(),
        source,
    };
    config.validate()?;
    let report = run_simulation(&config).map_err(|e| CliError::runtime(format!("simulation failed: {e}")))?;
    write_output(&out.join("simulation.txt"), &(r.header("simulate") + &report.to_text()))
}

pub fn generate(a: GenerateArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let n = r.or_default("n", a.n, 1000)?;
    let seed = r.or_default("seed", a.seed, 1u64)?;
    let spec = parse_spec(&r.or_default("spec", a.spec, "default".to_string())?, n, seed)?;
    let fractions = r
        .optional::<String>("split", a.split)?
        .map(|s| parse_list(&s, "split"))
        .transpose()?;
    let out = out_dir(&mut r, a.common.out)?;

    let (data, truth) = conformal_core::generate(&spec)?;
    write_output(&out.join("data.csv"), &data.to_csv())?;
    write_output(&out.join("truth.csv"), &truth.to_csv())?;
    if let Some(fractions) = fractions {
        let (train, cal, test) = split(&data, &fractions, derive_seed(seed, 1))?;
        for (name, part) in [("train", &train), ("cal", &cal), ("test", &test)] {
            write_output(&out.join(format!("{name}.csv")), &part.to_csv())?;
            let rows = part
                .ids
                .iter()
                .map(|id| {
                    let i: usize = id.parse().expect("generated ids are row indices");
                    truth.rows()[i].clone()
                })
                .collect();
            let part_truth = ProbabilityTable::new(truth.num_classes(), part.ids.clone(), rows, TableSource::External)?;
            write_output(&out.join(format!("{name}_truth.csv")), &part_truth.to_csv())?;
        }
    }
    Ok(())
}

pub fn probs(a: ProbsArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let model_path = r.existing_path("model", a.model)?;
    let data_path = r.existing_path("data", a.data)?;
    let out = out_dir(&mut r, a.common.out)?;
    let model = SoftmaxModel::load(model_path)?;
    let data = load_dataset(data_path, Some(model.num_classes()))?;
    write_output(&out.join("probs.csv"), &predict_table(&model, &data)?.to_csv())
}

pub fn sweep(a: SweepArgs) -> CliResult {
    let file = load_config(&a.common)?;
    let mut r = Resolver::new(&file);
    let data_path = r.existing_path("data", a.data)?;
    let eval_path = r.path("eval", a.eval)?;
    if let Some(p) = &eval_path {
        if !p.is_file() {
            return Err(CliError::input(format!("{} does not exist", p.display())));
        }
    }
    let ladder_text: String = r.required("ladder", a.ladder)?;
    let config = TrainConfig {
        max_iterations: r.or_default("max-iter", a.max_iter, TrainConfig::default().max_iterations)?,
        ..TrainConfig::default()
    };
    let out = out_dir(&mut r, a.common.out)?;

    let ladder = ladder_text
        .split(';')
        .map(|w| CostWeights::parse(w.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let k = ladder[0].num_classes();
    if ladder.iter().any(|w| w.num_classes() != k) {
        return Err(CliError::input("every weight vector in the ladder needs the same length"));
    }
    let train = load_dataset(&data_path, Some(k))?;
    let eval = match &eval_path {
        Some(p) => load_dataset(p, Some(k))?,
        None => train.clone(),
    };
    let results = weight_sweep(&train, &eval, &ladder, &config)?;

    let mut report = r.header("sweep");
    for (weights, confusion) in &results {
        let w: Vec<String> = weights.as_slice().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(report, "\n## weights {}", w.join(","));
        report.push_str(&confusion.to_text());
        report.push_str(&confusion.error_report().to_text());
    }
    write_output(&out.join("sweep.txt"), &report)
}
