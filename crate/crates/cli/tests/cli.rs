use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conformal_core::{predict_proba, SoftmaxModel};
use tempfile::TempDir;

fn confset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confset"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = confset(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p).unwrap()
}

fn toy_two_class(dir: &Path) -> PathBuf {
    let mut text = String::from("id,y,x_1\n");
    for i in 0..20 {
        let x = i as f64 / 4.0 - 2.4;
        text.push_str(&format!("{i},{},{x}\n", (x > 0.0) as u8));
    }
    write(dir, "toy.csv", &text)
}

#[test]
fn trained_model_round_trips() {
    let dir = TempDir::new().unwrap();
    let data = toy_two_class(dir.path());
    let out = dir.path().join("m");
    ok(&["train", "--data", s(&data), "--out", s(&out)]);
    let text = read(out.join("model.txt"));
    assert!(text.starts_with("confset-softmax version=1 classes=2 dim=1\n"));
    let model = SoftmaxModel::load(out.join("model.txt")).unwrap();
    assert_eq!(model.to_text(), text);

    ok(&["probs", "--model", s(&out.join("model.txt")), "--data", s(&data), "--out", s(&out)]);
    let probs = read(out.join("probs.csv"));
    for (line, i) in probs.lines().skip(1).zip(0..) {
        let x = i as f64 / 4.0 - 2.4;
        let p = predict_proba(&model, &[x]).unwrap();
        let fields: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields, p.probs());
    }
}

#[test]
fn missing_outcome_column_exits_two() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "noy.csv", "id,x_1\n1,0.5\n2,0.1\n");
    let out = confset(&["train", "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`y`"), "{err}");
}

#[test]
fn bad_row_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "bad.csv", "id,y,x_1\n1,0,0.5\n2,1,abc\n");
    let out = confset(&["train", "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn overflowing_features_exit_three() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "huge.csv", "id,y,x_1\n1,0,1e308\n2,1,-1e308\n3,0,1e308\n4,1,-1e308\n");
    let out = confset(&["train", "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_report_lists_every_cost_ratio() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen");
    ok(&["generate", "--n", "600", "--seed", "4", "--out", s(&gen)]);
    let out = dir.path().join("m");
    ok(&["train", "--data", s(&gen.join("data.csv")), "--weights", "1,2,5", "--out", s(&out)]);
    let report = read(out.join("train_report.txt"));
    assert!(report.starts_with("# confset train\n"));
    assert!(report.contains("# weights = 1,2,5\n"));
    let ratios = report.lines().filter(|l| l.trim_start().contains(" / ") && l.contains(" = ")).count();
    assert_eq!(ratios, 6);
    assert!(report.contains("loss curve"));
}

/// Calibration probabilities and outcomes whose labeled scores are known.
fn calibration_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let probs = write(
        dir,
        "cal_probs.csv",
        "id,p_0,p_1,p_2\na,0.5,0.3,0.2\nb,0.2,0.5,0.3\nc,0.6,0.3,0.1\nd,0.1,0.3,0.6\ne,0.4,0.4,0.2\n",
    );
    let data = write(dir, "cal.csv", "id,y\na,0\nb,2\nc,1\nd,0\ne,1\n");
    (probs, data)
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .to_string()
}

#[test]
fn calibration_file_records_order_statistic() {
    let dir = TempDir::new().unwrap();
    let (probs, data) = calibration_fixture(dir.path());
    let gamma = |alpha: &str| {
        let out = dir.path().join(format!("c{alpha}"));
        ok(&["calibrate", "--alpha", alpha, "--probs", s(&probs), "--data", s(&data), "--out", s(&out)]);
        read(out.join("calibration.txt"))
    };
    let at_03 = gamma("0.3");
    // n = 5: k = ceil(6 * 0.7) = 5.
    assert_eq!(field(&at_03, "n"), "5");
    assert_eq!(field(&at_03, "k"), "5");
    assert_eq!(field(&at_03, "method"), "nested");
    let at_005 = gamma("0.05");
    assert_eq!(field(&at_005, "full_set"), "true");
    let g03: f64 = field(&at_03, "gamma_hat").parse().unwrap();
    let g005: f64 = field(&at_005, "gamma_hat").parse().unwrap();
    assert!(g005 <= g03);
}

#[test]
fn localized_flags_empty_partitions() {
    let dir = TempDir::new().unwrap();
    let probs = write(dir.path(), "p.csv", "id,p_0,p_1,p_2\na,0.7,0.2,0.1\nb,0.6,0.3,0.1\nc,0.5,0.1,0.4\n");
    let data = write(dir.path(), "d.csv", "id,y\na,0\nb,1\nc,2\n");
    ok(&[
        "calibrate", "--alpha", "0.3", "--method", "localized", "--probs", s(&probs), "--data", s(&data),
        "--out", s(dir.path()),
    ]);
    let text = read(dir.path().join("calibration.txt"));
    assert_eq!(text.matches("status: empty").count(), 2);
    assert!(text.contains("partition.0.n: 3\n"));
}

fn nested_calibration(dir: &Path, gamma: f64) -> PathBuf {
    write(
        dir,
        &format!("cal_{gamma}.txt"),
        &format!(
            "format: confset-calibration\nversion: 1\nmethod: nested\nclasses: 3\nalpha: 0.3\nn: 3\nk: 3\ngamma_hat: {gamma}\n"
        ),
    )
}

#[test]
fn predicts_reference_example_set() {
    let dir = TempDir::new().unwrap();
    // The listed row sums to 0.99; it is supplied renormalized.
    let row: Vec<String> = [0.34, 0.27, 0.38].iter().map(|p| (p / 0.99f64).to_string()).collect();
    let probs = write(dir.path(), "p.csv", &format!("id,p_0,p_1,p_2\nr1,{}\n", row.join(",")));
    let cal = nested_calibration(dir.path(), 0.6);
    ok(&["predict", "--calibration", s(&cal), "--probs", s(&probs), "--out", s(dir.path())]);
    assert_eq!(
        read(dir.path().join("predictions.csv")),
        "id,forecast,set,set_size,gamma_used\nr1,2,0;2,2,0.6\n"
    );
}

#[test]
fn zero_threshold_gives_full_sets() {
    let dir = TempDir::new().unwrap();
    let (probs, _) = calibration_fixture(dir.path());
    let cal = write(
        dir.path(),
        "full.txt",
        "format: confset-calibration\nversion: 1\nmethod: nested\nclasses: 3\nalpha: 0.05\nn: 5\nk: 6\ngamma_hat: 0\n",
    );
    ok(&["predict", "--calibration", s(&cal), "--probs", s(&probs), "--out", s(dir.path())]);
    let text = read(dir.path().join("predictions.csv"));
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(3) == Some("3")));
}

#[test]
fn equal_localized_thresholds_match_nested_output() {
    let dir = TempDir::new().unwrap();
    let (probs, _) = calibration_fixture(dir.path());
    let nested = nested_calibration(dir.path(), 0.45);
    let mut loc = String::from("format: confset-calibration\nversion: 1\nmethod: localized\nclasses: 3\nalpha: 0.3\nn: 9\n");
    for j in 0..3 {
        loc.push_str(&format!("partition.{j}.n: 3\npartition.{j}.k: 3\npartition.{j}.gamma_hat: 0.45\n"));
    }
    let loc = write(dir.path(), "loc.txt", &loc);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["predict", "--calibration", s(&nested), "--probs", s(&probs), "--out", s(&a)]);
    ok(&["predict", "--calibration", s(&loc), "--probs", s(&probs), "--out", s(&b)]);
    assert_eq!(read(a.join("predictions.csv")), read(b.join("predictions.csv")));
}

#[test]
fn class_count_mismatch_exits_two() {
    let dir = TempDir::new().unwrap();
    let probs = write(dir.path(), "p.csv", "id,p_0,p_1\na,0.5,0.5\n");
    let cal = nested_calibration(dir.path(), 0.6);
    let out = confset(&["predict", "--calibration", s(&cal), "--probs", s(&probs), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn naive_and_oracle_prediction() {
    let dir = TempDir::new().unwrap();
    let probs = write(dir.path(), "p.csv", "id,p_0,p_1,p_2\nx,0.43,0.35,0.22\n");
    ok(&["predict", "--method", "naive", "--gamma", "0.3", "--probs", s(&probs), "--out", s(dir.path())]);
    assert!(read(dir.path().join("predictions.csv")).contains("x,0,0;1,2,0.3\n"));
    ok(&["predict", "--method", "oracle", "--alpha", "0.3", "--probs", s(&probs), "--out", s(dir.path())]);
    assert!(read(dir.path().join("predictions.csv")).contains("x,0,0;1,2,0.35\n"));
}

fn evaluate(dir: &Path, predictions: &str, outcomes: &str) -> Output {
    let p = write(dir, "pred.csv", predictions);
    let d = write(dir, "y.csv", outcomes);
    confset(&["evaluate", "--predictions", s(&p), "--data", s(&d), "--classes", "3", "--out", s(dir)])
}

fn csv_value(text: &str, kind: &str, a: usize) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{kind},{a},,")))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn perfect_predictions_have_no_error() {
    let dir = TempDir::new().unwrap();
    let mut pred = String::from("id,forecast,set,set_size,gamma_used\n");
    let mut y = String::from("id,y\n");
    for i in 0..9 {
        pred.push_str(&format!("{i},{},{},1,0.5\n", i % 3, i % 3));
        y.push_str(&format!("{i},{}\n", i % 3));
    }
    let out = evaluate(dir.path(), &pred, &y);
    assert!(out.status.success());
    let report = read(dir.path().join("evaluation.txt"));
    assert!(report.contains("coverage: 1.000000\n"));
    let errors = read(dir.path().join("errors.csv"));
    for c in 0..3 {
        assert_eq!(csv_value(&errors, "classification_error", c), 0.0);
        assert_eq!(csv_value(&errors, "forecasting_error", c), 0.0);
    }
}

const REFERENCE: [[usize; 3]; 3] = [[18661, 8120, 3753], [3617, 10274, 2410], [682, 1009, 2751]];

fn singleton_files(counts: &[[usize; 3]; 3]) -> (String, String) {
    let mut pred = String::from("id,forecast,set,set_size,gamma_used\n");
    let mut y = String::from("id,y\n");
    let mut id = 0;
    for (actual, row) in counts.iter().enumerate() {
        for (forecast, &n) in row.iter().enumerate() {
            for _ in 0..n {
                pred.push_str(&format!("{id},{forecast},{forecast},1,1\n"));
                y.push_str(&format!("{id},{actual}\n"));
                id += 1;
            }
        }
    }
    (pred, y)
}

#[test]
fn reference_counts_reproduce_margins() {
    let dir = TempDir::new().unwrap();
    let (pred, y) = singleton_files(&REFERENCE);
    assert!(evaluate(dir.path(), &pred, &y).status.success());
    let errors = read(dir.path().join("errors.csv"));
    let class: Vec<f64> = (0..3).map(|c| csv_value(&errors, "classification_error", c)).collect();
    let forecast: Vec<f64> = (0..3).map(|c| csv_value(&errors, "forecasting_error", c)).collect();
    assert_eq!(class[2], 1691.0 / 4442.0);
    for (value, want) in [(class[0], 0.39), (class[1], 0.37)] {
        assert!((value - want).abs() <= 0.005);
    }
    for (value, want) in forecast.iter().zip([0.19, 0.47, 0.69]) {
        assert!((value - want).abs() <= 0.005);
    }
    let report = read(dir.path().join("evaluation.txt"));
    assert!(report.contains("cases: 51277\n"));
    assert!(report.contains("0>2 / 2>0 = 5.50"));
}

#[test]
fn singleton_coverage_is_column_accuracy_blend() {
    let dir = TempDir::new().unwrap();
    let counts = [[40, 7, 3], [5, 30, 10], [2, 8, 20]];
    let (pred, y) = singleton_files(&counts);
    assert!(evaluate(dir.path(), &pred, &y).status.success());
    let errors = read(dir.path().join("errors.csv"));
    let total: usize = counts.iter().flatten().sum();
    let blend: f64 = (0..3)
        .map(|j| {
            let column: usize = counts.iter().map(|r| r[j]).sum();
            column as f64 / total as f64 * (1.0 - csv_value(&errors, "forecasting_error", j))
        })
        .sum();
    let direct = (40 + 30 + 20) as f64 / total as f64;
    assert!((blend - direct).abs() <= 1e-12);
    let coverage: f64 = read(dir.path().join("coverage.csv"))
        .lines()
        .find_map(|l| l.strip_prefix("all,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .unwrap();
    assert!((coverage - direct).abs() <= 1e-12);
}

#[test]
fn id_mismatch_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = evaluate(
        dir.path(),
        "id,forecast,set,set_size,gamma_used\na,0,0,1,1\nz,1,1,1,1\n",
        "id,y\na,0\nb,1\n",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("id mismatch"));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let run = || {
        ok(&[
            "simulate", "--replications", "1", "--seed", "9", "--n-train", "300", "--n-cal", "200", "--n-test",
            "500", "--alpha", "0.1,0.3", "--out", s(&out),
        ]);
        read(out.join("simulation.txt"))
    };
    let first = run();
    assert!(first == run(), "rerun changed the report");
    assert!(first.contains("# seed = 9\n"));
}

#[test]
fn failed_replication_exits_three() {
    let dir = TempDir::new().unwrap();
    let out = confset(&[
        "simulate", "--replications", "2", "--n-train", "1", "--n-cal", "50", "--n-test", "50", "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let (probs, data) = calibration_fixture(dir.path());
    let config = write(
        dir.path(),
        "run.cfg",
        &format!("# shared settings\nalpha = 0.05\nprobs = {}\ndata = {}\n", s(&probs), s(&data)),
    );
    let from_file = dir.path().join("f");
    ok(&["calibrate", "--config", s(&config), "--out", s(&from_file)]);
    let text = read(from_file.join("calibration.txt"));
    assert!(text.contains("# alpha = 0.05\n"));
    assert_eq!(field(&text, "alpha"), "0.05");

    let from_flag = dir.path().join("g");
    ok(&["calibrate", "--config", s(&config), "--alpha", "0.3", "--out", s(&from_flag)]);
    assert_eq!(field(&read(from_flag.join("calibration.txt")), "alpha"), "0.3");
}

#[test]
fn invalid_alpha_exits_two() {
    let dir = TempDir::new().unwrap();
    let (probs, data) = calibration_fixture(dir.path());
    let out = confset(&["calibrate", "--alpha", "1.2", "--probs", s(&probs), "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_flags() {
    let out = confset(&["calibrate", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in ["--alpha", "--method", "--probs", "--data", "--out", "--config"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    let help = String::from_utf8_lossy(&confset(&["simulate", "--help"]).stdout).to_string();
    for flag in ["--weights", "--seed", "--replications"] {
        assert!(help.contains(flag));
    }
    let help = String::from_utf8_lossy(&confset(&["predict", "--help"]).stdout).to_string();
    assert!(help.contains("--calibration"));
}
