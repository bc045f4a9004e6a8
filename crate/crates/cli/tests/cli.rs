use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use qbgraph::aggregate::Interval;
use qbgraph::{GraphEstimate, PrecisionMatrix};
use qbgraph_cli::svg::interval_svg;
use serde_json::Value;

fn qbgraph(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbgraph"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QBGRAPH_WORKERS")
        .output()
        .expect("run binary")
}

fn ok(args: &[&str], out: &Path) {
    let o = qbgraph(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Data lines of a CSV file: everything but the `#` line.
fn body(path: &Path) -> Vec<String> {
    read(path)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = [
        "simulate",
        "--setting",
        "c",
        "--p",
        "20",
        "--seed",
        "7",
        "--reps",
        "2",
    ];
    ok(&args, a.path());
    ok(&args, b.path());
    for f in ["truth.csv", "data_rep1.csv", "data_rep2.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let data = body(&a.path().join("data_rep1.csv"));
    assert_eq!(data.len(), 250);
    assert!(data.iter().all(|l| l.split(',').count() == 20));
    let truth = body(&a.path().join("truth.csv"));
    assert_eq!(
        truth[0],
        (0..20).map(|i| i.to_string()).collect::<Vec<_>>().join(",")
    );
    assert_eq!(truth.len(), 21);
    assert!(read(&a.path().join("truth.csv")).starts_with("# qbgraph {"));
}

#[test]
fn perfect_recovery_fixture() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "--p", "10", "--reps", "1", "--seed", "3"],
        dir.path(),
    );
    std::fs::copy(
        dir.path().join("truth.csv"),
        dir.path().join("estimate_known_rep1.csv"),
    )
    .unwrap();
    ok(&["evaluate", "--p", "10", "--reps", "1"], dir.path());
    let rows = body(&dir.path().join("metrics_known.csv"));
    assert_eq!(rows[0], "replication,mode,rel_error,sensitivity,precision");
    assert_eq!(rows[1], "1,known,0.0,1.0,1.0");
    assert_eq!(rows[2], "mean,known,0.0,1.0,1.0");
}

#[test]
fn full_pipeline_writes_one_row_per_replication_plus_mean() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "all",
            "--p",
            "20",
            "--n",
            "250",
            "--reps",
            "2",
            "--iters",
            "2000",
            "--burnin",
            "400",
            "--workers",
            "2",
        ],
        dir.path(),
    );
    let rows = body(&dir.path().join("metrics_known.csv"));
    assert_eq!(rows.len(), 1 + 3);
    assert!(
        rows[1].starts_with("1,known,")
            && rows[2].starts_with("2,known,")
            && rows[3].starts_with("mean,known,")
    );
    let svg = read(&dir.path().join("intervals_known.svg"));
    assert_eq!(svg.matches("class=\"bar\"").count(), 190);
    assert_eq!(svg.matches("class=\"truth\"").count(), 190);
    let geweke = body(&dir.path().join("geweke_known.csv"));
    assert_eq!(geweke.len(), 1 + 2 * 20);
    let fit: Value = serde_json::from_str(&read(&dir.path().join("fit_known_rep1.json"))).unwrap();
    assert_eq!(fit["fit"]["summaries"].as_array().unwrap().len(), 20);
    assert_eq!(fit["config"]["data"]["p"], 20);
}

#[test]
fn worker_count_does_not_change_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--p", "12", "--reps", "1", "--iters", "1500", "--burnin", "300", "--sigma", "cv",
    ];
    ok(&[&["simulate"][..], &base].concat(), dir.path());
    ok(
        &[&["fit", "--workers", "1"][..], &base].concat(),
        dir.path(),
    );
    let one = read(&dir.path().join("estimate_cv_rep1.csv"));
    ok(
        &[&["fit", "--workers", "4"][..], &base].concat(),
        dir.path(),
    );
    assert_eq!(one, read(&dir.path().join("estimate_cv_rep1.csv")));
}

#[test]
fn diagnose_reports_theory_on_small_graph() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--p", "10", "--reps", "1", "--iters", "1000", "--burnin", "200",
    ];
    for cmd in ["simulate", "fit", "diagnose"] {
        ok(&[&[cmd][..], &base].concat(), dir.path());
    }
    let doc: Value = serde_json::from_str(&read(&dir.path().join("theory_known.json"))).unwrap();
    let r = &doc["report"];
    for key in ["kappa_underline", "epsilon", "M0"] {
        assert!(r[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert_eq!(r["rho"].as_array().unwrap().len(), 10);
    assert_eq!(doc["config"]["data"]["p"], 10);
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "data.setting = c\ndata.p = 8\ndata.reps = 1\ndata.seed = 11\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qbgraph"))
        .args(["simulate", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(dir.path())
        .env("QBGRAPH_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        body(&dir.path().join("data_rep1.csv"))[0]
            .split(',')
            .count(),
        8
    );
    let bad = Command::new(env!("CARGO_BIN_EXE_qbgraph"))
        .args(["simulate"])
        .env("QBGRAPH_WORKERS", "zero")
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn failures_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = qbgraph(&["fit", "--p", "10", "--reps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "io");
    let o = qbgraph(&["simulate", "--setting", "a", "--p", "50"], dir.path());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    let o = qbgraph(&["simulate", "--sigma", "maybe"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}

fn fixture() -> (GraphEstimate, PrecisionMatrix) {
    let theta = DMatrix::from_row_slice(3, 3, &[2.0, 0.4, 0.0, 0.4, 1.5, -0.3, 0.0, -0.3, 1.0]);
    let iv = |a: f64, b: f64| Interval { lower: a, upper: b };
    let intervals = vec![
        vec![iv(2.0, 2.0), iv(0.2, 0.6), iv(0.0, 0.0)],
        vec![iv(0.2, 0.6), iv(1.5, 1.5), iv(-0.5, -0.1)],
        vec![iv(0.0, 0.0), iv(-0.5, -0.1), iv(1.0, 1.0)],
    ];
    let estimate = GraphEstimate {
        delta_hat: vec![vec![1, 1, 0], vec![1, 1, 1], vec![0, 1, 1]],
        theta_hat: PrecisionMatrix::new(theta).unwrap(),
        intervals,
        disjoint_pairs: vec![],
    };
    let truth = PrecisionMatrix::new(DMatrix::from_row_slice(
        3,
        3,
        &[2.0, 0.5, 0.1, 0.5, 1.5, -0.25, 0.1, -0.25, 1.0],
    ))
    .unwrap();
    (estimate, truth)
}

#[test]
fn interval_plot_matches_golden_file() {
    let (estimate, truth) = fixture();
    let svg = interval_svg(&estimate, Some(&truth), Some("fixture"));
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/intervals.svg");
    if std::env::var_os("QBGRAPH_UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, read(&golden));
    assert_eq!(svg, interval_svg(&estimate, Some(&truth), Some("fixture")));
}

#[test]
fn interval_plot_without_truth_has_no_dots() {
    let (estimate, _) = fixture();
    let svg = interval_svg(&estimate, None, None);
    assert!(!svg.contains("<circle"));
    assert_eq!(svg.matches("class=\"bar\"").count(), 3);
}

#[test]
fn degenerate_intervals_sit_on_the_zero_line() {
    let p = 4;
    let estimate = GraphEstimate {
        delta_hat: vec![vec![0; p]; p],
        theta_hat: PrecisionMatrix::new(DMatrix::identity(p, p)).unwrap(),
        intervals: vec![vec![Interval::point(0.0); p]; p],
        disjoint_pairs: vec![],
    };
    let svg = interval_svg(&estimate, None, None);
    let zero_y = svg
        .lines()
        .find(|l| l.contains("class=\"zero\""))
        .and_then(|l| attr(l, "y1"))
        .unwrap();
    let bars: Vec<&str> = svg
        .lines()
        .filter(|l| l.contains("class=\"bar\""))
        .collect();
    assert_eq!(bars.len(), 6);
    for b in bars {
        assert_eq!(attr(b, "y1").unwrap(), zero_y);
        assert_eq!(attr(b, "y2").unwrap(), zero_y);
    }
}

fn attr<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = line.find(&key)? + key.len();
    line[start..].split('"').next()
}
