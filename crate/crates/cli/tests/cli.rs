use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use netsem::io::{read_report, write_covariance_csv, write_raw_csv};
use netsem::simulation::sample_from_covariance;

fn netsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsem"))
        .args(args)
        .env("NETSEM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn labels() -> Vec<String> {
    (1..=6).map(|i| format!("y{i}")).collect()
}

/// Two factors, three indicators each, with one residual partial correlation.
fn population() -> DMatrix<f64> {
    let lambda = DMatrix::from_fn(6, 2, |i, j| if i / 3 == j { 1.0 } else { 0.0 });
    let psi = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
    let mut theta = DMatrix::identity(6, 6);
    theta[(0, 4)] = 0.4;
    theta[(4, 0)] = 0.4;
    &lambda * psi * lambda.transpose() + theta
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (raw, moments) = sample_from_covariance(&population(), labels(), 800, 7).unwrap();
        write_raw_csv(&dir.path().join("raw.csv"), &raw, &labels()).unwrap();
        write_covariance_csv(&dir.path().join("cov.csv"), &moments).unwrap();
        let fx = Fixture { dir };
        let out = netsem(&[
            "new-model",
            "--family",
            "rnm",
            "--observed",
            "y1,y2,y3,y4,y5,y6",
            "--factors",
            "0,0,0,1,1,1",
            "--out",
            path(&fx.file("rnm.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = netsem(&[
            "new-model",
            "--family",
            "ggm",
            "--full",
            "--observed",
            "y1,y2,y3,y4,y5,y6",
            "--out",
            path(&fx.file("ggm.json")),
        ]);
        assert!(out.status.success());
        fx
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn saturated_ggm_fit_has_zero_df() {
    let fx = Fixture::new();
    let report = fx.file("fit.json");
    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("raw.csv")),
        "--out",
        path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(&report).unwrap();
    let m = report.measures.unwrap();
    assert_eq!(m.df, 0);
    assert!(m.chisq.abs() < 1e-6);
    assert!(m.saturated);
}

#[test]
fn covariance_input_needs_n() {
    let fx = Fixture::new();
    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("cov.csv")),
        "--covariance",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[missing_n]"));

    let ok = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("cov.csv")),
        "--covariance",
        "--n",
        "800",
    ]);
    assert!(ok.status.success());
}

#[test]
fn asymmetric_covariance_is_rejected() {
    let fx = Fixture::new();
    std::fs::write(fx.file("bad.csv"), "a,b\n1,0.5\n0.4,1\n").unwrap();
    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("bad.csv")),
        "--covariance",
        "--n",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[non_symmetric]"));
}

#[test]
fn malformed_model_and_no_center_are_user_errors() {
    let fx = Fixture::new();
    std::fs::write(fx.file("broken.json"), "{\"format_version\": 1, \"observed\": 3}").unwrap();
    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("broken.json")),
        "--data",
        path(&fx.file("raw.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error[malformed_file]"));

    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("raw.csv")),
        "--no-center",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rank_deficient_data_is_a_numerical_failure() {
    let fx = Fixture::new();
    let mut text = String::from("y1,y2,y3,y4,y5,y6\n");
    for _ in 0..10 {
        text.push_str("1,2,3,4,5,6\n");
    }
    std::fs::write(fx.file("flat.csv"), text).unwrap();
    let out = netsem(&[
        "fit",
        "--model",
        path(&fx.file("ggm.json")),
        "--data",
        path(&fx.file("flat.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn search_export_and_rerun() {
    let fx = Fixture::new();
    let report = fx.file("search.json");
    let out = netsem(&[
        "search",
        "--model",
        path(&fx.file("rnm.json")),
        "--data",
        path(&fx.file("raw.csv")),
        "--target",
        "theta",
        "--criterion",
        "bic",
        "--out",
        path(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = read_report(&report).unwrap();
    assert!(first.search_trace.is_some());

    let out = netsem(&["export-network", "--report", path(&report)]);
    assert!(out.status.success());
    let edges = String::from_utf8(out.stdout).unwrap();
    assert!(edges.lines().any(|l| l.starts_with("y1 y5 ")), "{edges}");

    let out = netsem(&["export-network", "--report", path(&report), "--format", "dot"]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("graph network {"));

    let again = fx.file("again.json");
    let out = netsem(&["rerun", "--report", path(&report), "--out", path(&again)]);
    assert!(out.status.success());
    let second = read_report(&again).unwrap();
    assert_eq!(first.estimates.len(), second.estimates.len());
    for (a, b) in first.estimates.iter().zip(&second.estimates) {
        assert_eq!(a.label, b.label);
        assert!((a.value - b.value).abs() < 1e-6, "{:?} {} {}", a.label, a.value, b.value);
    }
}

#[test]
fn lasso_selects_residual_edge() {
    let fx = Fixture::new();
    let out = netsem(&[
        "lasso",
        "--model",
        path(&fx.file("rnm.json")),
        "--data",
        path(&fx.file("raw.csv")),
        "--target",
        "theta",
        "--nu-grid",
        "0.02,0.05,0.1,0.2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = netsem::io::report_from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let lasso = report.lasso.unwrap();
    assert_eq!(lasso.path.len(), 4);
    assert!(lasso.selected.contains(&netsem::Edge::new(0, 4)));
}

#[test]
fn simulate_is_reproducible() {
    let fx = Fixture::new();
    let run = |dir: &str| {
        let out = netsem(&[
            "simulate",
            "--study",
            "1",
            "--replications",
            "2",
            "--n-grid",
            "100,250",
            "--seed",
            "11",
            "--out-dir",
            path(&fx.file(dir)),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(fx.file(dir).join("summary.tsv")).unwrap(),
            std::fs::read(fx.file(dir).join("replications.tsv")).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    assert!(fx.file("a").join("study.json").exists());
    let summary = String::from_utf8(a.0).unwrap();
    // header plus 2 sample sizes times 4 criteria
    assert_eq!(summary.lines().count(), 9, "{summary}");
}

#[test]
fn unknown_study_is_rejected() {
    let out = netsem(&["simulate", "--study", "9"]);
    assert_eq!(out.status.code(), Some(2));
}
