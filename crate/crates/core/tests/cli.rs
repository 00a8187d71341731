use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grassmann_binary::estimation::summarize;
use grassmann_binary::experiment::benchmark_model;
use grassmann_binary::io::{read_dataset, read_model, write_model};
use grassmann_binary::Matrix;

fn grassmann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grassmann"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn model_file(dir: &Path, name: &str, rows: &[&[f64]]) -> PathBuf {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let m = Matrix::from_rows(&rows).unwrap();
    let path = dir.join(name);
    write_model(fs::File::create(&path).unwrap(), &m, None).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let good = model_file(dir.path(), "good.json", &[&[0.3, 0.0], &[0.0, 0.6]]);
    let o = grassmann(&["validate", "--model", s(&good)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("valid"));

    let bad = model_file(dir.path(), "bad.json", &[&[0.5, 0.9], &[0.9, 0.5]]);
    let o = grassmann(&["validate", "--model", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    assert!(text.contains("invalid, witness"), "{text}");

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"p\": 2, \"sigma\": [[0.5").unwrap();
    let o = grassmann(&["validate", "--model", s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(grassmann(&["sample"]).status.code(), Some(1));
    assert_eq!(grassmann(&["nonsense"]).status.code(), Some(1));
}

#[test]
fn sampling_is_deterministic_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bench.json");
    write_model(
        fs::File::create(&model).unwrap(),
        benchmark_model().unwrap().sigma(),
        None,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = grassmann(&[
            "sample",
            "--model",
            s(&model),
            "--n",
            "500",
            "--seed",
            "99",
            "--out",
            s(out),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let (data, meta) = read_dataset(std::io::BufReader::new(fs::File::open(&a).unwrap())).unwrap();
    assert_eq!(meta.get("seed"), Some("99"));
    assert_eq!(meta.get("rng"), Some("chacha20"));
    assert!(meta.get("model_hash").is_some());
    let summary = summarize(&data).unwrap();
    for (i, mu) in [0.77, 0.37, 0.67, 0.42, 0.7].iter().enumerate() {
        let bound = 4.0 * (mu * (1.0 - mu) / 500.0f64).sqrt();
        assert!((summary.means[i] - mu).abs() < bound);
    }

    let empty = dir.path().join("empty.csv");
    grassmann(&["sample", "--model", s(&model), "--n", "0", "--out", s(&empty)]);
    let text = fs::read_to_string(&empty).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>(),
        ["x1,x2,x3,x4,x5"]
    );
}

#[test]
fn sampling_an_invalid_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let bad = model_file(dir.path(), "bad.json", &[&[0.5, 0.9], &[0.9, 0.5]]);
    let o = grassmann(&["sample", "--model", s(&bad), "--n", "10", "--strict"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_closed_form_and_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x1\n1\n1\n1\n1\n1\n1\n1\n0\n0\n0\n").unwrap();
    let out = dir.path().join("fit.json");
    let o = grassmann(&["fit", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_model(fs::File::open(&out).unwrap()).unwrap();
    assert!((m.sigma[(0, 0)] - 7.01 / 10.02).abs() < 1e-9);
    assert_eq!(m.meta.unwrap()["converged"], true);

    let two = dir.path().join("two.csv");
    fs::write(&two, "x1,x2\n1,0\n0,1\n1,1\n0,0\n1,1\n").unwrap();
    let o = grassmann(&["fit", "--data", s(&two), "--max-iters", "0"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn queries() {
    let dir = tempfile::tempdir().unwrap();
    let uni = model_file(dir.path(), "uni.json", &[&[0.7]]);
    let o = grassmann(&["query", "--model", s(&uni), "joint", "x=1"]);
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.7);

    let bi = model_file(dir.path(), "bi.json", &[&[0.5, 0.2], &[-0.2, 0.5]]);
    let o = grassmann(&["query", "--model", s(&bi), "conditional", "obs=2:1"]);
    let text = stdout(&o);
    let means = text.lines().find(|l| l.starts_with("means:")).unwrap();
    let m: f64 = means.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((m - 0.58).abs() < 1e-6, "{text}");

    let o = grassmann(&["query", "--model", s(&bi), "moment", "r=2"]);
    assert!(stdout(&o).trim().parse::<f64>().unwrap().abs() < 1e-15);

    let o = grassmann(&["query", "--model", s(&bi), "marginal", "keep=1"]);
    assert!(stdout(&o).contains("x1,prob"));

    let o = grassmann(&["query", "--model", s(&bi), "pcorr", "1,2"]);
    assert_eq!(o.status.code(), Some(0));

    let o = grassmann(&["query", "--model", s(&bi), "entropy"]);
    let h: f64 = stdout(&o).trim().parse().unwrap();
    let expected = -(2.0 * 0.29 * 0.29f64.ln() + 2.0 * 0.21 * 0.21f64.ln());
    assert!((h - expected).abs() < 1e-12);

    let o = grassmann(&["query", "--model", s(&bi), "joint", "x=1,2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trivial_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let o = grassmann(&[
        "experiment",
        "statistics",
        "--m",
        "1",
        "--n",
        "1",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let col = fs::read_to_string(out.join("xbar5_n1.csv")).unwrap();
    assert_eq!(col.lines().count(), 2);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let row = summary.lines().find(|l| l.starts_with("xbar5_n1,")).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[2], "", "no Monte Carlo variance from one trial");
    assert_eq!(fields[4], "", "no theoretical variance at N=1");
}

#[test]
fn unknown_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = grassmann(&["experiment", "fig9", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
