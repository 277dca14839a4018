//! End-to-end tests driving the compiled `kkmini` binary.

use std::path::Path;
use std::process::{Command, Output};

fn kkmini(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kkmini"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawning kkmini")
}

fn read_rows(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut rdr = csv::Reader::from_path(path).expect("opening csv");
    let header = rdr.headers().expect("csv header").clone();
    let rows = rdr.records().map(|r| r.expect("csv row")).collect();
    (header, rows)
}

const TINY_RUN: &[&str] = &[
    "run",
    "--dataset",
    "blobs:n=80,k=2,d=2,spread=0.4,seed=3",
    "--algo",
    "mini-batch",
    "--kernel",
    "gaussian",
    "--kappa",
    "1.5",
    "--k",
    "2",
    "--b",
    "16",
    "--iters",
    "12",
    "--seed",
    "40",
    "--repeats",
    "3",
    "--out",
    "r.csv",
];

#[test]
fn run_emits_csv_rows_and_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = kkmini(dir.path(), TINY_RUN);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (header, rows) = read_rows(&dir.path().join("r.csv"));
    assert_eq!(header.len(), 16);
    assert_eq!(&header[0], "dataset");
    assert_eq!(&header[9], "seed");
    assert_eq!(rows.len(), 3);
    let seeds: Vec<&str> = rows.iter().map(|r| &r[9]).collect();
    assert_eq!(seeds, ["40", "41", "42"]);
    for row in &rows {
        assert_eq!(&row[1], "mini-batch");
        assert_eq!(&row[10], "12");
        assert!(row[13].parse::<f64>().unwrap().is_finite());
        let ari: f64 = row[14].parse().unwrap();
        assert!((-1.0..=1.0).contains(&ari));
    }

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["k"], 2);
    let repeats = doc["repeats"].as_array().unwrap();
    assert_eq!(repeats.len(), 3);
    assert_eq!(repeats[0]["costs"].as_array().unwrap().len(), 12);
    assert_eq!(repeats[2]["seed"], 42);
}

#[test]
fn reruns_reproduce_every_metric_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut first = TINY_RUN.to_vec();
    *first.last_mut().unwrap() = "a.csv";
    let mut second = TINY_RUN.to_vec();
    *second.last_mut().unwrap() = "b.csv";
    assert!(kkmini(dir.path(), &first).status.success());
    assert!(kkmini(dir.path(), &second).status.success());

    let (_, rows_a) = read_rows(&dir.path().join("a.csv"));
    let (_, rows_b) = read_rows(&dir.path().join("b.csv"));
    assert_eq!(rows_a.len(), rows_b.len());
    let timing_cols = [11, 12];
    for (a, b) in rows_a.iter().zip(&rows_b) {
        for c in 0..a.len() {
            if timing_cols.contains(&c) {
                continue;
            }
            assert_eq!(&a[c], &b[c], "column {c} differs between identical runs");
        }
    }
}

#[test]
fn repeated_runs_append_without_duplicating_the_header() {
    let dir = tempfile::tempdir().unwrap();
    assert!(kkmini(dir.path(), TINY_RUN).status.success());
    assert!(kkmini(dir.path(), TINY_RUN).status.success());
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.matches("dataset,algo").count(), 1);
    let (_, rows) = read_rows(&dir.path().join("r.csv"));
    assert_eq!(rows.len(), 6);
}

#[test]
fn summarize_reports_sample_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let csv_text = "\
dataset,algo,kernel,kernel_params,k,b,tau,epsilon,lr,seed,iters_run,kernel_build_ms,cluster_ms,final_cost,ari,nmi
toy,mini-batch,gaussian,kappa=1,2,8,,0,sqrt,0,5,1.0,2.0,0.25,0.4,
toy,mini-batch,gaussian,kappa=1,2,8,,0,sqrt,1,5,1.0,2.0,0.35,0.6,
";
    std::fs::write(dir.path().join("rows.csv"), csv_text).unwrap();
    let out = kkmini(dir.path(), &["summarize", "rows.csv", "--out", "sum.csv"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (header, rows) = read_rows(&dir.path().join("sum.csv"));
    assert_eq!(rows.len(), 1);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let row = &rows[0];
    assert_eq!(&row[col("runs")], "2");
    let ari_mean: f64 = row[col("ari_mean")].parse().unwrap();
    let ari_std: f64 = row[col("ari_std")].parse().unwrap();
    assert!((ari_mean - 0.5).abs() < 1e-12);
    assert!((ari_std - 0.1414213562).abs() < 1e-9);
    assert_eq!(&row[col("nmi_mean")], "");
}

#[test]
fn gamma_is_one_for_gaussian_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let out = kkmini(
        dir.path(),
        &[
            "gamma",
            "--dataset",
            "blobs:n=60,k=3,seed=2",
            "--kernel",
            "gaussian",
        ],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("gamma = 1"), "stdout: {stdout}");
}

#[test]
fn missing_required_fields_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = kkmini(
        dir.path(),
        &["run", "--dataset", "blobs:n=20,k=2", "--algo", "lloyd"],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("missing k"), "stderr: {stderr}");

    let out = kkmini(
        dir.path(),
        &[
            "run",
            "--dataset",
            "rings:n=20",
            "--algo",
            "lloyd",
            "--k",
            "2",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn config_file_fields_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "dataset": "blobs:n=60,k=2,seed=5",
        "algo": "truncated",
        "k": 2,
        "b": 8,
        "tau": 30,
        "iters": 10,
        "out": "from_config.csv"
    }"#;
    std::fs::write(dir.path().join("exp.json"), config).unwrap();
    let out = kkmini(
        dir.path(),
        &[
            "run",
            "--config",
            "exp.json",
            "--iters",
            "4",
            "--out",
            "flagged.csv",
        ],
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!dir.path().join("from_config.csv").exists());
    let (_, rows) = read_rows(&dir.path().join("flagged.csv"));
    assert_eq!(&rows[0][1], "truncated");
    assert_eq!(&rows[0][6], "30");
    assert_eq!(&rows[0][10], "4");
}

#[test]
fn oracle_check_confirms_the_dp_bookkeeping() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = TINY_RUN.to_vec();
    args.push("--oracle-check");
    let out = kkmini(dir.path(), &args);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let dev = doc["repeats"][0]["oracle"]["max_deviation"]
        .as_f64()
        .unwrap();
    assert!(dev < 1e-10, "oracle deviation {dev}");
}
