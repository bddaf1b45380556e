//! End-to-end checks of the binary: exit codes, output format, artifact
//! files.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_impulsive"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p
}

const NCS_MAT: &str = "3
0 0.8333333333333334 0.8333333333333334
1.1052631578947367 0 1.0263157894736843
1.125 0.75 0
";

const DECAY_MODEL: &str = "model m {
  sub a[1] { flow x' = -x; jump point x = 0.5*x; }
}
";

#[test]
fn smallgain_prints_rho_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mat = write(dir.path(), "ncs.mat", NCS_MAT);
    let out = bin().args(["smallgain", "--gains"]).arg(&mat).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("rho: 0.987"), "{text}");
    assert!(text.contains("smallgain: true"), "{text}");
    assert!(text.contains("worst_product: 0.962"), "{text}");
    assert!(text.contains("s: ["), "{text}");
}

#[test]
fn smallgain_negative_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mat = write(dir.path(), "big.mat", "2\n0 2\n2 0\n");
    let out = bin().args(["smallgain", "--gains"]).arg(&mat).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("smallgain: false"));
}

#[test]
fn dwell_benchmark_schedule() {
    let out = bin()
        .args([
            "dwell",
            "--impulses",
            "periodic:0.1",
            "--c",
            "0.1",
            "--d",
            "0",
            "--lambda",
            "0.05",
            "--mu",
            "0.01",
            "--horizon",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("sup: 0.0"), "{text}");
    assert!(text.contains("in_class: true"), "{text}");
}

#[test]
fn dwell_negative_verdict_exits_one() {
    let out = bin()
        .args([
            "dwell",
            "--impulses",
            "periodic:0.5",
            "--c",
            "0.534",
            "--d",
            "-2",
            "--lambda",
            "0.334",
            "--mu",
            "2.1",
            "--horizon",
            "100",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("in_class: false"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["dwell", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.imp", DECAY_MODEL);
    let csv = dir.path().join("traj.csv");
    let svg = dir.path().join("traj.svg");
    let out = bin()
        .args(["simulate", "--model"])
        .arg(&model)
        .args(["--impulses", "periodic:0.1", "--init", "1.0"])
        .args(["--horizon", "1", "--dt", "0.001", "--out"])
        .arg(&csv)
        .arg("--svg")
        .arg(&svg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("events: 10"), "{text}");
    // x(1) = 0.5^10 e^{-1}
    let want = 0.5f64.powi(10) * (-1.0f64).exp();
    let final_line = text
        .lines()
        .find(|l| l.starts_with("final_norm:"))
        .unwrap();
    let got: f64 = final_line.split(':').nth(1).unwrap().trim().parse().unwrap();
    assert!((got - want).abs() < 1e-8);

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("t,x1\n"));
    // jump instants appear twice
    let rows_at_01: Vec<&str> = csv_text
        .lines()
        .filter(|l| l.starts_with("0.1,"))
        .collect();
    assert_eq!(rows_at_01.len(), 2, "{rows_at_01:?}");

    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.contains("<polyline"));

    // CSV values round-trip exactly
    let first_data = csv_text.lines().nth(1).unwrap();
    let val: f64 = first_data.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(val, 1.0);
}

#[test]
fn simulate_divergence_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "bad.imp",
        "model m { sub a[1] { flow x' = x*x; } }",
    );
    let csv = dir.path().join("t.csv");
    let out = bin()
        .args(["simulate", "--model"])
        .arg(&model)
        .args(["--impulses", "periodic:100", "--init", "5.0"])
        .args(["--horizon", "10", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn ncs_reproduce_writes_artifacts_and_reports_iss() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["ncs", "reproduce", "--horizon", "2", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("iss: true"), "{text}");
    assert!(text.contains("envelope_holds: true"), "{text}");
    for f in ["gains.txt", "verdict.txt", "traj.csv", "norm.csv", "norm.svg"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let gains = std::fs::read_to_string(out_dir.join("gains.txt")).unwrap();
    assert!(gains.contains("1.1053"), "{gains}");
}

#[test]
fn certify_full_benchmark_via_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "ncs.imp",
        "model ncs {
  theta 0.03;
  input nu[3];
  input mu[3];
  sub s1[1] { flow e1' = -1*e1 + 0.25*e2@0.03 + 0.25*e3@0.03 - nu1; }
  sub s2[1] { flow e2' = -2*e2 + 0.7*e1@0.03 + 0.65*e3@0.03 - nu2; }
  sub s3[1] { flow e3' = -0.5*e3 + 0.15*e1@0.03 + 0.1*e2@0.03 - nu3; }
}
",
    );
    let cert = write(
        dir.path(),
        "ncs.cert",
        "cert s1 { V = abs(e1); c = 0.1; d = 0; gain s2 = 0.8333; gain s3 = 0.8333;
           gainU = linear:3.3334; psi1 = id; psi2 = id; inputs = mu1, nu1; }
cert s2 { V = abs(e2); c = 0.1; d = 0; gain s1 = 1.1053; gain s3 = 1.0263;
           gainU = linear:1.579; psi1 = id; psi2 = id; inputs = mu2, nu2; }
cert s3 { V = abs(e3); c = 0.1; d = 0; gain s1 = 1.125; gain s2 = 0.75;
           gainU = linear:7.5; psi1 = id; psi2 = id; inputs = mu3, nu3; }
",
    );
    let out = bin()
        .args(["certify", "--model"])
        .arg(&model)
        .arg("--cert")
        .arg(&cert)
        .args([
            "--impulses",
            "periodic:0.1",
            "--flavor",
            "razumikhin",
            "--mu",
            "0.01",
            "--lambda",
            "0.05",
            "--horizon",
            "3",
            "--init",
            "0.9,0.3,0.6",
            "--input",
            "nu=const:2.0",
            "--input",
            "mu=sine:0.05:13.0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("check small-gain: pass"), "{text}");
    assert!(text.contains("check razumikhin-gain: pass"), "{text}");
    assert!(text.contains("iss: true"), "{text}");
    assert!(text.contains("violations 0"), "{text}");
}

#[test]
fn certify_negative_verdict_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.imp", DECAY_MODEL);
    // d = -2 demands rare jumps; a 0.1-period schedule fails the class
    let cert = write(
        dir.path(),
        "m.cert",
        "cert a { V = abs(x); c = 0.5; d = -2; gainU = zero; psi1 = id; psi2 = id; }",
    );
    let out = bin()
        .args(["certify", "--model"])
        .arg(&model)
        .arg("--cert")
        .arg(&cert)
        .args([
            "--impulses",
            "periodic:0.1",
            "--flavor",
            "delayfree",
            "--mu",
            "0.5",
            "--lambda",
            "0.3",
            "--horizon",
            "5",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{out:?}");
    assert!(stdout(&out).contains("iss: false"));
}

#[test]
fn sweep_runs_periods_and_writes_index() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.imp", DECAY_MODEL);
    let out_dir = dir.path().join("sweep");
    let out = bin()
        .args(["sweep", "--model"])
        .arg(&model)
        .args([
            "--init",
            "1.0",
            "--periods",
            "0.1,0.5,1.0",
            "--horizon",
            "2",
            "--dt",
            "0.005",
            "--threads",
            "2",
            "--out",
        ])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let index = std::fs::read_to_string(out_dir.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 4, "{index}");
    assert!(index.lines().skip(1).all(|l| l.contains(",ok,")), "{index}");
    let runs: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("run_"))
        .collect();
    assert_eq!(runs.len(), 3);
}

#[test]
fn shipped_model_files_certify() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
    let out = bin()
        .args(["certify", "--model"])
        .arg(format!("{root}/models/ncs.imp"))
        .arg("--cert")
        .arg(format!("{root}/models/ncs.cert"))
        .args([
            "--impulses",
            "periodic:0.1",
            "--flavor",
            "razumikhin",
            "--mu",
            "0.01",
            "--lambda",
            "0.05",
            "--horizon",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).contains("iss: true"));

    let out = bin()
        .args(["certify", "--model"])
        .arg(format!("{root}/models/pair.imp"))
        .arg("--cert")
        .arg(format!("{root}/models/pair.cert"))
        .args([
            "--impulses",
            "periodic:10",
            "--flavor",
            "delayfree",
            "--mu",
            "2.1",
            "--lambda",
            "0.334",
            "--horizon",
            "40",
            "--init",
            "1.0,1.0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("d: -2.0"), "{text}");
    assert!(text.contains("violations 0"), "{text}");
}

#[test]
fn poisson_runs_reproducible_with_seed() {
    let run = |seed: &str| {
        let out = bin()
            .args([
                "dwell",
                "--impulses",
                "poisson:2.0",
                "--seed",
                seed,
                "--c",
                "1",
                "--d",
                "-0.5",
                "--lambda",
                "0.5",
                "--mu",
                "1.0",
                "--horizon",
                "20",
            ])
            .output()
            .unwrap();
        stdout(&out)
    };
    assert_eq!(run("7"), run("7"));
    assert_ne!(run("7"), run("8"));
    // an embedded seed overrides the global one
    let embedded = bin()
        .args([
            "dwell",
            "--impulses",
            "poisson:2.0:seed7",
            "--seed",
            "99",
            "--c",
            "1",
            "--d",
            "-0.5",
            "--lambda",
            "0.5",
            "--mu",
            "1.0",
            "--horizon",
            "20",
        ])
        .output()
        .unwrap();
    assert_eq!(stdout(&embedded), run("7"));
}
