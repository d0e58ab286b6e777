use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SC2: &str = r#"{"type":"semicircle","radius":2}"#;

fn rmtk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmtk"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = rmtk(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn sample_writes_one_row_per_eigenvalue() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "--seed",
            "3",
            "sample",
            "--ensemble",
            "goe:100",
            "--count",
            "1",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("spectra.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eigenvalue"));
    assert_eq!(lines.count(), 100);
    let manifest = json(dir.path().join("manifest.json"));
    assert_eq!(manifest["command"]["name"], "sample");
    assert_eq!(manifest["global"]["seed"], 3);
}

#[test]
fn sample_compares_against_a_law() {
    let dir = TempDir::new().unwrap();
    let law = r#"{"type":"semicircle","radius":1.4142135623730951}"#;
    ok(
        dir.path(),
        &[
            "sample",
            "--ensemble",
            "goe:300",
            "--count",
            "2",
            "--compare",
            law,
        ],
    );
    let w1 = json(dir.path().join("summary.json"))["w1_to_compare"]
        .as_f64()
        .unwrap();
    assert!(w1 < 0.05, "w1 = {w1}");
}

#[test]
fn sums_require_equal_sizes() {
    let dir = TempDir::new().unwrap();
    let o = rmtk(
        dir.path(),
        &["sample", "--ensemble", "goe:10", "--ensemble", "uwig:12"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_input_exits_with_validation_status() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["sample", "--ensemble", "nonsense:10"][..],
        &["sample", "--ensemble", "uwish:10"],
        &["sample", "--ensemble", "goe:-4"],
        &[
            "convolve",
            "--mu",
            r#"{"type":"semicircle","radius":-1}"#,
            "--nu",
            SC2,
        ],
        &["outlier-fit", "--data", "/definitely/not/here.csv"],
        &["qq", "--a", "/missing/a.csv", "--b", "/missing/b.csv"],
        &[
            "outlier-predict",
            "--bulk",
            SC2,
            "--spikes",
            "3",
            "--method",
            "subordination",
        ],
    ] {
        let o = rmtk(dir.path(), args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn qq_of_identical_spectra_is_the_identity() {
    let dir = TempDir::new().unwrap();
    let s = dir.path().join("s");
    ok(&s, &["sample", "--ensemble", "goe:150"]);
    let spectra = s.join("spectra.csv");
    let q = dir.path().join("q");
    ok(
        &q,
        &[
            "qq",
            "--a",
            spectra.to_str().unwrap(),
            "--b",
            spectra.to_str().unwrap(),
        ],
    );
    let summary = json(q.join("summary.json"));
    assert!((summary["slope"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(summary["intercept"].as_f64().unwrap().abs() < 1e-12);
    assert!((summary["r2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let args = [
        "--seed",
        "11",
        "sample",
        "--ensemble",
        "uwig:80",
        "--ensemble",
        "goe:80@0.5",
        "--count",
        "3",
    ];
    ok(&dir.path().join("a"), &args);
    ok(&dir.path().join("b"), &args);
    for f in [
        "spectra.csv",
        "histogram.csv",
        "summary.json",
        "manifest.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    ok(
        &dir.path().join("c"),
        &["--seed", "12", "sample", "--ensemble", "uwig:80"],
    );
    let a = std::fs::read(dir.path().join("a/spectra.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/spectra.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_rmtk"))
            .env("RMT_THREADS", threads)
            .args(["--seed", "5", "--out"])
            .arg(&out)
            .args(["sample", "--ensemble", "goe:60", "--count", "6"])
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(out.join("spectra.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("four", "4"));
    let o = Command::new(env!("CARGO_BIN_EXE_rmtk"))
        .env("RMT_THREADS", "zero")
        .args(["sample", "--ensemble", "goe:5"])
        .arg("--out")
        .arg(dir.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rerun_reproduces_a_manifest() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    ok(
        &first,
        &[
            "--seed",
            "9",
            "--grid-points",
            "512",
            "convolve",
            "--mu",
            SC2,
            "--nu",
            SC2,
            "--method",
            "subordination",
        ],
    );
    let second = dir.path().join("second");
    ok(
        &second,
        &["rerun", first.join("manifest.json").to_str().unwrap()],
    );
    for f in [
        "density.csv",
        "measure.json",
        "summary.json",
        "manifest.json",
    ] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(json(second.join("summary.json"))["grid_points"], 512);
}

#[test]
fn convolve_methods_agree() {
    let dir = TempDir::new().unwrap();
    let sc = r#"{"type":"semicircle","radius":1.4142135623730951}"#;
    let mp = r#"{"type":"marchenko_pastur","ratio":0.5,"scale":1}"#;
    ok(
        dir.path(),
        &[
            "convolve",
            "--mu",
            sc,
            "--nu",
            mp,
            "--method",
            "cubic",
            "--cross-check",
        ],
    );
    let s = json(dir.path().join("summary.json"));
    assert!(s["cross_check_linf"].as_f64().unwrap() < 1e-4);
    assert!((s["mean"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    let o = rmtk(
        dir.path(),
        &["convolve", "--mu", SC2, "--nu", mp, "--method", "cubic"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outlier_predictions_follow_the_bbp_formula() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["outlier-predict", "--bulk", SC2, "--spikes", "0.5,2.5,4"],
    );
    let text = std::fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][2], 0.0);
    assert!((rows[0][1] - 2.0).abs() < 1e-12);
    for r in &rows[1..] {
        assert_eq!(r[2], 1.0);
        assert!((r[1] - (r[0] + 1.0 / r[0])).abs() < 1e-12);
    }
}

#[test]
fn bundled_dataset_matches_golden_fit() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "outlier-fit",
            "--data",
            data("synthetic_outliers.csv").to_str().unwrap(),
        ],
    );
    let got = json(dir.path().join("fit.json"));
    let want = json(data("synthetic_outliers_fit.json"));
    let close = |a: &Value, b: &Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-6;
    for key in ["alpha", "beta", "gamma", "upsilon"] {
        assert!(close(&got["params"][key], &want["params"][key]), "{key}");
    }
    for (a, b) in got["params"]["theta"]
        .as_array()
        .unwrap()
        .iter()
        .zip(want["params"]["theta"].as_array().unwrap())
    {
        assert!(close(a, b));
    }
    assert!((got["mse"].as_f64().unwrap() / want["mse"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    // generated from θ = (4, 3, 2), α = 1.5, υ = 0.5 with noise 0.01
    assert_eq!(got["params"]["upsilon"], 0.5);
    assert!((got["params"]["alpha"].as_f64().unwrap() - 1.5).abs() < 0.05);
}

#[test]
fn synthetic_round_trip_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let gen = dir.path().join("gen");
    ok(
        &gen,
        &[
            "synth-outliers",
            "--theta",
            "5,4,3,2,1",
            "--alpha",
            "0.3",
            "--beta",
            "0.2",
            "--gamma",
            "0.1",
            "--upsilon",
            "0.5",
        ],
    );
    let fit = dir.path().join("fit");
    ok(
        &fit,
        &[
            "outlier-fit",
            "--data",
            gen.join("outliers.csv").to_str().unwrap(),
        ],
    );
    let got = json(fit.join("fit.json"));
    assert_eq!(got["params"]["upsilon"], 0.5);
    assert!(got["mse"].as_f64().unwrap() < 1e-10);
}

#[test]
fn potential_and_complexity_outputs() {
    let dir = TempDir::new().unwrap();
    let pot = dir.path().join("pot");
    ok(&pot, &["potential", "--measure", SC2]);
    let s = json(pot.join("summary.json"));
    assert!(s["sv_half_log_spread_on_support"].as_f64().unwrap() < 1e-6);
    assert!(std::fs::read_to_string(pot.join("sv.csv"))
        .unwrap()
        .starts_with("y,v,sv,sv_half_log\n"));

    let family = dir.path().join("family.json");
    std::fs::write(
        &family,
        format!(r#"[{{"u":0,"measure":{{"type":"shifted","shift":-1,"inner":{SC2}}}}},{{"u":1,"measure":{{"type":"shifted","shift":3,"inner":{SC2}}}}}]"#),
    )
    .unwrap();
    let cx = dir.path().join("cx");
    ok(
        &cx,
        &[
            "complexity",
            "--family",
            family.to_str().unwrap(),
            "--alpha",
            "0.5",
        ],
    );
    let r = json(cx.join("complexity.json"));
    assert_eq!(r["argmax"], 1.0);
    assert_eq!(r["table"].as_array().unwrap().len(), 2);

    std::fs::write(
        &family,
        r#"[{"u":0,"measure":{"type":"point_mass","location":-1}}]"#,
    )
    .unwrap();
    assert_eq!(
        rmtk(&cx, &["complexity", "--family", family.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn diagnostics_report_rigidity_and_eigenvector_moments() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "--seed",
            "2",
            "diagnostics",
            "--ensemble",
            "goe:300",
            "--count",
            "2",
        ],
    );
    let d = json(dir.path().join("diagnostics.json"));
    assert!(d["mean_rigidity_fraction"].as_f64().unwrap() >= 0.99);
    for s in d["samples"].as_array().unwrap() {
        let que = s["que"].as_array().unwrap();
        assert!((que[0].as_f64().unwrap() - 1.0).abs() < 0.2);
    }
    let text = std::fs::read_to_string(dir.path().join("rigidity.csv")).unwrap();
    assert!(text.starts_with("sample,index,eigenvalue,quantile,bound\n"));
}
