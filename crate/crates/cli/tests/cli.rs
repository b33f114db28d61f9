use std::fs;
use std::path::Path;
use std::process::Command;

use parastab::experiments::{Plot, Series};
use parastab::Error;
use parastab_cli::svg::render;

fn parastab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_parastab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const SMALL_INTERNAL: &str = "[mesh]\nrings = 6\n[time]\nT = 1\nsteps = 20\n";

#[test]
fn empty_config_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.ini");
    fs::write(&cfg, "").unwrap();
    let out = parastab(&[
        "stabilize-linear-internal",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing section [time]"), "{err}");
}

#[test]
fn unknown_experiment_is_a_configuration_error() {
    let out = parastab(&["no-such-experiment"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn estimates_run_without_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = parastab(&["estimates", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("M_simple = 6 "), "{stdout}");
    assert!(dir.path().join("summary.csv").exists());
}

fn metrics_weighted_sup(dir: &Path) -> f64 {
    let mut rdr = csv::Reader::from_path(dir.join("metrics.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "weighted_sup").unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    row[col].parse().unwrap()
}

#[test]
fn internal_run_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.ini");
    fs::write(&cfg, SMALL_INTERNAL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = parastab(&[
            "stabilize-linear-internal",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(metrics_weighted_sup(&a).is_finite());
    for name in [
        "closed_loop.csv",
        "free.csv",
        "metrics.csv",
        "norms.svg",
        "manifest.txt",
        "summary.csv",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("experiment=stabilize-linear-internal"));
    let hash = manifest
        .lines()
        .find_map(|l| l.strip_prefix("config_sha256="))
        .unwrap();
    assert_eq!(hash.len(), 64);
}

#[test]
fn overrides_change_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.ini");
    fs::write(&cfg, SMALL_INTERNAL).unwrap();
    let hash = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let mut args = vec![
            "stabilize-linear-internal",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert_eq!(parastab(&args).status.code(), Some(0));
        let m = fs::read_to_string(out.join("manifest.txt")).unwrap();
        m.lines()
            .find_map(|l| l.strip_prefix("config_sha256="))
            .unwrap()
            .to_string()
    };
    assert_ne!(hash(&[], "x"), hash(&["--set", "time.steps=25"], "y"));
}

fn series(label: &str, y: Vec<f64>) -> Series {
    Series {
        label: label.into(),
        x: (0..y.len()).map(|i| i as f64).collect(),
        y,
    }
}

fn plot(series: Vec<Series>, log_y: bool) -> Plot {
    Plot {
        name: "p".into(),
        title: "t".into(),
        x_label: "x".into(),
        y_label: "y".into(),
        log_y,
        series,
    }
}

#[test]
fn svg_has_one_polyline_per_series() {
    let one = render(&plot(vec![series("a", vec![1.0, 2.0, 3.0])], false)).unwrap();
    assert_eq!(one.matches("<polyline").count(), 1);

    let three = render(&plot(
        vec![
            series("a", vec![1.0, 2.0]),
            series("b", vec![3.0, 0.5]),
            series("c", vec![1e-3, 10.0]),
        ],
        true,
    ))
    .unwrap();
    assert_eq!(three.matches("<polyline").count(), 3);
    assert_eq!(three.matches("class=\"legend\"").count(), 3);
}

#[test]
fn svg_rejects_bad_data() {
    let r = render(&plot(vec![series("a", vec![1.0, 0.0])], true));
    assert!(matches!(r, Err(Error::NonPositiveLogValue(v)) if v == 0.0));
    assert!(render(&plot(vec![], false)).is_err());
    assert!(render(&plot(vec![series("a", vec![1.0, f64::NAN])], false)).is_err());
}
