use std::fs;
use std::path::{Path, PathBuf};

use tempfile::TempDir;
use zoomquant::cli::{run_cli_with, EXIT_NUMERICAL, EXIT_VALIDATION, EXIT_VIOLATION};

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

/// Copies a shipped config into a temp dir with its output redirected there.
fn staged(name: &str, edit: impl Fn(String) -> String) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(shipped(name)).unwrap();
    let out = dir.path().join("out");
    let text: String = text
        .lines()
        .map(|l| {
            if l.starts_with("dir = ") {
                format!("dir = {:?}", out.display().to_string())
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = dir.path().join(name);
    fs::write(&path, edit(text)).unwrap();
    (dir, path)
}

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run_cli_with(
        std::iter::once("zoomquant").chain(args.iter().copied()),
        &mut out,
    );
    (code, String::from_utf8(out).unwrap())
}

fn value(report: &str, key: &str) -> f64 {
    let line = report
        .lines()
        .find(|l| l.starts_with(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{report}"));
    line.split(" = ")
        .nth(1)
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn norms_report() {
    let (_dir, cfg) = staged("heat-zero.toml", |t| t);
    let (code, out) = run(&["norms", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!((value(&out, "certificate.M") - 1.3770).abs() < 5e-4);
    assert!((value(&out, "rates.eta1") - 1.4626).abs() < 5e-4);
    assert!(value(&out, "nu_bound") > 0.175);

    let (code, out) = run(&[
        "norms",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "hold",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!((value(&out, "rates.eta1") - 2.1515).abs() < 5e-3);
    assert!(value(&out, "certificate.M_h") > value(&out, "certificate.M"));
}

#[test]
fn nu_map_is_monotone() {
    let (dir, cfg) = staged("heat.toml", |t| t);
    let csv = dir.path().join("map.csv");
    let (code, out) = run(&[
        "nu-map",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "50:150:50",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("wrote 9 cells"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("L_in,L_out,eta0,eta1,nu_bound"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    let nu = |li: &str, lo: &str| -> Option<f64> {
        let row = rows.iter().find(|r| r[0] == li && r[1] == lo).unwrap();
        row[4].parse().ok()
    };
    for (a, b) in [("50", "100"), ("100", "150")] {
        for other in ["50", "100", "150"] {
            let (lo, hi) = (nu(a, other), nu(b, other));
            assert!(hi.unwrap_or(-1.0) >= lo.unwrap_or(-1.0) || lo.is_none());
            assert!(hi.is_some() || lo.is_none());
        }
    }
    assert!(nu("150", "150").unwrap() > 0.18);
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let (dir, cfg) = staged("heat-hold.toml", |t| t);
    let (code, out) = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("envelope = pass"));
    let out_dir = dir.path().join("out");
    for f in [
        "trace.csv",
        "intersample.csv",
        "schedule.txt",
        "envelope.txt",
    ] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let first = fs::read(out_dir.join("trace.csv")).unwrap();
    let inter = fs::read(out_dir.join("intersample.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 602);

    let (code, _) = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(out_dir.join("trace.csv")).unwrap(), first);
    assert_eq!(fs::read(out_dir.join("intersample.csv")).unwrap(), inter);
}

#[test]
fn verify_passes_on_the_benchmark() {
    let (_dir, cfg) = staged("heat-zero.toml", |t| t);
    let (code, out) = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(out.trim_end().ends_with("0 failure(s)"));
}

#[test]
fn verify_flags_excess_losses() {
    let (_dir, cfg) = staged("heat-zero-excess.toml", |t| t);
    let (code, out) = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_VIOLATION, "{out}");
    assert!(out.contains("FAIL loss fraction admissible"));
    assert!(out.contains("FAIL zoom envelope"));
}

#[test]
fn bad_config_is_a_validation_error() {
    let (_dir, cfg) = staged("heat-zero.toml", |t| t.replace("tau = 0.1", "tau = -0.1"));
    assert_eq!(
        run(&["norms", "--config", cfg.to_str().unwrap()]).0,
        EXIT_VALIDATION
    );
    let (_dir, cfg) = staged("heat-zero.toml", |t| {
        t.replace("[sampler]", "[sampler]\nbogus = 1")
    });
    assert_eq!(
        run(&["norms", "--config", cfg.to_str().unwrap()]).0,
        EXIT_VALIDATION
    );
    assert_eq!(
        run(&["norms", "--config", "/nonexistent/cfg.toml"]).0,
        EXIT_VALIDATION
    );
    assert_eq!(run(&["frobnicate"]).0, EXIT_VALIDATION);
}

#[test]
fn capped_order_is_a_numerical_error() {
    let (_dir, cfg) = staged("heat-zero.toml", |t| {
        t.replace("rho = 0.908", "rho = 0.908\nn_max = 50")
    });
    let (code, out) = run(&["norms", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_NUMERICAL, "{out}");
}

#[test]
fn help_succeeds() {
    let (code, out) = run(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["norms", "nu-map", "simulate", "verify"] {
        assert!(out.contains(cmd), "{cmd}");
    }
}
