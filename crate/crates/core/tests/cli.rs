// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdd_sense::config::RunConfig;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cdd-sense");

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/double_drive.cfg")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn cdd-sense")
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let cfg = example_config();
    let mut args = vec!["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[k].parse().unwrap()).collect()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn bundled_example_oscillates_at_quarter_g() {
    let dir = tempfile::tempdir().unwrap();
    ok(&simulate(dir.path(), &[]));
    for f in ["trace.csv", "strobe.csv", "fit.json", "config.toml", "meta.json", "plot.gp"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report = json(&dir.path().join("fit.json"));
    assert_eq!(report["converged"], true);
    let f = report["frequency"].as_f64().unwrap();
    // g/4 in cycles; the dressed-state shift pulls it by up to ~3%
    let expect = 0.206 / 4.0;
    assert!((f - expect).abs() < 0.04 * expect, "{f} vs {expect}");
    let t2 = report["t2"].as_f64().unwrap();
    assert!(t2 > 50.0 && t2.is_finite(), "{t2}");
}

#[test]
fn zero_signal_gives_a_flat_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(
        dir.path(),
        &[
            "--set", "g=0",
            "--set", "sigma_b=0",
            "--set", "sigma_omega1=0",
            "--set", "sigma_omega2=0",
            "--set", "t1=1e300",
        ],
    );
    // a flat trace has nothing to fit, which is not an error
    assert!(matches!(o.status.code(), Some(0) | Some(3)), "{o:?}");
    let p1 = column(&dir.path().join("strobe.csv"), "p1");
    assert!(p1.len() > 100);
    let max = p1.iter().cloned().fold(0.0, f64::max);
    assert!(max < 0.01, "max p1 {max}");
}

#[test]
fn usage_errors_exit_with_code_two() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "f0 = 500.0\nrabbi1 = 10.0\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rabbi1"), "{err}");

    let o = simulate(dir.path(), &["--set", "g=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_of_written_trace_matches_pipeline_report() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let refit = dir.path().join("refit");
    ok(&simulate(&sim, &["--trajectories", "40"]));
    let strobe = sim.join("strobe.csv");
    ok(&run(&["fit", strobe.to_str().unwrap(), "--out", refit.to_str().unwrap()]));
    let a = json(&sim.join("fit.json"));
    let b = json(&refit.join("fit.json"));
    assert_eq!(a["fit"], b["fit"]);
    assert_eq!(a["converged"], b["converged"]);
}

#[test]
fn same_seed_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--trajectories", "24", "--set", "t_final=20"];
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for r in &runs {
        ok(&simulate(r, &args));
    }
    for f in ["strobe.csv", "trace.csv", "fit.json"] {
        let a = std::fs::read(runs[0].join(f)).unwrap();
        let b = std::fs::read(runs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }
    let c = dir.path().join("c");
    ok(&simulate(&c, &["--trajectories", "24", "--set", "t_final=20", "--seed", "8"]));
    assert_ne!(
        std::fs::read(runs[0].join("strobe.csv")).unwrap(),
        std::fs::read(c.join("strobe.csv")).unwrap()
    );
}

#[test]
fn resolved_config_and_version_are_written() {
    let dir = tempfile::tempdir().unwrap();
    ok(&simulate(dir.path(), &["--trajectories", "8", "--set", "t_final=10", "--set", "phi=0.5"]));
    let written = RunConfig::from_toml_str(&std::fs::read_to_string(dir.path().join("config.toml")).unwrap()).unwrap();
    let expect = RunConfig::load(
        &example_config(),
        &["phi=0.5".into(), "trajectories=8".into(), "t_final=10".into()],
    )
    .unwrap();
    assert_eq!(written, expect);
    let meta = json(&dir.path().join("meta.json"));
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["seed"], 7);
}

#[test]
fn scan_writes_a_table_and_projection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config();
    ok(&run(&[
        "scan",
        "--config", cfg.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--trajectories", "16",
        "--set", "scan_axis=\"g\"",
        "--set", "scan_values=[0.15, 0.3]",
        "--set", "t_final=60",
        "--set", "scan_samples=120",
    ]));
    let values = column(&dir.path().join("scan.csv"), "value");
    assert_eq!(values, vec![0.15, 0.3]);
    let t2 = column(&dir.path().join("projection.csv"), "t2");
    assert_eq!(t2.len(), 2);
    assert!(t2.iter().all(|t| t.is_finite() && *t > 0.0));
}

#[test]
fn sensitivity_table_orders_the_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example_config();
    ok(&run(&[
        "sensitivity",
        "--config", cfg.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
        "--set", "tau_single_naive=20.2",
        "--set", "tau_single=20.2",
        "--set", "tau_double=132.2",
        "--set", "sensitivity_points=5",
    ]));
    let path = dir.path().join("sensitivity.csv");
    let t = column(&path, "t_s");
    let single = column(&path, "dbmin_single_t");
    let double = column(&path, "dbmin_double_t");
    assert_eq!(t.len(), 5);
    for ((s, d), w) in single.iter().zip(&double).zip(t.windows(2)) {
        assert!(d < s, "double {d} not below single {s}");
        assert!(w[1] > w[0]);
    }
    // δB_min ∝ t^(−1/2)
    let slope = (single[4] / single[0]).ln() / (t[4] / t[0]).ln();
    assert!((slope + 0.5).abs() < 1e-9, "{slope}");
}

#[test]
fn angular_inputs_follow_the_frequency_convention() {
    let rc = RunConfig::load(&example_config(), &[]).unwrap();
    let r = rc.resolve().unwrap();
    assert!((r.drive.omega1 - 2.0 * PI * 10.0).abs() < 1e-12);
    assert!((r.drive.g - 2.0 * PI * 0.206).abs() < 1e-12);
}
