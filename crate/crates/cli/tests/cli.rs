use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use routhlab_cli::csvio::{read_trajectory, read_trajectory_file, write_trajectory};
use routhlab_core::ode::IntegratorStats;
use routhlab_core::Trajectory;
use serde_json::Value;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn routhlab(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_routhlab"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn record(out: &Path, cmd: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{cmd}.report.json"))).unwrap()).unwrap()
}

#[test]
fn free_particle_moves_in_a_straight_line() {
    let out = tempfile::tempdir().unwrap();
    let o = routhlab("integrate-el", &configs().join("free_particle.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_trajectory_file(&out.path().join("trajectory.csv")).unwrap().trajectory;
    assert_eq!(t.len(), 2);
    let (x0, v0) = (&t.positions[0], &t.velocities[0]);
    for i in 0..2 {
        assert!((t.positions[1][i] - (x0[i] + v0[i])).abs() < 1e-12);
    }
    assert!(out.path().join("trajectory.svg").exists());
}

#[test]
fn energy_column_is_constant_in_the_output_file() {
    let out = tempfile::tempdir().unwrap();
    let o = routhlab("integrate-el", &configs().join("example3_poincare.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let t = read_trajectory_file(&out.path().join("trajectory.csv")).unwrap();
    assert_eq!(t.log_label, "E_L");
    let e0 = t.trajectory.energy_log[0];
    assert!((e0 - 1.0).abs() < 1e-12);
    assert!(t.trajectory.energy_log.iter().all(|e| (e - e0).abs() <= 1e-8));
    assert!(t.trajectory.positions.iter().all(|p| p[0].hypot(p[1]) < 1.0));
    let svg = std::fs::read_to_string(out.path().join("trajectory.svg")).unwrap();
    assert!(svg.contains("<circle"));
}

#[test]
fn describe_reports_domain_and_convexity() {
    let out = tempfile::tempdir().unwrap();
    let o = routhlab("describe", &configs().join("example3_poincare.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = record(out.path(), "describe");
    assert_eq!(r["summary"]["domain"], "open unit disk |x| < 1");
    assert_eq!(r["report"]["overall"], true);
}

#[test]
fn describe_flat_minimum_energy_is_minimum_potential() {
    // E_L = ½|v|² + V and V ≥ 0.5 with equality only on x1 = 0; the minimum
    // over samples at rest is the minimum sampled V.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "flat.json",
        r#"{"model": {"family": "simple", "potential": "0.5 + x1^2"}, "sample_radius": 0.5}"#,
    );
    let o = routhlab("describe", &cfg, dir.path(), &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let r = record(dir.path(), "describe");
    assert_eq!(r["seed"], 3);
    let min_e = r["summary"]["min_sampled_energy"].as_f64().unwrap();
    let x = r["summary"]["min_energy_point"][0].as_f64().unwrap();
    assert!((min_e - (0.5 + x * x)).abs() < 1e-15);
    assert!(min_e < 0.51);
}

#[test]
fn malformed_expression_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": {"family": "expression", "expression": "0.5*v1^2 + sin(x1"}}"#,
    );
    let o = routhlab("describe", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("column"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_routhlab")).arg("describe").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = routhlab("describe", &dir.path().join("missing.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), "typo.json", r#"{"model": {"family": "simple"}, "enrgy": 1}"#);
    assert_eq!(routhlab("describe", &cfg, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn empty_plot_input_list_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "plot.json",
        r#"{"model": {"family": "poincare_magnetic"}, "plot": {"inputs": []}}"#,
    );
    assert_eq!(routhlab("plot", &cfg, dir.path(), &[]).status.code(), Some(2));
}

#[test]
fn plot_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("example3_plot.json");
    assert_eq!(routhlab("plot", &cfg, a.path(), &[]).status.code(), Some(0));
    assert_eq!(routhlab("plot", &cfg, b.path(), &[]).status.code(), Some(0));
    let sa = std::fs::read(a.path().join("example3.svg")).unwrap();
    assert_eq!(sa, std::fs::read(b.path().join("example3.svg")).unwrap());
    let text = String::from_utf8(sa).unwrap();
    assert!(text.contains(r#"width="800" height="800""#));
    assert_eq!(text.matches("<polyline").count(), 3);
    for label in ["ftau_0", "ftau_0.5", "ftau_1"] {
        assert!(text.contains(&format!(">{label}</text>")));
    }
}

#[test]
fn finslerize_marks_unreachable_cells() {
    // V = 2x1² exceeds e = 0.5 for |x1| > 0.5.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        r#"{"model": {"family": "simple", "potential": "2*x1^2"}, "energy": 0.5,
            "sample_radius": 1.0, "finslerize": {"grid": 5}}"#,
    );
    let o = routhlab("finslerize", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let text = std::fs::read_to_string(dir.path().join("finsler.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,y1,y2,iota0,F_e,F_e_2y,F_closed,status");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 50);
    for row in &rows {
        let x1: f64 = row[0].parse().unwrap();
        if x1.abs() > 0.5 {
            assert_eq!(row[8], "unreachable");
            assert!(row[4..8].iter().all(|c| c.is_empty()));
        } else if x1.abs() < 0.5 {
            assert_eq!(row[8], "ok");
            let f: f64 = row[5].parse().unwrap();
            let f2: f64 = row[6].parse().unwrap();
            let closed: f64 = row[7].parse().unwrap();
            assert!((f2 - 2.0 * f).abs() <= 1e-12 * f2);
            assert!((f - closed).abs() <= 1e-10 * f);
        }
        assert!(!row.iter().any(|c| c.contains("NaN")));
    }
}

#[test]
fn bundled_configs_verify() {
    for (cmd, cfg) in [
        ("verify", "example2_magnetic.json"),
        ("verify", "example3_poincare.json"),
        ("verify", "jacobi_harmonic.json"),
        ("routh-reduce", "polar_routh.json"),
    ] {
        let out = tempfile::tempdir().unwrap();
        let o = routhlab(cmd, &configs().join(cfg), out.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{cfg}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn all_cyclic_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"model": {"family": "simple"}, "initial": {"x0": [0, 0], "v0": [1, 1]}, "routh": {"cyclic": [1, 2]}}"#,
    );
    let o = routhlab("routh-reduce", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension 0"));
}

#[test]
fn seed_is_recorded_and_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("example2_magnetic.json");
    routhlab("finslerize", &cfg, a.path(), &["--seed", "9"]);
    routhlab("finslerize", &cfg, b.path(), &["--seed", "9"]);
    assert_eq!(
        std::fs::read(a.path().join("finsler.csv")).unwrap(),
        std::fs::read(b.path().join("finsler.csv")).unwrap()
    );
    assert_eq!(record(a.path(), "finslerize")["seed"], 9);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1e3..1e3f64,
        Just(0.0),
        Just(-0.0),
    ]
}

prop_compose! {
    fn trajectory()(n in 1..4usize, m in 1..20usize)
        (rows in prop::collection::vec(prop::collection::vec(finite(), 2 * n + 1), m),
         dts in prop::collection::vec(1e-9..10.0f64, m), n in Just(n))
        -> Trajectory {
        let mut t = 0.0;
        let times = dts.iter().map(|dt| { t += dt; t }).collect();
        Trajectory {
            times,
            positions: rows.iter().map(|r| r[..n].to_vec()).collect(),
            velocities: rows.iter().map(|r| r[n..2 * n].to_vec()).collect(),
            energy_log: rows.iter().map(|r| r[2 * n]).collect(),
            stats: IntegratorStats::default(),
        }
    }
}

proptest! {
    #[test]
    fn csv_round_trip_is_byte_identical(t in trajectory()) {
        let mut a = Vec::new();
        write_trajectory(&mut a, &t, "E_L").unwrap();
        let back = read_trajectory(a.as_slice()).unwrap();
        prop_assert_eq!(&back.trajectory.positions, &t.positions);
        prop_assert_eq!(&back.trajectory.energy_log, &t.energy_log);
        let mut b = Vec::new();
        write_trajectory(&mut b, &back.trajectory, &back.log_label).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn bundled_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            let cfg = routhlab_cli::config::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.lagrangian().unwrap();
            n += 1;
        }
    }
    assert!(n >= 10);
}
