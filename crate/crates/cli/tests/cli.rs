use std::path::Path;
use std::process::{Command, Output};

use hyperising::diagnostics::node_diagnostics;
use hyperising::InteractionTensor;
use hyperising_cli::commands::{cmd_plot, cmd_sweep};
use hyperising_cli::sweep::{read_sweep_csv, SWEEP_SCHEMA};
use hyperising_cli::{PlotMetric, SweepConfig};
use hyperising::LambdaMode;
use tempfile::tempdir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperising"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config() -> SweepConfig {
    SweepConfig {
        p: vec![9],
        k: 3,
        d: 2,
        alpha_grid: vec![0.5, 1.0],
        trials: 3,
        divisor: 1e5,
        base_seed: 17,
        ..SweepConfig::default()
    }
}

#[test]
fn sweep_outputs_do_not_depend_on_workers() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let one = SweepConfig { workers: 1, ..small_config() };
    let three = SweepConfig { workers: 3, ..small_config() };
    cmd_sweep(&one, a.path()).unwrap();
    cmd_sweep(&three, b.path()).unwrap();
    for f in ["sweep.csv", "summary.csv", "sweep.svg", "config.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let csv = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with(SWEEP_SCHEMA));
    assert_eq!(csv.lines().count(), 2 + 6);
}

#[test]
fn zero_coupling_rejected_at_validation() {
    let dir = tempdir().unwrap();
    let out = bin(&["sweep", "--p", "9", "--d", "2", "--trials", "1", "--alpha-grid", "1", "--coupling", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coupling"));
}

#[test]
fn failed_trials_become_rows() {
    let dir = tempdir().unwrap();
    // a 6-regular simple 3-graph on 4 vertices would need 8 of the 4 triples
    let cfg = SweepConfig {
        p: vec![4],
        d: 6,
        k: 3,
        n_grid: vec![50],
        alpha_grid: vec![],
        trials: 2,
        ..small_config()
    };
    let res = cmd_sweep(&cfg, dir.path()).unwrap();
    assert!(res.rows.iter().all(|r| r.outcome.is_err()));
    assert_eq!(res.summary[0].failed, 2);
    assert_eq!(res.summary[0].mean_rate, None);
    let rows = read_sweep_csv(std::fs::File::open(dir.path().join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
}

#[test]
fn plot_structure_and_determinism() {
    let dir = tempdir().unwrap();
    let cfg = SweepConfig {
        p: vec![6, 9],
        alpha_grid: vec![0.5, 1.0, 1.5],
        trials: 1,
        lambda: LambdaMode::Fixed { lambda: 0.8 },
        ..small_config()
    };
    cmd_sweep(&cfg, dir.path()).unwrap();
    let csv = dir.path().join("sweep.csv");
    let a = cmd_plot(&csv, PlotMetric::Rate, &dir.path().join("a.svg")).unwrap();
    let b = cmd_plot(&csv, PlotMetric::Rate, &dir.path().join("b.svg")).unwrap();
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().filter(|l| l.starts_with("<polyline")).collect();
    assert_eq!(lines.len(), 2);
    for l in lines {
        let pts = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 3);
    }

    let empty = dir.path().join("empty.csv");
    std::fs::write(
        &empty,
        format!("{SWEEP_SCHEMA}\np,k,d,alpha,n,trial,seed,status,recovery_rate,success,lambda,false_positives,error\n"),
    )
    .unwrap();
    let svg = cmd_plot(&empty, PlotMetric::Success, &dir.path().join("e.svg")).unwrap();
    assert!(svg.contains("no data") && svg.contains("class=\"axes\""));

    std::fs::write(&empty, "a,b\n1,2\n").unwrap();
    let out = bin(&["plot", "--csv", s(&empty), "--out", s(&dir.path().join("x.svg"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_reproduces_a_sweep_trial() {
    let dir = tempdir().unwrap();
    let cfg = SweepConfig {
        alpha_grid: vec![1.0],
        trials: 1,
        ..small_config()
    };
    let res = cmd_sweep(&cfg, dir.path()).unwrap();
    let row = &res.rows[0];
    let m = row.outcome.as_ref().unwrap();
    let seed = row.seed.to_string();
    let n = row.n.unwrap().to_string();
    let tensor = dir.path().join("t.txt");
    let samples = dir.path().join("s.csv");
    ok(&bin(&["generate", "--p", "9", "--k", "3", "--d", "2", "--seed", &seed, "--out", s(&tensor)]));
    ok(&bin(&["sample", "--tensor", s(&tensor), "--n", &n, "--seed", &seed, "--out", s(&samples)]));
    ok(&bin(&["fit", "--samples", s(&samples), "--k", "3", "--truth", s(&tensor), "--out-dir", s(dir.path())]));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let rep = &json["report"];
    assert_eq!(rep["metrics"]["recovery_rate"].as_f64().unwrap(), m.recovery_rate);
    assert_eq!(rep["metrics"]["success"].as_bool().unwrap(), m.success);
    assert_eq!(rep["lambda"].as_f64().unwrap(), m.lambda);
    assert!(dir.path().join("coefficients.txt").exists());
}

#[test]
fn fit_on_ingested_series_and_bad_rows() {
    let dir = tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut text = String::from("a,b,c,d,e\n");
    for t in 0..400u64 {
        let v: Vec<String> = (0..5u64)
            .map(|j| {
                let h = hyperising::combinatorics::splitmix64(t * 31 + j);
                ((h % 1000) as f64 / 10.0).to_string()
            })
            .collect();
        text.push_str(&v.join(","));
        text.push('\n');
    }
    std::fs::write(&series, text).unwrap();
    let spins = dir.path().join("spins.csv");
    ok(&bin(&["ingest", "--series", s(&series), "--thin", "3", "--out", s(&spins)]));
    ok(&bin(&["fit", "--samples", s(&spins), "--k", "3", "--out-dir", s(dir.path())]));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["p"], 5);
    assert_eq!(json["report"]["nodes"].as_array().unwrap().len(), 5);
    assert!(json["report"]["metrics"].is_null());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "s0,s1,s2\n1,-1,1\n1,1,1\n-1,2,1\n").unwrap();
    let out = bin(&["fit", "--samples", s(&bad), "--k", "2", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn separable_fit_exits_with_solver_code() {
    let dir = tempdir().unwrap();
    let samples = dir.path().join("const.csv");
    let mut text = String::from("s0,s1,s2\n");
    for i in 0..12 {
        text.push_str(&format!("1,1,{}\n", if i % 3 == 0 { 1 } else { -1 }));
    }
    std::fs::write(&samples, text).unwrap();
    let out = bin(&["fit", "--samples", s(&samples), "--k", "2", "--lambda-mode", "fixed", "--lambda", "0", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn diagnose_commands() {
    let dir = tempdir().unwrap();
    let zero = dir.path().join("zero.txt");
    std::fs::write(&zero, "#tensor p=5 k=3\n").unwrap();
    ok(&bin(&["diagnose", "--tensor", s(&zero), "--out-dir", s(dir.path())]));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    for node in json["nodes"].as_array().unwrap() {
        assert!((node["c_min"].as_f64().unwrap() - 36.0).abs() < 1e-12);
        assert!((node["d_max"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(node["incoherence"].as_f64().unwrap(), 0.0);
    }

    let big = dir.path().join("big.txt");
    std::fs::write(&big, "#tensor p=40 k=3\n0 1 2 0.1\n").unwrap();
    let out = bin(&["diagnose", "--tensor", s(&big), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hint"));

    let one = dir.path().join("one.txt");
    let t = InteractionTensor::new(6, 3, [(vec![1, 3, 4], 0.3)]).unwrap();
    std::fs::write(&one, t.to_text()).unwrap();
    ok(&bin(&["diagnose", "--tensor", s(&one), "--probe-n", "100,1000", "--out-dir", s(dir.path())]));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    for r in 0..6 {
        let direct = serde_json::to_value(node_diagnostics(&t, r).unwrap()).unwrap();
        assert_eq!(json["nodes"][r], direct);
    }
    let probe = std::fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert_eq!(probe.lines().count(), 1 + 3);
}

#[test]
fn graph_ingest_feeds_generate() {
    let dir = tempdir().unwrap();
    let edges = dir.path().join("g.txt");
    std::fs::write(&edges, "0 1\n1 2\n0 2\n2 3\n3 4\n2 4\n4 5\n").unwrap();
    let support = dir.path().join("h.txt");
    ok(&bin(&["ingest", "--edges", s(&edges), "--out", s(&support)]));
    assert_eq!(std::fs::read_to_string(&support).unwrap(), "#support p=6 k=3\n0 1 2\n2 3 4\n");
    let tensor = dir.path().join("t.txt");
    ok(&bin(&["generate", "--support", s(&support), "--coupling", "0.2", "--out", s(&tensor)]));
    let t = InteractionTensor::from_text(&std::fs::read_to_string(&tensor).unwrap()).unwrap();
    assert_eq!(t.num_edges(), 2);
    assert_eq!(t.coupling(&[2, 3, 4]), 0.2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"p": [9], "k": 3, "d": 2, "n_grid": [120], "trials": 1, "lambda": {"mode": "fixed", "lambda": 0.9}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    ok(&bin(&["sweep", "--config", s(&cfg), "--trials", "2", "--workers", "1", "--out-dir", s(&out_dir)]));
    let stored: SweepConfig =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(stored.trials, 2);
    assert_eq!(stored.lambda, LambdaMode::Fixed { lambda: 0.9 });
    assert_eq!(stored.n_grid, vec![120]);

    std::fs::write(&cfg, r#"{"p": [9], "bogus": 1}"#).unwrap();
    let out = bin(&["sweep", "--config", s(&cfg), "--out-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
}
