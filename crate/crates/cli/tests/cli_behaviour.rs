use std::path::Path;
use std::process::{Command, Output};

use drcascade_cli::{bounds_path, Scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drcascade"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

fn col(csv: &str, k: usize) -> Vec<f64> {
    rows(csv).iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn case_study_profile_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("risk.csv");
    let o = run(&["risk", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next(), Some("agent,single_risk,nominal_risk,dr_risk"));
    let dr = col(&csv, 3);
    assert_eq!(dr.len(), 21);
    let others: Vec<f64> = dr.iter().enumerate().filter(|(j, _)| *j != 10).map(|(_, v)| *v).collect();
    let spread = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - others.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-9);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bounds_path(&out)).unwrap()).unwrap();
    assert_eq!(report["scenario"]["b0"], 4.0);
    assert_eq!(report["ambiguity"]["eps_plus"], 0.05);
    assert!(report["bounds"]["upper"].as_f64().unwrap() > 0.0);
}

#[test]
fn path_profile_grows_away_from_the_failure() {
    let o = run(&["risk", "--topology", "path"]);
    assert!(o.status.success());
    let dr = col(&String::from_utf8(o.stdout).unwrap(), 3);
    for d in 1..=10 {
        assert!((dr[10 - d] - dr[10 + d]).abs() < 1e-9 * dr[10 + d]);
    }
    for d in 3..10 {
        assert!(dr[10 + d + 1] > dr[10 + d], "distance {d}");
    }
    // Near neighbours are lifted by their strong correlation with the failed agent.
    assert!(dr[11] > dr[12] && dr[12] > dr[13]);
    assert!(dr[20] > dr[11]);
}

#[test]
fn zero_radius_reproduces_nominal_column() {
    for family in ["diffusion", "delay", "weights-uniform-delay"] {
        let o = run(&["risk", "--alpha", "0", "--family", family, "--n", "7", "--failed-agent", "3"]);
        assert!(o.status.success());
        let csv = String::from_utf8(o.stdout).unwrap();
        assert_eq!(col(&csv, 2), col(&csv, 3), "{family}");
    }
}

#[test]
fn invalid_input_exits_with_two() {
    for args in [
        vec!["risk", "--tau0", "1"],
        vec!["validate", "--tau0", "1"],
        vec!["simulate", "--tau0", "1"],
        vec!["sweep", "--axis", "tau", "--values", "0.5,1"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("UnstableDelay"), "{args:?}");
    }
    let o = run(&["risk", "--family", "weights-zero-delay"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("OutOfRange"));
    let o = run(&["risk", "--topology", "cycle", "--p", "11"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("InvalidRadius"));
    let o = run(&["risk", "--family", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_and_fails_on_zero_tolerance() {
    let base = ["validate", "--n", "3", "--weight", "1", "--b0", "1", "--tau0", "0.1", "--failed-agent", "0", "--mc-samples", "100000"];
    let o = run(&base);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 3);
    let mut loose = base.to_vec();
    loose.extend(["--sde-tol", "0"]);
    let o = run(&loose);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (k, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("r{k}.csv"));
        let o = bin()
            .env("DRCASCADE_THREADS", threads)
            .args(["risk", "--topology", "cycle", "--p", "3", "--family", "delay", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
        outs.push((std::fs::read(&out).unwrap(), std::fs::read(bounds_path(&out)).unwrap()));
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));

    let sim = |threads: &str| {
        bin()
            .env("DRCASCADE_THREADS", threads)
            .args(["simulate", "--n", "4", "--horizon", "30", "--burn-in", "5", "--trajectories", "6", "--seed", "17"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(sim("1"), sim("4"));
}

#[test]
fn tau_sweep_flags_the_stability_edge() {
    // Complete graph n = 21, w = 0.5: lambda_n = 10.5, delay limit pi/21.
    let lim = std::f64::consts::PI / 21.0;
    let vals = [0.2 * lim, 0.6 * lim, 0.9 * lim, lim * (1.0 - 2e-4), 1.1 * lim];
    let grid: Vec<String> = vals.iter().map(|v| format!("{v:.17e}")).collect();
    let o = run(&["sweep", "--axis", "tau", "--values", &grid.join(",")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    let r = rows(&csv);
    assert_eq!(r.len(), 5 * 21);
    let status = |k: usize| r[k * 21 + 3][5].clone();
    assert_eq!(status(0), "ok");
    assert_eq!(status(3), "ok;ConditioningWarning");
    assert_eq!(status(4), "error:UnstableDelay");
    assert_eq!(r[4 * 21 + 3][4], "");
    let dr: Vec<f64> = (0..4).map(|k| r[k * 21 + 3][4].parse().unwrap()).collect();
    assert!(dr.windows(2).all(|w| w[1] > w[0]));
    assert!(dr[3] > 10.0 * dr[0]);
}

#[test]
fn alpha_sweep_is_monotone_per_agent() {
    for family in ["diffusion", "delay"] {
        let o = run(&["sweep", "--axis", "alpha", "--values", "0,0.025,0.05", "--family", family, "--n", "9", "--topology", "path", "--failed-agent", "0"]);
        assert!(o.status.success());
        let csv = String::from_utf8(o.stdout).unwrap();
        let dr = col(&csv, 4);
        for j in 0..9 {
            assert!(dr[9 + j] >= dr[j] && dr[18 + j] >= dr[9 + j], "{family} agent {j}");
        }
    }
}

#[test]
fn scenario_files_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    std::fs::write(&g, r#"{"n": 4, "edges": [[0, 1, 1.0], [1, 2, 0.5], [2, 3, 2.0], [3, 0, 1.0]]}"#).unwrap();
    let sc = dir.path().join("s.json");
    let mut s = Scenario::default();
    s.failed_agent = 1;
    s.alpha = 0.1;
    std::fs::write(&sc, s.to_json()).unwrap();
    let o = run(&["risk", "--scenario", sc.to_str().unwrap(), "--graph", g.to_str().unwrap(), "--delta", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(report["scenario"]["failed_agent"], 1);
    assert_eq!(report["scenario"]["alpha"], 0.1);
    assert_eq!(report["scenario"]["delta"], 2.0);
    assert_eq!(rows(&String::from_utf8(o.stdout).unwrap()).len(), 4);

    let o = run(&["risk", "--graph", g.to_str().unwrap(), "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["risk", "--scenario", "/nonexistent/s.json"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(&sc, r#"{"b0": 1.0, "bogus": 3}"#).unwrap();
    let o = run(&["risk", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_covariance_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("traj.csv");
    let out = dir.path().join("cov.csv");
    let o = run(&[
        "simulate", "--n", "3", "--weight", "1", "--b0", "1", "--tau0", "0.1", "--horizon", "60", "--burn-in", "5",
        "--trajectories", "2", "--out", out.to_str().unwrap(), "--dump", dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cov = std::fs::read_to_string(&out).unwrap();
    assert_eq!(cov.lines().count(), 3);
    assert!(cov.lines().all(|l| l.split(',').count() == 3));
    let d = std::fs::read_to_string(Path::new(&dump)).unwrap();
    assert!(d.starts_with("t,agent_0,agent_1,agent_2\n"));
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["config"]["trajectories"], 2);
}

#[test]
fn help_documents_defaults() {
    let o = run(&["risk", "--help"]);
    let h = String::from_utf8(o.stdout).unwrap();
    for needle in ["[default: 21]", "[default: 0.5]", "[default: 4]", "[default: 0.05]", "[default: 10]", "[default: 5]", "[default: 0.1]", "[default: diffusion]"] {
        assert!(h.contains(needle), "missing {needle}");
    }
    let o = run(&["validate", "--help"]);
    let h = String::from_utf8(o.stdout).unwrap();
    assert!(h.contains("[default: 64]") && h.contains("[default: 0.05]") && h.contains("[default: 1000000]"));
}
