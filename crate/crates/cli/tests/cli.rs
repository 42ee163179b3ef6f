use std::fs;
use std::process::Command;

fn rg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rg"))
}

#[test]
fn run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    fs::write(&cfg, "experiment = exp1-gauss\nT = 40\nM = 4\nruns = 5\ntiming = off\n").unwrap();
    let out = dir.path().join("out");
    let status = rg().arg("run").arg(&cfg).arg("--out").arg(&out).arg("--workers").arg("2").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = fs::read_to_string(out.join("exp1-gauss.csv")).unwrap();
    assert!(text.starts_with("experiment,method,kernel,T,M,sigma,E,runs,mse,wall_time_s\n"));
    assert_eq!(text.lines().count(), 3);
    assert!(!text.contains('\r'));
}

#[test]
fn seed_flag_changes_output_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    fs::write(&cfg, "experiment = exp2-bimodal\nT = 30\nruns = 4\ntiming = off\n").unwrap();
    let csv = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let st = rg().arg("run").arg(&cfg).arg("--out").arg(&out).args(["--seed", seed]).status().unwrap();
        assert!(st.success());
        fs::read_to_string(out.join("exp2-bimodal.csv")).unwrap()
    };
    let a = csv("3", "a");
    assert_eq!(a, csv("3", "b"));
    assert_ne!(a, csv("4", "c"));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "experiment = exp2-bimodal\nmethod = ideal-sg\n").unwrap();
    let out = rg().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("method"));

    fs::write(&cfg, "experiment = exp1-gauss\nruns = 0\n").unwrap();
    assert_eq!(rg().arg("run").arg(&cfg).status().unwrap().code(), Some(2));
    assert_eq!(rg().args(["oracle", "banana"]).status().unwrap().code(), Some(2));

    let data = dir.path().join("flat.csv");
    fs::write(&data, "a,b\n1,2\n1,3\n").unwrap();
    let st = rg().arg("depgraph").arg(&data).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn oracle_prints_moments() {
    let out = rg().args(["oracle", "gauss", "--n", "300"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cov12: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("cov_12,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((cov12 - 2.0 / 3.0).abs() < 1e-3);
}

#[test]
fn depgraph_writes_results_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv");
    let mut text = String::from("u,v\n");
    for i in 0..20 {
        let u = i as f64 / 4.0;
        text.push_str(&format!("{u},{}\n", (u * 0.7).sin()));
    }
    fs::write(&data, text).unwrap();
    let st = rg()
        .arg("depgraph")
        .arg(&data)
        .args(["--surrogates", "3", "--alpha", "0.1"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let results = fs::read_to_string(dir.path().join("obs_results.csv")).unwrap();
    assert!(results.starts_with("in,out,stat,observed,p_value\n"));
    assert_eq!(results.lines().count(), 1 + 2 * 3);
    let dot = fs::read_to_string(dir.path().join("obs.dot")).unwrap();
    assert!(dot.contains("\"u\" -- \"v\""));
}
