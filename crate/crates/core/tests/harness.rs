use std::fs;

use recycling_gibbs::harness::{parse_spec, run_experiment, write_outputs, RunOptions};
use recycling_gibbs::report::parse_mse_csv;

fn opts() -> RunOptions {
    RunOptions {
        workers: Some(2),
        cache_dir: None,
    }
}

#[test]
fn sigma_sweep_report_round_trips() {
    let spec = parse_spec(
        "experiment = exp2-bimodal\nmethod = mh-sg, mh-mrg\nT = 60\nM = 2\nruns = 5\nsweep = sigma: 1, 3\ntiming = off\n",
    )
    .unwrap();
    let result = run_experiment(&spec, &opts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&result, dir.path()).unwrap();
    assert_eq!(files.len(), 1);
    let text = fs::read_to_string(&files[0]).unwrap();
    let rows = parse_mse_csv(&text).unwrap();
    assert_eq!(rows, result.rows);
    assert_eq!(rows.iter().map(|r| r.sigma).collect::<Vec<_>>(), [1.0, 1.0, 3.0, 3.0]);
}

#[test]
fn dimension_sweep_uses_reference_cache() {
    let text = "experiment = exp4-gp-ard\nP = 12\nT = 10\nM = 2\nruns = 2\nref_T = 40\nref_M = 2\nsweep = D: 2, 3\ntiming = off\n";
    let spec = parse_spec(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions {
        workers: Some(1),
        cache_dir: Some(dir.path().join("cache")),
    };
    let first = run_experiment(&spec, &options).unwrap();
    assert_eq!(first.rows.len(), 4);
    assert_eq!(fs::read_dir(dir.path().join("cache")).unwrap().count(), 2);
    let second = run_experiment(&spec, &options).unwrap();
    assert_eq!(first.to_csv(), second.to_csv());
    // E is per coordinate, so it stays M * T whatever D is
    assert!(first.rows.iter().all(|r| r.evaluations == 20.0));
}

#[test]
fn dependence_experiment_writes_csv_and_dot() {
    let spec = parse_spec("experiment = exp5-depgraph\nn = 20\nsurrogates = 2\nT = 10\nM = 3\n").unwrap();
    let result = run_experiment(&spec, &opts()).unwrap();
    let dep = result.depgraph.as_ref().unwrap();
    // four variables, both directions of every pair
    assert_eq!(dep.results.len(), 12);
    assert_eq!(dep.dot.matches(" -- ").count(), 6);
    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&result, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["exp5-depgraph_results.csv", "exp5-depgraph.dot"]);
}

#[test]
fn burn_in_only_changes_standard_rows() {
    let base = "experiment = exp1-gauss\nT = 80\nM = 3\nruns = 4\ntiming = off\n";
    let a = run_experiment(&parse_spec(base).unwrap(), &opts()).unwrap();
    let b = run_experiment(&parse_spec(&format!("{base}burn_in = 20\n")).unwrap(), &opts()).unwrap();
    assert_ne!(a.rows[0].mse, b.rows[0].mse);
    assert_eq!(a.rows[1].mse, b.rows[1].mse);
}
