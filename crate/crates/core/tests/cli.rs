use shearlab::acceptance::{exponent_rows, exponent_rows_match};
use shearlab::experiment::{run, run_many, Experiment, ExperimentConfig, RunError};
use shearlab::planner::Rational;
use std::fs;
use std::path::Path;
use std::process::Command;

fn shearlab(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_shearlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SHEARLAB_OUT")
        .output()
        .expect("binary runs")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn every_experiment_has_a_documented_schema() {
    for e in Experiment::ALL {
        assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        for (key, _, doc) in e.schema() {
            assert!(!doc.is_empty(), "{e}: {key} undocumented");
        }
    }
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Plan, dir.path().to_path_buf());
    match cfg.set("gama", "1") {
        Err(RunError::Config { key, .. }) => assert_eq!(key, "gama"),
        other => panic!("expected config error, got {other:?}"),
    }
    let out = shearlab(&["plan", "--gama", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn malformed_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["plan", "--gamma", "abc"][..],
        &["plan", "gamma=0.5"],
        &["robin-rates", "--limit", "sideways"],
        &["certify", "--rho", "x"],
        &["no-such-experiment"],
    ] {
        let out = shearlab(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn plan_dump_and_order_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = shearlab(&["plan", "gamma=0.6", "N=1", "M=2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let plan = fs::read_to_string(dir.path().join("plan/plan.txt")).unwrap();
    assert!(plan.contains("theta            1/10"), "{plan}");
    assert!(plan.contains("regime           neumann-mid"));
    let table = fs::read_to_string(dir.path().join("plan/order_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("j,k_j,nu_order_uI,nu_order_ub"));
    assert_eq!(lines.count(), 3);
    assert!(dir.path().join("plan/order_table.gp").exists());
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plan.cfg");
    fs::write(&file, "# exponent\ngamma = 0.7\nM = 1 # one correction\n").unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Plan, dir.path().to_path_buf());
    cfg.apply_file(&file).unwrap();
    assert_eq!(cfg.parameters()["gamma"], "0.7");
    assert_eq!(cfg.parameters()["M"], "1");

    fs::write(&file, "gamma = 0.7\nbeta = 2\n").unwrap();
    let out = shearlab(&["plan", "--config", file.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn certify_passes_for_the_gevrey_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = shearlab(&["certify", "profile=gevrey", "rho=2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("certify/certificate.csv")).unwrap();
    assert!(csv.starts_with("profile,eta0,n,q_value,y0,q_at_y0,q_prime_at_y0,min_eig,pass\n"));
    assert!(csv.trim_end().ends_with(",true"));
}

#[test]
fn robin_rates_with_defaults_pass_and_write_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::RobinRates, dir.path().to_path_buf());
    let report = run(&cfg).unwrap();
    assert!(report.pass);
    assert!((report.metrics["slope"] + 1.0).abs() < 0.1);
    let summary = fs::read_to_string(dir.path().join("robin-rates/summary.csv")).unwrap();
    assert!(summary.starts_with("experiment,slope,intercept,r2,expected_slope,tolerance,pass\n"));

    // An unreachable target fails on the documented threshold, not with an error.
    cfg.set("expected_slope", "-2").unwrap();
    assert!(!run(&cfg).unwrap().pass);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for exp in ["robin-rates", "instability-time", "corrector", "plan"] {
        for d in [&a, &b] {
            let out = shearlab(&[exp, "--seed", "7"], d.path());
            assert_eq!(out.status.code(), Some(0), "{exp}");
        }
        let (fa, fb) = (csv_files(&a.path().join(exp)), csv_files(&b.path().join(exp)));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{exp}");
    }
}

#[test]
fn csvs_use_lf_and_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::new(Experiment::ErfReference, dir.path().to_path_buf());
    let report = run(&cfg).unwrap();
    assert!(report.pass);
    for path in report.artifacts.iter().filter(|p| p.extension().is_some_and(|x| x == "csv")) {
        let text = fs::read_to_string(path).unwrap();
        assert!(!text.contains('\r'));
        let header = text.lines().next().unwrap();
        assert!(header.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == ','), "{header}");
    }
}

#[test]
fn concurrent_runs_match_sequential_runs() {
    let (seq, par) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let exps = [Experiment::Plan, Experiment::Gronwall, Experiment::InstabilityTime];
    for e in exps {
        run(&ExperimentConfig::new(e, seq.path().to_path_buf())).unwrap();
    }
    let configs: Vec<_> = exps.iter().rev().map(|&e| ExperimentConfig::new(e, par.path().to_path_buf())).collect();
    let reports: Vec<_> = run_many(&configs).into_iter().map(Result::unwrap).collect();
    let names: Vec<_> = reports.iter().map(|r| r.experiment.name()).collect();
    assert_eq!(names, ["gronwall", "plan", "instability-time"]);
    for e in exps {
        assert_eq!(csv_files(&seq.path().join(e.name())), csv_files(&par.path().join(e.name())));
    }
}

#[test]
fn tampered_exponent_table_is_rejected() {
    assert!(exponent_rows_match(&exponent_rows()).unwrap());
    let mut rows = exponent_rows();
    rows[3].1 = Rational::new(1, 9);
    assert!(!exponent_rows_match(&rows).unwrap());
    let mut rows = exponent_rows();
    rows[5].2 = Rational::new(1, 100);
    assert!(!exponent_rows_match(&rows).unwrap());
}
