//! The `feecproj` binary end to end: outputs, files and exit codes.

use feecproj::mesh::Triangulation;
use feecproj::report::Report;
use feecproj::FeecError;
use std::process::{Command, Output};

fn feecproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feecproj")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_writes_a_loadable_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.json");
    let p = path.to_str().unwrap();
    let o = feecproj(&["mesh", "generate", "--domain", "unit_square", "--level", "2", "--out", p]);
    assert_eq!(o.status.code(), Some(0));
    let mesh = Triangulation::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(mesh.num_cells(), 32);

    let info = feecproj(&["mesh", "info", "--mesh-file", p]);
    assert_eq!(info.status.code(), Some(0));
    let text = stdout(&info);
    assert!(text.contains("simplices[2] 32"));
    assert!(text.contains("C_mesh 4.0000000000"));
}

#[test]
fn crossed_bricks_mesh_has_the_union_volume() {
    let o = feecproj(&["mesh", "generate", "--domain", "crossed_bricks", "--level", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let mesh = Triangulation::from_json(&stdout(&o)).unwrap();
    assert_eq!(mesh.n(), 3);
    // two 2×1×1 bricks that share only a face
    assert!((mesh.total_volume() - 4.0).abs() < 1e-12);
}

#[test]
fn unknown_domain_is_a_config_error() {
    let o = feecproj(&["mesh", "generate", "--domain", "torus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn calculus_suite_writes_a_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = feecproj(&["verify", "calculus", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert!(report.pass);
    assert!(report.timings.is_none());
    assert_eq!(report.config.thresholds.exact, 0.0);
    let future = text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    assert_eq!(Report::from_json(&future), Err(FeecError::UnsupportedReportVersion("99".into())));
}

#[test]
fn tightened_threshold_turns_into_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    std::fs::write(&path, r#"{"stokes": 0.0, "duality_slack": -0.5}"#).unwrap();
    let o = feecproj(&["verify", "calculus", "--thresholds", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("FAIL calculus/duality"));
    // failures name the owning module and the invariant
    assert!(text.contains("dof-chains:"), "{text}");
}

#[test]
fn infeasible_epsilon_names_the_violated_condition() {
    let o = feecproj(&["verify", "spaces", "--epsilon", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("violated"), "{err}");
    assert!(err.contains("ε_h"), "{err}");
}

#[test]
fn epsilon_scaling_table_ends_with_slope() {
    let o = feecproj(&["study", "epsilon-scaling", "--level", "2", "--count", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,value,ceiling,pass");
    assert_eq!(lines.len(), 7);
    assert!(lines[1..6].iter().all(|l| l.ends_with(",true")));
    assert!(lines[6].starts_with("slope,") && lines[6].ends_with(",true"));
}

#[test]
fn refinement_table_has_four_levels() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("levels.csv");
    let json = dir.path().join("levels.json");
    let o = feecproj(&[
        "study",
        "refinement-boundedness",
        "--levels",
        "0..3",
        "--degree",
        "1",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("level,value,ceiling,pass\n0,"));
    let report = Report::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(report.boundedness_studies[0].max_ratio <= 1.5);
}

#[test]
fn thread_count_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_feecproj"))
        .args(["verify", "calculus"])
        .env("FEECPROJ_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_feecproj"))
        .args(["verify", "calculus"])
        .env("FEECPROJ_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
