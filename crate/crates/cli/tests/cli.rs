//! End-to-end checks of the clusterport binary: exit codes, report shape,
//! and byte-level determinism of repeated runs.

use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_clusterport"));
    cmd.env_remove("CLUSTERPORT_MAX_AMPS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn parse(output: &Output) -> Value {
    serde_json::from_slice(&output.stdout).expect("stdout is one JSON document")
}

#[test]
fn unit_run_enumerates_four_perfect_branches() {
    let out = run(&[
        "teleport", "--topology", "unit", "--d", "2", "--policy", "enumerate", "--input",
        "random", "--seed", "7",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["summary"]["branch_count"], 4);
    assert_eq!(report["branches"].as_array().unwrap().len(), 4);
    let psum = report["summary"]["probability_sum"].as_f64().unwrap();
    assert!((psum - 1.0).abs() < 1e-10);
    let min = report["summary"]["min_fidelity"].as_f64().unwrap();
    assert!(min > 1.0 - 1e-10);
    assert!(out.stdout.ends_with(b"\n"));
}

#[test]
fn coupled_pair_enumerates_sixteen_branches() {
    let out = run(&["teleport", "--topology", "coupled-pair", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["summary"]["branch_count"], 16);
    let min = report["summary"]["min_fidelity"].as_f64().unwrap();
    assert!(min > 1.0 - 1e-10);
}

#[test]
fn repeated_configs_are_byte_identical() {
    let args = ["teleport", "--topology", "chain", "--length", "5", "--seed", "42"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let sampled = [
        "teleport", "--topology", "unit", "--policy", "random", "--trials", "64", "--seed", "9",
    ];
    let first = run(&sampled);
    let second = run(&sampled);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    let bell = ["bell", "--trials", "500", "--seed", "4"];
    let first = run(&bell);
    let second = run(&bell);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn different_seeds_give_different_reports() {
    let a = run(&["teleport", "--topology", "unit", "--seed", "1"]);
    let b = run(&["teleport", "--topology", "unit", "--seed", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn explicit_input_teleports_exactly() {
    let out = run(&["teleport", "--topology", "unit", "--input", "1,0,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    let min = report["summary"]["min_fidelity"].as_f64().unwrap();
    assert!(min > 1.0 - 1e-12);
    assert_eq!(report["config"]["input"], "1,0,0,0");
}

#[test]
fn carved_grid_reports_deletions_then_teleports() {
    let out = run(&[
        "teleport", "--topology", "grid-carved", "--rows", "2", "--cols", "4", "--seed", "11",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["summary"]["branch_count"], 16);
    let notes: Vec<&str> =
        report["summary"]["notes"].as_array().unwrap().iter().map(|n| n.as_str().unwrap()).collect();
    assert_eq!(notes.iter().filter(|n| n.starts_with("carved site")).count(), 3);
}

#[test]
fn graph_file_carries_its_own_level_count() {
    let graph = clusterport::ClusterGraph::teleport_unit(3).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(graph.to_text().as_bytes()).unwrap();
    let path = file.path().to_str().unwrap();
    let out = run(&["teleport", "--graph-file", path, "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["config"]["d"], 3);
    assert_eq!(report["summary"]["branch_count"], 9);
}

#[test]
fn invalid_configurations_exit_two() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["teleport", "--topology", "chain", "--length", "4"],
        vec!["teleport", "--topology", "unit", "--length", "5"],
        vec!["teleport", "--topology", "unit", "--policy", "enumerate", "--trials", "10"],
        vec!["teleport", "--topology", "unit", "--input", "1,0,0"],
        vec!["teleport", "--topology", "unit", "--input", "1,0,0,0;0,1,0,0"],
        vec!["verify", "--topology", "unit", "--d", "1"],
        vec!["resources", "--n", "0"],
        vec!["bell", "--input", "1,0,0,0,0,0"],
        vec!["bell", "--trials", "0"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "args {args:?}");
        assert!(out.stdout.is_empty(), "no report on failure for {args:?}");
        assert!(!out.stderr.is_empty(), "stderr explains {args:?}");
    }
}

#[test]
fn malformed_graph_file_exits_two() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(b"d 2\nsite 0 inpu 0\n").unwrap();
    let path = file.path().to_str().unwrap();
    let out = run(&["teleport", "--graph-file", path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn register_cap_env_is_enforced_and_validated() {
    let out = bin()
        .args(["teleport", "--topology", "unit"])
        .env("CLUSTERPORT_MAX_AMPS", "4")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cap"));

    let out = bin()
        .args(["teleport", "--topology", "unit"])
        .env("CLUSTERPORT_MAX_AMPS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["teleport", "--topology", "unit"])
        .env("CLUSTERPORT_MAX_AMPS", "1024")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["config"]["register_cap"], 1024);
}

#[test]
fn broken_wire_exits_three() {
    let graph = clusterport::ClusterGraph::new(
        2,
        vec![clusterport::SiteRole::Input(0), clusterport::SiteRole::Output(0)],
        [(0usize, 1usize)],
    )
    .unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(graph.to_text().as_bytes()).unwrap();
    let path = file.path().to_str().unwrap();
    let out = run(&["teleport", "--graph-file", path, "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("protocol broken"));
}

#[test]
fn resources_reports_ebits_and_bits() {
    let out = run(&["resources", "--n", "2", "--d", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["summary"]["ebits"].as_f64().unwrap(), 2.0);
    assert_eq!(report["summary"]["classical_bits"].as_f64().unwrap(), 4.0);

    let out = run(&["resources", "--n", "3", "--d", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    let ebits = report["summary"]["ebits"].as_f64().unwrap();
    assert!((ebits - 3.0 * 3f64.log2()).abs() < 1e-9);
}

#[test]
fn verify_reports_zero_residuals() {
    for args in [
        vec!["verify", "--topology", "unit", "--d", "3"],
        vec!["verify", "--topology", "coupled-pair"],
        vec!["verify", "--topology", "grid-carved", "--rows", "3", "--cols", "3"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "args {args:?}");
        let report = parse(&out);
        let residual = report["summary"]["stabilizer_residual"].as_f64().unwrap();
        assert!(residual < 1e-12, "args {args:?} residual {residual}");
    }
    let out = run(&["verify", "--topology", "unit", "--d", "2"]);
    let report = parse(&out);
    assert!(report["summary"]["derived_relation_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn bell_eigenstate_lands_on_one_label() {
    let out = run(&["bell", "--input", "0.5,0,0.5,0,0.5,0,-0.5,0", "--trials", "100", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    let notes: Vec<&str> =
        report["summary"]["notes"].as_array().unwrap().iter().map(|n| n.as_str().unwrap()).collect();
    assert!(notes[0].starts_with("B+0: exact 1.0"));
    assert!(notes[0].contains("empirical 1.0"));
}

#[test]
fn stack_runs_all_wires() {
    let out = run(&["teleport", "--topology", "stack", "--wires", "2", "--seed", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let report = parse(&out);
    assert_eq!(report["summary"]["branch_count"], 16);
    let bits = report["summary"]["classical_bits"].as_f64().unwrap();
    assert_eq!(bits, 4.0);
}
