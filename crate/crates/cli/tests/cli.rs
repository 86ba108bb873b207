use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_concomp"))
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "mechanisms", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

const POINT_MASS: &str = r#"{
  "version": 1,
  "rounds": 1,
  "query_alphabet": [["_"]],
  "answer_alphabet": [["0", "1"]],
  "branches": {
    "x0": {"|_": {"0": "1/1", "1": "0/1"}},
    "x1": {"|_": {"0": "0/1", "1": "1/1"}}
  }
}"#;

#[test]
fn basic_bound_prints_integral_delta_as_an_integer() {
    let o = run(&["bound", "basic", "--eps", "0.5,0.3"]);
    assert_eq!(
        stdout(&o),
        "{\"eps_g\":0.8,\"delta_g\":0,\"theorem\":\"basic-pure\"}\n"
    );
}

#[test]
fn privloss_of_randomized_response() {
    let v = json(&run(&[
        "privloss",
        "--mechanism",
        &fixture("rr2.json"),
        "--delta",
        "0",
    ]));
    assert_eq!(v["u"], "2/1");
    assert!((v["eps"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn simulator_verifies() {
    let o = run(&[
        "simulate-rr",
        "--mechanism",
        &fixture("rr2.json"),
        "--verify",
    ]);
    assert_eq!(
        stdout(&o),
        "{\"status\":\"pass\",\"adversaries_checked\":1}\n"
    );
    let v = json(&run(&[
        "simulate-rr",
        "--mechanism",
        &fixture("two_round.json"),
        "--verify",
    ]));
    assert_eq!(v["adversaries_checked"], 4);
}

#[test]
fn simulator_file_uses_rr_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let o = run(&[
        "simulate-rr",
        "--mechanism",
        &fixture("rr2.json"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let sim: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(sim["branches"]["rr0"]["|_"]["0"], "1/1");
}

#[test]
fn mechanism_from_stdin() {
    let mut child = bin()
        .args(["privloss", "--mechanism", "-", "--delta", "1/10"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(std::fs::read(fixture("rr3.json")).unwrap().as_slice())
        .unwrap();
    let v = json(&child.wait_with_output().unwrap());
    assert_eq!(v["delta"], "1/10");
    // δ = 1/10 on RR at u = 3: (3/4 − u'/4) = 1/10 at u' = 13/5
    assert_eq!(v["u"], "13/5");
}

#[test]
fn exit_codes_follow_the_error_class() {
    assert_eq!(
        run(&["bound", "basic", "--eps", "0.5", "--bogus"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&["privloss", "--mechanism", "missing.json", "--delta", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run(&[
            "privloss",
            "--mechanism",
            &fixture("rr2.json"),
            "--delta",
            "2"
        ])
        .status
        .code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let point = dir.path().join("point.json");
    std::fs::write(&point, POINT_MASS).unwrap();
    let o = run(&[
        "privloss",
        "--mechanism",
        point.to_str().unwrap(),
        "--delta",
        "0",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let broken = dir.path().join("broken.json");
    std::fs::write(
        &broken,
        POINT_MASS.replace("\"0\": \"1/1\"", "\"0\": \"1/2\""),
    )
    .unwrap();
    assert_eq!(
        run(&[
            "privloss",
            "--mechanism",
            broken.to_str().unwrap(),
            "--delta",
            "0"
        ])
        .status
        .code(),
        Some(3)
    );
    let o = run(&[
        "simulate-rr",
        "--mechanism",
        &fixture("rr2.json"),
        "--scale",
        "3/2",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not (3/2)-pure-DP"));
}

#[test]
fn help_names_the_theorem() {
    let basic = stdout(&run(&["bound", "basic", "--help"]));
    assert!(basic.contains("Basic composition theorem"));
    let optimal = stdout(&run(&["bound", "optimal", "--help"]));
    assert!(optimal.contains("Optimal composition theorem"));
    let hybrid = stdout(&run(&["bound", "hybrid", "--help"]));
    assert!(hybrid.contains("Hybrid-argument bound"));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn composed_file_round_trips_through_privloss() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let v = json(&run(&[
        "concomp",
        "--mechanisms",
        &format!("{},{}", fixture("rr2.json"), fixture("rr3.json")),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(v["rounds"], 2);
    let loss = json(&run(&[
        "privloss",
        "--mechanism",
        out.to_str().unwrap(),
        "--delta",
        "0",
    ]));
    assert_eq!(loss["u"], "6/1");
    let ordered = dir.path().join("o.json");
    let v = json(&run(&[
        "concomp",
        "--ordered",
        "--mechanisms",
        &format!("{},{}", fixture("rr2.json"), fixture("rr3.json")),
        "--out",
        ordered.to_str().unwrap(),
    ]));
    assert_eq!(v["adversaries"], "1");
}

#[test]
fn lp_check_writes_the_system() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.txt");
    let v = json(&run(&[
        "lp-check",
        "--mechanism",
        &fixture("two_round.json"),
        "--delta",
        "0.05",
        "--system-out",
        sys.to_str().unwrap(),
    ]));
    assert_eq!(v["status"], "feasible");
    assert_eq!(v["delta"], "1/20");
    assert_eq!(std::fs::read_to_string(sys).unwrap().lines().count(), 40);
    let below = json(&run(&[
        "lp-check",
        "--mechanism",
        &fixture("two_round.json"),
        "--delta",
        "1/20",
        "--scale",
        "1",
    ]));
    assert_eq!(below["status"], "infeasible");
}

#[test]
fn experiment_output_is_byte_stable() {
    let args = [
        "--seed",
        "5",
        "experiment",
        "rr-feasibility",
        "--trials",
        "4",
        "--format",
        "csv",
        "--no-runtime",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 5);
    let summary = json(&run(&[
        "--seed",
        "5",
        "experiment",
        "rr-feasibility",
        "--trials",
        "4",
    ]));
    assert_eq!(summary["feasible"], 4);
    assert_eq!(summary["seed"], 5);
    let zero = json(&run(&["experiment", "rr-feasibility", "--trials", "0"]));
    assert_eq!(zero["trials"], 0);
}

#[test]
fn compare_bounds_defaults_to_csv_with_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let o = run(&[
        "--output",
        out.to_str().unwrap(),
        "experiment",
        "compare-bounds",
        "--k-max",
        "20",
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("k,eps_basic,delta_hybrid,eps_optimal,delta_g,eps_advanced\n"));
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn eps_is_converted_to_a_bounded_fraction() {
    let o = run(&[
        "simulate-rr",
        "--mechanism",
        &fixture("rr2.json"),
        "--eps",
        "0.8",
        "--verify",
    ]);
    assert!(o.status.success());
    let note = String::from_utf8_lossy(&o.stderr);
    assert!(note.contains("taken as scale u = "), "{note}");
}
