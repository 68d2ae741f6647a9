//! End-to-end tests of the command line interface.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn specflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn result_of(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    let parsed: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("valid JSON report");
    parsed["result"].clone()
}

fn tmp_file(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("specflow-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn sf_scalar_tanh_reports_one() {
    let out = specflow(&["sf", "--preset", "scalar-tanh"]);
    let r = result_of(&out);
    assert_eq!(r["sf"], 1);
    assert_eq!(r["methods_agree"], true);
}

#[test]
fn index_tanh_diag_matches_pair() {
    let out = specflow(&["index", "--preset", "tanh-diag"]);
    let r = result_of(&out);
    assert_eq!(r["ker"], 1);
    assert_eq!(r["coker"], 1);
    assert_eq!(r["index"], 0);
    assert_eq!(r["pair_index"], 0);
    assert_eq!(r["match"], true);
}

#[test]
fn verify_battery_reports_all_passes() {
    let out = specflow(&[
        "verify",
        "--preset",
        "random-battery",
        "--seed",
        "7",
        "--count",
        "6",
        "--max-dim",
        "4",
    ]);
    let r = result_of(&out);
    assert_eq!(r["passes"], 6);
    assert_eq!(r["total"], 6);
    assert_eq!(r["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_is_deterministic_modulo_timestamp() {
    let args = [
        "verify",
        "--preset",
        "random-battery",
        "--seed",
        "11",
        "--count",
        "4",
        "--max-dim",
        "3",
    ];
    let a = specflow(&args);
    let b = specflow(&args);
    let ra: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    let rb: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    // the result subtree must be byte-identical once re-serialised
    assert_eq!(
        serde_json::to_string(&ra["result"]).unwrap(),
        serde_json::to_string(&rb["result"]).unwrap()
    );
}

#[test]
fn projector_subcommand_reads_limits() {
    let out = specflow(&["projector", "--preset", "tanh-diag", "--limit", "plus"]);
    let r = result_of(&out);
    assert_eq!(r["rank_plus"], 1);
    assert_eq!(r["rank_minus"], 1);
    assert!(r["margin"].as_f64().unwrap() > 0.9);
}

#[test]
fn stable_subcommand_reports_graph_agreement() {
    let out = specflow(&["stable", "--preset", "tanh-diag"]);
    let r = result_of(&out);
    assert_eq!(r["stable_dim"], 1);
    assert_eq!(r["unstable_dim"], 1);
    let d = r["methods_delta1"].as_f64().expect("graph ran");
    assert!(d <= 1e-6, "methods delta1 {d}");
}

#[test]
fn spec_file_round_trip_drives_sf() {
    let spec = serde_json::json!({
        "dim": 1,
        "kind": { "samples": {
            "times": (0..=600).map(|i| -15.0 + i as f64 * 0.05).collect::<Vec<f64>>(),
            "matrices": (0..=600).map(|i| vec![(-15.0 + i as f64 * 0.05_f64).tanh()]).collect::<Vec<_>>(),
            "limit_minus": [-1.0],
            "limit_plus": [1.0]
        }}
    });
    let file = tmp_file("spec.json");
    fs::write(&file, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = specflow(&["sf", "--spec", file.to_str().unwrap()]);
    let r = result_of(&out);
    assert_eq!(r["sf"], 1);
    fs::remove_file(&file).ok();
}

#[test]
fn csv_dump_is_written() {
    let csv = tmp_file("traj.csv");
    let out = specflow(&[
        "sf",
        "--preset",
        "scalar-tanh",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).expect("csv written");
    assert!(text.starts_with("t,"));
    assert!(text.lines().count() > 100);
    fs::remove_file(&csv).ok();
}

#[test]
fn invalid_input_exits_2() {
    let out = specflow(&["sf", "--preset", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));

    let file = tmp_file("bad.json");
    fs::write(&file, "{ not json").unwrap();
    let out = specflow(&["index", "--spec", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    fs::remove_file(&file).ok();
}

#[test]
fn non_hyperbolic_rotation_exits_3() {
    let out = specflow(&["index", "--preset", "rotation"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hyperbolic"), "stderr: {err}");
}

#[test]
fn demo_passes_and_writes_report() {
    let outfile = tmp_file("demo.json");
    let out = specflow(&["demo", "--out", outfile.to_str().unwrap()]);
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&outfile).unwrap()).unwrap();
    assert_eq!(parsed["result"]["all_pass"], true);
    fs::remove_file(&outfile).ok();
}
