mod common;

use std::fs;
use std::process::{Command, Output};

use common::oracle_sum;
use verifiable_pcf::bench::{build_process, CHAINED_GUEST};
use verifiable_pcf::domain::{
    ActivitySpec, EmissionFactor, ProcessModel, ResourceAmount, Scope, Strategy,
};
use verifiable_pcf::guests::{reference_descriptor, ChainedGuestInput, GuestInput};
use verifiable_pcf::proofsys::{GuestRole, Receipt};

fn vpcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpcf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn total_of(pcf_json: &str) -> i64 {
    let v: serde_json::Value = serde_json::from_str(pcf_json).expect("json output");
    v["total"].as_i64().expect("total field")
}

#[test]
fn guests_lists_reference_image_ids() {
    let out = vpcf(&["guests"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    let chained = reference_descriptor(GuestRole::ChainedFootprint).image_id();
    assert!(text.contains(&chained.to_hex()));
}

#[test]
fn prove_then_verify_and_reject_edit() {
    let dir = tempfile::tempdir().unwrap();
    let input = GuestInput::Chained(ChainedGuestInput::genesis(
        "a1",
        EmissionFactor(2000),
        ResourceAmount(3),
    ));
    let input_path = dir.path().join("input.json");
    let receipt_path = dir.path().join("receipt.json");
    fs::write(&input_path, serde_json::to_string(&input).unwrap()).unwrap();

    let out = vpcf(&[
        "prove",
        "--input",
        input_path.to_str().unwrap(),
        "--out",
        receipt_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let receipt = Receipt::from_json(&fs::read_to_string(&receipt_path).unwrap()).unwrap();
    assert_eq!(receipt.journal.cumulative_total.0, 6000);

    let out = vpcf(&["verify", "--receipt", receipt_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("6000"));

    let out = vpcf(&[
        "verify",
        "--receipt",
        receipt_path.to_str().unwrap(),
        "--guest",
        "composer",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let mut edited = receipt.clone();
    edited.journal.cumulative_total.0 = 5999;
    fs::write(&receipt_path, edited.to_json()).unwrap();
    let out = vpcf(&["verify", "--receipt", receipt_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_model_file_writes_exports() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = [(1200, 2000), (8500, 900), (150, 4000)];
    for strategy in Strategy::ALL {
        let model_path = dir.path().join(format!("{strategy}.json"));
        let events = dir.path().join(format!("{strategy}.jsonl"));
        let vars = dir.path().join(format!("{strategy}.vars.json"));
        fs::write(&model_path, build_process("p", strategy, &pairs).to_json()).unwrap();
        let out = vpcf(&[
            "run",
            "--model",
            model_path.to_str().unwrap(),
            "--events",
            events.to_str().unwrap(),
            "--variables",
            vars.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(total_of(&stdout(&out)), 10_650_000);
        let log = fs::read_to_string(&events).unwrap();
        for line in log.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
        let snapshot: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&vars).unwrap()).unwrap();
        assert!(snapshot.is_array() || snapshot.is_object());
    }
}

#[test]
fn run_with_external_receipt_and_trusted_key() {
    let dir = tempfile::tempdir().unwrap();
    let input = GuestInput::Chained(ChainedGuestInput::genesis(
        "upstream",
        EmissionFactor(700),
        ResourceAmount(11),
    ));
    let input_path = dir.path().join("input.json");
    let receipt_path = dir.path().join("upstream.json");
    fs::write(&input_path, serde_json::to_string(&input).unwrap()).unwrap();
    assert!(vpcf(&[
        "prove",
        "--input",
        input_path.to_str().unwrap(),
        "--out",
        receipt_path.to_str().unwrap()
    ])
    .status
    .success());

    let model = ProcessModel {
        id: "downstream".into(),
        strategy: Strategy::Chained,
        activities: vec![
            ActivitySpec::verify_external("check", "supplier", Scope::Scope3),
            ActivitySpec::prove("make", 10, 5, CHAINED_GUEST, Scope::Scope1),
        ],
    };
    let model_path = dir.path().join("model.json");
    fs::write(&model_path, model.to_json()).unwrap();
    let chained = reference_descriptor(GuestRole::ChainedFootprint).image_id();
    let external = format!("check={}", receipt_path.display());
    let trust = format!("supplier={chained}");
    let out = vpcf(&[
        "run",
        "--model",
        model_path.to_str().unwrap(),
        "--external",
        &external,
        "--trust",
        &trust,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(total_of(&stdout(&out)), 7700 + 50);

    let wrong = format!(
        "supplier={}",
        reference_descriptor(GuestRole::Composer).image_id()
    );
    let out = vpcf(&[
        "run",
        "--model",
        model_path.to_str().unwrap(),
        "--external",
        &external,
        "--trust",
        &wrong,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("verification_failed"));
}

#[test]
fn bench_formats() {
    let out = vpcf(&[
        "bench",
        "--activities",
        "1..3",
        "--reps",
        "1",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "n");
    assert!(headers.iter().any(|h| h == "chained_size_bytes"));
    assert_eq!(reader.records().count(), 3);

    let out = vpcf(&[
        "bench",
        "--activities",
        "2",
        "--strategies",
        "chained",
        "--reps",
        "1",
    ]);
    assert!(out.status.success());
    let md = stdout(&out);
    assert!(md.contains("Chained sec"));
    assert!(!md.contains("Composite sec"));

    let out = vpcf(&[
        "bench",
        "--activities",
        "1..2",
        "--reps",
        "1",
        "--format",
        "json",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn scenario_exit_codes() {
    let out = vpcf(&["scenario"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = oracle_sum(&[
        (1200, 2000),
        (8500, 900),
        (150, 4000),
        (380, 12500),
        (2020, 1750),
    ]);
    assert_eq!(
        v["final_pcf"]["total"].as_i64().unwrap().to_string(),
        expected.to_string()
    );
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let out = vpcf(&["bench", "--format", "xml", "--activities", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = vpcf(&["run", "--model", "/nonexistent/model.json"]);
    assert_eq!(out.status.code(), Some(2));
}
