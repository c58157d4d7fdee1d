use bpb_core::harness::{generate_instance, BudgetSpec, ExperimentConfig, Instance};
use bpb_core::model_spaces::{SpaceDesc, C64};
use bpb_core::pipelines::PipelineKind;
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bpb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpb")).args(args).output().unwrap()
}

fn config(pipeline: PipelineKind) -> ExperimentConfig {
    ExperimentConfig {
        pipeline,
        base: SpaceDesc::complex_l(2.0, 2),
        n: 3,
        m: None,
        range: Some(SpaceDesc::complex_l(1.0, 3)),
        eps: vec![0.5],
        trials: 2,
        master_seed: 7,
        budget: BudgetSpec::default(),
        attain_tol: None,
        arith_tol: None,
        margin_fraction: 0.5,
        fault: None,
        record_timing: false,
    }
}

fn write_instance(dir: &Path, inst: &Instance) -> String {
    let path = dir.join("instance.json");
    std::fs::write(&path, serde_json::to_string(&inst.to_json()).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn moduli_emits_a_bracket() {
    let out = bpb(&["moduli", "--space", "complex:1:2", "--kind", "complex", "--eps", "0.5", "--resolution", "0.01"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["eps", "lo", "hi", "resolution", "certified"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["lo"].as_f64().unwrap() <= v["hi"].as_f64().unwrap());
}

#[test]
fn bad_space_is_rejected() {
    let out = bpb(&["moduli", "--space", "complex:2", "--kind", "convexity", "--eps", "0.5"]);
    assert!(!out.status.success());
}

#[test]
fn bpb_op_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate_instance(&config(PipelineKind::Operator), 0).unwrap();
    let inst = write_instance(dir.path(), &g.instance);
    let cert = dir.path().join("cert.json");
    let out = bpb(&["bpb-op", "--instance", &inst, "--eps", "0.5", "--out", cert.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(cert).unwrap()).unwrap();
    assert!(v.as_object().unwrap().len() > 3);
}

#[test]
fn premise_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate_instance(&config(PipelineKind::Operator), 0).unwrap();
    let Instance::Operator { t, x0 } = g.instance else { unreachable!() };
    let bad = Instance::Operator { t: t.scale(C64::new(2.0, 0.0)), x0 };
    let inst = write_instance(dir.path(), &bad);
    let out = bpb(&["bpb-op", "--instance", &inst, "--eps", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&config(PipelineKind::OperatorLocal)).unwrap()).unwrap();
    let stem = dir.path().join("run");
    let out = bpb(&["experiment", "--config", cfg.to_str().unwrap(), "--out", stem.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 2);
}
