use std::process::Command;

use eg2c::io::{gen_stream, run_stream_report, write_report_json, RunConfig, StreamSpec, ENERGY_NOTICE};
use eg2c::mapper::{DataflowFlags, EngineConfig};
use eg2c::model::{build_reference_models, read_models, write_models};
use eg2c::sim::{speedup_vs_dense, EnergyModel, MemoryConfig};
use serde_json::Value;

const SCHEMA: &str = include_str!("../schema/run_report.v1.schema.json");

fn validate(report: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn short_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.adapt.window_samples = 32;
    cfg.orchestrator.timing_only_converters = true;
    cfg
}

fn report_json(cfg: &RunConfig, beats: usize) -> Value {
    let refs = build_reference_models();
    let stream = gen_stream(&StreamSpec::new(7, beats, 0.1, 0.3)).unwrap();
    let (report, _) = run_stream_report(&refs, &stream, cfg).unwrap();
    let mut buf = Vec::new();
    write_report_json(&report, &mut buf).unwrap();
    serde_json::from_slice(&buf).unwrap()
}

#[test]
fn report_matches_schema_and_lists_utilization() {
    let mut cfg = short_config();
    cfg.energy = Some(EnergyModel {
        pj_per_po2_mac: 0.1,
        pj_per_int8_mac: 0.4,
        pj_per_weight_byte: 1.0,
        pj_per_index_byte: 1.0,
        pj_per_act_gb_read_byte: 1.0,
        pj_per_act_gb_write_byte: 1.0,
        pj_per_in_buf_byte: 0.5,
        pj_per_out_buf_byte: 0.5,
    });
    let r = report_json(&cfg, 80);
    validate(&r);
    assert_eq!(r["energy"]["notice"], ENERGY_NOTICE);
    assert!(!r["threshold_trace"].as_array().unwrap().is_empty());
    for m in r["models"].as_array().unwrap().iter().filter(|m| m["role"] != "detector") {
        for l in m["layers"].as_array().unwrap().iter().filter(|l| l["kind"] != "FC") {
            let u = l["busy_lane_cycles"].as_f64().unwrap() / l["lane_cycles"].as_f64().unwrap();
            assert!(u >= 0.95, "{} layer {}: {u}", m["role"], l["layer_id"]);
        }
    }
}

#[test]
fn schema_rejects_a_broken_report() {
    let mut r = report_json(&short_config(), 40);
    r["schema_version"] = Value::from(2);
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    assert!(!jsonschema::validator_for(&schema).unwrap().is_valid(&r));
}

#[test]
fn sparsity_off_reports_unit_speedup() {
    let mut cfg = short_config();
    cfg.flags = DataflowFlags { sparsity: false, ..DataflowFlags::ALL };
    let r = report_json(&cfg, 40);
    for m in r["models"].as_array().unwrap() {
        assert_eq!(m["speedup_vs_dense"].as_f64(), Some(1.0));
    }
}

#[test]
fn reports_are_reproducible() {
    assert_eq!(report_json(&short_config(), 50), report_json(&short_config(), 50));
}

#[test]
fn speedup_bounds() {
    let refs = build_reference_models();
    let (e, m) = (EngineConfig::default(), MemoryConfig::default());
    let at = |s| speedup_vs_dense(&refs.coarse, s, &e, &m, DataflowFlags::ALL).unwrap();
    let s0 = at(0.0).speedup;
    assert!((0.99..=1.01).contains(&s0), "{s0}");
    let mid = at(0.394);
    assert!((1.6..=1.7).contains(&mid.speedup), "{mid:?}");
    assert!((0.39..=0.40).contains(&mid.vector_sparsity), "{mid:?}");
    assert!(at(0.5).speedup <= 2.0);
}

#[test]
fn pruning_stats() {
    let refs = build_reference_models();
    assert_eq!(write_models([&refs.coarse.pruned(0.0).unwrap()]).unwrap(), write_models([&refs.coarse]).unwrap());
    let p = refs.coarse.pruned(0.394).unwrap();
    let back = read_models(&write_models([&p]).unwrap()).unwrap();
    let s = back[0].sparsity().vector_sparsity;
    assert!((0.39..=0.40).contains(&s), "{s}");
    for sp in refs.detector.pruned(0.99).unwrap().sparse_layers().iter().flatten() {
        assert!(sp.nonzero_vectors() >= 1);
    }
}

fn eg2c(dir: &std::path::Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_eg2c")).current_dir(dir).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_round_trip_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(eg2c(d, &["gen", "--beats", "40", "--drift", "0.3", "--out", "s.csv", "--models", "m.bin"]).0, 0);
    assert_eq!(eg2c(d, &["gen", "--beats", "40", "--drift", "0.3", "--out", "t.csv"]).0, 0);
    assert_eq!(std::fs::read(d.join("s.csv")).unwrap(), std::fs::read(d.join("t.csv")).unwrap());

    assert_eq!(eg2c(d, &["compile", "--model", "m.bin", "--role", "coarse", "--out", "c.prog"]).0, 0);
    let (code, listing) = eg2c(d, &["disasm", "c.prog"]);
    assert_eq!(code, 0);
    assert!(listing.trim_end().ends_with("HALT"));
    assert_eq!(eg2c(d, &["prune", "--model", "m.bin", "--sparsity", "0.394", "--out", "p.bin"]).0, 0);

    std::fs::write(d.join("cfg.json"), r#"{"adapt": {"window_samples": 16}, "orchestrator": {"timing_only_converters": true}}"#).unwrap();
    let run = ["run", "--stream", "s.csv", "--models", "p.bin", "--config", "cfg.json", "--report", "r.json", "--beats-csv", "b.csv"];
    assert_eq!(eg2c(d, &run).0, 0);
    let first = std::fs::read(d.join("r.json")).unwrap();
    assert_eq!(eg2c(d, &run).0, 0);
    assert_eq!(std::fs::read(d.join("r.json")).unwrap(), first);
    validate(&serde_json::from_slice(&first).unwrap());
    let beats_csv = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert_eq!(beats_csv.lines().count(), 41);

    let (code, out) = eg2c(d, &["adapt-demo", "--stream", "s.csv", "--bins", "8", "--window", "16"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("sample_index,threshold\n15,"));
    let (code, out) = eg2c(d, &["sweep", "--p", "1,2", "--sparsity", "0,0.5"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1 + 3 * 2 * 2);

    assert_eq!(eg2c(d, &["frobnicate"]).0, 1);
    assert_eq!(eg2c(d, &["gen"]).0, 1);
    assert_eq!(eg2c(d, &["prune", "--model", "m.bin", "--sparsity", "1.2", "--out", "x.bin"]).0, 2);
    std::fs::write(d.join("bad.json"), r#"{"engine": {"lanes": 32}}"#).unwrap();
    assert_eq!(eg2c(d, &["run", "--stream", "s.csv", "--config", "bad.json", "--report", "x.json"]).0, 2);
}

#[test]
fn undersized_activation_buffer_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(eg2c(d, &["gen", "--beats", "4", "--out", "s.csv"]).0, 0);
    std::fs::write(d.join("small.json"), r#"{"memory": {"act_gb_a": 512}, "initial_threshold": 0}"#).unwrap();
    assert_eq!(eg2c(d, &["run", "--stream", "s.csv", "--config", "small.json", "--report", "r.json"]).0, 2);
}
