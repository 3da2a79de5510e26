//! Full run with the default configuration; prints the JSON report.
//!
//! Usage: `cargo run --release --example run_report -- [beats]`

use eg2c::io::{gen_stream, run_stream_report, write_report_json, RunConfig, StreamSpec};
use eg2c::model::build_reference_models;

fn main() {
    let n = std::env::args().nth(1).map_or(64, |a| a.parse().unwrap());
    let mut cfg = RunConfig::default();
    cfg.adapt.window_samples = 32.min(n);
    cfg.orchestrator.timing_only_converters = true;
    let beats = gen_stream(&StreamSpec::new(7, n, 0.1, 0.3)).unwrap();
    let (report, _) = run_stream_report(&build_reference_models(), &beats, &cfg).unwrap();
    write_report_json(&report, std::io::stdout().lock()).unwrap();
}
