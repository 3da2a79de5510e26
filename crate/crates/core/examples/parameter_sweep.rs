//! Parallel sweep over P, sparsity and every dataflow flag combination,
//! written as CSV to stdout.

use eg2c::io::{run_sweep, write_sweep_csv, SweepSpec};
use eg2c::mapper::{DataflowFlags, EngineConfig};
use eg2c::model::build_reference_models;
use eg2c::sim::MemoryConfig;

fn main() {
    let refs = build_reference_models();
    let spec = SweepSpec {
        p_values: vec![1, 4, 16],
        sparsities: vec![0.0, 0.394],
        flag_sets: (0..8u8).map(|b| DataflowFlags { sparsity: b & 1 != 0, cir: b & 2 != 0, drir: b & 4 != 0 }).collect(),
        clock_hz: 2e6,
    };
    let points = run_sweep(&refs.all(), &spec, &EngineConfig::default(), &MemoryConfig::default()).unwrap();
    write_sweep_csv(&points, std::io::stdout().lock()).unwrap();
}
