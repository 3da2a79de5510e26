//! Detect, then coarse or precise convert, beat by beat.

use eg2c::adapt::{AdaptConfig, AdaptationEngine, RangeMode};
use eg2c::io::{gen_stream, StreamSpec};
use eg2c::mapper::{DataflowFlags, EngineConfig};
use eg2c::model::build_reference_models;
use eg2c::orchestrator::{HeartbeatWindow, Orchestrator, OrchestratorConfig, ProgramSet};
use eg2c::sim::MemoryConfig;

fn main() {
    let refs = build_reference_models();
    let (engine, mem) = (EngineConfig::default().with_p(16), MemoryConfig::default());
    let programs = ProgramSet::compile(&refs, &engine, &mem, DataflowFlags::ALL).unwrap();
    let cfg = AdaptConfig { range_mode: RangeMode::Window, ..AdaptConfig::new(8, 0, 1 << 14, 16) };
    let adapt = AdaptationEngine::new(cfg, 9000).unwrap();
    let mut orch = Orchestrator::new(programs, engine, mem, adapt, OrchestratorConfig::default()).unwrap();

    let beats = gen_stream(&StreamSpec::new(11, 24, 0.2, 0.0)).unwrap();
    let windows: Vec<_> = beats.iter().map(|b| HeartbeatWindow { index: b.index, frame: b.frame.clone(), label: Some(b.label) }).collect();
    let out = orch.run_stream(&windows).unwrap();
    for b in &out.beats {
        println!(
            "beat {:>2} label {} score {:>6} threshold {:>6} -> {:?} {:>6} cycles {:.3} ms ({:.2}% of period)",
            b.index,
            b.label.unwrap() as u8,
            b.detector_output,
            b.threshold,
            b.conversion_kind,
            b.cycles.total(),
            b.latency_ms,
            b.latency_fraction * 100.0
        );
    }
    for u in &out.threshold_trace {
        println!("threshold refresh at sample {}: {}", u.sample_index, u.threshold);
    }
    println!("accuracy {:.3}, {} precise conversions", out.accuracy().unwrap(), out.precise_count());
}
