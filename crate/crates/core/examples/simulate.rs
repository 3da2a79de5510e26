//! One precise-converter inference on the simulator, checked against the
//! dense reference executor.

use eg2c::isa::{assemble, AssembleOptions};
use eg2c::mapper::EngineConfig;
use eg2c::model::{build_reference_models, Tensor, FRAME_DIMS};
use eg2c::sim::{run_program, MemoryConfig};

fn main() {
    let model = build_reference_models().precise;
    let (engine, mem) = (EngineConfig::default(), MemoryConfig::default());
    let compiled = assemble(&model, &engine, &mem, &AssembleOptions::default()).unwrap();
    let frame: Vec<i8> = (0..FRAME_DIMS.numel()).map(|i| ((i * 37 % 101) as i32 - 50) as i8).collect();
    let x = Tensor::from_i8(FRAME_DIMS, frame).unwrap();

    let out = run_program(&compiled, &x, &engine, &mem).unwrap();
    let y = out.output.unwrap();
    assert_eq!(y, model.forward(&x).unwrap(), "simulator diverged from the reference");

    let s = &out.stats;
    println!("output {} matches the dense reference", y.dims());
    println!("cycles {} (control {}), utilization {:.4}", s.total_cycles, s.control_cycles, s.utilization());
    println!("MACs executed {} of {} dense", s.macs_executed, model.total_macs());
    println!("weight bytes {} index bytes {} act GB r/w {}/{}", s.weight_bytes_read, s.index_bytes_read, s.act_gb_reads, s.act_gb_writes);
    println!("off-chip activation accesses {}", s.offchip_act_accesses);
    for l in &s.layers {
        println!(
            "  layer {:>2} {:<4} waves {:>4} compute {:>7} prep {:>6} fill {:>4} -> {:>7} cycles",
            l.layer_id, l.kind, l.waves, l.compute_cycles, l.prep_cycles, l.fill_cycles, l.layer_cycles
        );
    }
}
