//! End-to-end speedup from vector sparsity on both converters.

use eg2c::mapper::{DataflowFlags, EngineConfig};
use eg2c::model::build_reference_models;
use eg2c::sim::{speedup_curve, MemoryConfig};

fn main() {
    let refs = build_reference_models();
    let (e, m) = (EngineConfig::default(), MemoryConfig::default());
    let ss: Vec<f64> = (0..=12).map(|i| i as f64 * 0.05).collect();
    let coarse = speedup_curve(&refs.coarse, &ss, &e, &m, DataflowFlags::ALL).unwrap();
    let precise = speedup_curve(&refs.precise, &ss, &e, &m, DataflowFlags::ALL).unwrap();
    println!("target  coarse(s, x)     precise(s, x)");
    for (c, p) in coarse.iter().zip(&precise) {
        println!("{:.2}    {:.3} {:.3}x    {:.3} {:.3}x", c.target_sparsity, c.vector_sparsity, c.speedup, p.vector_sparsity, p.speedup);
    }
}
