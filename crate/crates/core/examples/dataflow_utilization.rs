//! Lane occupancy of the depth-wise reuse modes, then per-layer
//! utilization of every reference model.

use eg2c::mapper::{all_vectors, map_dw, map_layer, present_vectors, utilization_report, DataflowFlags, EngineConfig};
use eg2c::model::{build_reference_models, LayerKind, LayerSpec, QuantMode};

fn main() {
    let cfg = EngineConfig::default();
    let dw = LayerSpec::conv(LayerKind::ConvDw, 1, 1, 8, 8, QuantMode::Int8);
    let v = all_vectors(&dw);
    for (name, cir, drir) in [("serial", false, false), ("CIR", true, false), ("CIR + D-RIR", true, true)] {
        let s = map_dw(0, &dw, &v, &cfg, cir, drir).unwrap();
        println!("3x3 DW, Wout 8, {name:<12} busy lanes {} utilization {:.5}", s.max_busy_lanes(), s.utilization());
    }

    for m in build_reference_models().all() {
        let sparse = m.sparse_layers();
        let schedules: Vec<_> = m
            .spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let vectors = sparse[i].as_ref().map_or_else(|| all_vectors(l), present_vectors);
                map_layer(i, l, &vectors, &cfg, DataflowFlags::ALL).unwrap()
            })
            .collect();
        let rep = utilization_report(&schedules);
        println!("\n{} aggregate {:.4}", m.role().name(), rep.aggregate);
        for (l, u) in m.spec.layers.iter().zip(&rep.layers) {
            println!("  {:<4} waves {:>5} utilization {:.4}", l.kind.name(), u.waves, u.utilization);
        }
    }
}
