//! Fits MACs per lane per cycle so simulated latencies at 2 MHz come
//! closest to 0.32 / 9.62 / 13.32 ms.

use eg2c::mapper::{DataflowFlags, EngineConfig};
use eg2c::model::build_reference_models;
use eg2c::sim::{calibrate_p, MemoryConfig};

fn main() {
    let refs = build_reference_models();
    let targets = [0.32, 9.62, 13.32];
    let ps = [1, 2, 4, 8, 16, 32];
    let rep = calibrate_p(&refs.all(), &targets, &ps, &EngineConfig::default(), &MemoryConfig::default(), DataflowFlags::ALL, 2e6).unwrap();
    println!("P    detector   coarse    precise   error");
    for p in &rep.points {
        let l = &p.latencies_ms;
        println!("{:<4} {:>8.3} {:>9.3} {:>9.3}   {:.3}", p.p, l[0], l[1], l[2], p.mean_relative_error);
    }
    println!("best P = {} (mean relative error {:.3})", rep.best_p, rep.best_error);
}
