//! Layer tables and MAC counts of the three built-in networks.

use eg2c::model::build_reference_models;

fn main() {
    let refs = build_reference_models();
    for m in refs.all() {
        println!("{} ({} MACs, vector sparsity {:.3})", m.role().name(), m.total_macs(), m.sparsity().vector_sparsity);
        for (i, l) in m.spec.layers.iter().enumerate() {
            println!(
                "  {i:>2} {:<4} {:?} {:>3} -> {:<3} {:>2}x{:<2} stride {} shift {:>2} {:?} {}-bit out  {:>9} MACs",
                l.kind.name(),
                l.quant,
                l.cin,
                l.cout,
                l.h,
                l.w,
                l.stride,
                l.requant_shift,
                l.activation,
                l.out_bits.bits(),
                l.macs()
            );
        }
    }
}
