//! Vector-wise magnitude pruning of the coarse converter.
//!
//! Usage: `cargo run --example prune_model -- [sparsity]`

use eg2c::model::build_reference_models;

fn main() {
    let s: f64 = std::env::args().nth(1).map_or(0.394, |a| a.parse().expect("sparsity"));
    let model = build_reference_models().coarse;
    let pruned = model.pruned(s).expect("sparsity in [0, 1)");
    for (i, (l, sp)) in pruned.spec.layers.iter().zip(pruned.sparse_layers()).enumerate() {
        if let Some(sp) = sp {
            let total = sp.dense_vector_count;
            println!("layer {i:>2} {:<4} kept {:>4} of {:>4} vectors", l.kind.name(), sp.nonzero_vectors(), total);
        }
    }
    let st = pruned.sparsity();
    println!("target {s:.3}: {} of {} vectors zero, vector sparsity {:.4}", st.total_vectors - st.nonzero_vectors, st.total_vectors, st.vector_sparsity);
}
