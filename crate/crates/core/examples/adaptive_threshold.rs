//! Static versus adaptive detection threshold on a drifting stream.
//!
//! Usage: `cargo run --release --example adaptive_threshold -- [seed] [beats] [drift]`

use eg2c::adapt::{AdaptConfig, AdaptationEngine, RangeMode};
use eg2c::io::{gen_stream, StreamSpec};
use eg2c::model::build_reference_models;

fn accuracy(scores: &[(bool, i16)], t: i16) -> f64 {
    scores.iter().filter(|&&(l, x)| (x > t) == l).count() as f64 / scores.len() as f64
}

fn main() {
    let arg = |i: usize, d: f64| std::env::args().nth(i).map_or(d, |a| a.parse().unwrap());
    let (seed, n, drift) = (arg(1, 7.0) as u64, arg(2, 10_000.0) as usize, arg(3, 0.3));
    let det = build_reference_models().detector;
    let beats = gen_stream(&StreamSpec::new(seed, n, 0.1, drift)).unwrap();
    let scores: Vec<(bool, i16)> = beats.iter().map(|b| (b.label, det.forward(&b.frame).unwrap().data()[0])).collect();

    let nw = 4096.min(n);
    let warm = &scores[..nw];
    let mut cands: Vec<i16> = warm.iter().map(|s| s.1).collect();
    cands.sort_unstable();
    cands.dedup();
    // best warm-up threshold; ties resolve to the middle of the tied run
    let best = cands.iter().map(|&t| accuracy(warm, t)).fold(0.0, f64::max);
    let tied: Vec<i16> = cands.iter().copied().filter(|&t| accuracy(warm, t) == best).collect();
    let top = *tied.last().unwrap();
    let next = cands.iter().copied().find(|&c| c > top).unwrap_or(top);
    let t_static = ((tied[0] as i32 + next as i32) / 2) as i16;

    let values: Vec<i16> = warm.iter().map(|s| s.1).collect();
    let cfg = AdaptConfig { range_mode: RangeMode::Window, ..AdaptConfig::new(16, 0, 1, nw) }.with_range_from(&values);
    let mut engine = AdaptationEngine::new(cfg, t_static).unwrap();
    let mut correct = 0;
    for &(label, x) in &scores {
        correct += (engine.detect(x) == label) as usize;
        if let Some(t) = engine.observe(x) {
            println!("refresh -> threshold {t}");
        }
    }
    println!("static threshold {t_static}: accuracy {:.4}", accuracy(&scores, t_static));
    println!("adaptive: accuracy {:.4}", correct as f64 / scores.len() as f64);
}
