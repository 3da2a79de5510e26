mod common;

use std::collections::VecDeque;

use common::*;
use eg2c::adapt::{AdaptConfig, HistogramState, WindowKind};
use eg2c::isa::{disassemble, parse_listing, Instruction};
use eg2c::model::QuantMode;
use eg2c::sparse::{decode_sparse, encode_sparse, sparsity_stats};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histogram_counts_equal_window_recount(
        bins in 2usize..20,
        window in 20usize..200,
        tumbling: bool,
        xs in prop::collection::vec(any::<i16>(), 0..600),
    ) {
        let cfg = AdaptConfig {
            window: if tumbling { WindowKind::Tumbling } else { WindowKind::Sliding },
            ..AdaptConfig::new(bins, -1000, 1000, window)
        };
        let mut h = HistogramState::new(&cfg);
        let mut shadow = VecDeque::new();
        for &x in &xs {
            if shadow.len() == window {
                if tumbling { shadow.clear() } else { shadow.pop_front(); }
            }
            shadow.push_back(x);
            h.observe(&cfg, x);
            prop_assert_eq!(h.counts().iter().sum::<u64>(), h.occupancy() as u64);
            prop_assert_eq!(h.occupancy(), shadow.len());
        }
        let mut recount = vec![0u64; bins];
        for &x in &shadow {
            recount[cfg.bin_of(x)] += 1;
        }
        prop_assert_eq!(h.counts(), recount.as_slice());
    }

    #[test]
    fn instruction_words_round_trip(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ins: Vec<Instruction> = (0..32).map(|_| random_instruction(&mut rng)).collect();
        let words: Vec<u32> = ins.iter().map(|i| i.encode().unwrap()).collect();
        for (i, &w) in ins.iter().zip(&words) {
            prop_assert_eq!(Instruction::decode(w).unwrap(), *i);
        }
        prop_assert_eq!(parse_listing(&disassemble(&words)).unwrap(), words);
    }

    #[test]
    fn sparse_format_round_trips(seed: u64, kind in 0usize..3, po2: bool, s in 0.0f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let quant = if po2 { QuantMode::Po2 } else { QuantMode::Int8 };
        let m = single_layer_model(&mut rng, KINDS[kind], quant).pruned(s).unwrap();
        let (l, w) = (&m.spec.layers[0], &m.weights[0]);
        let sp = encode_sparse(0, l, w).unwrap();
        prop_assert_eq!(&decode_sparse(&sp, l).unwrap(), w);
        let st = sparsity_stats(&sp);
        prop_assert!(st.nonzero_vectors >= 1);
        let target = (s * st.total_vectors as f64).ceil() as usize;
        let dropped = st.total_vectors - st.nonzero_vectors;
        prop_assert!(dropped.abs_diff(target.min(st.total_vectors - 1)) <= 1);
    }
}
