//! Shared helpers for the integration tests: an independent loop-nest
//! oracle and random single-layer model builders.
#![allow(dead_code)]

use eg2c::model::{Activation, Dims, LayerKind, LayerSpec, LayerWeights, Model, ModelSpec, OutBits, Po2Code, QuantMode, Role, Tensor};
use rand::Rng;

/// Weight value in the accumulator domain, decoded straight from the
/// storage bits: Int8 as is, Po2 nibble `s eee` as `(-1)^s 2^(7-e)` with
/// `1111` meaning zero.
pub fn oracle_weight(w: &LayerWeights, i: usize) -> i64 {
    match w {
        LayerWeights::Int8(v) => v[i] as i64,
        LayerWeights::Po2(v) => {
            let raw = v[i].raw();
            if raw == 0b1111 {
                return 0;
            }
            let mag = 1i64 << (7 - (raw & 7));
            if raw & 8 != 0 {
                -mag
            } else {
                mag
            }
        }
    }
}

fn oracle_requant(acc: i64, l: &LayerSpec) -> i16 {
    let frac = if l.quant == QuantMode::Po2 { 7 } else { 0 };
    let shift = l.requant_shift as i64 + frac;
    let mut v = if shift >= 0 { acc.div_euclid(1i64 << shift) } else { acc * (1i64 << -shift) };
    if l.activation == Activation::Relu && v < 0 {
        v = 0;
    }
    let (lo, hi) = if l.out_bits == OutBits::B8 { (-128, 127) } else { (-32768, 32767) };
    v.clamp(lo, hi) as i16
}

/// Output of one layer plus the number of multiply-accumulates the loop
/// nest performed (every kernel tap of every output, padding included).
pub fn oracle_layer(l: &LayerSpec, w: &LayerWeights, x: &[i16]) -> (Vec<i16>, u64) {
    let mut macs = 0u64;
    let mut out = Vec::new();
    match l.kind {
        LayerKind::Fc => {
            for co in 0..l.cout {
                let mut acc = 0i64;
                for (ci, &a) in x.iter().enumerate().take(l.cin) {
                    acc += a as i64 * oracle_weight(w, co * l.cin + ci);
                    macs += 1;
                }
                out.push(oracle_requant(acc, l));
            }
        }
        _ => {
            let (h, wd, s) = (l.h as i64, l.w as i64, l.stride as i64);
            let ho = (h + s - 1) / s;
            let wo = (wd + s - 1) / s;
            let px = |c: usize, y: i64, xx: i64| -> i64 {
                if y < 0 || y >= h || xx < 0 || xx >= wd {
                    0
                } else {
                    x[(c as i64 * h * wd + y * wd + xx) as usize] as i64
                }
            };
            for co in 0..l.cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0i64;
                        match l.kind {
                            LayerKind::ConvNormal => {
                                for ci in 0..l.cin {
                                    for ky in 0..3 {
                                        for kx in 0..3 {
                                            let wi = ((co * l.cin + ci) * 3 + ky) * 3 + kx;
                                            acc += px(ci, oy * s + ky as i64 - 1, ox * s + kx as i64 - 1) * oracle_weight(w, wi);
                                            macs += 1;
                                        }
                                    }
                                }
                            }
                            LayerKind::ConvDw => {
                                for ky in 0..3 {
                                    for kx in 0..3 {
                                        acc += px(co, oy * s + ky as i64 - 1, ox * s + kx as i64 - 1) * oracle_weight(w, co * 9 + ky * 3 + kx);
                                        macs += 1;
                                    }
                                }
                            }
                            LayerKind::ConvPw => {
                                for ci in 0..l.cin {
                                    acc += px(ci, oy * s, ox * s) * oracle_weight(w, co * l.cin + ci);
                                    macs += 1;
                                }
                            }
                            LayerKind::Fc => unreachable!(),
                        }
                        out.push(oracle_requant(acc, l));
                    }
                }
            }
        }
    }
    (out, macs)
}

/// Whole-model oracle: final output and total MACs.
pub fn oracle_model(m: &Model, input: &[i16]) -> (Vec<i16>, u64) {
    let mut x = input.to_vec();
    let mut macs = 0;
    for (l, w) in m.spec.layers.iter().zip(&m.weights) {
        let (y, n) = oracle_layer(l, w, &x);
        x = y;
        macs += n;
    }
    (x, macs)
}

pub fn random_weights(rng: &mut impl Rng, quant: QuantMode, n: usize) -> LayerWeights {
    match quant {
        QuantMode::Int8 => LayerWeights::Int8((0..n).map(|_| rng.gen()).collect()),
        QuantMode::Po2 => LayerWeights::Po2(
            (0..n)
                .map(|_| if rng.gen_bool(0.1) { Po2Code::ZERO } else { Po2Code::new(rng.gen(), rng.gen_range(0..=6)).unwrap() })
                .collect(),
        ),
    }
}

pub const KINDS: [LayerKind; 4] = [LayerKind::ConvNormal, LayerKind::ConvDw, LayerKind::ConvPw, LayerKind::Fc];

/// Random small layer of the given kind and format that fits the default
/// memory configuration.
pub fn random_layer(rng: &mut impl Rng, kind: LayerKind, quant: QuantMode) -> LayerSpec {
    let l = match kind {
        LayerKind::Fc => LayerSpec::fc(rng.gen_range(1..=48), rng.gen_range(1..=16), quant),
        _ => {
            let cin = rng.gen_range(1..=8);
            let cout = if kind == LayerKind::ConvDw { cin } else { rng.gen_range(1..=8) };
            LayerSpec::conv(kind, cin, cout, rng.gen_range(1..=12), rng.gen_range(1..=12), quant).with_stride(rng.gen_range(1..=2))
        }
    };
    let act = if rng.gen_bool(0.5) { Activation::Relu } else { Activation::Identity };
    let bits = if rng.gen_bool(0.5) { OutBits::B8 } else { OutBits::B16 };
    let shift = if quant == QuantMode::Po2 { rng.gen_range(-2..=4) } else { rng.gen_range(0..=8) };
    l.with_activation(act).with_out_bits(bits).with_shift(shift)
}

pub fn single_layer_model(rng: &mut impl Rng, kind: LayerKind, quant: QuantMode) -> Model {
    let l = random_layer(rng, kind, quant);
    let w = random_weights(rng, quant, l.weight_count());
    Model::new(ModelSpec::new(Role::PreciseConverter, vec![l]), vec![w]).unwrap()
}

pub fn random_input(rng: &mut impl Rng, dims: Dims) -> Tensor {
    Tensor::from_i8(dims, (0..dims.numel()).map(|_| rng.gen()).collect()).unwrap()
}

/// Random instruction with every field inside its legal range.
pub fn random_instruction(rng: &mut impl Rng) -> eg2c::isa::Instruction {
    use eg2c::isa::{Instruction, LayerConfig, Region, ADDR_BITS, SHAPE_BITS};
    use eg2c::mapper::DataflowFlags;
    let shape = |rng: &mut dyn rand::RngCore| rng.gen_range(0..1usize << SHAPE_BITS);
    match rng.gen_range(0..10) {
        0 => Instruction::Nop,
        1 => Instruction::SetLayer(LayerConfig {
            layer_id: rng.gen(),
            kind: KINDS[rng.gen_range(0..4)],
            quant: if rng.gen() { QuantMode::Int8 } else { QuantMode::Po2 },
            flags: DataflowFlags { sparsity: rng.gen(), cir: rng.gen(), drir: rng.gen() },
            stride: rng.gen_range(1..=7),
            activation: if rng.gen() { Activation::Relu } else { Activation::Identity },
            out_bits: if rng.gen() { OutBits::B16 } else { OutBits::B8 },
            shift: rng.gen_range(-16..=15),
        }),
        2 => Instruction::SetShapeA { cin: shape(rng), cout: shape(rng) },
        3 => Instruction::SetShapeB { h: shape(rng), w: shape(rng) },
        4 => Instruction::SetAddr { region: Region::ALL[rng.gen_range(0..5)], addr: rng.gen_range(0..1usize << ADDR_BITS) },
        5 => Instruction::RunLayer { layer_id: rng.gen() },
        6 => Instruction::SwapGb,
        7 => Instruction::CmpThresh,
        8 => Instruction::SetThresh(rng.gen()),
        _ => Instruction::Halt,
    }
}
