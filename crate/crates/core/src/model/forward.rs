//! Dense reference executor. Every other execution path in the crate is
//! checked against this one.

use super::{Activation, LayerKind, LayerSpec, LayerWeights, ModelError, ModelSpec, Tensor};

/// Drops the accumulator's fractional bits plus `requant_shift`, applies the
/// activation and clamps to the layer's output width.
#[inline]
pub fn requantize(acc: i32, layer: &LayerSpec) -> i16 {
    let shift = layer.requant_shift as i32 + layer.quant.frac_bits() as i32;
    let v = acc as i64;
    let v = if shift >= 0 { v >> shift.min(63) } else { v << (-shift).min(31) };
    let v = match layer.activation {
        Activation::Relu => v.max(0),
        Activation::Identity => v,
    };
    v.clamp(layer.out_bits.min() as i64, layer.out_bits.max() as i64) as i16
}

/// Raw Int32 accumulators of one layer, laid out like the output tensor.
pub fn layer_accumulate(layer: &LayerSpec, weights: &LayerWeights, input: &Tensor) -> Result<Vec<i32>, ModelError> {
    layer.validate()?;
    weights.check_layer(layer)?;
    let want = layer.input_dims();
    let got = input.dims();
    let fits = match layer.kind {
        LayerKind::Fc => got.numel() == layer.cin,
        _ => got == want,
    };
    if !fits {
        return Err(ModelError::ShapeMismatch(format!(
            "{} layer expects input {want}, got {got}",
            layer.kind.name()
        )));
    }

    let out = layer.output_dims();
    let (ho, wo) = (out.h, out.w);
    let (h, w, s) = (layer.h as isize, layer.w as isize, layer.stride);
    let x = input.data();
    let mut acc = vec![0i32; out.numel()];

    match layer.kind {
        LayerKind::ConvNormal | LayerKind::ConvDw => {
            let dw = layer.kind == LayerKind::ConvDw;
            let pairs: Vec<(usize, usize)> = if dw {
                (0..layer.cin).map(|c| (c, c)).collect()
            } else {
                (0..layer.cout).flat_map(|co| (0..layer.cin).map(move |ci| (co, ci))).collect()
            };
            for (co, ci) in pairs {
                let kbase = if dw { ci * 9 } else { (co * layer.cin + ci) * 9 };
                for kr in 0..3 {
                    for kc in 0..3 {
                        let wt = weights.multiplier(kbase + kr * 3 + kc);
                        if wt == 0 {
                            continue;
                        }
                        for oy in 0..ho {
                            let iy = (oy * s) as isize + kr as isize - 1;
                            if iy < 0 || iy >= h {
                                continue;
                            }
                            let in_row = (ci * layer.h + iy as usize) * layer.w;
                            let out_row = (co * ho + oy) * wo;
                            for ox in 0..wo {
                                let ix = (ox * s) as isize + kc as isize - 1;
                                if ix < 0 || ix >= w {
                                    continue;
                                }
                                let a = x[in_row + ix as usize] as i32;
                                acc[out_row + ox] = acc[out_row + ox].wrapping_add(a.wrapping_mul(wt));
                            }
                        }
                    }
                }
            }
        }
        LayerKind::ConvPw => {
            for co in 0..layer.cout {
                for ci in 0..layer.cin {
                    let wt = weights.multiplier(co * layer.cin + ci);
                    if wt == 0 {
                        continue;
                    }
                    for oy in 0..ho {
                        let in_row = (ci * layer.h + oy * s) * layer.w;
                        let out_row = (co * ho + oy) * wo;
                        for ox in 0..wo {
                            let a = x[in_row + ox * s] as i32;
                            acc[out_row + ox] = acc[out_row + ox].wrapping_add(a.wrapping_mul(wt));
                        }
                    }
                }
            }
        }
        LayerKind::Fc => {
            for (co, slot) in acc.iter_mut().enumerate() {
                for (ci, &a) in x.iter().enumerate() {
                    *slot = slot.wrapping_add((a as i32).wrapping_mul(weights.multiplier(co * layer.cin + ci)));
                }
            }
        }
    }
    Ok(acc)
}

pub fn layer_forward(layer: &LayerSpec, weights: &LayerWeights, input: &Tensor) -> Result<Tensor, ModelError> {
    let acc = layer_accumulate(layer, weights, input)?;
    let data = acc.iter().map(|&a| requantize(a, layer)).collect();
    Tensor::from_values(layer.output_dims(), layer.out_bits, data)
}

/// Runs every layer in order. Bit-exact and deterministic.
pub fn dense_forward(model: &ModelSpec, weights: &[LayerWeights], input: &Tensor) -> Result<Tensor, ModelError> {
    Ok(dense_forward_trace(model, weights, input)?.pop().expect("validated model has layers"))
}

/// Like [`dense_forward`] but returns every layer's output.
pub fn dense_forward_trace(model: &ModelSpec, weights: &[LayerWeights], input: &Tensor) -> Result<Vec<Tensor>, ModelError> {
    model.validate()?;
    if weights.len() != model.layers.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "model has {} layers but {} weight sets",
            model.layers.len(),
            weights.len()
        )));
    }
    let mut outs: Vec<Tensor> = Vec::with_capacity(model.layers.len());
    for (layer, w) in model.layers.iter().zip(weights) {
        let x = outs.last().unwrap_or(input);
        let y = layer_forward(layer, w, x)?;
        outs.push(y);
    }
    Ok(outs)
}
