//! The three fixed networks the pipeline time-multiplexes.
//!
//! Every model reads a 1x32x32 frame of 8-bit EGM samples. Layer sizes are
//! picked to land the MAC counts at 3,984 (detector), 2,691,072 (coarse
//! converter) and 5,787,648 (precise converter). Weights come from a seeded
//! ChaCha stream; requantization shifts are calibrated on seeded random
//! frames so that no layer clips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    layer_accumulate, layer_forward, Activation, Dims, LayerKind, LayerSpec, LayerWeights, Model, ModelError, ModelSpec, OutBits,
    Po2Code, QuantMode, Role, Tensor,
};

/// Input frame shared by all three models.
pub const FRAME_DIMS: Dims = Dims::new(1, 32, 32);

pub const REFERENCE_SEED: u64 = 0x0e62_c0de;

const CALIBRATION_FRAMES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReferenceModels {
    pub detector: Model,
    pub coarse: Model,
    pub precise: Model,
}

impl ReferenceModels {
    pub fn all(&self) -> [&Model; 3] {
        [&self.detector, &self.coarse, &self.precise]
    }

    /// Picks one model of each role out of `models`, as read from a bundle.
    pub fn from_models(models: Vec<Model>) -> Result<Self, ModelError> {
        let mut slots: [Option<Model>; 3] = [None, None, None];
        for m in models {
            let slot = &mut slots[m.role().to_u8() as usize];
            if slot.is_some() {
                return Err(ModelError::Format(format!("duplicate {} model", m.role().name())));
            }
            *slot = Some(m);
        }
        let [d, c, p] = slots;
        let missing = |r: Role| ModelError::Format(format!("missing {} model", r.name()));
        Ok(ReferenceModels {
            detector: d.ok_or_else(|| missing(Role::Detector))?,
            coarse: c.ok_or_else(|| missing(Role::CoarseConverter))?,
            precise: p.ok_or_else(|| missing(Role::PreciseConverter))?,
        })
    }

    pub fn by_role(&self, role: Role) -> &Model {
        match role {
            Role::Detector => &self.detector,
            Role::CoarseConverter => &self.coarse,
            Role::PreciseConverter => &self.precise,
        }
    }
}

fn conv(kind: LayerKind, cin: usize, cout: usize, hw: usize, quant: QuantMode) -> LayerSpec {
    LayerSpec::conv(kind, cin, cout, hw, hw, quant)
}

fn detector_layers() -> Vec<LayerSpec> {
    let q = QuantMode::Int8;
    vec![
        conv(LayerKind::ConvNormal, 1, 4, 32, q).with_stride(4),
        conv(LayerKind::ConvNormal, 4, 8, 8, q).with_stride(4),
        LayerSpec::fc(32, 16, q),
        LayerSpec::fc(16, 1, q).with_activation(Activation::Identity).with_out_bits(OutBits::B16),
    ]
}

fn coarse_layers() -> Vec<LayerSpec> {
    use LayerKind::*;
    let q = QuantMode::Po2;
    let mut v = vec![conv(ConvNormal, 1, 12, 32, q), conv(ConvNormal, 12, 12, 32, q)];
    v.push(conv(ConvDw, 12, 12, 32, q));
    v.extend((0..4).map(|_| conv(ConvPw, 12, 12, 32, q)));
    v.push(conv(ConvDw, 12, 12, 32, q));
    v.extend((0..3).map(|_| conv(ConvPw, 12, 12, 32, q)));
    finish_converter(v)
}

fn precise_layers() -> Vec<LayerSpec> {
    use LayerKind::*;
    let q = QuantMode::Int8;
    let mut v = vec![conv(ConvNormal, 1, 12, 32, q)];
    v.extend((0..4).map(|_| conv(ConvNormal, 12, 12, 32, q)));
    v.push(conv(ConvDw, 12, 12, 32, q));
    v.push(conv(ConvPw, 12, 12, 32, q));
    v.push(conv(ConvDw, 12, 12, 32, q));
    finish_converter(v)
}

fn finish_converter(mut layers: Vec<LayerSpec>) -> Vec<LayerSpec> {
    if let Some(last) = layers.last_mut() {
        last.activation = Activation::Identity;
    }
    layers
}

fn random_weights(rng: &mut ChaCha8Rng, layer: &LayerSpec, positive: bool) -> LayerWeights {
    let n = layer.weight_count();
    match layer.quant {
        QuantMode::Int8 => LayerWeights::Int8(
            (0..n)
                .map(|_| {
                    let mag = rng.gen_range(1..=127i16);
                    if positive || rng.gen_bool(0.5) {
                        mag as i8
                    } else {
                        (-mag) as i8
                    }
                })
                .collect(),
        ),
        QuantMode::Po2 => LayerWeights::Po2(
            (0..n)
                .map(|_| Po2Code::new(!positive && rng.gen_bool(0.5), rng.gen_range(0..=super::PO2_MAX_EXP)).unwrap())
                .collect(),
        ),
    }
}

fn random_frames(rng: &mut ChaCha8Rng, dims: Dims, n: usize) -> Vec<Tensor> {
    (0..n)
        .map(|_| Tensor::from_i8(dims, (0..dims.numel()).map(|_| rng.gen::<i8>()).collect()).unwrap())
        .collect()
}

/// Picks, layer by layer, the smallest non-negative shift at which no
/// calibration output clips, then propagates the calibration frames.
pub fn calibrate_shifts(spec: &mut ModelSpec, weights: &[LayerWeights], frames: &[Tensor]) {
    let mut acts: Vec<Tensor> = frames.to_vec();
    for (layer, w) in spec.layers.iter_mut().zip(weights) {
        let accs: Vec<i32> = acts
            .iter()
            .flat_map(|x| layer_accumulate(layer, w, x).expect("reference shapes are consistent"))
            .collect();
        let (lo, hi) = match layer.activation {
            Activation::Relu => (0, accs.iter().copied().max().unwrap_or(0).max(0)),
            Activation::Identity => (
                accs.iter().copied().min().unwrap_or(0),
                accs.iter().copied().max().unwrap_or(0),
            ),
        };
        let frac = layer.quant.frac_bits() as i64;
        let fits = |shift: i64| {
            let t = shift + frac;
            (hi as i64 >> t) <= layer.out_bits.max() as i64 && (lo as i64 >> t) >= layer.out_bits.min() as i64
        };
        let shift = (0..=15).find(|&s| fits(s)).unwrap_or(15);
        layer.requant_shift = shift as i8;
        acts = acts.iter().map(|x| layer_forward(layer, w, x).unwrap()).collect();
    }
}

fn build(role: Role, layers: Vec<LayerSpec>, rng: &mut ChaCha8Rng) -> Model {
    let positive = role == Role::Detector;
    let weights: Vec<LayerWeights> = layers.iter().map(|l| random_weights(rng, l, positive)).collect();
    let mut spec = ModelSpec::new(role, layers);
    let frames = random_frames(rng, FRAME_DIMS, CALIBRATION_FRAMES);
    calibrate_shifts(&mut spec, &weights, &frames);
    Model::new(spec, weights).expect("reference model is well formed")
}

/// Builds the detector (Int8), coarse converter (power-of-two) and precise
/// converter (Int8). Deterministic: repeated calls return identical weights.
///
/// Detector taps are drawn positive so that its score grows with beat
/// amplitude, which is what the synthetic streams modulate.
pub fn build_reference_models() -> ReferenceModels {
    let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
    ReferenceModels {
        detector: build(Role::Detector, detector_layers(), &mut rng),
        coarse: build(Role::CoarseConverter, coarse_layers(), &mut rng),
        precise: build(Role::PreciseConverter, precise_layers(), &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_counts_hit_targets() {
        let m = build_reference_models();
        assert_eq!(m.detector.total_macs(), 3_984);
        assert_eq!(m.coarse.total_macs(), 2_691_072);
        assert_eq!(m.precise.total_macs(), 5_787_648);
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_reference_models(), build_reference_models());
    }

    #[test]
    fn formats_per_role() {
        let m = build_reference_models();
        assert!(m.detector.spec.layers.iter().all(|l| l.quant == QuantMode::Int8));
        assert!(m.coarse.spec.layers.iter().all(|l| l.quant == QuantMode::Po2));
        assert!(m.precise.spec.layers.iter().all(|l| l.quant == QuantMode::Int8));
        for model in m.all() {
            assert_eq!(model.spec.input_dims(), Some(FRAME_DIMS));
            assert_eq!(model.sparsity().vector_sparsity, 0.0);
        }
    }
}
