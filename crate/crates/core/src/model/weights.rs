use super::{LayerSpec, ModelError, Po2Code, QuantMode};

/// Dense weights of one layer in the layer's storage format.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LayerWeights {
    Po2(Vec<Po2Code>),
    Int8(Vec<i8>),
}

impl LayerWeights {
    pub fn zeros(quant: QuantMode, n: usize) -> Self {
        match quant {
            QuantMode::Po2 => LayerWeights::Po2(vec![Po2Code::ZERO; n]),
            QuantMode::Int8 => LayerWeights::Int8(vec![0; n]),
        }
    }

    pub fn quant(&self) -> QuantMode {
        match self {
            LayerWeights::Po2(_) => QuantMode::Po2,
            LayerWeights::Int8(_) => QuantMode::Int8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LayerWeights::Po2(v) => v.len(),
            LayerWeights::Int8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Integer multiplier of weight `i` in the accumulator domain.
    #[inline]
    pub fn multiplier(&self, i: usize) -> i32 {
        match self {
            LayerWeights::Po2(v) => v[i].multiplier(),
            LayerWeights::Int8(v) => v[i] as i32,
        }
    }

    #[inline]
    pub fn is_zero(&self, i: usize) -> bool {
        match self {
            LayerWeights::Po2(v) => v[i].is_zero(),
            LayerWeights::Int8(v) => v[i] == 0,
        }
    }

    /// Sets weight `i` to zero.
    pub fn clear(&mut self, i: usize) {
        match self {
            LayerWeights::Po2(v) => v[i] = Po2Code::ZERO,
            LayerWeights::Int8(v) => v[i] = 0,
        }
    }

    pub fn check_layer(&self, layer: &LayerSpec) -> Result<(), ModelError> {
        if self.quant() != layer.quant {
            return Err(ModelError::ShapeMismatch(format!(
                "weights are {:?} but layer is {:?}",
                self.quant(),
                layer.quant
            )));
        }
        if self.len() != layer.weight_count() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} layer needs {} weights, got {}",
                layer.kind.name(),
                layer.weight_count(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Raw byte image: po2 codes packed two per byte, low nibble first;
    /// int8 weights one byte each.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            LayerWeights::Po2(v) => v
                .chunks(2)
                .map(|pair| {
                    let lo = pair[0].raw();
                    let hi = pair.get(1).map_or(0, |c| c.raw());
                    lo | (hi << 4)
                })
                .collect(),
            LayerWeights::Int8(v) => v.iter().map(|&w| w as u8).collect(),
        }
    }

    pub fn byte_len(quant: QuantMode, n: usize) -> usize {
        match quant {
            QuantMode::Po2 => n.div_ceil(2),
            QuantMode::Int8 => n,
        }
    }

    pub fn from_bytes(quant: QuantMode, n: usize, bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() != Self::byte_len(quant, n) {
            return Err(ModelError::Format(format!(
                "expected {} weight bytes, got {}",
                Self::byte_len(quant, n),
                bytes.len()
            )));
        }
        Ok(match quant {
            QuantMode::Po2 => LayerWeights::Po2(
                (0..n)
                    .map(|i| Po2Code::from_raw((bytes[i / 2] >> ((i % 2) * 4)) & 0xF))
                    .collect::<Result<_, _>>()?,
            ),
            QuantMode::Int8 => LayerWeights::Int8(bytes.iter().map(|&b| b as i8).collect()),
        })
    }
}
