use serde::{Deserialize, Serialize};

use super::{Dims, ModelError, OutBits, QuantMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    /// 3x3 convolution across all input channels.
    ConvNormal,
    /// 3x3 depth-wise convolution, one kernel per channel.
    ConvDw,
    /// 1x1 point-wise convolution.
    ConvPw,
    /// Fully connected layer over the flattened input.
    Fc,
}

impl LayerKind {
    pub fn kernel(self) -> usize {
        match self {
            LayerKind::ConvNormal | LayerKind::ConvDw => 3,
            LayerKind::ConvPw | LayerKind::Fc => 1,
        }
    }

    pub fn is_conv(self) -> bool {
        self != LayerKind::Fc
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::ConvNormal => "CONV",
            LayerKind::ConvDw => "DW",
            LayerKind::ConvPw => "PW",
            LayerKind::Fc => "FC",
        }
    }

    pub(crate) fn to_u8(self) -> u8 {
        match self {
            LayerKind::ConvNormal => 0,
            LayerKind::ConvDw => 1,
            LayerKind::ConvPw => 2,
            LayerKind::Fc => 3,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Result<Self, ModelError> {
        Ok(match v {
            0 => LayerKind::ConvNormal,
            1 => LayerKind::ConvDw,
            2 => LayerKind::ConvPw,
            3 => LayerKind::Fc,
            other => return Err(ModelError::Format(format!("unknown layer kind {other}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// One quantized layer.
///
/// Convolutions use zero "same" padding of one pixel for 3x3 kernels and
/// produce `ceil(H / stride) x ceil(W / stride)` outputs. An FC layer reads
/// its input flattened, so `cin` is the flattened length and `h = w = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
    pub quant: QuantMode,
    pub requant_shift: i8,
    pub activation: Activation,
    pub out_bits: OutBits,
}

impl LayerSpec {
    pub fn conv(kind: LayerKind, cin: usize, cout: usize, h: usize, w: usize, quant: QuantMode) -> Self {
        LayerSpec {
            kind,
            cin,
            cout,
            h,
            w,
            stride: 1,
            quant,
            requant_shift: 0,
            activation: Activation::Relu,
            out_bits: OutBits::B8,
        }
    }

    pub fn fc(cin: usize, cout: usize, quant: QuantMode) -> Self {
        LayerSpec::conv(LayerKind::Fc, cin, cout, 1, 1, quant)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_shift(mut self, shift: i8) -> Self {
        self.requant_shift = shift;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_out_bits(mut self, out_bits: OutBits) -> Self {
        self.out_bits = out_bits;
        self
    }

    pub fn out_h(&self) -> usize {
        self.h.div_ceil(self.stride)
    }

    pub fn out_w(&self) -> usize {
        self.w.div_ceil(self.stride)
    }

    pub fn input_dims(&self) -> Dims {
        Dims::new(self.cin, self.h, self.w)
    }

    pub fn output_dims(&self) -> Dims {
        match self.kind {
            LayerKind::Fc => Dims::new(self.cout, 1, 1),
            _ => Dims::new(self.cout, self.out_h(), self.out_w()),
        }
    }

    /// Number of stored weights in dense layout.
    ///
    /// Layouts: normal conv `[co][ci][kr][kc]`, DW `[c][kr][kc]`,
    /// PW and FC `[co][ci]`.
    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::ConvNormal => self.cout * self.cin * 9,
            LayerKind::ConvDw => self.cin * 9,
            LayerKind::ConvPw | LayerKind::Fc => self.cout * self.cin,
        }
    }

    /// Closed-form multiply-accumulate count (padded taps included).
    pub fn macs(&self) -> u64 {
        let (ho, wo) = (self.out_h() as u64, self.out_w() as u64);
        let (cin, cout) = (self.cin as u64, self.cout as u64);
        match self.kind {
            LayerKind::ConvNormal => cin * cout * 9 * ho * wo,
            LayerKind::ConvDw => cin * 9 * ho * wo,
            LayerKind::ConvPw => cin * cout * ho * wo,
            LayerKind::Fc => cin * cout,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidLayer(msg));
        if self.cin == 0 || self.cout == 0 || self.h == 0 || self.w == 0 {
            return bad(format!("{} layer has a zero dimension", self.kind.name()));
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        match self.kind {
            LayerKind::ConvDw if self.cout != self.cin => {
                bad(format!("DW conv needs cout == cin, got {} vs {}", self.cout, self.cin))
            }
            LayerKind::Fc if self.h != 1 || self.w != 1 || self.stride != 1 => {
                bad("FC layers take a flattened input: h = w = stride = 1".into())
            }
            _ => Ok(()),
        }
    }
}

/// Which of the three time-multiplexed networks a model is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Detector,
    CoarseConverter,
    PreciseConverter,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Detector => "detector",
            Role::CoarseConverter => "coarse",
            Role::PreciseConverter => "precise",
        }
    }

    pub(crate) fn to_u8(self) -> u8 {
        match self {
            Role::Detector => 0,
            Role::CoarseConverter => 1,
            Role::PreciseConverter => 2,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Result<Self, ModelError> {
        Ok(match v {
            0 => Role::Detector,
            1 => Role::CoarseConverter,
            2 => Role::PreciseConverter,
            other => return Err(ModelError::Format(format!("unknown model role {other}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub role: Role,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(role: Role, layers: Vec<LayerSpec>) -> Self {
        ModelSpec { role, layers }
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(LayerSpec::macs).sum()
    }

    pub fn input_dims(&self) -> Option<Dims> {
        self.layers.first().map(LayerSpec::input_dims)
    }

    pub fn output_dims(&self) -> Option<Dims> {
        self.layers.last().map(LayerSpec::output_dims)
    }

    /// Checks every layer and the shape chain between consecutive layers.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::InvalidLayer("model has no layers".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let out = pair[0].output_dims();
            let next = &pair[1];
            let ok = match next.kind {
                LayerKind::Fc => out.numel() == next.cin,
                _ => out == next.input_dims(),
            };
            if !ok {
                return Err(ModelError::ShapeMismatch(format!(
                    "layer {i} produces {out} but layer {} expects {}",
                    i + 1,
                    next.input_dims()
                )));
            }
            if pair[0].out_bits != OutBits::B8 {
                return Err(ModelError::InvalidLayer(format!(
                    "layer {i} feeds another layer so its output must be 8-bit"
                )));
            }
        }
        if self.role == Role::Detector {
            let last = self.layers.last().unwrap();
            let out = last.output_dims();
            if out != Dims::new(1, 1, 1) || last.out_bits != OutBits::B16 {
                return Err(ModelError::InvalidLayer(
                    "detector must end in a 1x1x1 head with 16-bit output".into(),
                ));
            }
        }
        Ok(())
    }
}
