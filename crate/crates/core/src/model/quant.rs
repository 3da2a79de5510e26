//! Weight and output number formats.
//!
//! Power-of-two weights are 4-bit codes: bit 3 is the sign, bits 2..0 hold the
//! exponent `e` of a magnitude `2^-e`, and `0b1111` is the zero code. In the
//! integer datapath a code multiplies an activation by shifting it left by
//! `PO2_FRAC_BITS - e`, so power-of-two accumulators carry `PO2_FRAC_BITS`
//! fractional bits that requantization removes again.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Fractional bits carried by power-of-two accumulators.
pub const PO2_FRAC_BITS: u32 = 7;

/// Largest exponent the encoder emits (`2^-6`).
pub const PO2_MAX_EXP: u8 = 6;

/// Weight storage format of a layer. Activations are always 8-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantMode {
    /// 4-bit sign/exponent codes.
    Po2,
    /// Signed 8-bit integers.
    Int8,
}

impl QuantMode {
    pub fn weight_bits(self) -> u32 {
        match self {
            QuantMode::Po2 => 4,
            QuantMode::Int8 => 8,
        }
    }

    /// Fractional bits in the accumulator that requantization must drop.
    pub fn frac_bits(self) -> u32 {
        match self {
            QuantMode::Po2 => PO2_FRAC_BITS,
            QuantMode::Int8 => 0,
        }
    }

    /// Bytes occupied by one 3-weight vector in the compressed weight buffer.
    pub fn vector_bytes(self) -> usize {
        (3 * self.weight_bits() as usize).div_ceil(8)
    }

    pub(crate) fn to_u8(self) -> u8 {
        match self {
            QuantMode::Po2 => 0,
            QuantMode::Int8 => 1,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Result<Self, ModelError> {
        match v {
            0 => Ok(QuantMode::Po2),
            1 => Ok(QuantMode::Int8),
            other => Err(ModelError::Format(format!("unknown quant mode {other}"))),
        }
    }
}

/// Output width of a layer after requantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutBits {
    B8,
    B16,
}

impl OutBits {
    pub fn bits(self) -> u32 {
        match self {
            OutBits::B8 => 8,
            OutBits::B16 => 16,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    pub fn min(self) -> i32 {
        match self {
            OutBits::B8 => i8::MIN as i32,
            OutBits::B16 => i16::MIN as i32,
        }
    }

    pub fn max(self) -> i32 {
        match self {
            OutBits::B8 => i8::MAX as i32,
            OutBits::B16 => i16::MAX as i32,
        }
    }

    pub fn contains(self, v: i32) -> bool {
        (self.min()..=self.max()).contains(&v)
    }

    pub(crate) fn from_bits(v: u8) -> Result<Self, ModelError> {
        match v {
            8 => Ok(OutBits::B8),
            16 => Ok(OutBits::B16),
            other => Err(ModelError::Format(format!("unsupported output width {other}"))),
        }
    }
}

/// A 4-bit power-of-two weight code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Po2Code(u8);

impl Po2Code {
    pub const ZERO: Po2Code = Po2Code(0b1111);

    pub fn from_raw(raw: u8) -> Result<Self, ModelError> {
        if raw > 0xF {
            return Err(ModelError::Format(format!("po2 code {raw:#x} wider than 4 bits")));
        }
        Ok(Po2Code(raw))
    }

    /// Builds the code for `±2^-exp`. Returns `None` when `exp > PO2_MAX_EXP`.
    pub fn new(negative: bool, exp: u8) -> Option<Self> {
        (exp <= PO2_MAX_EXP).then_some(Po2Code(((negative as u8) << 3) | exp))
    }

    pub fn raw(self) -> u8 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self == Self::ZERO
    }

    pub fn is_negative(self) -> bool {
        !self.is_zero() && self.0 & 0b1000 != 0
    }

    /// Exponent field; `None` for the zero code.
    pub fn exponent(self) -> Option<u8> {
        (!self.is_zero()).then_some(self.0 & 0b0111)
    }

    /// Real value represented under a per-layer `scale`.
    pub fn decode(self, scale: f64) -> f64 {
        match self.exponent() {
            None => 0.0,
            Some(e) => {
                let mag = scale * (-(e as f64)).exp2();
                if self.is_negative() {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    /// Integer multiplier in the accumulator domain: `±2^(PO2_FRAC_BITS - e)`.
    ///
    /// The reserved code `0b0111` (exponent 7) decodes to `+2^-7`, i.e. `+1`
    /// here; the encoder never produces it.
    pub fn multiplier(self) -> i32 {
        match self.exponent() {
            None => 0,
            Some(e) => {
                let m = 1i32 << (PO2_FRAC_BITS - e as u32);
                if self.is_negative() {
                    -m
                } else {
                    m
                }
            }
        }
    }

    /// Shift-only product of an activation with this weight.
    #[inline]
    pub fn shift_mul(self, act: i32) -> i32 {
        match self.exponent() {
            None => 0,
            Some(e) => {
                let shifted = act << (PO2_FRAC_BITS - e as u32);
                if self.is_negative() {
                    shifted.wrapping_neg()
                } else {
                    shifted
                }
            }
        }
    }

    /// All codes the encoder can emit: zero plus 14 signed levels.
    pub fn representable() -> impl Iterator<Item = Po2Code> {
        std::iter::once(Po2Code::ZERO).chain(
            [false, true]
                .into_iter()
                .flat_map(|neg| (0..=PO2_MAX_EXP).map(move |e| Po2Code::new(neg, e).unwrap())),
        )
    }
}

/// Nearest power-of-two code for `value` under `layer_scale`, measured as
/// distance in log2 space. Exact zeros map to the zero code; magnitudes past
/// either end saturate to `2^0` or `2^-6`. Ties go to the larger magnitude.
pub fn po2_encode(value: f64, layer_scale: f64) -> Po2Code {
    assert!(layer_scale > 0.0, "layer_scale must be positive");
    if value == 0.0 {
        return Po2Code::ZERO;
    }
    let negative = value < 0.0;
    let log = (value.abs() / layer_scale).log2();
    let mut best = 0u8;
    let mut best_dist = f64::INFINITY;
    for e in 0..=PO2_MAX_EXP {
        let dist = (log + e as f64).abs();
        if dist < best_dist {
            best = e;
            best_dist = dist;
        }
    }
    Po2Code::new(negative, best).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero_code() {
        assert_eq!(po2_encode(0.0, 1.0), Po2Code::ZERO);
        assert_eq!(po2_encode(0.0, 1.0).raw(), 0b1111);
    }

    #[test]
    fn minus_one_is_sign_set_exponent_zero() {
        let c = po2_encode(-1.0, 1.0);
        assert!(c.is_negative());
        assert_eq!(c.exponent(), Some(0));
        assert_eq!(c.raw(), 0b1000);
    }

    #[test]
    fn point_three_rounds_to_quarter() {
        // brute force over every nonzero representable level
        let best = Po2Code::representable()
            .filter(|c| !c.is_zero() && !c.is_negative())
            .min_by(|a, b| {
                let da = (0.3f64.log2() - a.decode(1.0).log2()).abs();
                let db = (0.3f64.log2() - b.decode(1.0).log2()).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(best.exponent(), Some(2));
        assert_eq!(po2_encode(0.3, 1.0), best);
    }

    #[test]
    fn every_nonzero_raw_code_decodes_nonzero() {
        for raw in 0..16u8 {
            let c = Po2Code::from_raw(raw).unwrap();
            assert_eq!(c.decode(1.0) == 0.0, raw == 0b1111, "raw {raw:#06b}");
            assert_eq!(c.multiplier() == 0, raw == 0b1111);
        }
        assert!(Po2Code::from_raw(16).is_err());
    }

    #[test]
    fn saturates_at_both_ends() {
        assert_eq!(po2_encode(40.0, 1.0).exponent(), Some(0));
        assert_eq!(po2_encode(-1e-9, 1.0), Po2Code::new(true, 6).unwrap());
    }

    #[test]
    fn representable_set_round_trips() {
        for scale in [0.01, 0.5, 1.0, 3.7] {
            for code in Po2Code::representable() {
                assert_eq!(po2_encode(code.decode(scale), scale), code);
            }
        }
        assert_eq!(Po2Code::representable().count(), 15);
    }

    #[test]
    fn shift_route_matches_multiplier() {
        for raw in 0..16u8 {
            let c = Po2Code::from_raw(raw).unwrap();
            for act in -128..=127 {
                assert_eq!(c.shift_mul(act), act * c.multiplier());
            }
        }
    }
}
