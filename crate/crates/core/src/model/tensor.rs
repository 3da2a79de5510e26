use serde::{Deserialize, Serialize};

use super::{ModelError, OutBits};

/// Channel, height and width of an activation map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(c: usize, h: usize, w: usize) -> Self {
        Dims { c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// Row-major (channel, row, column) activation map.
///
/// Intermediate activations are 8-bit; only a final layer may produce 16-bit
/// values, so every element lies in the signed range of `bits`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    dims: Dims,
    bits: OutBits,
    data: Vec<i16>,
}

impl Tensor {
    pub fn zeros(dims: Dims) -> Self {
        Tensor { dims, bits: OutBits::B8, data: vec![0; dims.numel()] }
    }

    pub fn from_i8(dims: Dims, data: Vec<i8>) -> Result<Self, ModelError> {
        if data.len() != dims.numel() {
            return Err(ModelError::ShapeMismatch(format!(
                "tensor {dims} needs {} elements, got {}",
                dims.numel(),
                data.len()
            )));
        }
        Ok(Tensor { dims, bits: OutBits::B8, data: data.into_iter().map(i16::from).collect() })
    }

    pub fn from_values(dims: Dims, bits: OutBits, data: Vec<i16>) -> Result<Self, ModelError> {
        if data.len() != dims.numel() {
            return Err(ModelError::ShapeMismatch(format!(
                "tensor {dims} needs {} elements, got {}",
                dims.numel(),
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| !bits.contains(v as i32)) {
            return Err(ModelError::Format(format!("value {v} outside {}-bit range", bits.bits())));
        }
        Ok(Tensor { dims, bits, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> OutBits {
        self.bits
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, h: usize, w: usize) -> i16 {
        self.data[(c * self.dims.h + h) * self.dims.w + w]
    }

    /// Same data viewed under different dims with equal element count.
    pub fn reshaped(&self, dims: Dims) -> Result<Self, ModelError> {
        if dims.numel() != self.dims.numel() {
            return Err(ModelError::ShapeMismatch(format!("cannot view {} as {dims}", self.dims)));
        }
        Ok(Tensor { dims, bits: self.bits, data: self.data.clone() })
    }

    /// Byte image as stored in an activation buffer (little-endian for 16-bit).
    pub fn to_bytes(&self) -> Vec<u8> {
        match self.bits {
            OutBits::B8 => self.data.iter().map(|&v| v as i8 as u8).collect(),
            OutBits::B16 => self.data.iter().flat_map(|&v| v.to_le_bytes()).collect(),
        }
    }

    pub fn from_bytes(dims: Dims, bits: OutBits, bytes: &[u8]) -> Result<Self, ModelError> {
        let data: Vec<i16> = match bits {
            OutBits::B8 => bytes.iter().map(|&b| b as i8 as i16).collect(),
            OutBits::B16 => bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
        };
        Tensor::from_values(dims, bits, data)
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * self.bits.bytes()
    }
}
