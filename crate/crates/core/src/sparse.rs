//! Vector-wise sparse weight format.
//!
//! Weights are cut into 3-weight vectors: one kernel row `(co, ci, kr)` for
//! normal and depth-wise convolutions, one group of three consecutive input
//! channels `(co, t)` for point-wise convolutions. All-zero vectors are
//! dropped and the survivors are tagged with their flat canonical index.
//! FC layers stay dense.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LayerKind, LayerSpec, LayerWeights, ModelError, Po2Code, QuantMode};

/// Width of one stored vector index in bytes.
pub const INDEX_BYTES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparseError {
    #[error("{0} layers have no vector-sparse form")]
    UnsupportedKind(&'static str),
    #[error("vector index {index} out of range for {count} vectors")]
    IndexOutOfRange { index: u32, count: usize },
    #[error("sparse layer does not match layer: {0}")]
    LayerMismatch(String),
    #[error("malformed sparse payload: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorOrigin {
    /// Kernel row `kr` of the `(co, ci)` kernel; for DW `co == ci`.
    KernelRow { co: usize, ci: usize, kr: usize },
    /// Input channels `3t..3t+3` of output channel `co`.
    Triplet { co: usize, triplet: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VectorCodes {
    Po2([Po2Code; 3]),
    Int8([i8; 3]),
}

impl VectorCodes {
    pub fn quant(&self) -> QuantMode {
        match self {
            VectorCodes::Po2(_) => QuantMode::Po2,
            VectorCodes::Int8(_) => QuantMode::Int8,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorCodes::Po2(c) => c.iter().all(|c| c.is_zero()),
            VectorCodes::Int8(c) => c.iter().all(|&c| c == 0),
        }
    }

    #[inline]
    pub fn multiplier(&self, k: usize) -> i32 {
        match self {
            VectorCodes::Po2(c) => c[k].multiplier(),
            VectorCodes::Int8(c) => c[k] as i32,
        }
    }

    /// Sum of absolute multipliers, the pruning magnitude.
    pub fn l1(&self) -> u64 {
        (0..3).map(|k| self.multiplier(k).unsigned_abs() as u64).sum()
    }

    /// Po2: 12 bits in a little-endian u16 (code k at bits 4k..4k+4).
    /// Int8: three bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            VectorCodes::Po2(c) => {
                let word = c[0].raw() as u16 | (c[1].raw() as u16) << 4 | (c[2].raw() as u16) << 8;
                word.to_le_bytes().to_vec()
            }
            VectorCodes::Int8(c) => c.iter().map(|&v| v as u8).collect(),
        }
    }

    pub fn from_bytes(quant: QuantMode, bytes: &[u8]) -> Result<Self, SparseError> {
        if bytes.len() != quant.vector_bytes() {
            return Err(SparseError::Format(format!("vector needs {} bytes", quant.vector_bytes())));
        }
        Ok(match quant {
            QuantMode::Po2 => {
                let word = u16::from_le_bytes([bytes[0], bytes[1]]);
                if word >> 12 != 0 {
                    return Err(SparseError::Format(format!("padding bits set in po2 vector {word:#06x}")));
                }
                let code = |k: u16| Po2Code::from_raw(((word >> (4 * k)) & 0xF) as u8);
                VectorCodes::Po2([code(0)?, code(1)?, code(2)?])
            }
            QuantMode::Int8 => VectorCodes::Int8([bytes[0] as i8, bytes[1] as i8, bytes[2] as i8]),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WeightVector {
    pub codes: VectorCodes,
    pub origin: VectorOrigin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseLayer {
    pub layer_ref: usize,
    pub quant: QuantMode,
    pub vectors: Vec<WeightVector>,
    pub indices: Vec<u32>,
    pub dense_vector_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub total_vectors: usize,
    pub nonzero_vectors: usize,
    pub vector_sparsity: f64,
}

impl SparsityStats {
    fn from_counts(total: usize, nonzero: usize) -> Self {
        let vector_sparsity = if total == 0 { 0.0 } else { 1.0 - nonzero as f64 / total as f64 };
        SparsityStats { total_vectors: total, nonzero_vectors: nonzero, vector_sparsity }
    }

    /// Pools counts across layers.
    pub fn combine(stats: impl IntoIterator<Item = SparsityStats>) -> Self {
        let (t, n) = stats.into_iter().fold((0, 0), |(t, n), s| (t + s.total_vectors, n + s.nonzero_vectors));
        Self::from_counts(t, n)
    }
}

/// Vectors per channel group for PW layers.
fn triplets(layer: &LayerSpec) -> usize {
    layer.cin.div_ceil(3)
}

/// Number of 3-weight vectors in the dense layer; `None` for FC.
pub fn vector_count(layer: &LayerSpec) -> Option<usize> {
    match layer.kind {
        LayerKind::ConvNormal => Some(layer.cout * layer.cin * 3),
        LayerKind::ConvDw => Some(layer.cin * 3),
        LayerKind::ConvPw => Some(layer.cout * triplets(layer)),
        LayerKind::Fc => None,
    }
}

/// Dense weight positions covered by vector `idx`. PW vectors past the
/// last input channel are zero padding and map to `None`.
pub fn vector_slots(layer: &LayerSpec, idx: usize) -> [Option<usize>; 3] {
    match layer.kind {
        LayerKind::ConvNormal | LayerKind::ConvDw => [Some(idx * 3), Some(idx * 3 + 1), Some(idx * 3 + 2)],
        LayerKind::ConvPw => {
            let t = triplets(layer);
            let (co, tri) = (idx / t, idx % t);
            std::array::from_fn(|k| {
                let ci = tri * 3 + k;
                (ci < layer.cin).then_some(co * layer.cin + ci)
            })
        }
        LayerKind::Fc => [None; 3],
    }
}

pub fn vector_origin(layer: &LayerSpec, idx: usize) -> VectorOrigin {
    match layer.kind {
        LayerKind::ConvNormal => {
            let (pair, kr) = (idx / 3, idx % 3);
            VectorOrigin::KernelRow { co: pair / layer.cin, ci: pair % layer.cin, kr }
        }
        LayerKind::ConvDw => VectorOrigin::KernelRow { co: idx / 3, ci: idx / 3, kr: idx % 3 },
        LayerKind::ConvPw => {
            let t = triplets(layer);
            VectorOrigin::Triplet { co: idx / t, triplet: idx % t }
        }
        LayerKind::Fc => unreachable!("FC layers have no vectors"),
    }
}

/// Real (non-padding) taps in vector `idx`.
pub fn vector_taps(layer: &LayerSpec, idx: usize) -> usize {
    vector_slots(layer, idx).iter().filter(|s| s.is_some()).count()
}

fn gather_codes(weights: &LayerWeights, slots: [Option<usize>; 3]) -> VectorCodes {
    match weights {
        LayerWeights::Po2(w) => VectorCodes::Po2(slots.map(|s| s.map_or(Po2Code::ZERO, |i| w[i]))),
        LayerWeights::Int8(w) => VectorCodes::Int8(slots.map(|s| s.map_or(0, |i| w[i]))),
    }
}

fn encode(layer_ref: usize, layer: &LayerSpec, weights: &LayerWeights, keep_zero: bool) -> Result<SparseLayer, SparseError> {
    let count = vector_count(layer).ok_or(SparseError::UnsupportedKind(layer.kind.name()))?;
    weights.check_layer(layer)?;
    let mut vectors = Vec::new();
    let mut indices = Vec::new();
    for idx in 0..count {
        let codes = gather_codes(weights, vector_slots(layer, idx));
        if keep_zero || !codes.is_zero() {
            vectors.push(WeightVector { codes, origin: vector_origin(layer, idx) });
            indices.push(idx as u32);
        }
    }
    Ok(SparseLayer { layer_ref, quant: layer.quant, vectors, indices, dense_vector_count: count })
}

/// Compresses a layer, dropping all-zero vectors.
pub fn encode_sparse(layer_ref: usize, layer: &LayerSpec, weights: &LayerWeights) -> Result<SparseLayer, SparseError> {
    encode(layer_ref, layer, weights, false)
}

/// Every vector of the layer, zero or not, in canonical order. This is the
/// stream a sparsity-disabled engine walks.
pub fn encode_dense_vectors(layer_ref: usize, layer: &LayerSpec, weights: &LayerWeights) -> Result<SparseLayer, SparseError> {
    encode(layer_ref, layer, weights, true)
}

/// Expands a sparse layer back to dense weights.
pub fn decode_sparse(sparse: &SparseLayer, layer: &LayerSpec) -> Result<LayerWeights, SparseError> {
    let count = vector_count(layer).ok_or(SparseError::UnsupportedKind(layer.kind.name()))?;
    if count != sparse.dense_vector_count || layer.quant != sparse.quant {
        return Err(SparseError::LayerMismatch(format!(
            "layer has {count} {:?} vectors, sparse layer {} has {} {:?}",
            layer.quant, sparse.layer_ref, sparse.dense_vector_count, sparse.quant
        )));
    }
    if sparse.indices.len() != sparse.vectors.len() {
        return Err(SparseError::Format("index and vector counts differ".into()));
    }
    let mut dense = LayerWeights::zeros(layer.quant, layer.weight_count());
    for (&index, v) in sparse.indices.iter().zip(&sparse.vectors) {
        if index as usize >= count {
            return Err(SparseError::IndexOutOfRange { index, count });
        }
        if v.codes.quant() != layer.quant {
            return Err(SparseError::LayerMismatch("vector format differs from layer".into()));
        }
        for (k, slot) in vector_slots(layer, index as usize).into_iter().enumerate() {
            match (slot, &mut dense, &v.codes) {
                (Some(i), LayerWeights::Po2(d), VectorCodes::Po2(c)) => d[i] = c[k],
                (Some(i), LayerWeights::Int8(d), VectorCodes::Int8(c)) => d[i] = c[k],
                _ => {}
            }
        }
    }
    Ok(dense)
}

pub fn sparsity_stats(sparse: &SparseLayer) -> SparsityStats {
    let nonzero = sparse.vectors.iter().filter(|v| !v.codes.is_zero()).count();
    SparsityStats::from_counts(sparse.dense_vector_count, nonzero)
}

impl SparseLayer {
    pub fn nonzero_vectors(&self) -> usize {
        self.vectors.len()
    }

    /// Compressed weight payload, vectors back to back.
    pub fn payload_bytes(&self) -> Vec<u8> {
        self.vectors.iter().flat_map(|v| v.codes.to_bytes()).collect()
    }

    /// `u16` little-endian indices. Fails if an index does not fit 16 bits.
    pub fn index_bytes(&self) -> Result<Vec<u8>, SparseError> {
        let mut out = Vec::with_capacity(self.indices.len() * INDEX_BYTES);
        for &i in &self.indices {
            let i16 = u16::try_from(i).map_err(|_| SparseError::IndexOutOfRange { index: i, count: 1 << 16 })?;
            out.extend_from_slice(&i16.to_le_bytes());
        }
        Ok(out)
    }

    /// Rebuilds a sparse layer from stored indices and payload.
    pub fn from_parts(layer_ref: usize, layer: &LayerSpec, indices: &[u32], payload: &[u8]) -> Result<Self, SparseError> {
        let count = vector_count(layer).ok_or(SparseError::UnsupportedKind(layer.kind.name()))?;
        let vb = layer.quant.vector_bytes();
        if payload.len() != indices.len() * vb {
            return Err(SparseError::Format(format!(
                "{} indices need {} payload bytes, got {}",
                indices.len(),
                indices.len() * vb,
                payload.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SparseError::Format("indices not strictly increasing".into()));
        }
        let mut vectors = Vec::with_capacity(indices.len());
        for (&index, chunk) in indices.iter().zip(payload.chunks_exact(vb)) {
            if index as usize >= count {
                return Err(SparseError::IndexOutOfRange { index, count });
            }
            vectors.push(WeightVector {
                codes: VectorCodes::from_bytes(layer.quant, chunk)?,
                origin: vector_origin(layer, index as usize),
            });
        }
        Ok(SparseLayer { layer_ref, quant: layer.quant, vectors, indices: indices.to_vec(), dense_vector_count: count })
    }
}

/// Zeroes the fraction `s` of vectors with the smallest L1 magnitude, ties
/// going to the lower canonical index. At least one vector always survives.
/// FC layers are returned unchanged.
pub fn prune_layer(layer: &LayerSpec, weights: &LayerWeights, s: f64) -> Result<LayerWeights, SparseError> {
    assert!((0.0..1.0).contains(&s), "target sparsity must lie in [0, 1)");
    weights.check_layer(layer)?;
    let Some(count) = vector_count(layer) else {
        return Ok(weights.clone());
    };
    // the epsilon keeps exact products like 0.4 * 90 from rounding up
    let target = ((s * count as f64) - 1e-9).ceil().max(0.0) as usize;
    let drop = target.min(count.saturating_sub(1));
    let mut order: Vec<(u64, usize)> = (0..count)
        .map(|idx| (gather_codes(weights, vector_slots(layer, idx)).l1(), idx))
        .collect();
    order.sort_unstable();
    let mut pruned = weights.clone();
    for &(_, idx) in order.iter().take(drop) {
        for slot in vector_slots(layer, idx).into_iter().flatten() {
            pruned.clear(slot);
        }
    }
    Ok(pruned)
}
