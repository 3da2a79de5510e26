//! Quantized model description, number formats, the dense reference
//! executor and the fixed reference networks.

mod container;
mod forward;
mod layer;
mod quant;
mod reference;
mod tensor;
mod weights;

use thiserror::Error;

pub use container::{read_model, read_models, write_model, write_models, CONTAINER_VERSION, MODEL_MAGIC};
pub use forward::{dense_forward, dense_forward_trace, layer_accumulate, layer_forward, requantize};
pub use layer::{Activation, LayerKind, LayerSpec, ModelSpec, Role};
pub use quant::{po2_encode, OutBits, Po2Code, QuantMode, PO2_FRAC_BITS, PO2_MAX_EXP};
pub use reference::{build_reference_models, calibrate_shifts, ReferenceModels, FRAME_DIMS, REFERENCE_SEED};
pub use tensor::{Dims, Tensor};
pub use weights::LayerWeights;

use crate::sparse::{self, SparseError, SparseLayer, SparsityStats};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("malformed model data: {0}")]
    Format(String),
}

/// A model description together with its dense weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub spec: ModelSpec,
    pub weights: Vec<LayerWeights>,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: Vec<LayerWeights>) -> Result<Self, ModelError> {
        spec.validate()?;
        if weights.len() != spec.layers.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} layers but {} weight sets",
                spec.layers.len(),
                weights.len()
            )));
        }
        for (l, w) in spec.layers.iter().zip(&weights) {
            w.check_layer(l)?;
        }
        Ok(Model { spec, weights })
    }

    pub fn role(&self) -> Role {
        self.spec.role
    }

    pub fn total_macs(&self) -> u64 {
        self.spec.total_macs()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, ModelError> {
        dense_forward(&self.spec, &self.weights, input)
    }

    /// Sparse form of every layer; `None` for FC layers, which stay dense.
    pub fn sparse_layers(&self) -> Vec<Option<SparseLayer>> {
        self.spec
            .layers
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(i, (l, w))| sparse::encode_sparse(i, l, w).ok())
            .collect()
    }

    /// Vector sparsity pooled over all sparse-format layers.
    pub fn sparsity(&self) -> SparsityStats {
        SparsityStats::combine(self.sparse_layers().iter().flatten().map(sparse::sparsity_stats))
    }

    /// Copy with every conv layer magnitude-pruned to vector sparsity `s`.
    pub fn pruned(&self, s: f64) -> Result<Model, SparseError> {
        let weights = self
            .spec
            .layers
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| sparse::prune_layer(l, w, s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model { spec: self.spec.clone(), weights })
    }
}
