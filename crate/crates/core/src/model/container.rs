//! Binary model container.
//!
//! ```text
//! "EG2C" | version u16 | role u8 | layer count u16
//! per layer:  kind u8 | quant u8 | cin u16 | cout u16 | h u16 | w u16
//!             | stride u8 | shift i8 | act u8 | outbits u8 | dense weight bytes
//! per layer:  nonzero vectors u32 | u16 indices | vector payload
//! ```
//! All integers little-endian. FC layers write a zero vector count.

use super::{Activation, LayerKind, LayerSpec, LayerWeights, Model, ModelError, ModelSpec, OutBits, QuantMode, Role};
use crate::sparse::{self, SparseLayer};

pub const MODEL_MAGIC: &[u8; 4] = b"EG2C";
pub const CONTAINER_VERSION: u16 = 1;

fn fmt_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

fn dim_u16(v: usize, what: &str) -> Result<[u8; 2], ModelError> {
    u16::try_from(v).map(u16::to_le_bytes).map_err(|_| fmt_err(format!("{what} = {v} does not fit u16")))
}

pub fn write_model(model: &Model) -> Result<Vec<u8>, ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(model.spec.role.to_u8());
    out.extend_from_slice(&dim_u16(model.spec.layers.len(), "layer count")?);
    for (l, w) in model.spec.layers.iter().zip(&model.weights) {
        out.push(l.kind.to_u8());
        out.push(l.quant.to_u8());
        for (v, what) in [(l.cin, "cin"), (l.cout, "cout"), (l.h, "h"), (l.w, "w")] {
            out.extend_from_slice(&dim_u16(v, what)?);
        }
        out.push(u8::try_from(l.stride).map_err(|_| fmt_err("stride does not fit u8"))?);
        out.push(l.requant_shift as u8);
        out.push(match l.activation {
            Activation::Relu => 1,
            Activation::Identity => 0,
        });
        out.push(l.out_bits.bits() as u8);
        out.extend_from_slice(&w.to_bytes());
    }
    for (i, (l, w)) in model.spec.layers.iter().zip(&model.weights).enumerate() {
        match sparse::encode_sparse(i, l, w) {
            Ok(s) => {
                out.extend_from_slice(&(s.nonzero_vectors() as u32).to_le_bytes());
                out.extend_from_slice(&s.index_bytes().map_err(|e| fmt_err(e.to_string()))?);
                out.extend_from_slice(&s.payload_bytes());
            }
            Err(_) => out.extend_from_slice(&0u32.to_le_bytes()),
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| fmt_err("truncated model"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses one container from the front of `bytes`, returning the model and
/// the number of bytes consumed. The sparse section must agree with the
/// dense weights.
pub fn read_model(bytes: &[u8]) -> Result<(Model, usize), ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(fmt_err("bad magic, expected EG2C"));
    }
    let version = r.u16()?;
    if version != CONTAINER_VERSION {
        return Err(fmt_err(format!("unsupported container version {version}")));
    }
    let role = Role::from_u8(r.u8()?)?;
    let n = r.u16()? as usize;
    let mut layers = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = LayerKind::from_u8(r.u8()?)?;
        let quant = QuantMode::from_u8(r.u8()?)?;
        let (cin, cout, h, w) = (r.u16()? as usize, r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
        let stride = r.u8()? as usize;
        let requant_shift = r.u8()? as i8;
        let activation = match r.u8()? {
            0 => Activation::Identity,
            1 => Activation::Relu,
            other => return Err(fmt_err(format!("unknown activation {other}"))),
        };
        let out_bits = OutBits::from_bits(r.u8()?)?;
        let layer = LayerSpec { kind, cin, cout, h, w, stride, quant, requant_shift, activation, out_bits };
        layer.validate()?;
        let count = layer.weight_count();
        let raw = r.take(LayerWeights::byte_len(quant, count))?;
        weights.push(LayerWeights::from_bytes(quant, count, raw)?);
        layers.push(layer);
    }
    for (i, (layer, dense)) in layers.iter().zip(&weights).enumerate() {
        let nnz = r.u32()? as usize;
        if layer.kind == LayerKind::Fc {
            if nnz != 0 {
                return Err(fmt_err(format!("FC layer {i} carries sparse vectors")));
            }
            continue;
        }
        let idx_raw = r.take(nnz * sparse::INDEX_BYTES)?;
        let indices: Vec<u32> = idx_raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect();
        let payload = r.take(nnz * quant_vector_bytes(layer))?;
        let s = SparseLayer::from_parts(i, layer, &indices, payload).map_err(|e| fmt_err(e.to_string()))?;
        let decoded = sparse::decode_sparse(&s, layer).map_err(|e| fmt_err(e.to_string()))?;
        if &decoded != dense || s.vectors.iter().any(|v| v.codes.is_zero()) {
            return Err(fmt_err(format!("sparse section of layer {i} disagrees with dense weights")));
        }
    }
    let model = Model::new(ModelSpec::new(role, layers), weights)?;
    Ok((model, r.pos))
}

fn quant_vector_bytes(layer: &LayerSpec) -> usize {
    layer.quant.vector_bytes()
}

/// Concatenated containers, e.g. the detector and both converters.
pub fn write_models<'a>(models: impl IntoIterator<Item = &'a Model>) -> Result<Vec<u8>, ModelError> {
    let mut out = Vec::new();
    for m in models {
        out.extend(write_model(m)?);
    }
    Ok(out)
}

pub fn read_models(mut bytes: &[u8]) -> Result<Vec<Model>, ModelError> {
    let mut models = Vec::new();
    while !bytes.is_empty() {
        let (m, used) = read_model(bytes)?;
        models.push(m);
        bytes = &bytes[used..];
    }
    if models.is_empty() {
        return Err(fmt_err("no models in file"));
    }
    Ok(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_reference_models;

    #[test]
    fn reference_bundle_round_trips() {
        let refs = build_reference_models();
        let bytes = write_models(refs.all()).unwrap();
        let back = read_models(&bytes).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in refs.all().into_iter().zip(&back) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn header_layout() {
        let refs = build_reference_models();
        let bytes = write_model(&refs.detector).unwrap();
        assert_eq!(&bytes[..4], b"EG2C");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 0); // detector
        assert_eq!(u16::from_le_bytes([bytes[7], bytes[8]]), 4);
        // first layer: conv, int8, cin 1, cout 4, 32x32, stride 4
        assert_eq!(&bytes[9..11], &[0, 1]);
        assert_eq!(&bytes[11..19], &[1, 0, 4, 0, 32, 0, 32, 0]);
        assert_eq!(bytes[19], 4);
    }

    #[test]
    fn tampered_sparse_section_rejected() {
        let refs = build_reference_models();
        let mut bytes = write_model(&refs.coarse).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x01;
        assert!(read_model(&bytes).is_err());
        assert!(read_model(&bytes[..n - 3]).is_err());
    }
}
