//! Model to program compilation and the program file format.
//!
//! Every layer is configured and then run:
//!
//! ```text
//! SET_LAYER, SET_SHAPE_A, SET_SHAPE_B,
//! SET_ADDR WGB, [SET_ADDR IDX], SET_ADDR <input GB>, SET_ADDR <output GB>,
//! RUN_LAYER, SWAP_GB (not after the last layer)
//! ```
//!
//! followed by `CMP_THRESH, HALT` for a detector and `HALT` otherwise.
//! Activations ping-pong between the two activation GBs at address 0; the
//! input frame starts in GB A.

use thiserror::Error;

use super::instruction::{Instruction, IsaError, LayerConfig, Region};
use crate::mapper::{map_layer, DataflowFlags, EngineConfig};
use crate::model::{LayerKind, LayerSpec, Model, ModelError, QuantMode, Role};
use crate::sim::{out_buffer_bytes, sparse_gather, MemoryConfig};
use crate::sparse::{encode_dense_vectors, encode_sparse, SparseError};

pub const PROGRAM_MAGIC: &[u8; 4] = b"EG2P";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsmError {
    #[error("model has no layers")]
    EmptyModel,
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
}

/// An immutable, validated instruction stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    words: Vec<u32>,
    role: Role,
    layer_count: usize,
}

impl Program {
    /// Validates a word stream: exactly one HALT, as the last word, and every
    /// RUN_LAYER configured by a SET_LAYER with the same id plus both shapes
    /// and at least one address. Without a known role, a program with
    /// CMP_THRESH is a detector, one whose layers are all Po2 a coarse
    /// converter, anything else a precise converter.
    pub fn from_words(words: Vec<u32>, role: Option<Role>) -> Result<Self, AsmError> {
        let bad = |m: String| Err(AsmError::InvalidProgram(m));
        let mut layer_count = 0;
        let mut cfg: Option<LayerConfig> = None;
        let (mut shape_a, mut shape_b, mut addr) = (false, false, false);
        let mut has_cmp = false;
        let mut all_po2 = true;
        for (pc, &w) in words.iter().enumerate() {
            let ins = Instruction::decode(w)?;
            match ins {
                Instruction::Halt if pc + 1 != words.len() => return bad(format!("HALT at {pc} is not the last word")),
                Instruction::SetLayer(c) => {
                    cfg = Some(c);
                    all_po2 &= c.quant == QuantMode::Po2;
                    (shape_a, shape_b, addr) = (false, false, false);
                }
                Instruction::SetShapeA { .. } => shape_a = true,
                Instruction::SetShapeB { .. } => shape_b = true,
                Instruction::SetAddr { .. } => addr = true,
                Instruction::CmpThresh => has_cmp = true,
                Instruction::RunLayer { layer_id } => {
                    match cfg {
                        Some(c) if c.layer_id == layer_id => {}
                        _ => return bad(format!("RUN_LAYER {layer_id} at {pc} has no matching SET_LAYER")),
                    }
                    if !(shape_a && shape_b && addr) {
                        return bad(format!("RUN_LAYER {layer_id} at {pc} is missing shapes or addresses"));
                    }
                    layer_count += 1;
                }
                _ => {}
            }
        }
        if words.last().map(|&w| Instruction::decode(w)) != Some(Ok(Instruction::Halt)) {
            return bad("program does not end with HALT".into());
        }
        let role = role.unwrap_or(if has_cmp {
            Role::Detector
        } else if all_po2 {
            Role::CoarseConverter
        } else {
            Role::PreciseConverter
        });
        Ok(Program { words, role, layer_count })
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn instructions(&self) -> impl Iterator<Item = Instruction> + '_ {
        self.words.iter().map(|&w| Instruction::decode(w).expect("validated program"))
    }

    /// Copy with `SET_THRESH t` inserted before every CMP_THRESH.
    pub fn with_threshold(&self, t: i16) -> Program {
        let set = Instruction::SetThresh(t).encode().expect("16-bit threshold always fits");
        let cmp = Instruction::CmpThresh.encode().unwrap();
        let mut words = Vec::with_capacity(self.words.len() + 1);
        for &w in &self.words {
            if w == cmp {
                words.push(set);
            }
            words.push(w);
        }
        Program { words, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub region: Region,
    pub addr: usize,
    pub bytes: Vec<u8>,
}

/// Weight and index bytes a program expects in on-chip memory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryImage {
    pub segments: Vec<Segment>,
}

impl MemoryImage {
    pub fn bytes_in(&self, region: Region) -> usize {
        self.segments.iter().filter(|s| s.region == region).map(|s| s.bytes.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssembleOptions {
    pub flags: DataflowFlags,
    /// First weight GB byte this model may use.
    pub weight_base: usize,
    /// First index SRAM byte this model may use.
    pub index_base: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions { flags: DataflowFlags::ALL, weight_base: 0, index_base: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompiledModel {
    pub program: Program,
    pub image: MemoryImage,
    /// One past the last weight GB byte used.
    pub weight_end: usize,
    /// One past the last index SRAM byte used.
    pub index_end: usize,
}

fn check_fit(what: &str, end: usize, cap: usize) -> Result<(), AsmError> {
    if end > cap {
        Err(AsmError::CapacityExceeded(format!("{what} needs {end} bytes, region holds {cap}")))
    } else {
        Ok(())
    }
}

/// Worst-case input and output buffer use of a layer's waves.
fn check_staging(i: usize, layer: &LayerSpec, vectors: &[u32], engine: &EngineConfig, flags: DataflowFlags, mem: &MemoryConfig) -> Result<(), AsmError> {
    let sched = map_layer(i, layer, vectors, engine, flags).map_err(|e| AsmError::InvalidProgram(e.to_string()))?;
    for wave in &sched.waves {
        check_fit(&format!("layer {i} wave staging"), sparse_gather(layer, wave, None).bytes(), mem.in_act_buf)?;
        check_fit(&format!("layer {i} wave outputs"), out_buffer_bytes(layer, wave), mem.out_act_buf)?;
    }
    Ok(())
}

/// Compiles a model into a program plus its memory image.
pub fn assemble(model: &Model, engine: &EngineConfig, mem: &MemoryConfig, opts: &AssembleOptions) -> Result<CompiledModel, AsmError> {
    let layers = &model.spec.layers;
    if layers.is_empty() {
        return Err(AsmError::EmptyModel);
    }
    if layers.len() > 256 {
        return Err(AsmError::CapacityExceeded(format!("{} layers, ids are 8-bit", layers.len())));
    }
    model.spec.validate()?;
    engine.validate().map_err(|e| AsmError::InvalidProgram(e.to_string()))?;

    let mut words = Vec::new();
    let mut image = MemoryImage::default();
    let (mut w_addr, mut i_addr) = (opts.weight_base, opts.index_base);
    let mut input_gb = Region::ActA;
    let mut emit = |ins: Instruction| -> Result<(), AsmError> {
        words.push(ins.encode()?);
        Ok(())
    };

    for (i, (layer, weights)) in layers.iter().zip(&model.weights).enumerate() {
        let output_gb = if input_gb == Region::ActA { Region::ActB } else { Region::ActA };
        check_fit(&format!("layer {i} input"), layer.input_dims().numel(), mem.capacity(input_gb))?;
        check_fit(&format!("layer {i} output"), layer.output_dims().numel() * layer.out_bits.bytes(), mem.capacity(output_gb))?;

        let sparse_conv = opts.flags.sparsity && layer.kind != LayerKind::Fc;
        let (payload, index_block, vectors) = if layer.kind == LayerKind::Fc {
            (weights.to_bytes(), None, Vec::new())
        } else {
            let s = if sparse_conv { encode_sparse(i, layer, weights)? } else { encode_dense_vectors(i, layer, weights)? };
            let block = if sparse_conv {
                let mut b = (s.indices.len() as u32).to_le_bytes().to_vec();
                b.extend(s.index_bytes()?);
                Some(b)
            } else {
                None
            };
            (s.payload_bytes(), block, s.indices.clone())
        };
        check_staging(i, layer, &vectors, engine, opts.flags, mem)?;

        emit(Instruction::SetLayer(LayerConfig {
            layer_id: i as u8,
            kind: layer.kind,
            quant: layer.quant,
            flags: opts.flags,
            stride: u8::try_from(layer.stride).map_err(|_| IsaError::FieldRange { field: "stride", value: layer.stride as i64, bits: 3 })?,
            activation: layer.activation,
            out_bits: layer.out_bits,
            shift: layer.requant_shift,
        }))?;
        emit(Instruction::SetShapeA { cin: layer.cin, cout: layer.cout })?;
        emit(Instruction::SetShapeB { h: layer.h, w: layer.w })?;

        check_fit(&format!("weights through layer {i}"), w_addr + payload.len(), mem.weight_gb)?;
        emit(Instruction::SetAddr { region: Region::WeightGb, addr: w_addr })?;
        let len = payload.len();
        image.segments.push(Segment { region: Region::WeightGb, addr: w_addr, bytes: payload });
        w_addr += len;

        if let Some(block) = index_block {
            check_fit(&format!("indices through layer {i}"), i_addr + block.len(), mem.index_sram)?;
            emit(Instruction::SetAddr { region: Region::IndexSram, addr: i_addr })?;
            let len = block.len();
            image.segments.push(Segment { region: Region::IndexSram, addr: i_addr, bytes: block });
            // keep each count word 4-byte aligned
            i_addr += len.next_multiple_of(4);
        }
        emit(Instruction::SetAddr { region: input_gb, addr: 0 })?;
        emit(Instruction::SetAddr { region: output_gb, addr: 0 })?;
        emit(Instruction::RunLayer { layer_id: i as u8 })?;
        if i + 1 < layers.len() {
            emit(Instruction::SwapGb)?;
            input_gb = output_gb;
        }
    }
    if model.role() == Role::Detector {
        emit(Instruction::CmpThresh)?;
    }
    emit(Instruction::Halt)?;

    if words.len() > mem.instruction_words {
        return Err(AsmError::CapacityExceeded(format!(
            "{} instructions, instruction SRAM holds {}",
            words.len(),
            mem.instruction_words
        )));
    }
    let program = Program::from_words(words, Some(model.role()))?;
    Ok(CompiledModel { program, image, weight_end: w_addr, index_end: i_addr })
}

/// `EG2P`, u32 word count, then the words, all little-endian.
pub fn write_program(program: &Program) -> Vec<u8> {
    let mut out = PROGRAM_MAGIC.to_vec();
    out.extend((program.words.len() as u32).to_le_bytes());
    for w in &program.words {
        out.extend(w.to_le_bytes());
    }
    out
}

pub fn read_program(bytes: &[u8]) -> Result<Program, AsmError> {
    let bad = |m: &str| AsmError::InvalidProgram(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != PROGRAM_MAGIC {
        return Err(bad("missing EG2P header"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n * 4 {
        return Err(bad("word count does not match file length"));
    }
    let words = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    Program::from_words(words, None)
}
