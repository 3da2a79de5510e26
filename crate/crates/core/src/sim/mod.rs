//! Instruction-driven engine model.
//!
//! Execution is bit-exact: every RUN_LAYER rebuilds the lane schedule from
//! the configured flags, stages input rows per wave through the input
//! buffer and accumulates item by item. Timing is tracked at wave
//! granularity: a layer costs `max(compute, prep)` plus a pipeline fill of
//! `min(first wave, first prep chunk)`, every other instruction one cycle.

mod analysis;
mod gather;
mod memory;
mod stats;

use thiserror::Error;

pub use analysis::{
    calibrate_p, speedup_curve, speedup_vs_dense, timing_stats, AnalysisError, CalibrationPoint, CalibrationReport, SpeedupPoint,
};
pub use gather::{out_buffer_bytes, sparse_gather, StagedRow, StagedWave};
pub use memory::{Memory, MemoryConfig};
pub use stats::{EnergyModel, LayerStats, SimStats};

use crate::isa::{CompiledModel, Instruction, IsaError, LayerConfig, MemoryImage, Program, Region};
use crate::mapper::{map_layer, EngineConfig, LaneSchedule, Wave};
use crate::model::{requantize, Dims, LayerSpec, LayerWeights, OutBits, QuantMode, Tensor};
use crate::sparse::{vector_count, vector_origin, VectorCodes, VectorOrigin};

/// Bytes per cycle moved from an activation GB into the input buffer.
pub const PREP_BYTES_PER_CYCLE: u64 = 32;

pub const DEFAULT_CLOCK_HZ: f64 = 2_000_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultCause {
    #[error("decode error: {0}")]
    Decode(#[from] IsaError),
    #[error("program ran past its last word without HALT")]
    MissingHalt,
    #[error("program of {words} words exceeds instruction SRAM of {capacity}")]
    ProgramTooLong { words: usize, capacity: usize },
    #[error("access of {len} bytes at {addr:#x} overflows {region:?} ({capacity} bytes)")]
    CapacityOverflow { region: Region, addr: usize, len: usize, capacity: usize },
    #[error("{buffer} needs {need} bytes but holds {capacity}")]
    BufferOverflow { buffer: &'static str, need: usize, capacity: usize },
    #[error("RUN_LAYER without {0}")]
    Incomplete(&'static str),
    #[error("RUN_LAYER id {requested} but SET_LAYER configured id {configured}")]
    LayerIdMismatch { configured: u8, requested: u8 },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("invalid engine config: {0}")]
    Config(String),
}

/// A precise, halting fault.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("fault at pc {pc}: {cause}")]
pub struct Fault {
    pub pc: usize,
    pub cause: FaultCause,
}

impl Fault {
    pub fn new(pc: usize, cause: FaultCause) -> Self {
        Fault { pc, cause }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    /// Compute outputs and timing.
    #[default]
    Functional,
    /// Timing and counters only; no output tensor.
    TimingOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Final layer output; `None` in timing-only mode.
    pub output: Option<Tensor>,
    pub stats: SimStats,
    pub anomaly: bool,
}

#[derive(Default)]
struct Pending {
    cfg: Option<LayerConfig>,
    shape_a: Option<(usize, usize)>,
    shape_b: Option<(usize, usize)>,
    addrs: [Option<usize>; 5],
}

struct LastOutput {
    region: Region,
    addr: usize,
    dims: Dims,
    bits: OutBits,
}

pub struct Simulator {
    engine: EngineConfig,
    mem_cfg: MemoryConfig,
    memory: Memory,
    threshold: i16,
    anomaly: bool,
    loaded_weight_bytes: u64,
    trace: bool,
}

impl Simulator {
    pub fn new(engine: EngineConfig, mem_cfg: MemoryConfig) -> Result<Self, Fault> {
        engine.validate().map_err(|e| Fault::new(0, FaultCause::Config(e.to_string())))?;
        Ok(Simulator {
            engine,
            mem_cfg,
            memory: Memory::new(&mem_cfg),
            threshold: 0,
            anomaly: false,
            loaded_weight_bytes: 0,
            trace: std::env::var("E_G2C_TRACE").is_ok_and(|v| v == "1"),
        })
    }

    pub fn engine(&self) -> &EngineConfig {
        &self.engine
    }

    pub fn memory_config(&self) -> &MemoryConfig {
        &self.mem_cfg
    }

    pub fn threshold(&self) -> i16 {
        self.threshold
    }

    pub fn anomaly_flag(&self) -> bool {
        self.anomaly
    }

    /// Writes weights and indices into on-chip memory. The bytes are charged
    /// as off-chip weight traffic to the next run.
    pub fn load_image(&mut self, image: &MemoryImage) -> Result<(), Fault> {
        for seg in &image.segments {
            self.memory.write(seg.region, seg.addr, &seg.bytes, 0)?;
            self.loaded_weight_bytes += seg.bytes.len() as u64;
        }
        Ok(())
    }

    /// Executes `program` on `input`, which is placed at address 0 of
    /// activation GB A.
    pub fn run(&mut self, program: &Program, input: &Tensor, mode: ExecMode) -> Result<RunOutcome, Fault> {
        let words = program.words();
        if words.len() > self.mem_cfg.instruction_words {
            return Err(Fault::new(0, FaultCause::ProgramTooLong { words: words.len(), capacity: self.mem_cfg.instruction_words }));
        }
        if input.bits() != OutBits::B8 {
            return Err(Fault::new(0, FaultCause::Input("input frame must be 8-bit".into())));
        }
        let mut stats = SimStats {
            offchip_weight_bytes: std::mem::take(&mut self.loaded_weight_bytes),
            ..Default::default()
        };
        let frame = input.to_bytes();
        self.memory.write(Region::ActA, 0, &frame, 0)?;
        stats.input_load_bytes = frame.len() as u64;

        let mut input_gb = Region::ActA;
        let mut pending = Pending::default();
        let mut last: Option<LastOutput> = None;
        self.anomaly = false;
        let mut pc = 0;
        loop {
            let Some(&word) = words.get(pc) else {
                return Err(Fault::new(pc, FaultCause::MissingHalt));
            };
            let ins = Instruction::decode(word).map_err(|e| Fault::new(pc, e.into()))?;
            if self.trace {
                eprintln!("[{:5}] {pc:4}: {ins}", stats.total_cycles);
            }
            stats.instructions += 1;
            match ins {
                Instruction::RunLayer { layer_id } => {
                    let out = self.run_layer(pc, layer_id, &pending, input_gb, mode, &mut stats)?;
                    let cycles = stats.layers.last().map_or(0, |l| l.layer_cycles);
                    stats.total_cycles += cycles;
                    last = Some(out);
                    pc += 1;
                    continue;
                }
                Instruction::Nop => {}
                Instruction::SetLayer(cfg) => {
                    pending = Pending { cfg: Some(cfg), ..Default::default() };
                }
                Instruction::SetShapeA { cin, cout } => pending.shape_a = Some((cin, cout)),
                Instruction::SetShapeB { h, w } => pending.shape_b = Some((h, w)),
                Instruction::SetAddr { region, addr } => pending.addrs[region as usize] = Some(addr),
                Instruction::SwapGb => {
                    input_gb = if input_gb == Region::ActA { Region::ActB } else { Region::ActA };
                }
                Instruction::SetThresh(t) => self.threshold = t,
                Instruction::CmpThresh => {
                    let out = last.as_ref().ok_or(Fault::new(pc, FaultCause::Incomplete("a prior layer output")))?;
                    let bytes = self.memory.read(out.region, out.addr, out.bits.bytes(), pc)?;
                    let v = match out.bits {
                        OutBits::B8 => bytes[0] as i8 as i16,
                        OutBits::B16 => i16::from_le_bytes([bytes[0], bytes[1]]),
                    };
                    self.anomaly = v > self.threshold;
                }
                Instruction::Halt => {
                    stats.total_cycles += 1;
                    stats.control_cycles += 1;
                    break;
                }
            }
            stats.total_cycles += 1;
            stats.control_cycles += 1;
            pc += 1;
        }

        let output = match (mode, last) {
            (ExecMode::Functional, Some(out)) => {
                let bytes = self.memory.read(out.region, out.addr, out.dims.numel() * out.bits.bytes(), pc)?;
                Some(Tensor::from_bytes(out.dims, out.bits, bytes).map_err(|e| Fault::new(pc, FaultCause::InvalidLayer(e.to_string())))?)
            }
            _ => None,
        };
        Ok(RunOutcome { output, stats, anomaly: self.anomaly })
    }

    fn run_layer(
        &mut self,
        pc: usize,
        layer_id: u8,
        p: &Pending,
        input_gb: Region,
        mode: ExecMode,
        stats: &mut SimStats,
    ) -> Result<LastOutput, Fault> {
        let fault = |cause| Fault::new(pc, cause);
        let cfg = p.cfg.ok_or(fault(FaultCause::Incomplete("SET_LAYER")))?;
        if cfg.layer_id != layer_id {
            return Err(fault(FaultCause::LayerIdMismatch { configured: cfg.layer_id, requested: layer_id }));
        }
        let (cin, cout) = p.shape_a.ok_or(fault(FaultCause::Incomplete("SET_SHAPE_A")))?;
        let (h, w) = p.shape_b.ok_or(fault(FaultCause::Incomplete("SET_SHAPE_B")))?;
        let layer = LayerSpec {
            kind: cfg.kind,
            cin,
            cout,
            h,
            w,
            stride: cfg.stride as usize,
            quant: cfg.quant,
            requant_shift: cfg.shift,
            activation: cfg.activation,
            out_bits: cfg.out_bits,
        };
        layer.validate().map_err(|e| fault(FaultCause::InvalidLayer(e.to_string())))?;
        let in_addr = p.addrs[input_gb as usize].ok_or(fault(FaultCause::Incomplete("an input activation address")))?;
        let output_gb = if input_gb == Region::ActA { Region::ActB } else { Region::ActA };
        let (out_region, out_addr) = match (p.addrs[Region::Output as usize], p.addrs[output_gb as usize]) {
            (Some(a), _) => (Region::Output, a),
            (None, Some(a)) => (output_gb, a),
            (None, None) => return Err(fault(FaultCause::Incomplete("an output activation address"))),
        };
        let w_addr = p.addrs[Region::WeightGb as usize].ok_or(fault(FaultCause::Incomplete("a weight address")))?;

        // weights: a vector stream for convs, a dense matrix for FC
        let (vectors, codes, fc_weights) = match vector_count(&layer) {
            Some(dense_count) => {
                let indices: Vec<u32> = if cfg.flags.sparsity {
                    let idx_addr = p.addrs[Region::IndexSram as usize].ok_or(fault(FaultCause::Incomplete("an index address")))?;
                    let head = self.memory.read(Region::IndexSram, idx_addr, 4, pc)?;
                    let count = u32::from_le_bytes(head.try_into().unwrap()) as usize;
                    let raw = self.memory.read(Region::IndexSram, idx_addr + 4, count * 2, pc)?;
                    stats.index_bytes_read += 4 + raw.len() as u64;
                    let idx: Vec<u32> = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect();
                    if idx.iter().any(|&i| i as usize >= dense_count) || idx.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(fault(FaultCause::InvalidLayer("index list out of range or unsorted".into())));
                    }
                    idx
                } else {
                    (0..dense_count as u32).collect()
                };
                let vb = layer.quant.vector_bytes();
                let payload = self.memory.read(Region::WeightGb, w_addr, indices.len() * vb, pc)?;
                stats.weight_bytes_read += payload.len() as u64;
                let codes = match mode {
                    ExecMode::Functional => payload
                        .chunks_exact(vb)
                        .map(|c| VectorCodes::from_bytes(layer.quant, c))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| fault(FaultCause::InvalidLayer(e.to_string())))?,
                    ExecMode::TimingOnly => Vec::new(),
                };
                (indices, codes, None)
            }
            None => {
                let n = layer.weight_count();
                let bytes = self.memory.read(Region::WeightGb, w_addr, LayerWeights::byte_len(layer.quant, n), pc)?;
                stats.weight_bytes_read += bytes.len() as u64;
                let lw = match mode {
                    ExecMode::Functional => Some(
                        LayerWeights::from_bytes(layer.quant, n, bytes).map_err(|e| fault(FaultCause::InvalidLayer(e.to_string())))?,
                    ),
                    ExecMode::TimingOnly => None,
                };
                (Vec::new(), Vec::new(), lw)
            }
        };

        let sched = map_layer(layer_id as usize, &layer, &vectors, &self.engine, cfg.flags)
            .map_err(|e| fault(FaultCause::InvalidLayer(e.to_string())))?;

        let in_len = layer.cin * layer.h * layer.w;
        let input = match mode {
            ExecMode::Functional => Some(self.memory.read(input_gb, in_addr, in_len, pc)?.to_vec()),
            ExecMode::TimingOnly => {
                self.memory.read(input_gb, in_addr, in_len, pc)?;
                None
            }
        };
        let out_dims = layer.output_dims();
        let mut acc = vec![0i32; if input.is_some() { out_dims.numel() } else { 0 }];

        let mut ls = LayerStats::new(layer_id, layer.kind);
        let mut first_chunk = None;
        for wave in &sched.waves {
            let staged = sparse_gather(&layer, wave, input.as_deref());
            let bytes = staged.bytes();
            if bytes > self.mem_cfg.in_act_buf {
                return Err(fault(FaultCause::BufferOverflow { buffer: "input buffer", need: bytes, capacity: self.mem_cfg.in_act_buf }));
            }
            let out_bytes = out_buffer_bytes(&layer, wave);
            if out_bytes > self.mem_cfg.out_act_buf {
                return Err(fault(FaultCause::BufferOverflow { buffer: "output buffer", need: out_bytes, capacity: self.mem_cfg.out_act_buf }));
            }
            ls.staged_bytes += bytes as u64;
            stats.out_buf_writes += out_bytes as u64;
            first_chunk.get_or_insert((wave.cycles, (bytes as u64).div_ceil(PREP_BYTES_PER_CYCLE)));
            if input.is_some() {
                compute_wave(&layer, wave, &staged, &codes, fc_weights.as_ref(), &mut acc);
            }
        }
        stats.act_gb_reads += ls.staged_bytes;
        stats.in_buf_writes += ls.staged_bytes;

        let out_bytes_len = out_dims.numel() * layer.out_bits.bytes();
        if input.is_some() {
            let data: Vec<i16> = acc.iter().map(|&a| requantize(a, &layer)).collect();
            let t = Tensor::from_values(out_dims, layer.out_bits, data).map_err(|e| fault(FaultCause::InvalidLayer(e.to_string())))?;
            self.memory.write(out_region, out_addr, &t.to_bytes(), pc)?;
        } else {
            // bounds check only
            self.memory.read(out_region, out_addr, out_bytes_len, pc)?;
        }
        if out_region == Region::Output {
            stats.offchip_act_accesses += out_bytes_len as u64;
        } else {
            stats.act_gb_writes += out_bytes_len as u64;
        }

        fill_timing(&mut ls, &sched, first_chunk, self.engine.num_lanes);
        let macs = sched.total_macs();
        ls.macs = macs;
        stats.macs_executed += macs;
        match layer.quant {
            QuantMode::Po2 => stats.macs_po2 += macs,
            QuantMode::Int8 => stats.macs_int8 += macs,
        }
        stats.layers.push(ls);
        Ok(LastOutput { region: out_region, addr: out_addr, dims: out_dims, bits: layer.out_bits })
    }
}

fn fill_timing(ls: &mut LayerStats, sched: &LaneSchedule, first: Option<(u64, u64)>, lanes: usize) {
    ls.waves = sched.waves.len();
    ls.compute_cycles = sched.wave_cycles;
    ls.prep_cycles = ls.staged_bytes.div_ceil(PREP_BYTES_PER_CYCLE);
    ls.fill_cycles = first.map_or(0, |(c, p)| c.min(p));
    ls.layer_cycles = ls.compute_cycles.max(ls.prep_cycles) + ls.fill_cycles;
    ls.overlapped_cycles = ls.compute_cycles + ls.prep_cycles + ls.fill_cycles - ls.layer_cycles;
    ls.busy_lane_cycles = sched.busy_lane_cycles;
    ls.lane_cycles = sched.wave_cycles * lanes as u64;
}

/// Accumulates every item of a wave, reading activations only through the
/// staged input buffer.
fn compute_wave(
    layer: &LayerSpec,
    wave: &Wave,
    staged: &StagedWave,
    codes: &[VectorCodes],
    fc: Option<&LayerWeights>,
    acc: &mut [i32],
) {
    let buf = &staged.data;
    if let Some(fcw) = fc {
        for item in &wave.items {
            let co = item.out_channel;
            let mut sum = acc[co];
            for (ci, &b) in buf.iter().enumerate() {
                sum = sum.wrapping_add((b as i8 as i32).wrapping_mul(fcw.multiplier(co * layer.cin + ci)));
            }
            acc[co] = sum;
        }
        return;
    }
    let (ho, wo, s) = (layer.out_h(), layer.out_w(), layer.stride);
    let row_of = |ci: usize, iy: usize| -> Option<&[u8]> {
        staged
            .rows
            .binary_search_by(|r| (r.channel, r.row).cmp(&(ci, iy)))
            .ok()
            .map(|i| &buf[staged.rows[i].buf_offset..staged.rows[i].buf_offset + staged.row_len])
    };
    for item in &wave.items {
        let v = &codes[item.slot];
        let seg = item.segment;
        let obase = (item.out_channel * ho + seg.row) * wo;
        match vector_origin(layer, item.vector as usize) {
            VectorOrigin::KernelRow { ci, kr, .. } => {
                let iy = (seg.row * s) as isize + kr as isize - 1;
                if iy < 0 || iy >= layer.h as isize {
                    continue;
                }
                let row = row_of(ci, iy as usize).expect("gather staged every needed row");
                let m = [v.multiplier(0), v.multiplier(1), v.multiplier(2)];
                for j in seg.col_start..seg.col_start + seg.col_len {
                    let mut sum = acc[obase + j];
                    for (kc, &mk) in m.iter().enumerate() {
                        let ix = (j * s) as isize + kc as isize - 1;
                        if ix >= 0 && (ix as usize) < layer.w {
                            sum = sum.wrapping_add((row[ix as usize] as i8 as i32).wrapping_mul(mk));
                        }
                    }
                    acc[obase + j] = sum;
                }
            }
            VectorOrigin::Triplet { triplet, .. } => {
                for k in 0..3 {
                    let ci = triplet * 3 + k;
                    if ci >= layer.cin {
                        break;
                    }
                    let mk = v.multiplier(k);
                    let row = row_of(ci, seg.row * s).expect("gather staged every needed row");
                    for j in seg.col_start..seg.col_start + seg.col_len {
                        acc[obase + j] = acc[obase + j].wrapping_add((row[j * s] as i8 as i32).wrapping_mul(mk));
                    }
                }
            }
        }
    }
}

/// Loads a compiled model into a fresh simulator and runs it once.
pub fn run_program(
    compiled: &CompiledModel,
    input: &Tensor,
    engine: &EngineConfig,
    mem: &MemoryConfig,
) -> Result<RunOutcome, Fault> {
    let mut sim = Simulator::new(*engine, *mem)?;
    sim.load_image(&compiled.image)?;
    sim.run(&compiled.program, input, ExecMode::Functional)
}
