//! Derived measurements: sparsity speedup and the lane-parallelism
//! calibration sweep.

use serde::Serialize;
use thiserror::Error;

use super::{ExecMode, Fault, MemoryConfig, SimStats, Simulator};
use crate::isa::{assemble, AsmError, AssembleOptions};
use crate::mapper::{DataflowFlags, EngineConfig};
use crate::model::{Model, Tensor};
use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Compiles and runs `model` once in timing-only mode on a zero frame.
pub fn timing_stats(model: &Model, engine: &EngineConfig, mem: &MemoryConfig, flags: DataflowFlags) -> Result<SimStats, AnalysisError> {
    let compiled = assemble(model, engine, mem, &AssembleOptions { flags, ..Default::default() })?;
    let mut sim = Simulator::new(*engine, *mem)?;
    sim.load_image(&compiled.image)?;
    let dims = model.spec.input_dims().expect("assembled models have layers");
    let frame = Tensor::zeros(dims);
    Ok(sim.run(&compiled.program, &frame, ExecMode::TimingOnly)?.stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpeedupPoint {
    pub target_sparsity: f64,
    pub vector_sparsity: f64,
    pub cycles_dense: u64,
    pub cycles_sparse: u64,
    pub speedup: f64,
}

fn speedup_point(model: &Model, s: f64, dense_cycles: u64, engine: &EngineConfig, mem: &MemoryConfig, flags: DataflowFlags) -> Result<SpeedupPoint, AnalysisError> {
    let pruned = model.pruned(s)?;
    let sparse = timing_stats(&pruned, engine, mem, DataflowFlags { sparsity: true, ..flags })?;
    Ok(SpeedupPoint {
        target_sparsity: s,
        vector_sparsity: pruned.sparsity().vector_sparsity,
        cycles_dense: dense_cycles,
        cycles_sparse: sparse.total_cycles,
        speedup: dense_cycles as f64 / sparse.total_cycles as f64,
    })
}

/// Total cycles of the dense model with sparsity disabled over total cycles
/// of the model pruned to vector sparsity `s` with sparsity enabled. The
/// other dataflow flags are taken from `flags` for both runs.
pub fn speedup_vs_dense(model: &Model, s: f64, engine: &EngineConfig, mem: &MemoryConfig, flags: DataflowFlags) -> Result<SpeedupPoint, AnalysisError> {
    let dense = timing_stats(model, engine, mem, DataflowFlags { sparsity: false, ..flags })?;
    speedup_point(model, s, dense.total_cycles, engine, mem, flags)
}

/// [`speedup_vs_dense`] at every sparsity in `ss`, sharing one dense run.
pub fn speedup_curve(model: &Model, ss: &[f64], engine: &EngineConfig, mem: &MemoryConfig, flags: DataflowFlags) -> Result<Vec<SpeedupPoint>, AnalysisError> {
    let dense = timing_stats(model, engine, mem, DataflowFlags { sparsity: false, ..flags })?;
    ss.iter().map(|&s| speedup_point(model, s, dense.total_cycles, engine, mem, flags)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub p: usize,
    pub latencies_ms: Vec<f64>,
    pub mean_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub clock_hz: f64,
    pub targets_ms: Vec<f64>,
    pub points: Vec<CalibrationPoint>,
    pub best_p: usize,
    pub best_error: f64,
}

/// Sweeps MACs per lane per cycle and picks the value whose per-model
/// latencies best match `targets_ms` (mean relative error, ties to the
/// smaller P).
pub fn calibrate_p(
    models: &[&Model],
    targets_ms: &[f64],
    ps: &[usize],
    engine: &EngineConfig,
    mem: &MemoryConfig,
    flags: DataflowFlags,
    clock_hz: f64,
) -> Result<CalibrationReport, AnalysisError> {
    assert_eq!(models.len(), targets_ms.len(), "one latency target per model");
    assert!(!ps.is_empty(), "empty P sweep");
    let mut points = Vec::new();
    for &p in ps {
        let cfg = engine.with_p(p);
        let latencies_ms = models
            .iter()
            .map(|m| Ok(timing_stats(m, &cfg, mem, flags)?.total_cycles as f64 / clock_hz * 1000.0))
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        let err = latencies_ms.iter().zip(targets_ms).map(|(l, t)| ((l - t) / t).abs()).sum::<f64>() / targets_ms.len() as f64;
        points.push(CalibrationPoint { p, latencies_ms, mean_relative_error: err });
    }
    let best = points
        .iter()
        .min_by(|a, b| a.mean_relative_error.total_cmp(&b.mean_relative_error).then(a.p.cmp(&b.p)))
        .expect("nonempty sweep");
    Ok(CalibrationReport {
        clock_hz,
        targets_ms: targets_ms.to_vec(),
        best_p: best.p,
        best_error: best.mean_relative_error,
        points,
    })
}
