//! Stream runs and their JSON and CSV reports.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use super::{Beat, IoError, RunConfig};
use crate::adapt::{adapt_threshold, AdaptConfig, AdaptError, AdaptationEngine, HistogramState, ThresholdState};
use crate::isa::AsmError;
use crate::mapper::DataflowFlags;
use crate::model::{LayerKind, Model, ReferenceModels};
use crate::orchestrator::{
    ConversionKind, HeartbeatWindow, Orchestrator, OrchestratorError, ProgramSet, StreamOutcome, ThresholdUpdate,
};
use crate::sim::{timing_stats, AnalysisError, ExecMode, Fault, LayerStats, SimStats, Simulator};

/// Bumped whenever a field of [`RunReport`] changes meaning or shape.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const ENERGY_NOTICE: &str =
    "NOT SILICON-CALIBRATED: linear estimate from user-supplied per-event coefficients";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

impl RunError {
    /// True when the simulated engine faulted, as opposed to bad input.
    pub fn is_fault(&self) -> bool {
        matches!(
            self,
            RunError::Fault(_) | RunError::Orchestrator(OrchestratorError::Fault(_)) | RunError::Analysis(AnalysisError::Fault(_))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelReport {
    pub role: String,
    pub total_macs: u64,
    pub vector_sparsity: f64,
    /// One inference with the configured flags.
    pub cycles: u64,
    pub latency_ms: f64,
    pub macs_executed: u64,
    pub utilization: f64,
    /// Lane utilization over conv layers only.
    pub conv_utilization: f64,
    /// Cycles with sparsity disabled over cycles with the configured flags.
    pub speedup_vs_dense: f64,
    pub layers: Vec<LayerStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StreamSummary {
    pub beats: usize,
    pub precise_conversions: usize,
    pub accuracy: Option<f64>,
    pub initial_threshold: i16,
    pub final_threshold: i16,
    pub total_cycles: u64,
    pub detector_cycles: u64,
    pub coarse_cycles: u64,
    pub precise_cycles: u64,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
    pub max_latency_fraction: f64,
    pub counters: SimStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub notice: &'static str,
    pub total_pj: f64,
    pub per_beat_pj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub generator: String,
    pub config: RunConfig,
    pub aggregate_conv_utilization: f64,
    pub models: Vec<ModelReport>,
    pub stream: StreamSummary,
    pub threshold_trace: Vec<ThresholdUpdate>,
    pub energy: Option<EnergyReport>,
}

/// Busy over elapsed lane-cycles of the conv layers in `stats`.
pub fn conv_utilization(stats: &SimStats) -> f64 {
    let conv = stats.layers.iter().filter(|l| l.kind != LayerKind::Fc.name());
    let (busy, total) = conv.fold((0, 0), |(b, t), l| (b + l.busy_lane_cycles, t + l.lane_cycles));
    if total == 0 {
        0.0
    } else {
        busy as f64 / total as f64
    }
}

/// Threshold from one adaptation pass over `scores`, used as the starting
/// point of a run. Falls back to the mean when there are fewer samples than
/// bins.
pub fn warmup_threshold(scores: &[i16], cfg: &AdaptConfig) -> Result<i16, AdaptError> {
    if scores.len() < cfg.num_bins.max(1) {
        let n = scores.len().max(1) as i64;
        return Ok((scores.iter().map(|&s| s as i64).sum::<i64>() / n) as i16);
    }
    let wcfg = AdaptConfig { window_samples: scores.len(), ..*cfg };
    let mut h = HistogramState::new(&wcfg);
    for &s in scores {
        h.observe(&wcfg, s);
    }
    Ok(adapt_threshold(&h, &wcfg, &ThresholdState::new(0))?.threshold)
}

/// Detector outputs for `beats`, run on the simulator.
pub fn detector_scores(programs: &ProgramSet, beats: &[Beat], cfg: &RunConfig) -> Result<Vec<i16>, RunError> {
    let mut sim = Simulator::new(cfg.engine, cfg.memory)?;
    sim.load_image(&programs.detector.image)?;
    beats
        .iter()
        .map(|b| {
            let out = sim.run(&programs.detector.program, &b.frame, ExecMode::Functional)?;
            Ok(out.output.expect("functional run").data()[0])
        })
        .collect()
}

fn model_report(model: &Model, cfg: &RunConfig) -> Result<ModelReport, RunError> {
    let s = timing_stats(model, &cfg.engine, &cfg.memory, cfg.flags)?;
    let dense = timing_stats(model, &cfg.engine, &cfg.memory, DataflowFlags { sparsity: false, ..cfg.flags })?;
    Ok(ModelReport {
        role: model.role().name().to_string(),
        total_macs: model.total_macs(),
        vector_sparsity: model.sparsity().vector_sparsity,
        cycles: s.total_cycles,
        latency_ms: s.total_cycles as f64 / cfg.orchestrator.clock_hz * 1000.0,
        macs_executed: s.macs_executed,
        utilization: s.utilization(),
        conv_utilization: conv_utilization(&s),
        speedup_vs_dense: dense.total_cycles as f64 / s.total_cycles as f64,
        layers: s.layers,
    })
}

/// Compiles the models, runs the stream through the orchestrator and
/// gathers the report.
pub fn run_stream_report(models: &ReferenceModels, beats: &[Beat], cfg: &RunConfig) -> Result<(RunReport, StreamOutcome), RunError> {
    cfg.validate()?;
    let programs = ProgramSet::compile(models, &cfg.engine, &cfg.memory, cfg.flags)?;
    let initial = match cfg.initial_threshold {
        Some(t) => t,
        None => {
            let warm = &beats[..beats.len().min(cfg.adapt.window_samples)];
            warmup_threshold(&detector_scores(&programs, warm, cfg)?, &cfg.adapt)?
        }
    };
    let adapt = AdaptationEngine::new(cfg.adapt, initial)?;
    let mut orch = Orchestrator::new(programs, cfg.engine, cfg.memory, adapt, cfg.orchestrator)?;
    let windows: Vec<HeartbeatWindow> =
        beats.iter().map(|b| HeartbeatWindow { index: b.index, frame: b.frame.clone(), label: Some(b.label) }).collect();
    let outcome = orch.run_stream(&windows)?;

    let model_reports = models.all().into_iter().map(|m| model_report(m, cfg)).collect::<Result<Vec<_>, _>>()?;
    let (busy, total) = model_reports
        .iter()
        .flat_map(|m| &m.layers)
        .filter(|l| l.kind != LayerKind::Fc.name())
        .fold((0u64, 0u64), |(b, t), l| (b + l.busy_lane_cycles, t + l.lane_cycles));

    let n = outcome.beats.len();
    let lat = outcome.beats.iter().map(|b| b.latency_ms);
    let stream = StreamSummary {
        beats: n,
        precise_conversions: outcome.precise_count(),
        accuracy: outcome.accuracy(),
        initial_threshold: initial,
        final_threshold: orch.threshold(),
        total_cycles: outcome.stats.total_cycles,
        detector_cycles: outcome.detector_cycles,
        coarse_cycles: outcome.coarse_cycles,
        precise_cycles: outcome.precise_cycles,
        mean_latency_ms: lat.clone().sum::<f64>() / n as f64,
        max_latency_ms: lat.fold(0.0, f64::max),
        max_latency_fraction: outcome.beats.iter().map(|b| b.latency_fraction).fold(0.0, f64::max),
        counters: outcome.stats.clone(),
    };
    let energy = cfg.energy.map(|e| {
        let total_pj = e.estimate_pj(&outcome.stats);
        EnergyReport { notice: ENERGY_NOTICE, total_pj, per_beat_pj: total_pj / n as f64 }
    });
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        generator: format!("eg2c {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        aggregate_conv_utilization: if total == 0 { 0.0 } else { busy as f64 / total as f64 },
        models: model_reports,
        stream,
        threshold_trace: outcome.threshold_trace.clone(),
        energy,
    };
    Ok((report, outcome))
}

pub fn write_report_json<W: Write>(report: &RunReport, mut out: W) -> Result<(), IoError> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// `index,label,detector_output,threshold,anomaly,kind,cycles,latency_ms,latency_fraction`
pub fn write_beats_csv<W: Write>(outcome: &StreamOutcome, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "label", "detector_output", "threshold", "anomaly", "kind", "cycles", "latency_ms", "latency_fraction"])?;
    for b in &outcome.beats {
        let kind = match b.conversion_kind {
            ConversionKind::Coarse => "coarse",
            ConversionKind::Precise => "precise",
        };
        w.write_record([
            b.index.to_string(),
            b.label.map_or(String::new(), |l| (l as u8).to_string()),
            b.detector_output.to_string(),
            b.threshold.to_string(),
            (b.anomaly as u8).to_string(),
            kind.to_string(),
            b.cycles.total().to_string(),
            format!("{:.6}", b.latency_ms),
            format!("{:.6}", b.latency_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}
