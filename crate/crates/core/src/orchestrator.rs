//! Per-beat pipeline: run the detector, compare against the adaptive
//! threshold, then run exactly one converter (precise on an anomaly, coarse
//! otherwise). All three programs share one simulator and stay resident in
//! its weight GB; each program switch costs a fixed number of cycles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{AdaptError, AdaptationEngine};
use crate::isa::{assemble, AsmError, AssembleOptions, CompiledModel};
use crate::mapper::{DataflowFlags, EngineConfig};
use crate::model::{ReferenceModels, Role, Tensor};
use crate::sim::{ExecMode, Fault, MemoryConfig, SimStats, Simulator, DEFAULT_CLOCK_HZ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrchestratorConfig {
    pub bpm: f64,
    pub clock_hz: f64,
    /// Cycles charged for every program switch.
    pub switch_cycles: u64,
    /// Run converters for timing only, reusing the first run's counters.
    /// Converter timing does not depend on the frame.
    pub timing_only_converters: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig { bpm: 80.0, clock_hz: DEFAULT_CLOCK_HZ, switch_cycles: 64, timing_only_converters: false }
    }
}

impl OrchestratorConfig {
    pub fn period_ms(&self) -> f64 {
        60_000.0 / self.bpm
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return Err(OrchestratorError::Invalid("bpm must be positive".into()));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(OrchestratorError::Invalid("clock_hz must be positive".into()));
        }
        Ok(())
    }
}

/// The three compiled models, laid out side by side in memory.
#[derive(Clone, Debug)]
pub struct ProgramSet {
    pub detector: CompiledModel,
    pub coarse: CompiledModel,
    pub precise: CompiledModel,
}

impl ProgramSet {
    /// Assembles the models one after another in the weight GB and index
    /// SRAM so that all three stay resident.
    pub fn compile(models: &ReferenceModels, engine: &EngineConfig, mem: &MemoryConfig, flags: DataflowFlags) -> Result<Self, AsmError> {
        let mut opts = AssembleOptions { flags, ..Default::default() };
        let mut next = |m| -> Result<CompiledModel, AsmError> {
            let c = assemble(m, engine, mem, &opts)?;
            opts.weight_base = c.weight_end;
            opts.index_base = c.index_end;
            Ok(c)
        };
        Ok(ProgramSet { detector: next(&models.detector)?, coarse: next(&models.coarse)?, precise: next(&models.precise)? })
    }

    pub fn by_role(&self, role: Role) -> &CompiledModel {
        match role {
            Role::Detector => &self.detector,
            Role::CoarseConverter => &self.coarse,
            Role::PreciseConverter => &self.precise,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeartbeatWindow {
    pub index: usize,
    pub frame: Tensor,
    /// Ground truth when known.
    pub label: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionKind {
    Coarse,
    Precise,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BeatCycles {
    pub detect: u64,
    pub convert: u64,
    pub switch: u64,
}

impl BeatCycles {
    pub fn total(&self) -> u64 {
        self.detect + self.convert + self.switch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeatResult {
    pub index: usize,
    pub label: Option<bool>,
    pub detector_output: i16,
    /// Threshold in force when the beat was classified.
    pub threshold: i16,
    pub anomaly: bool,
    pub conversion_kind: ConversionKind,
    #[serde(skip)]
    pub ecg_frame: Option<Tensor>,
    pub cycles: BeatCycles,
    pub latency_ms: f64,
    pub latency_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdUpdate {
    pub sample_index: usize,
    pub threshold: i16,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StreamOutcome {
    pub beats: Vec<BeatResult>,
    pub threshold_trace: Vec<ThresholdUpdate>,
    /// Counters summed over every program run (per-layer lists omitted).
    pub stats: SimStats,
    pub detector_cycles: u64,
    pub coarse_cycles: u64,
    pub precise_cycles: u64,
}

impl StreamOutcome {
    /// Fraction of labelled beats whose dispatch matched the label.
    pub fn accuracy(&self) -> Option<f64> {
        let labelled: Vec<_> = self.beats.iter().filter_map(|b| b.label.map(|l| l == b.anomaly)).collect();
        (!labelled.is_empty()).then(|| labelled.iter().filter(|&&ok| ok).count() as f64 / labelled.len() as f64)
    }

    pub fn precise_count(&self) -> usize {
        self.beats.iter().filter(|b| b.conversion_kind == ConversionKind::Precise).count()
    }
}

pub struct Orchestrator {
    cfg: OrchestratorConfig,
    programs: ProgramSet,
    sim: Simulator,
    adapt: AdaptationEngine,
    converter_cache: [Option<SimStats>; 2],
    samples: usize,
}

impl Orchestrator {
    pub fn new(
        programs: ProgramSet,
        engine: EngineConfig,
        mem: MemoryConfig,
        adapt: AdaptationEngine,
        cfg: OrchestratorConfig,
    ) -> Result<Self, OrchestratorError> {
        cfg.validate()?;
        let mut sim = Simulator::new(engine, mem)?;
        for c in [&programs.detector, &programs.coarse, &programs.precise] {
            sim.load_image(&c.image)?;
        }
        Ok(Orchestrator { cfg, programs, sim, adapt, converter_cache: [None, None], samples: 0 })
    }

    pub fn adaptation(&self) -> &AdaptationEngine {
        &self.adapt
    }

    pub fn threshold(&self) -> i16 {
        self.adapt.threshold()
    }

    fn convert(&mut self, kind: ConversionKind, frame: &Tensor) -> Result<(Option<Tensor>, SimStats), Fault> {
        let (role, slot) = match kind {
            ConversionKind::Coarse => (Role::CoarseConverter, 0),
            ConversionKind::Precise => (Role::PreciseConverter, 1),
        };
        if !self.cfg.timing_only_converters {
            let out = self.sim.run(&self.programs.by_role(role).program, frame, ExecMode::Functional)?;
            return Ok((out.output, out.stats));
        }
        if let Some(s) = &self.converter_cache[slot] {
            return Ok((None, s.clone()));
        }
        let out = self.sim.run(&self.programs.by_role(role).program, frame, ExecMode::TimingOnly)?;
        let mut cached = out.stats.clone();
        cached.offchip_weight_bytes = 0;
        self.converter_cache[slot] = Some(cached);
        Ok((None, out.stats))
    }

    /// Processes one beat; `update` receives a threshold refresh if one fired.
    fn beat(&mut self, w: &HeartbeatWindow, totals: Option<&mut StreamOutcome>) -> Result<(BeatResult, Option<i16>), Fault> {
        let threshold = self.adapt.threshold();
        let det_prog = self.programs.detector.program.with_threshold(threshold);
        let det = self.sim.run(&det_prog, &w.frame, ExecMode::Functional)?;
        let score = det.output.as_ref().expect("functional run yields output").data()[0];
        let anomaly = det.anomaly;
        debug_assert_eq!(anomaly, self.adapt.detect(score));
        let kind = if anomaly { ConversionKind::Precise } else { ConversionKind::Coarse };
        let (ecg, conv) = self.convert(kind, &w.frame)?;
        let update = self.adapt.observe(score);
        self.samples += 1;

        let cycles = BeatCycles { detect: det.stats.total_cycles, convert: conv.total_cycles, switch: 2 * self.cfg.switch_cycles };
        let latency_ms = cycles.total() as f64 / self.cfg.clock_hz * 1000.0;
        if let Some(t) = totals {
            t.stats.accumulate_totals(&det.stats);
            t.stats.accumulate_totals(&conv);
            t.stats.total_cycles += cycles.switch;
            t.detector_cycles += cycles.detect;
            match kind {
                ConversionKind::Coarse => t.coarse_cycles += cycles.convert,
                ConversionKind::Precise => t.precise_cycles += cycles.convert,
            }
        }
        let result = BeatResult {
            index: w.index,
            label: w.label,
            detector_output: score,
            threshold,
            anomaly,
            conversion_kind: kind,
            ecg_frame: ecg,
            cycles,
            latency_ms,
            latency_fraction: latency_ms / self.cfg.period_ms(),
        };
        Ok((result, update))
    }

    pub fn process_beat(&mut self, w: &HeartbeatWindow) -> Result<BeatResult, Fault> {
        Ok(self.beat(w, None)?.0)
    }

    /// Processes beats in order, refreshing the threshold as the adaptation
    /// engine dictates.
    pub fn run_stream(&mut self, windows: &[HeartbeatWindow]) -> Result<StreamOutcome, OrchestratorError> {
        if windows.is_empty() {
            return Err(OrchestratorError::Invalid("empty beat stream".into()));
        }
        let mut out = StreamOutcome::default();
        for w in windows {
            let sample_index = self.samples;
            let (r, update) = self.beat(w, Some(&mut out))?;
            if let Some(threshold) = update {
                out.threshold_trace.push(ThresholdUpdate { sample_index, threshold });
            }
            out.beats.push(r);
        }
        Ok(out)
    }
}
