//! Lane scheduling.
//!
//! Work is cut into items, each computing one output-row segment for one
//! weight vector (or one FC output neuron), and gang-scheduled onto the MAC
//! lanes in waves: every lane starts together and a wave lasts as long as its
//! longest item. Items are packed in emission order onto the lowest free
//! lane; a wave closes when it is full or the next item may not join it.
//!
//! Normal and point-wise convolutions and FC layers use row-wise reuse: an
//! item streams one input row across a whole output row, and items are
//! emitted output-row-major so that one wave shares few input rows.
//!
//! Depth-wise convolution has no cross-kernel reuse, so a wave may hold at
//! most one scheduling unit per channel. Without column-wise reuse a unit is
//! a single (kernel row, output row) item; with it a unit is the three kernel
//! rows feeding one output row, placed on three lanes. Deeper row-wise reuse
//! splits every item's output row into two sub-rows on two lanes.

use serde::Serialize;
use thiserror::Error;

use crate::model::{LayerKind, LayerSpec};
use crate::sparse::{vector_count, vector_origin, vector_taps, SparseLayer, VectorOrigin};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("{0} layers cannot use this mapping")]
    UnsupportedKind(&'static str),
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub num_lanes: usize,
    /// MACs one lane retires per cycle.
    pub macs_per_lane_per_cycle: usize,
    /// Granularity of deeper row-wise reuse sub-rows.
    pub drir_sub_row_len: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { num_lanes: 32, macs_per_lane_per_cycle: 1, drir_sub_row_len: 4 }
    }
}

impl EngineConfig {
    pub fn with_p(mut self, p: usize) -> Self {
        self.macs_per_lane_per_cycle = p;
        self
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.num_lanes == 0 || self.macs_per_lane_per_cycle == 0 || self.drir_sub_row_len == 0 {
            return Err(MapError::InvalidConfig("lanes, P and sub-row length must all be at least 1".into()));
        }
        Ok(())
    }

    fn cycles(&self, macs: u64) -> u64 {
        macs.div_ceil(self.macs_per_lane_per_cycle as u64)
    }
}

/// Feature switches carried by each layer's configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataflowFlags {
    pub sparsity: bool,
    pub cir: bool,
    pub drir: bool,
}

impl Default for DataflowFlags {
    fn default() -> Self {
        DataflowFlags::ALL
    }
}

impl DataflowFlags {
    pub const ALL: DataflowFlags = DataflowFlags { sparsity: true, cir: true, drir: true };
    pub const NONE: DataflowFlags = DataflowFlags { sparsity: false, cir: false, drir: false };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RowSegment {
    pub row: usize,
    pub col_start: usize,
    pub col_len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WorkItem {
    pub lane: usize,
    pub layer_ref: usize,
    /// Position in the layer's vector stream; output neuron for FC.
    pub slot: usize,
    /// Canonical vector index; output neuron for FC.
    pub vector: u32,
    pub out_channel: usize,
    pub segment: RowSegment,
    pub macs: u64,
    pub est_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Wave {
    pub items: Vec<WorkItem>,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LaneSchedule {
    pub layer_ref: usize,
    pub num_lanes: usize,
    pub waves: Vec<Wave>,
    pub busy_lane_cycles: u64,
    pub wave_cycles: u64,
}

impl LaneSchedule {
    /// Busy lane-cycles over elapsed lane-cycles; 0 for an empty schedule.
    pub fn utilization(&self) -> f64 {
        let total = self.wave_cycles * self.num_lanes as u64;
        if total == 0 {
            0.0
        } else {
            self.busy_lane_cycles as f64 / total as f64
        }
    }

    pub fn total_macs(&self) -> u64 {
        self.items().map(|i| i.macs).sum()
    }

    pub fn item_count(&self) -> usize {
        self.waves.iter().map(|w| w.items.len()).sum()
    }

    pub fn items(&self) -> impl Iterator<Item = &WorkItem> {
        self.waves.iter().flat_map(|w| &w.items)
    }

    pub fn max_busy_lanes(&self) -> usize {
        self.waves.iter().map(|w| w.items.len()).max().unwrap_or(0)
    }
}

/// Canonical indices of the vectors a sparse layer stores.
pub fn present_vectors(sparse: &SparseLayer) -> Vec<u32> {
    sparse.indices.clone()
}

/// Every vector of a layer, as walked with sparsity disabled.
pub fn all_vectors(layer: &LayerSpec) -> Vec<u32> {
    (0..vector_count(layer).unwrap_or(0) as u32).collect()
}

struct Packer {
    layer_ref: usize,
    lanes: usize,
    waves: Vec<Wave>,
    current: Vec<WorkItem>,
    /// unit occupying each channel in the open wave
    channel_unit: Vec<Option<usize>>,
}

impl Packer {
    fn new(layer_ref: usize, lanes: usize, channels: usize) -> Self {
        Packer { layer_ref, lanes, waves: Vec::new(), current: Vec::new(), channel_unit: vec![None; channels] }
    }

    fn close(&mut self) {
        if self.current.is_empty() {
            return;
        }
        let items = std::mem::take(&mut self.current);
        let cycles = items.iter().map(|i| i.est_cycles).max().unwrap_or(0);
        self.waves.push(Wave { items, cycles });
        self.channel_unit.iter_mut().for_each(|u| *u = None);
    }

    /// Places an item; `unit` restricts each channel to one unit per wave.
    fn push(&mut self, mut item: WorkItem, unit: Option<(usize, usize)>) {
        let blocked = |p: &Packer| match unit {
            Some((ch, u)) => p.channel_unit[ch].is_some_and(|cur| cur != u),
            None => false,
        };
        if self.current.len() == self.lanes || blocked(self) {
            self.close();
        }
        if let Some((ch, u)) = unit {
            self.channel_unit[ch] = Some(u);
        }
        item.lane = self.current.len();
        item.layer_ref = self.layer_ref;
        self.current.push(item);
    }

    fn finish(mut self) -> LaneSchedule {
        self.close();
        let busy_lane_cycles = self.waves.iter().flat_map(|w| &w.items).map(|i| i.est_cycles).sum();
        let wave_cycles = self.waves.iter().map(|w| w.cycles).sum();
        LaneSchedule { layer_ref: self.layer_ref, num_lanes: self.lanes, waves: self.waves, busy_lane_cycles, wave_cycles }
    }
}

fn out_channel(layer: &LayerSpec, v: u32) -> usize {
    match vector_origin(layer, v as usize) {
        VectorOrigin::KernelRow { co, .. } | VectorOrigin::Triplet { co, .. } => co,
    }
}

/// Row-wise reuse mapping for normal conv, point-wise conv and FC.
pub fn map_rir(layer_ref: usize, layer: &LayerSpec, vectors: &[u32], cfg: &EngineConfig) -> Result<LaneSchedule, MapError> {
    cfg.validate()?;
    let mut p = Packer::new(layer_ref, cfg.num_lanes, 0);
    match layer.kind {
        LayerKind::ConvDw => return Err(MapError::UnsupportedKind("DW")),
        LayerKind::Fc => {
            for co in 0..layer.cout {
                let macs = layer.cin as u64;
                p.push(
                    WorkItem {
                        lane: 0,
                        layer_ref,
                        slot: co,
                        vector: co as u32,
                        out_channel: co,
                        segment: RowSegment { row: 0, col_start: 0, col_len: 1 },
                        macs,
                        est_cycles: cfg.cycles(macs),
                    },
                    None,
                );
            }
        }
        LayerKind::ConvNormal | LayerKind::ConvPw => {
            let wo = layer.out_w();
            let cycles = cfg.cycles(3 * wo as u64);
            for row in 0..layer.out_h() {
                for (slot, &v) in vectors.iter().enumerate() {
                    p.push(
                        WorkItem {
                            lane: 0,
                            layer_ref,
                            slot,
                            vector: v,
                            out_channel: out_channel(layer, v),
                            segment: RowSegment { row, col_start: 0, col_len: wo },
                            macs: (vector_taps(layer, v as usize) * wo) as u64,
                            est_cycles: cycles,
                        },
                        None,
                    );
                }
            }
        }
    }
    Ok(p.finish())
}

/// Output-row segments after optional deeper row-wise reuse.
fn segments(wo: usize, drir: bool, sub_len: usize) -> Vec<(usize, usize)> {
    if !drir {
        return vec![(0, wo)];
    }
    let half = (wo.div_ceil(2 * sub_len) * sub_len).min(wo);
    [(0, half), (half, wo - half)].into_iter().filter(|&(_, len)| len > 0).collect()
}

/// Depth-wise mapping with optional column-wise (`cir`) and deeper row-wise
/// (`drir`) reuse.
pub fn map_dw(
    layer_ref: usize,
    layer: &LayerSpec,
    vectors: &[u32],
    cfg: &EngineConfig,
    cir: bool,
    drir: bool,
) -> Result<LaneSchedule, MapError> {
    cfg.validate()?;
    if layer.kind != LayerKind::ConvDw {
        return Err(MapError::UnsupportedKind(layer.kind.name()));
    }
    let channels = layer.cin;
    // slot of kernel row kr of channel c, if stored
    let mut rows = vec![[None::<usize>; 3]; channels];
    for (slot, &v) in vectors.iter().enumerate() {
        rows[v as usize / 3][v as usize % 3] = Some(slot);
    }
    let segs = segments(layer.out_w(), drir, cfg.drir_sub_row_len);
    let mut p = Packer::new(layer_ref, cfg.num_lanes, channels);
    let mut unit = 0usize;
    let emit = |p: &mut Packer, c: usize, kr: usize, row: usize, unit: usize| {
        let Some(slot) = rows[c][kr] else { return };
        for &(col_start, col_len) in &segs {
            let macs = 3 * col_len as u64;
            p.push(
                WorkItem {
                    lane: 0,
                    layer_ref,
                    slot,
                    vector: (c * 3 + kr) as u32,
                    out_channel: c,
                    segment: RowSegment { row, col_start, col_len },
                    macs,
                    est_cycles: cfg.cycles(macs),
                },
                Some((c, unit)),
            );
        }
    };
    for row in 0..layer.out_h() {
        if cir {
            for c in 0..channels {
                for kr in 0..3 {
                    emit(&mut p, c, kr, row, unit);
                }
                unit += 1;
            }
        } else {
            for kr in 0..3 {
                for c in 0..channels {
                    emit(&mut p, c, kr, row, unit);
                    unit += 1;
                }
            }
        }
    }
    Ok(p.finish())
}

/// Dispatches on layer kind. FC ignores `vectors`; with sparsity disabled
/// the caller passes every vector.
pub fn map_layer(
    layer_ref: usize,
    layer: &LayerSpec,
    vectors: &[u32],
    cfg: &EngineConfig,
    flags: DataflowFlags,
) -> Result<LaneSchedule, MapError> {
    match layer.kind {
        LayerKind::ConvDw => map_dw(layer_ref, layer, vectors, cfg, flags.cir, flags.drir),
        _ => map_rir(layer_ref, layer, vectors, cfg),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerUtilization {
    pub layer_ref: usize,
    pub utilization: f64,
    pub busy_lane_cycles: u64,
    pub lane_cycles: u64,
    pub waves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilizationReport {
    pub layers: Vec<LayerUtilization>,
    pub aggregate: f64,
}

/// Per-layer utilization and the lane-cycle weighted aggregate.
pub fn utilization_report<'a>(schedules: impl IntoIterator<Item = &'a LaneSchedule>) -> UtilizationReport {
    let layers: Vec<LayerUtilization> = schedules
        .into_iter()
        .map(|s| LayerUtilization {
            layer_ref: s.layer_ref,
            utilization: s.utilization(),
            busy_lane_cycles: s.busy_lane_cycles,
            lane_cycles: s.wave_cycles * s.num_lanes as u64,
            waves: s.waves.len(),
        })
        .collect();
    let busy: u64 = layers.iter().map(|l| l.busy_lane_cycles).sum();
    let total: u64 = layers.iter().map(|l| l.lane_cycles).sum();
    let aggregate = if total == 0 { 0.0 } else { busy as f64 / total as f64 };
    UtilizationReport { layers, aggregate }
}

/// Compact per-wave view for debugging dumps.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleDump {
    pub layer_ref: usize,
    pub utilization: f64,
    pub waves: Vec<WaveDump>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveDump {
    pub cycles: u64,
    pub busy_lanes: usize,
    pub idle_lanes: usize,
}

impl From<&LaneSchedule> for ScheduleDump {
    fn from(s: &LaneSchedule) -> Self {
        ScheduleDump {
            layer_ref: s.layer_ref,
            utilization: s.utilization(),
            waves: s
                .waves
                .iter()
                .map(|w| WaveDump { cycles: w.cycles, busy_lanes: w.items.len(), idle_lanes: s.num_lanes - w.items.len() })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuantMode;

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    #[test]
    fn single_channel_conv_items() {
        let l = LayerSpec::conv(LayerKind::ConvNormal, 1, 1, 4, 4, QuantMode::Int8);
        let s = map_rir(0, &l, &all_vectors(&l), &cfg()).unwrap();
        // brute force: every (kernel row, output row) pair
        let pairs: Vec<(u32, usize)> = (0..3).flat_map(|kr| (0..4).map(move |o| (kr, o))).collect();
        assert_eq!(s.item_count(), pairs.len());
        assert_eq!(s.waves.len(), 1);
        let s = map_rir(0, &l, &[0, 2], &cfg()).unwrap();
        assert_eq!(s.item_count(), 8);
    }

    #[test]
    fn exact_packing() {
        let l = LayerSpec::conv(LayerKind::ConvNormal, 1, 1, 16, 4, QuantMode::Int8);
        let s = map_rir(0, &l, &[0, 1], &cfg()).unwrap();
        assert_eq!((s.item_count(), s.waves.len()), (32, 1));
        let l = LayerSpec::conv(LayerKind::ConvPw, 6, 2, 16, 4, QuantMode::Int8);
        let s = map_rir(0, &l, &all_vectors(&l), &cfg()).unwrap();
        assert_eq!(s.item_count(), 64);
        assert_eq!(s.waves.len(), 2);
        assert_eq!(s.utilization(), 1.0);
    }

    #[test]
    fn dw_rejected_by_rir() {
        let l = LayerSpec::conv(LayerKind::ConvDw, 2, 2, 4, 4, QuantMode::Int8);
        assert_eq!(map_rir(0, &l, &[], &cfg()), Err(MapError::UnsupportedKind("DW")));
        let l = LayerSpec::conv(LayerKind::ConvPw, 3, 2, 4, 4, QuantMode::Int8);
        assert!(map_dw(0, &l, &[], &cfg(), true, true).is_err());
    }

    #[test]
    fn dw_reuse_multipliers() {
        let l = LayerSpec::conv(LayerKind::ConvDw, 1, 1, 8, 8, QuantMode::Int8);
        let v = all_vectors(&l);
        let base = map_dw(0, &l, &v, &cfg(), false, false).unwrap();
        let cir = map_dw(0, &l, &v, &cfg(), true, false).unwrap();
        let both = map_dw(0, &l, &v, &cfg(), true, true).unwrap();
        assert_eq!(base.max_busy_lanes(), 1);
        assert_eq!(base.utilization(), 1.0 / 32.0);
        assert!(cir.waves.iter().all(|w| w.items.len() == 3));
        assert_eq!(cir.utilization(), 3.0 / 32.0);
        assert!(both.waves.iter().all(|w| w.items.len() == 6));
        assert_eq!(both.utilization(), 6.0 / 32.0);
    }

    #[test]
    fn drir_segments_pad_uneven_rows() {
        assert_eq!(segments(8, true, 4), vec![(0, 4), (4, 4)]);
        assert_eq!(segments(32, true, 4), vec![(0, 16), (16, 16)]);
        assert_eq!(segments(10, true, 4), vec![(0, 8), (8, 2)]);
        assert_eq!(segments(3, true, 4), vec![(0, 3)]);
        assert_eq!(segments(8, false, 4), vec![(0, 8)]);
    }

    #[test]
    fn report_aggregates_by_lane_cycles() {
        let full = LaneSchedule { layer_ref: 0, num_lanes: 32, waves: vec![], busy_lane_cycles: 320, wave_cycles: 10 };
        let half = LaneSchedule { layer_ref: 1, num_lanes: 32, waves: vec![], busy_lane_cycles: 160, wave_cycles: 10 };
        let r = utilization_report([&full]);
        assert_eq!(r.aggregate, 1.0);
        let r = utilization_report([&full, &half]);
        assert_eq!(r.aggregate, 0.75);
        assert_eq!(r.layers[1].utilization, 0.5);
    }

    #[test]
    fn fc_items_are_neurons() {
        let l = LayerSpec::fc(32, 16, QuantMode::Int8);
        let s = map_rir(0, &l, &[], &cfg()).unwrap();
        assert_eq!(s.item_count(), 16);
        assert_eq!(s.total_macs(), 512);
        assert_eq!(s.wave_cycles, 32);
    }
}
