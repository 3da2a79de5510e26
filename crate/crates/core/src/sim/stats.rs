use serde::{Deserialize, Serialize};

use crate::model::LayerKind;

/// Timing and traffic of one executed layer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer_id: u8,
    pub kind: String,
    pub waves: usize,
    pub compute_cycles: u64,
    pub prep_cycles: u64,
    /// Pipeline fill charged before compute and preparation overlap.
    pub fill_cycles: u64,
    /// Cycles in which preparation and compute ran concurrently.
    pub overlapped_cycles: u64,
    pub layer_cycles: u64,
    pub busy_lane_cycles: u64,
    pub lane_cycles: u64,
    pub macs: u64,
    pub staged_bytes: u64,
}

impl LayerStats {
    pub(crate) fn new(layer_id: u8, kind: LayerKind) -> Self {
        LayerStats { layer_id, kind: kind.name().to_string(), ..Default::default() }
    }

    pub fn utilization(&self) -> f64 {
        if self.lane_cycles == 0 {
            0.0
        } else {
            self.busy_lane_cycles as f64 / self.lane_cycles as f64
        }
    }
}

/// Event counters of one program run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub total_cycles: u64,
    /// Cycles spent issuing non-RUN_LAYER instructions.
    pub control_cycles: u64,
    pub instructions: u64,
    pub layers: Vec<LayerStats>,
    pub macs_executed: u64,
    pub macs_po2: u64,
    pub macs_int8: u64,
    pub weight_bytes_read: u64,
    pub index_bytes_read: u64,
    pub act_gb_reads: u64,
    pub act_gb_writes: u64,
    pub in_buf_writes: u64,
    pub out_buf_writes: u64,
    pub input_load_bytes: u64,
    pub offchip_act_accesses: u64,
    pub offchip_weight_bytes: u64,
}

impl SimStats {
    pub fn busy_lane_cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.busy_lane_cycles).sum()
    }

    pub fn lane_cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.lane_cycles).sum()
    }

    pub fn utilization(&self) -> f64 {
        let total = self.lane_cycles();
        if total == 0 {
            0.0
        } else {
            self.busy_lane_cycles() as f64 / total as f64
        }
    }

    pub fn compute_cycles(&self) -> u64 {
        self.layers.iter().map(|l| l.compute_cycles).sum()
    }

    /// Adds another run's counters; layer lists are concatenated.
    pub fn accumulate(&mut self, other: &SimStats) {
        self.total_cycles += other.total_cycles;
        self.control_cycles += other.control_cycles;
        self.instructions += other.instructions;
        self.layers.extend(other.layers.iter().cloned());
        self.macs_executed += other.macs_executed;
        self.macs_po2 += other.macs_po2;
        self.macs_int8 += other.macs_int8;
        self.weight_bytes_read += other.weight_bytes_read;
        self.index_bytes_read += other.index_bytes_read;
        self.act_gb_reads += other.act_gb_reads;
        self.act_gb_writes += other.act_gb_writes;
        self.in_buf_writes += other.in_buf_writes;
        self.out_buf_writes += other.out_buf_writes;
        self.input_load_bytes += other.input_load_bytes;
        self.offchip_act_accesses += other.offchip_act_accesses;
        self.offchip_weight_bytes += other.offchip_weight_bytes;
    }

    /// Counters without the per-layer list, for aggregating long streams.
    pub fn accumulate_totals(&mut self, other: &SimStats) {
        let layers = std::mem::take(&mut self.layers);
        let mut shallow = other.clone();
        shallow.layers.clear();
        self.accumulate(&shallow);
        self.layers = layers;
    }
}

/// User-supplied per-event energy coefficients in picojoules. Not
/// calibrated against silicon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyModel {
    pub pj_per_po2_mac: f64,
    pub pj_per_int8_mac: f64,
    pub pj_per_weight_byte: f64,
    pub pj_per_index_byte: f64,
    pub pj_per_act_gb_read_byte: f64,
    pub pj_per_act_gb_write_byte: f64,
    pub pj_per_in_buf_byte: f64,
    pub pj_per_out_buf_byte: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.pj_per_po2_mac,
            self.pj_per_int8_mac,
            self.pj_per_weight_byte,
            self.pj_per_index_byte,
            self.pj_per_act_gb_read_byte,
            self.pj_per_act_gb_write_byte,
            self.pj_per_in_buf_byte,
            self.pj_per_out_buf_byte,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err("energy coefficients must be finite and non-negative".into())
        }
    }

    /// Linear estimate in picojoules.
    pub fn estimate_pj(&self, s: &SimStats) -> f64 {
        s.macs_po2 as f64 * self.pj_per_po2_mac
            + s.macs_int8 as f64 * self.pj_per_int8_mac
            + s.weight_bytes_read as f64 * self.pj_per_weight_byte
            + s.index_bytes_read as f64 * self.pj_per_index_byte
            + s.act_gb_reads as f64 * self.pj_per_act_gb_read_byte
            + s.act_gb_writes as f64 * self.pj_per_act_gb_write_byte
            + s.in_buf_writes as f64 * self.pj_per_in_buf_byte
            + s.out_buf_writes as f64 * self.pj_per_out_buf_byte
    }
}
