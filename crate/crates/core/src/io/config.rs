use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::adapt::{AdaptConfig, RangeMode};
use crate::mapper::{DataflowFlags, EngineConfig};
use crate::orchestrator::OrchestratorConfig;
use crate::sim::{EnergyModel, MemoryConfig};

/// Everything a `run` needs besides the models and the stream. Unknown keys
/// are rejected and omitted sections take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub memory: MemoryConfig,
    pub flags: DataflowFlags,
    pub adapt: AdaptConfig,
    pub orchestrator: OrchestratorConfig,
    /// Starting threshold. When absent, one adaptation pass over the first
    /// window of detector outputs picks it.
    pub initial_threshold: Option<i16>,
    /// Per-event energy coefficients; reports carry an estimate only when set.
    pub energy: Option<EnergyModel>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: EngineConfig::default(),
            memory: MemoryConfig::default(),
            flags: DataflowFlags::ALL,
            adapt: AdaptConfig { range_mode: RangeMode::Window, ..AdaptConfig::default() },
            orchestrator: OrchestratorConfig::default(),
            initial_threshold: None,
            energy: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let cfg = |e: String| IoError::Config(e);
        self.engine.validate().map_err(|e| cfg(e.to_string()))?;
        self.adapt.validate().map_err(|e| cfg(e.to_string()))?;
        self.orchestrator.validate().map_err(|e| cfg(e.to_string()))?;
        let m = &self.memory;
        if [m.weight_gb, m.index_sram, m.act_gb_a, m.act_gb_b, m.in_act_buf, m.out_act_buf, m.instruction_words].contains(&0) {
            return Err(cfg("memory capacities must be positive".into()));
        }
        if let Some(e) = &self.energy {
            e.validate().map_err(cfg)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"engine": {"macs_per_lane_per_cycle": 4}, "flags": {"cir": false}}"#).unwrap();
        assert_eq!(c.engine.macs_per_lane_per_cycle, 4);
        assert_eq!(c.engine.num_lanes, 32);
        assert!(!c.flags.cir && c.flags.sparsity);
    }

    #[test]
    fn unknown_and_invalid_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"engine": {"lanes": 4}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"adapt": {"num_bins": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"orchestrator": {"bpm": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"energy": {"pj_per_int8_mac": -1}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }
}
