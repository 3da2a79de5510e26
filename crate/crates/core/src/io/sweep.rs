//! Parallel parameter sweeps over P, target sparsity and dataflow flags.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::IoError;
use crate::mapper::{DataflowFlags, EngineConfig};
use crate::model::Model;
use crate::sim::{timing_stats, AnalysisError, MemoryConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub model: String,
    pub p: usize,
    pub target_sparsity: f64,
    pub sparsity: bool,
    pub cir: bool,
    pub drir: bool,
    pub vector_sparsity: f64,
    pub cycles: u64,
    pub utilization: f64,
    /// Cycles of the unpruned model with sparsity off over `cycles`.
    pub speedup_vs_dense: f64,
    pub latency_ms: f64,
}

impl SweepPoint {
    fn key(&self) -> (String, usize, u64, bool, bool, bool) {
        (self.model.clone(), self.p, self.target_sparsity.to_bits(), self.sparsity, self.cir, self.drir)
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub p_values: Vec<usize>,
    pub sparsities: Vec<f64>,
    pub flag_sets: Vec<DataflowFlags>,
    pub clock_hz: f64,
}

/// Every (model, P, sparsity, flags) combination, run independently in
/// parallel and returned sorted by that key.
pub fn run_sweep(models: &[&Model], spec: &SweepSpec, engine: &EngineConfig, mem: &MemoryConfig) -> Result<Vec<SweepPoint>, AnalysisError> {
    let mut jobs = Vec::new();
    for &m in models {
        for &p in &spec.p_values {
            for &s in &spec.sparsities {
                for &f in &spec.flag_sets {
                    jobs.push((m, p, s, f));
                }
            }
        }
    }
    let mut points = jobs
        .into_par_iter()
        .map(|(m, p, s, flags)| {
            let cfg = engine.with_p(p);
            let pruned = m.pruned(s)?;
            let stats = timing_stats(&pruned, &cfg, mem, flags)?;
            let dense = timing_stats(m, &cfg, mem, DataflowFlags { sparsity: false, ..flags })?;
            Ok(SweepPoint {
                model: m.role().name().to_string(),
                p,
                target_sparsity: s,
                sparsity: flags.sparsity,
                cir: flags.cir,
                drir: flags.drir,
                vector_sparsity: pruned.sparsity().vector_sparsity,
                cycles: stats.total_cycles,
                utilization: stats.utilization(),
                speedup_vs_dense: dense.total_cycles as f64 / stats.total_cycles as f64,
                latency_ms: stats.total_cycles as f64 / spec.clock_hz * 1000.0,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    points.sort_by_key(SweepPoint::key);
    Ok(points)
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_reference_models;

    #[test]
    fn sorted_and_deterministic() {
        let refs = build_reference_models();
        let spec = SweepSpec {
            p_values: vec![2, 1],
            sparsities: vec![0.0, 0.5],
            flag_sets: vec![DataflowFlags::ALL],
            clock_hz: 2e6,
        };
        let cfg = EngineConfig::default();
        let a = run_sweep(&[&refs.detector], &spec, &cfg, &MemoryConfig::default()).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!((a[0].p, a[0].target_sparsity), (1, 0.0));
        assert_eq!(a, run_sweep(&[&refs.detector], &spec, &cfg, &MemoryConfig::default()).unwrap());
    }
}
