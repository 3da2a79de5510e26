//! Streams, run configuration, reports and parameter sweeps.

mod config;
mod report;
mod stream;
mod sweep;

use thiserror::Error;

pub use config::RunConfig;
pub use report::{
    conv_utilization, detector_scores, run_stream_report, warmup_threshold, write_beats_csv, write_report_json, EnergyReport,
    ModelReport, RunError, RunReport, StreamSummary, ENERGY_NOTICE, REPORT_SCHEMA_VERSION,
};
pub use stream::{beat_template, gen_stream, read_stream_csv, write_stream_csv, Beat, StreamSpec};
pub use sweep::{run_sweep, write_sweep_csv, SweepPoint, SweepSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("anomaly rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("stream: {0}")]
    Stream(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    File(#[from] std::io::Error),
}
