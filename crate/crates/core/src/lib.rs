//! Simulator for a 32-lane vector-sparse quantized CNN processor that runs
//! an anomaly detector and two EGM-to-ECG converters on one engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: layer and model descriptions, power-of-two and Int8 weight
//!   formats, the dense reference executor and the reference networks.
//! - [`sparse`]: the vector-wise compressed weight format.
//! - [`mapper`]: lane scheduling (row-wise reuse for every conv, column-wise
//!   and deeper row-wise reuse for depth-wise conv).
//! - [`isa`]: the 32-bit instruction set, assembler and disassembler.
//! - [`sim`]: the instruction-driven engine with timing and event counters.
//! - [`adapt`]: histogram-based detection threshold adaptation.
//! - [`orchestrator`]: the per-beat detect, then coarse or precise convert loop.
//! - [`io`]: streams, run configuration, reports and sweeps.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod model;
pub mod sparse;
pub mod mapper;
pub mod isa;
pub mod sim;
pub mod adapt;
pub mod orchestrator;
pub mod io;
