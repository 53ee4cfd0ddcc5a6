//! Cycle-accurate model of a small vector-processor cluster: two vector cores
//! sharing a banked L1 scratchpad, with switchable bandwidth-oriented
//! micro-architectural features.
//!
//! Every alternative mechanism (chaining scheme, VRF layout, address map,
//! write priority, reduction, kernel) sits behind a trait and is picked by
//! name from a [`registry::Registry`] according to the configuration.

pub mod config;
pub mod controller;
pub mod elem;
pub mod engine;
pub mod error;
pub mod execunits;
pub mod harness;
pub mod kernels;
pub mod memory;
pub mod registry;
pub mod roofline;
pub mod trace;
pub mod vrf;

pub use config::{ClusterConfig, Preset, ValidConfig};
pub use engine::{compare, run, run_kernel, CycleStats, Engine, RunOptions, RunResult};
pub use error::SimError;
pub use kernels::{KernelKind, KernelSpec};
