//! Event-driven simulator for processing-in-DRAM with shared rows and a
//! bank-level bus.

pub mod config;
pub mod controller;
pub mod energy;
pub mod geometry;
pub mod report;
pub mod scheduler;
pub mod suite;
pub mod timing;
pub mod transfer;
pub mod workloads;

/// Absolute tolerance for comparing nanosecond quantities.
pub const TIME_EPS_NS: f64 = 1e-9;
