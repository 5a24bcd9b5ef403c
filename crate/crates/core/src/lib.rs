//! Analysis, prediction and placement tooling for DRAM/NVM heterogeneous
//! main memory.

pub mod bandwidth;
pub mod characterize;
pub mod cli;
pub mod config;
pub mod memsim;
pub mod placement;
pub mod predictor;
pub mod report;
pub mod trace_io;
