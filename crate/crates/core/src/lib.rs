//! Planning and simulation toolkit for salvaging idle I/O link bandwidth as
//! additional memory bandwidth.
//!
//! The crate is organized bottom-up:
//!
//! - [`curves`]: load-latency curves for memories and link directions.
//! - [`link`]: the multiplexed serial link (flit efficiency, metadata
//!   overheads, per-direction utilization and latency).
//! - [`amat`]: the analytical AMAT model and the optimal primary/salvage split.
//! - [`splitplan`]: offline split-curve sets and deployment-time probing.
//! - [`utility`]: salvage-memory utility for single servers and pods.
//! - [`sim`]: interval-based system simulator with I/O interference.
//! - [`cluster`]: cluster-manager admission, commitments and colocation rules.

pub mod amat;
pub mod cluster;
pub mod curves;
pub mod defaults;
mod error;
pub mod link;
pub mod sim;
pub mod splitplan;
pub mod utility;

pub use error::{Error, Result};

/// Bandwidth in GB/s. One GB/s moves exactly one byte per nanosecond.
pub type Gbps = f64;

/// Latency in nanoseconds.
pub type Nanos = f64;
