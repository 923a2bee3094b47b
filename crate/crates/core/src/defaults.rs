//! Shipped default configurations.
//!
//! The memory curves are synthetic (`l0 + q*u/(1-u)`), shaped like a
//! profiled DDR5-4800 load-to-use curve: flat near 118 ns, then a steep
//! knee. They are not measured data.

use crate::amat::{SystemConfig, DEFAULT_RHO_RD};
use crate::curves::LoadLatencyCurve;
use crate::link::{LinkSpec, MetadataModel};
use crate::sim::SimConfig;
use crate::Nanos;

/// One DDR5-4800 channel.
pub const PRIMARY_BW: f64 = 38.4;
/// Salvage memory offering 50% of primary bandwidth.
pub const SALVAGE_BW: f64 = 19.2;
/// x16 link at 32 GT/s.
pub const LINK_RAW_BW: f64 = 64.0;
pub const LINK_ETA: f64 = 0.94;
/// End-to-end zero-load premium of the link path.
pub const LINK_PREMIUM: Nanos = 100.0;

pub const DRAM_L0: Nanos = 118.0;
pub const DRAM_Q: Nanos = 40.0;
pub const DRAM_U_MAX: f64 = 0.9;

pub const LINK_Q: Nanos = 20.0;
pub const LINK_U_MAX: f64 = 0.95;

/// 1000 cycles at 2.4 GHz.
pub const INTERVAL_NS: Nanos = 1000.0 / 2.4;

/// Demand of the memory-bound scenario as a fraction of primary bandwidth.
pub const MEMORY_BOUND_LOAD: f64 = 0.85;

pub fn dram_curve() -> LoadLatencyCurve {
    LoadLatencyCurve::synthetic(DRAM_L0, DRAM_Q, DRAM_U_MAX, 91)
        .expect("static curve parameters")
        .with_label("synthetic DDR5-4800 (not profiled)")
}

/// Link direction curve carrying `zero_load` ns of the premium.
pub fn link_curve(zero_load: Nanos) -> LoadLatencyCurve {
    LoadLatencyCurve::synthetic(zero_load, LINK_Q, LINK_U_MAX, 96)
        .expect("static curve parameters")
        .with_label("synthetic link direction")
}

pub fn link_spec() -> LinkSpec {
    LinkSpec {
        lanes: 16,
        raw_bw_per_dir: LINK_RAW_BW,
        flit_payload: 64,
        flit_total: 68,
        eta: Some(LINK_ETA),
        base_overhead: LINK_PREMIUM,
        ingress_curve: link_curve(LINK_PREMIUM / 2.0),
        egress_curve: link_curve(LINK_PREMIUM / 2.0),
        meta: MetadataModel::CALIBRATED,
    }
}

pub fn system_config() -> SystemConfig {
    SystemConfig {
        b_p: PRIMARY_BW,
        b_s: SALVAGE_BW,
        primary_curve: dram_curve(),
        salvage_curve: dram_curve(),
        link: link_spec(),
        rho_rd: DEFAULT_RHO_RD,
    }
}

/// Memory-bound workload with low I/O on both directions, all-primary split.
/// Callers set `r_star` from the planner.
pub fn memory_bound_scenario() -> SimConfig {
    SimConfig {
        system: system_config(),
        r_star: 1.0,
        demand_mean: MEMORY_BOUND_LOAD * PRIMARY_BW,
        demand_cv: 0.1,
        rho_rd: DEFAULT_RHO_RD,
        io_rx_level: 0.0,
        io_tx_level: 0.0,
        io_mem_spill_rx: 1.0,
        io_mem_spill_tx: 1.0,
        interval_ns: INTERVAL_NS,
        n_intervals: 20_000,
        seed: 0x5EED,
        page_count: 100_000,
    }
}
