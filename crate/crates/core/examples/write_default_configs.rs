//! Regenerates the shipped JSON configs from the built-in defaults.
//!
//! `cargo run -p salvage-core --example write_default_configs -- configs`

use std::path::{Path, PathBuf};

use salvage_core::cluster::{ServerState, WorkloadProfile};
use salvage_core::defaults;

fn write<T: serde::Serialize>(dir: &Path, name: &str, value: &T) {
    let text = serde_json::to_string_pretty(value).expect("plain data") + "\n";
    std::fs::write(dir.join(name), text).expect("write config");
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir).expect("create config dir");
    let mut sim = defaults::memory_bound_scenario();
    sim.r_star = salvage_core::amat::optimal_split(
        sim.demand_mean,
        &sim.system,
        salvage_core::amat::DEFAULT_GRID_STEP,
    )
    .expect("default scenario")
    .r
    .get();
    write(&dir, "system.json", &defaults::system_config());
    write(&dir, "sim_memory_bound.json", &sim);
    write(
        &dir,
        "server_empty.json",
        &ServerState::new("server-0", defaults::system_config()),
    );
    write(
        &dir,
        "workload_memory_bound.json",
        &WorkloadProfile {
            name: "memory-bound".into(),
            demand_mean: sim.demand_mean,
            rho_rd: sim.rho_rd,
            io_rx_level: 0.1,
            io_tx_level: 0.1,
            salvaging: false,
        },
    );
    write(
        &dir,
        "workload_io_heavy.json",
        &WorkloadProfile {
            name: "io-heavy".into(),
            demand_mean: 4.0,
            rho_rd: 0.75,
            io_rx_level: 0.8,
            io_tx_level: 0.1,
            salvaging: false,
        },
    );
}
