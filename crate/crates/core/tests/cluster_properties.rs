use std::sync::OnceLock;

use proptest::prelude::*;

use salvage_core::cluster::{Decision, ServerState, WorkloadProfile};
use salvage_core::defaults;
use salvage_core::splitplan::{generate_set, GridSpec, SplitCurveSet, DEFAULT_GRID_CAP};

const THRESHOLD: f64 = 0.5;

fn set() -> &'static SplitCurveSet {
    static SET: OnceLock<SplitCurveSet> = OnceLock::new();
    SET.get_or_init(|| {
        let cfg = defaults::system_config();
        generate_set(&cfg, &GridSpec::default_for(&cfg), DEFAULT_GRID_CAP).unwrap()
    })
}

#[derive(Debug, Clone)]
enum Op {
    Deploy {
        demand: f64,
        rho: f64,
        rx: f64,
        tx: f64,
    },
    Complete(usize),
}

fn op() -> impl Strategy<Value = Op> {
    let level = prop::sample::select(vec![0.0, 0.1, 0.5, 0.8]);
    prop_oneof![
        3 => (0.0f64..35.0, 0.5f64..1.0, level.clone(), level)
            .prop_map(|(demand, rho, rx, tx)| Op::Deploy { demand, rho, rx, tx }),
        1 => (0usize..16).prop_map(Op::Complete),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_keep_cluster_invariants(ops in prop::collection::vec(op(), 1..24)) {
        let mut server = ServerState::new("s", defaults::system_config());
        let nominal = server.nominal().axes();
        for (i, op) in ops.into_iter().enumerate() {
            match op {
                Op::Deploy { demand, rho, rx, tx } => {
                    let wl = WorkloadProfile {
                        name: format!("w{i}"),
                        demand_mean: demand,
                        rho_rd: rho,
                        io_rx_level: rx,
                        io_tx_level: tx,
                        salvaging: false,
                    };
                    let before = server.clone();
                    let (decision, event) = server.deploy(&wl, set(), THRESHOLD).unwrap();
                    match decision {
                        Decision::Accepted { r_star, .. } => {
                            prop_assert_eq!(event.event.as_str(), "deploy");
                            prop_assert_eq!(server.deployed.last().unwrap().workload.salvaging, r_star < 1.0);
                        }
                        Decision::Rejected { .. } => prop_assert_eq!(&server, &before),
                    }
                }
                Op::Complete(k) => {
                    if server.deployed.is_empty() {
                        continue;
                    }
                    let name = server.deployed[k % server.deployed.len()].workload.name.clone();
                    server.complete(&name).unwrap();
                }
            }
            // capacity safety
            for (c, n) in server.committed().axes().iter().zip(nominal) {
                prop_assert!(*c <= n);
            }
            // no I/O-intensive workload shares the server with a salvager
            let heavy = server.deployed.iter().any(|d| d.workload.io_heavy(THRESHOLD));
            let salvaging = server.deployed.iter().any(|d| d.workload.salvaging);
            prop_assert!(!(heavy && salvaging));
            prop_assert_eq!(server.committed(), server.recompute_committed());
        }
    }

    #[test]
    fn deploy_complete_round_trip_is_exact(
        prior in prop::collection::vec((0.0f64..10.0, 0.5f64..1.0), 0..4),
        demand in 0.0f64..30.0,
        rho in 0.5f64..1.0,
    ) {
        let mut server = ServerState::new("s", defaults::system_config());
        for (i, (d, r)) in prior.into_iter().enumerate() {
            let wl = WorkloadProfile {
                name: format!("p{i}"),
                demand_mean: d,
                rho_rd: r,
                io_rx_level: 0.1,
                io_tx_level: 0.1,
                salvaging: false,
            };
            server.deploy(&wl, set(), THRESHOLD).unwrap();
        }
        let residual = server.residual();
        let wl = WorkloadProfile {
            name: "new".into(),
            demand_mean: demand,
            rho_rd: rho,
            io_rx_level: 0.0,
            io_tx_level: 0.1,
            salvaging: false,
        };
        if let (Decision::Accepted { .. }, _) = server.deploy(&wl, set(), THRESHOLD).unwrap() {
            server.complete("new").unwrap();
        }
        prop_assert_eq!(server.residual(), residual);
    }
}
