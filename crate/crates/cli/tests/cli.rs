use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

use salvage_core::amat::{amat_of, SystemConfig, TrafficSplit};
use salvage_core::curves::LoadLatencyCurve;
use salvage_core::link::{LinkSpec, MetadataModel};
use salvage_core::splitplan::SCHEMA_VERSION;
use salvage_core::utility::provisioned_utility;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn salvage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salvage"))
        .args(args)
        .env("SALVAGE_CONFIG_DIR", configs_dir())
        .output()
        .expect("spawn salvage")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json_line(o: &Output) -> Value {
    serde_json::from_str(stdout(o).trim()).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Curve set generated once from the shipped system config.
fn curves() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    let dir = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = salvage(&["gen-curves", "--out", p(&dir.path().join("curves.json"))]);
        assert!(out.status.success(), "{}", stderr(&out));
        dir
    });
    Box::leak(dir.path().join("curves.json").into_boxed_path())
}

fn flat_config(lp: f64, ls: f64, li: f64, le: f64) -> SystemConfig {
    SystemConfig {
        b_p: 38.4,
        b_s: 19.2,
        primary_curve: LoadLatencyCurve::flat(lp, 0.95).unwrap(),
        salvage_curve: LoadLatencyCurve::flat(ls, 0.95).unwrap(),
        link: LinkSpec {
            lanes: 16,
            raw_bw_per_dir: 64.0,
            flit_payload: 64,
            flit_total: 68,
            eta: Some(0.94),
            base_overhead: li + le,
            ingress_curve: LoadLatencyCurve::flat(li, 0.95).unwrap(),
            egress_curve: LoadLatencyCurve::flat(le, 0.95).unwrap(),
            meta: MetadataModel::CALIBRATED,
        },
        rho_rd: 0.75,
    }
}

fn write_config(dir: &Path, cfg: &SystemConfig) -> PathBuf {
    let path = dir.join("system.json");
    std::fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    path
}

#[test]
fn utility_rows() {
    let out = salvage(&["utility", "--n", "1", "--p", "0.3", "--x", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,p,x,utility_analytic,utility_mc"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[..4], ["1", "0.3", "1", "0.3"]);

    let out = salvage(&["utility", "--n", "16", "--p", "0.2", "--x", "4"]);
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let analytic: f64 = row[3].parse().unwrap();
    assert_eq!(analytic, provisioned_utility(16, 0.2, 4.0).unwrap());

    let out = salvage(&["utility", "--n", "1..16", "--p", "0.05,0.2,0.5", "--x", "1"]);
    assert_eq!(stdout(&out).lines().count(), 1 + 16 * 3);
}

#[test]
fn utility_is_deterministic_and_rejects_bad_ranges() {
    let a = salvage(&[
        "utility", "--n", "4,8", "--p", "0.2", "--x", "2", "--seed", "9",
    ]);
    let b = salvage(&[
        "utility", "--n", "4,8", "--p", "0.2", "--x", "2", "--seed", "9",
    ]);
    assert_eq!(a.stdout, b.stdout);
    for bad in [
        &["--p", "1.5"][..],
        &["--n", "0"],
        &["--x", "-1"],
        &["--n", "5..2"],
        &["--p", "abc"],
    ] {
        let mut args = vec!["utility"];
        args.extend_from_slice(bad);
        let out = salvage(&args);
        assert_eq!(out.status.code(), Some(1), "{bad:?}: {}", stderr(&out));
    }
    assert_eq!(salvage(&["utility", "--bogus"]).status.code(), Some(1));
}

#[test]
fn split_curve_family() {
    let out = salvage(&["split-curve"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,demand_gbps,r_star"));
    let rows: Vec<(String, f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].to_string(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
            )
        })
        .collect();
    let variants = [
        "50 ns @ 50% boost",
        "200 ns @ 50% boost",
        "50 ns @ 100% boost",
        "200 ns @ 100% boost",
    ];
    for v in variants {
        let first = rows.iter().find(|r| r.0 == v).unwrap();
        assert_eq!((first.1, first.2), (1.0, 1.0), "{v}");
    }
    assert_eq!(rows.len(), 4 * 60);
}

#[test]
fn split_curve_missing_config() {
    let out = salvage(&["split-curve", "--config", "/nonexistent/system.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/nonexistent/system.json"));
}

#[test]
fn config_dir_env_override() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &flat_config(80.0, 130.0, 60.0, 40.0));
    let out = Command::new(env!("CARGO_BIN_EXE_salvage"))
        .args(["amat", "--r", "1", "--demand", "5"])
        .env("SALVAGE_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(json_line(&out)["amat_ns"], 80.0);
}

#[test]
fn amat_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flat_config(80.0, 130.0, 60.0, 40.0);
    let path = write_config(dir.path(), &cfg);
    let out = salvage(&["amat", "--r", "1", "--demand", "10", "--config", p(&path)]);
    let v = json_line(&out);
    assert_eq!(v["amat_ns"], 80.0);
    assert_eq!(v["feasible"], true);

    let out = salvage(&["amat", "--r", "0.6", "--demand", "10", "--config", p(&path)]);
    let v = json_line(&out);
    let direct = amat_of(TrafficSplit::new(0.6).unwrap(), 10.0, &cfg).unwrap();
    assert_eq!(v["amat_ns"].as_f64().unwrap(), direct.amat.ns().unwrap());
    assert_eq!(v["u_ing"].as_f64().unwrap(), direct.u_ing);
    assert!((v["amat_ns"].as_f64().unwrap() - 140.0).abs() < 1e-12);

    let out = salvage(&["amat", "--r", "1", "--demand", "500"]);
    assert!(out.status.success());
    let v = json_line(&out);
    assert_eq!(v["feasible"], false);
    assert!(v["amat_ns"].is_null());

    assert_eq!(
        salvage(&["amat", "--r", "1.5", "--demand", "5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        salvage(&["amat", "--r", "0.5", "--demand", "-1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn plan_lookups() {
    let c = p(curves());
    let out = salvage(&["plan", "--curves", c, "--demand", "15"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json_line(&out);
    assert_eq!(v["r_star"], 1.0);
    assert_eq!(v["capacity_exceeded"], false);
    assert_eq!(v["curve_key"]["b_p"], 38.4);

    let again = salvage(&["plan", "--curves", c, "--demand", "15"]);
    assert_eq!(out.stdout, again.stdout);

    let wl = configs_dir().join("workload_memory_bound.json");
    let v = json_line(&salvage(&["plan", "--curves", c, "--workload", p(&wl)]));
    assert_eq!(v["r_star"], 0.7);

    let out = salvage(&["plan", "--curves", c, "--demand", "200"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json_line(&out)["capacity_exceeded"], true);
}

#[test]
fn plan_rejects_damaged_or_foreign_curve_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(curves()).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["schema_version"] = Value::from(SCHEMA_VERSION + 1);
    let bumped = dir.path().join("bumped.json");
    std::fs::write(&bumped, v.to_string()).unwrap();
    let out = salvage(&["plan", "--curves", p(&bumped), "--demand", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains(&format!("expected {SCHEMA_VERSION}")),
        "{}",
        stderr(&out)
    );

    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    assert_eq!(
        salvage(&["plan", "--curves", p(&cut), "--demand", "5"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn deploy_and_complete_update_server_state() {
    let dir = tempfile::tempdir().unwrap();
    let server = dir.path().join("server.json");
    let events = dir.path().join("events.jsonl");
    std::fs::copy(configs_dir().join("server_empty.json"), &server).unwrap();
    let original = std::fs::read(&server).unwrap();
    let c = p(curves());
    let mem = configs_dir().join("workload_memory_bound.json");
    let io = configs_dir().join("workload_io_heavy.json");

    let out = salvage(&[
        "deploy",
        "--curves",
        c,
        "--server",
        p(&server),
        "--workload",
        p(&mem),
        "--events",
        p(&events),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ev = json_line(&out);
    assert_eq!(ev["event"], "deploy");
    assert_eq!(ev["r_star"], 0.7);

    let out = salvage(&[
        "deploy",
        "--curves",
        c,
        "--server",
        p(&server),
        "--workload",
        p(&io),
        "--events",
        p(&events),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(json_line(&out)["reason"]
        .as_str()
        .unwrap()
        .contains("rule 3"));

    let out = salvage(&[
        "complete",
        "--server",
        p(&server),
        "--workload",
        "memory-bound",
        "--events",
        p(&events),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = std::fs::read_to_string(&events).unwrap();
    assert_eq!(log.lines().count(), 3);

    // full round trip restores the original state file byte for byte
    assert_eq!(std::fs::read(&server).unwrap(), original);
    let out = salvage(&[
        "complete",
        "--server",
        p(&server),
        "--workload",
        "memory-bound",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn simulate(dir: &Path, extra: &[&str]) -> (Value, Value) {
    let mut args = vec!["simulate", "--out-dir", p(dir)];
    args.extend_from_slice(extra);
    let out = salvage(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    (summary, manifest)
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ma) = simulate(a.path(), &["--seed", "42"]);
    let (_, mb) = simulate(b.path(), &["--seed", "42"]);
    assert_eq!(
        std::fs::read(a.path().join("metrics.csv")).unwrap(),
        std::fs::read(b.path().join("metrics.csv")).unwrap()
    );
    assert_eq!(ma["config_digest"], mb["config_digest"]);
    assert_eq!(ma["seed"], 42);
    assert_eq!(ma["command"], "simulate");
    assert_eq!(ma["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(ma["config_digest"].as_str().unwrap().len(), 64);

    let c = tempfile::tempdir().unwrap();
    let (_, mc) = simulate(c.path(), &["--seed", "43"]);
    assert_ne!(ma["config_digest"], mc["config_digest"]);

    let header = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert!(header.starts_with("interval,amat_ns,service_ns,queuing_ns,cxl_ns,"));
}

#[test]
fn simulate_high_io_spills_into_primary() {
    let low = tempfile::tempdir().unwrap();
    let high = tempfile::tempdir().unwrap();
    let (sl, _) = simulate(low.path(), &["--io", "low_low"]);
    let (sh, _) = simulate(high.path(), &["--io", "high_high"]);
    assert!(sh["mean_u_p"].as_f64().unwrap() > sl["mean_u_p"].as_f64().unwrap());
    assert!(sh["mean_amat_ns"].as_f64().unwrap() > sl["mean_amat_ns"].as_f64().unwrap());

    let out = salvage(&[
        "simulate",
        "--out-dir",
        p(low.path()),
        "--io",
        "low_extreme",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn planned_split_is_realized_by_placement() {
    let v = json_line(&salvage(&[
        "plan",
        "--curves",
        p(curves()),
        "--workload",
        p(&configs_dir().join("workload_memory_bound.json")),
    ]));
    let r = v["r_star"].as_f64().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (s, _) = simulate(dir.path(), &["--r-star", &r.to_string()]);
    // 3 sigma of a binomial share over 100k pages
    let tol = 3.0 * (r * (1.0 - r) / 100_000.0).sqrt();
    assert!((s["achieved_split"].as_f64().unwrap() - r).abs() <= tol);
}

#[test]
fn simulate_schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("sim_memory_bound.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["demand_cv"] = Value::from(-0.5);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = salvage(&["simulate", "--config", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("demand_cv"), "{}", stderr(&out));

    v["demand_cv"] = Value::from(0.1);
    v["bogus_field"] = Value::from(1);
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = salvage(&["simulate", "--config", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus_field"), "{}", stderr(&out));
}

#[test]
fn shipped_configs_match_defaults() {
    let sys: SystemConfig =
        serde_json::from_str(&std::fs::read_to_string(configs_dir().join("system.json")).unwrap())
            .unwrap();
    assert_eq!(sys, salvage_core::defaults::system_config());
}
