use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use salvage_core::amat::{amat_of, optimal_split, SystemConfig, TrafficSplit, DEFAULT_GRID_STEP};
use salvage_core::cluster::{Decision, Event, ServerState, WorkloadProfile};
use salvage_core::sim::{self, IoScenario, SimConfig};
use salvage_core::splitplan::{generate_set, GridSpec, ResourceAvailability, SplitCurveSet};
use salvage_core::utility::{provisioned_utility, provisioned_utility_mc};

use crate::failure::{config, refused, usage, CmdResult, Failure};
use crate::{
    AmatArgs, CompleteArgs, DeployArgs, GenCurvesArgs, PlanArgs, SimulateArgs, SplitCurveArgs,
    UtilityArgs, CONFIG_DIR_ENV, DEFAULT_CONFIG_DIR,
};

pub const UTILITY_CSV_HEADER: &str = "n,p,x,utility_analytic,utility_mc";
pub const SPLIT_CURVE_CSV_HEADER: &str = "variant,demand_gbps,r_star";

/// Reproducibility record written next to simulation outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the effective config serialized as JSON.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct PlanOutput {
    r_star: f64,
    capacity_exceeded: bool,
    curve_key: ResourceAvailability,
}

/// `amat_ns` is null when some component is saturated.
#[derive(Serialize)]
struct AmatOutput {
    amat_ns: Option<f64>,
    u_p: f64,
    u_s: f64,
    u_ing: f64,
    u_egr: f64,
    feasible: bool,
}

fn to_line<T: Serialize>(value: &T) -> CmdResult<String> {
    serde_json::to_string(value).map_err(config)
}

fn config_dir() -> PathBuf {
    std::env::var_os(CONFIG_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG_DIR))
}

fn config_path(explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| config_dir().join(default_name))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid {}", path.display()))
        .map_err(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(config)?;
    fs::write(path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(config)
}

fn load_system(path: &Option<PathBuf>) -> CmdResult<SystemConfig> {
    read_json(&config_path(path, "system.json"))
}

fn load_curves(path: &Path) -> CmdResult<SplitCurveSet> {
    SplitCurveSet::load(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.error = f
            .error
            .context(format!("cannot load curve set {}", path.display()));
        f
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(config),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> CmdResult<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| usage(format!("--{flag}: cannot parse `{s}`")))
        })
        .collect()
}

/// `a..b` (inclusive) or a comma list.
fn parse_sizes(text: &str) -> CmdResult<Vec<u32>> {
    match text.split_once("..") {
        Some((a, b)) => {
            let lo: u32 = a
                .trim()
                .parse()
                .map_err(|_| usage(format!("--n: bad range start `{a}`")))?;
            let hi: u32 = b
                .trim()
                .parse()
                .map_err(|_| usage(format!("--n: bad range end `{b}`")))?;
            if lo > hi {
                return Err(usage(format!("--n: empty range {text}")));
            }
            Ok((lo..=hi).collect())
        }
        None => parse_list("n", text),
    }
}

pub fn utility(a: &UtilityArgs) -> CmdResult {
    let ns = parse_sizes(&a.n)?;
    let ps: Vec<f64> = parse_list("p", &a.p)?;
    let xs: Vec<f64> = parse_list("x", &a.x)?;
    if a.samples == 0 {
        return Err(usage("--samples must be >= 1"));
    }
    let mut csv = format!("{UTILITY_CSV_HEADER}\n");
    let mut row = 0u64;
    for &p in &ps {
        for &x in &xs {
            for &n in &ns {
                let exact = provisioned_utility(n, p, x)?;
                let mc = provisioned_utility_mc(n, p, x, a.samples, a.seed.wrapping_add(row))?;
                csv.push_str(&format!("{n},{p},{x},{exact},{mc}\n"));
                row += 1;
            }
        }
    }
    emit(&a.out, &csv)
}

fn parse_variant(text: &str) -> CmdResult<(f64, f64)> {
    let bad = || usage(format!("--variant `{text}` is not PREMIUM_NS@BOOST"));
    let (premium, boost) = text.split_once('@').ok_or_else(bad)?;
    Ok((
        premium.trim().parse().map_err(|_| bad())?,
        boost.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn split_curve(a: &SplitCurveArgs) -> CmdResult {
    if !(a.demand_step > 0.0 && a.demand_min >= 0.0 && a.demand_max >= a.demand_min) {
        return Err(usage("demand sweep needs 0 <= min <= max and step > 0"));
    }
    let variants = a
        .variants
        .iter()
        .map(|v| parse_variant(v))
        .collect::<CmdResult<Vec<_>>>()?;
    let base = load_system(&a.config)?;
    let steps = ((a.demand_max - a.demand_min) / a.demand_step + 1e-9).floor() as usize;
    let mut csv = format!("{SPLIT_CURVE_CSV_HEADER}\n");
    for (premium, boost) in variants {
        let cfg = base.with_salvage_variant(premium, boost)?;
        let label = format!("{premium} ns @ {}% boost", boost * 100.0);
        for i in 0..=steps {
            let d = a.demand_min + i as f64 * a.demand_step;
            let s = optimal_split(d, &cfg, DEFAULT_GRID_STEP)?;
            csv.push_str(&format!("{label},{d},{}\n", s.r.get()));
        }
    }
    emit(&a.out, &csv)
}

pub fn gen_curves(a: &GenCurvesArgs) -> CmdResult {
    let cfg = load_system(&a.config)?;
    let set = generate_set(&cfg, &GridSpec::default_for(&cfg), a.grid_cap)?;
    set.save(&a.out)?;
    log::info!("wrote {} curves to {}", set.len(), a.out.display());
    Ok(())
}

fn check_matches(server: &ServerState, set: &SplitCurveSet) -> CmdResult {
    if server.nominal() != set.grid_spec().nominal {
        return Err(config(anyhow::anyhow!(
            "server `{}` nominal capacities differ from the curve set's; regenerate curves for this config",
            server.name
        )));
    }
    Ok(())
}

pub fn plan(a: &PlanArgs) -> CmdResult {
    let set = load_curves(&a.curves)?;
    let residual = match &a.server {
        Some(path) => {
            let server: ServerState = read_json(path)?;
            check_matches(&server, &set)?;
            server.residual()
        }
        None => set.grid_spec().nominal,
    };
    let demand = match (&a.workload, a.demand) {
        (Some(path), _) => {
            let wl: WorkloadProfile = read_json(path)?;
            wl.validate()?;
            wl.demand_mean
        }
        (None, Some(d)) => d,
        (None, None) => return Err(usage("one of --workload or --demand is required")),
    };
    if !(demand >= 0.0 && demand.is_finite()) {
        return Err(usage(format!("demand must be >= 0, got {demand}")));
    }
    let (key, curve) = set.select_curve(&residual)?;
    let probe = curve.probe(demand);
    println!(
        "{}",
        to_line(&PlanOutput {
            r_star: probe.r_star,
            capacity_exceeded: probe.capacity_exceeded,
            curve_key: key,
        })?
    );
    if probe.capacity_exceeded {
        return Err(refused(format!(
            "demand {demand} GB/s exceeds the available capacity"
        )));
    }
    Ok(())
}

fn log_events(events: &[Event], path: &Option<PathBuf>) -> CmdResult {
    let lines: String = events.iter().map(|e| e.to_json_line() + "\n").collect();
    print!("{lines}");
    if let Some(path) = path {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("cannot open {}", path.display()))
            .map_err(config)?;
        f.write_all(lines.as_bytes())?;
    }
    Ok(())
}

fn load_server(path: &Path) -> CmdResult<ServerState> {
    let server: ServerState = read_json(path)?;
    server.validate().map_err(|e| {
        config(anyhow::Error::from(e).context(format!("invalid {}", path.display())))
    })?;
    Ok(server)
}

pub fn deploy(a: &DeployArgs) -> CmdResult {
    let set = load_curves(&a.curves)?;
    let mut server = load_server(&a.server)?;
    check_matches(&server, &set)?;
    let wl: WorkloadProfile = read_json(&a.workload)?;
    let (decision, event) = server.deploy(&wl, &set, a.io_heavy_threshold)?;
    log_events(&[event], &a.events)?;
    match decision {
        Decision::Accepted { .. } => write_json(&a.server, &server),
        Decision::Rejected { reason } => Err(refused(reason)),
    }
}

pub fn complete(a: &CompleteArgs) -> CmdResult {
    let mut server = load_server(&a.server)?;
    let events = server
        .complete(&a.workload)
        .map_err(|e| usage(e.to_string()))?;
    log_events(&events, &a.events)?;
    write_json(&a.server, &server)
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let mut cfg: SimConfig = read_json(&config_path(&a.config, "sim_memory_bound.json"))?;
    if let Some(io) = &a.io {
        let scenario: IoScenario = io.parse().map_err(|e| usage(format!("--io: {e}")))?;
        cfg = cfg.with_io_scenario(scenario);
    }
    if let Some(r) = a.r_star {
        TrafficSplit::new(r).map_err(|e| usage(format!("--r-star: {e}")))?;
        cfg.r_star = r;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(cv) = a.demand_cv {
        cfg.demand_cv = cv;
    }
    cfg.validate()?;
    let run = sim::run(&cfg)?;

    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create {}", a.out_dir.display()))
        .map_err(config)?;
    let metrics = a.out_dir.join("metrics.csv");
    let summary = a.out_dir.join("summary.json");
    let manifest_path = a.out_dir.join("manifest.json");
    let file = fs::File::create(&metrics)
        .with_context(|| format!("cannot write {}", metrics.display()))
        .map_err(config)?;
    sim::write_metrics_csv(&run.records, std::io::BufWriter::new(file))?;
    write_json(&summary, &run.summary)?;

    let canonical = serde_json::to_vec(&cfg).map_err(config)?;
    let manifest = RunManifest {
        command: "simulate".into(),
        config_digest: hex::encode(Sha256::digest(&canonical)),
        seed: cfg.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        outputs: vec![metrics, summary, manifest_path.clone()],
    };
    write_json(&manifest_path, &manifest)?;
    println!("{}", serde_json::to_string(&run.summary).map_err(config)?);
    Ok(())
}

pub fn amat(a: &AmatArgs) -> CmdResult {
    let r = TrafficSplit::new(a.r).map_err(|e| usage(format!("--r: {e}")))?;
    if !(a.demand >= 0.0 && a.demand.is_finite()) {
        return Err(usage(format!("--demand must be >= 0, got {}", a.demand)));
    }
    let cfg = load_system(&a.config)?;
    let e = amat_of(r, a.demand, &cfg)?;
    println!(
        "{}",
        to_line(&AmatOutput {
            amat_ns: e.amat.ns(),
            u_p: e.u_p,
            u_s: e.u_s,
            u_ing: e.u_ing,
            u_egr: e.u_egr,
            feasible: e.feasible(),
        })?
    );
    Ok(())
}
