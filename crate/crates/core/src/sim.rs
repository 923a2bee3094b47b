//! Interval-based system simulator.
//!
//! Each interval samples the workload's memory demand and the I/O traffic on
//! both link directions, routes memory traffic by the first-touch page
//! placement, lets the link arbiter serve I/O before memory, and reads every
//! component's latency off its load-latency curve at the realized
//! utilization. Link accounting is done in whole bytes so that backlog
//! conservation holds exactly.

use std::io::Write;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::amat::SystemConfig;
use crate::curves::{Latency, LoadLatencyCurve};
use crate::link::LinkSpec;
use crate::{Error, Gbps, Nanos, Result};

/// Granularity of injected I/O traffic.
pub const PACKET_BYTES: u64 = 64;

pub const METRICS_CSV_HEADER: &str = "interval,amat_ns,service_ns,queuing_ns,cxl_ns,u_p,u_s,u_ing,u_egr,backlog_ing,backlog_egr,achieved_split";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub r_star: f64,
    pub demand_mean: Gbps,
    /// Coefficient of variation of the per-interval demand.
    pub demand_cv: f64,
    pub rho_rd: f64,
    /// Ingress (RX) I/O load as a fraction of the direction's payload capacity.
    pub io_rx_level: f64,
    pub io_tx_level: f64,
    /// Share of ingress I/O bytes that also traverse primary memory.
    pub io_mem_spill_rx: f64,
    pub io_mem_spill_tx: f64,
    pub interval_ns: Nanos,
    pub n_intervals: usize,
    pub seed: u64,
    pub page_count: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(
                    "sim config",
                    format!("`{name}` must be in [0, 1], got {v}"),
                ))
            }
        };
        let non_negative = |name: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    "sim config",
                    format!("`{name}` must be >= 0, got {v}"),
                ))
            }
        };
        self.system.validate()?;
        unit("r_star", self.r_star)?;
        unit("rho_rd", self.rho_rd)?;
        unit("io_rx_level", self.io_rx_level)?;
        unit("io_tx_level", self.io_tx_level)?;
        non_negative("demand_mean", self.demand_mean)?;
        non_negative("demand_cv", self.demand_cv)?;
        non_negative("io_mem_spill_rx", self.io_mem_spill_rx)?;
        non_negative("io_mem_spill_tx", self.io_mem_spill_tx)?;
        if !(self.interval_ns > 0.0 && self.interval_ns.is_finite()) {
            return Err(Error::invalid(
                "sim config",
                format!("`interval_ns` must be > 0, got {}", self.interval_ns),
            ));
        }
        if self.n_intervals == 0 {
            return Err(Error::invalid("sim config", "`n_intervals` must be >= 1"));
        }
        if self.page_count == 0 {
            return Err(Error::invalid("sim config", "`page_count` must be >= 1"));
        }
        Ok(())
    }

    /// Applies an `rx_tx` I/O scenario such as `low_high`.
    pub fn with_io_scenario(mut self, scenario: IoScenario) -> Self {
        self.io_rx_level = scenario.rx.fraction();
        self.io_tx_level = scenario.tx.fraction();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoLevel {
    Low,
    Med,
    High,
}

impl IoLevel {
    pub fn fraction(self) -> f64 {
        match self {
            IoLevel::Low => 0.10,
            IoLevel::Med => 0.50,
            IoLevel::High => 0.80,
        }
    }
}

impl std::str::FromStr for IoLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(IoLevel::Low),
            "med" => Ok(IoLevel::Med),
            "high" => Ok(IoLevel::High),
            other => Err(Error::domain(format!(
                "unknown I/O level `{other}` (low|med|high)"
            ))),
        }
    }
}

/// RX and TX activity, written `rx_tx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IoScenario {
    pub rx: IoLevel,
    pub tx: IoLevel,
}

impl std::str::FromStr for IoScenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (rx, tx) = s
            .split_once('_')
            .ok_or_else(|| Error::domain(format!("I/O scenario `{s}` is not of the form rx_tx")))?;
        Ok(IoScenario {
            rx: rx.parse()?,
            tx: tx.parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Primary,
    Salvage,
}

/// Picks the tier of a newly touched page: primary with probability `r_star`.
pub fn first_touch_place<R: Rng + ?Sized>(r_star: f64, rng: &mut R) -> Tier {
    if rng.random_bool(r_star.clamp(0.0, 1.0)) {
        Tier::Primary
    } else {
        Tier::Salvage
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementState {
    pub primary_pages: usize,
    pub salvage_pages: usize,
}

impl PlacementState {
    pub fn place<R: Rng + ?Sized>(&mut self, pages: usize, r_star: f64, rng: &mut R) {
        for _ in 0..pages {
            match first_touch_place(r_star, rng) {
                Tier::Primary => self.primary_pages += 1,
                Tier::Salvage => self.salvage_pages += 1,
            }
        }
    }

    pub fn total(&self) -> usize {
        self.primary_pages + self.salvage_pages
    }

    /// Share of pages, and hence of uniformly spread traffic, on primary.
    pub fn primary_fraction(&self) -> f64 {
        match self.total() {
            0 => 1.0,
            n => self.primary_pages as f64 / n as f64,
        }
    }
}

/// Poisson-distributed I/O bytes in one interval, in whole packets, with
/// mean `level * peak * interval_ns`.
pub fn io_sample<R: Rng + ?Sized>(level: f64, peak: Gbps, interval_ns: Nanos, rng: &mut R) -> u64 {
    let mean_packets = level * peak * interval_ns / PACKET_BYTES as f64;
    if mean_packets <= 0.0 {
        return 0;
    }
    let packets: f64 = Poisson::new(mean_packets)
        .expect("positive finite mean")
        .sample(rng);
    packets as u64 * PACKET_BYTES
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoTraffic {
    pub rx_bytes: u64,
    pub tx_bytes: u64,
}

/// One link direction after arbitration, in bytes per interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DirectionGrant {
    pub io_granted: u64,
    pub mem_granted: u64,
    pub mem_backlog: u64,
    /// I/O alone exceeded the direction's capacity.
    pub io_overflow: bool,
}

/// I/O is served first; memory takes what is left.
pub fn arbitrate_direction(capacity: u64, io: u64, mem: u64) -> DirectionGrant {
    let io_granted = io.min(capacity);
    let residual = capacity - io_granted;
    let mem_granted = mem.min(residual);
    DirectionGrant {
        io_granted,
        mem_granted,
        mem_backlog: mem - mem_granted,
        io_overflow: io > capacity,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Arbitration {
    pub ingress: DirectionGrant,
    pub egress: DirectionGrant,
}

/// Arbitrates one interval of traffic on both link directions.
pub fn arbitrate(
    link: &LinkSpec,
    io: &IoTraffic,
    mem_ing_bytes: u64,
    mem_egr_bytes: u64,
    interval_ns: Nanos,
) -> Arbitration {
    let capacity = direction_capacity_bytes(link, interval_ns);
    let ingress = arbitrate_direction(capacity, io.rx_bytes, mem_ing_bytes);
    let egress = arbitrate_direction(capacity, io.tx_bytes, mem_egr_bytes);
    if ingress.io_overflow || egress.io_overflow {
        warn!(
            "I/O exceeds link capacity ({capacity} B/interval): rx={} tx={}; memory starved",
            io.rx_bytes, io.tx_bytes
        );
    }
    Arbitration { ingress, egress }
}

/// Payload bytes one direction carries per interval.
pub fn direction_capacity_bytes(link: &LinkSpec, interval_ns: Nanos) -> u64 {
    (link.payload_capacity() * interval_ns).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub amat: Nanos,
    /// Unloaded device latency.
    pub service_time: Nanos,
    /// Load-dependent delay at the memories.
    pub queuing_delay: Nanos,
    /// Time spent on the link, including its zero-load premium.
    pub cxl_interface_delay: Nanos,
    pub u_p: f64,
    pub u_s: f64,
    pub u_ing: f64,
    pub u_egr: f64,
    /// Memory bytes still waiting for the link after this interval.
    pub mem_backlog_ing: u64,
    pub mem_backlog_egr: u64,
    pub achieved_split: f64,
    /// Some component ran past its curve and was read at the last knot.
    pub saturated: bool,
}

/// Mutable state carried between intervals.
#[derive(Debug, Clone)]
pub struct SimState {
    pub placement: PlacementState,
    pub backlog_ing: u64,
    pub backlog_egr: u64,
    pub totals: LinkTotals,
    rng: ChaCha8Rng,
}

/// Cumulative link accounting for memory traffic, in bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTotals {
    pub mem_offered_ing: u64,
    pub mem_offered_egr: u64,
    pub mem_granted_ing: u64,
    pub mem_granted_egr: u64,
    pub io_overflow_intervals: u64,
}

impl SimState {
    /// Seeds the generator and places all pages by first touch.
    pub fn new(cfg: &SimConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut placement = PlacementState::default();
        placement.place(cfg.page_count, cfg.r_star, &mut rng);
        SimState {
            placement,
            backlog_ing: 0,
            backlog_egr: 0,
            totals: LinkTotals::default(),
            rng,
        }
    }
}

/// Reads `curve` at `u`, clamping loads past the last knot to it.
fn clamped(curve: &LoadLatencyCurve, u: f64) -> Result<(Nanos, bool)> {
    Ok(match curve.latency_at(u)? {
        Latency::Ns(v) => (v, false),
        Latency::Saturated => (
            curve
                .latency_at(curve.max_utilization())?
                .ns()
                .expect("last knot is in range"),
            true,
        ),
    })
}

pub fn step(state: &mut SimState, cfg: &SimConfig) -> Result<IntervalRecord> {
    let sys = &cfg.system;
    let link = &sys.link;
    let t = cfg.interval_ns;
    let capacity = link.payload_capacity();

    let demand = if cfg.demand_cv > 0.0 {
        let noise: f64 = Normal::new(0.0, cfg.demand_cv)
            .expect("validated cv")
            .sample(&mut state.rng);
        cfg.demand_mean * (1.0 + noise).max(0.0)
    } else {
        cfg.demand_mean
    };

    let split = state.placement.primary_fraction();
    let salvage_rate = (1.0 - split) * demand;
    let io = IoTraffic {
        rx_bytes: io_sample(cfg.io_rx_level, capacity, t, &mut state.rng),
        tx_bytes: io_sample(cfg.io_tx_level, capacity, t, &mut state.rng),
    };
    let spill =
        (cfg.io_mem_spill_rx * io.rx_bytes as f64 + cfg.io_mem_spill_tx * io.tx_bytes as f64) / t;
    let primary_rate = split * demand + spill;

    let new_ing = (salvage_rate * cfg.rho_rd * t).round() as u64;
    let new_egr = (salvage_rate * (1.0 - cfg.rho_rd) * t).round() as u64;
    state.totals.mem_offered_ing += new_ing;
    state.totals.mem_offered_egr += new_egr;

    let arb = arbitrate(
        link,
        &io,
        new_ing + state.backlog_ing,
        new_egr + state.backlog_egr,
        t,
    );
    state.backlog_ing = arb.ingress.mem_backlog;
    state.backlog_egr = arb.egress.mem_backlog;
    state.totals.mem_granted_ing += arb.ingress.mem_granted;
    state.totals.mem_granted_egr += arb.egress.mem_granted;
    if arb.ingress.io_overflow || arb.egress.io_overflow {
        state.totals.io_overflow_intervals += 1;
    }

    let u_p = primary_rate / sys.b_p;
    let u_s = (arb.ingress.mem_granted + arb.egress.mem_granted) as f64 / t / sys.b_s;
    let u_ing = (arb.ingress.io_granted + arb.ingress.mem_granted) as f64 / t / capacity;
    let u_egr = (arb.egress.io_granted + arb.egress.mem_granted) as f64 / t / capacity;

    let (lp, sat_p) = clamped(&sys.primary_curve, u_p)?;
    let (ls, sat_s) = clamped(&sys.salvage_curve, u_s)?;
    let (li, sat_i) = clamped(&link.ingress_curve, u_ing)?;
    let (le, sat_e) = clamped(&link.egress_curve, u_egr)?;

    let lp0 = sys.primary_curve.zero_load();
    let ls0 = sys.salvage_curve.zero_load();
    let service_time = split * lp0 + (1.0 - split) * ls0;
    let queuing_delay = split * (lp - lp0) + (1.0 - split) * (ls - ls0);
    let cxl_interface_delay = (1.0 - split) * (li + le);

    Ok(IntervalRecord {
        amat: service_time + queuing_delay + cxl_interface_delay,
        service_time,
        queuing_delay,
        cxl_interface_delay,
        u_p,
        u_s,
        u_ing,
        u_egr,
        mem_backlog_ing: state.backlog_ing,
        mem_backlog_egr: state.backlog_egr,
        achieved_split: split,
        saturated: sat_p || (split < 1.0 && (sat_s || sat_i || sat_e)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub intervals: usize,
    pub mean_amat_ns: Nanos,
    pub mean_service_ns: Nanos,
    pub mean_queuing_ns: Nanos,
    pub mean_cxl_ns: Nanos,
    pub service_share: f64,
    pub queuing_share: f64,
    pub cxl_share: f64,
    pub p95_amat_ns: Nanos,
    pub std_amat_ns: Nanos,
    pub achieved_split: f64,
    pub mean_u_p: f64,
    pub mean_u_s: f64,
    pub mean_u_ing: f64,
    pub mean_u_egr: f64,
    pub saturated_intervals: usize,
    pub link: LinkTotals,
    pub final_backlog_ing: u64,
    pub final_backlog_egr: u64,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub records: Vec<IntervalRecord>,
    pub summary: SimSummary,
}

pub fn run(cfg: &SimConfig) -> Result<SimRun> {
    cfg.validate()?;
    let mut state = SimState::new(cfg);
    let records = (0..cfg.n_intervals)
        .map(|_| step(&mut state, cfg))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records, &state);
    Ok(SimRun { records, summary })
}

fn summarize(records: &[IntervalRecord], state: &SimState) -> SimSummary {
    let n = records.len() as f64;
    let mean = |f: fn(&IntervalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let mean_amat = mean(|r| r.amat);
    let mean_service = mean(|r| r.service_time);
    let mean_queuing = mean(|r| r.queuing_delay);
    let mean_cxl = mean(|r| r.cxl_interface_delay);
    let var = records
        .iter()
        .map(|r| (r.amat - mean_amat).powi(2))
        .sum::<f64>()
        / n;

    let mut sorted: Vec<f64> = records.iter().map(|r| r.amat).collect();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * n).ceil() as usize).clamp(1, sorted.len());

    SimSummary {
        intervals: records.len(),
        mean_amat_ns: mean_amat,
        mean_service_ns: mean_service,
        mean_queuing_ns: mean_queuing,
        mean_cxl_ns: mean_cxl,
        service_share: mean_service / mean_amat,
        queuing_share: mean_queuing / mean_amat,
        cxl_share: mean_cxl / mean_amat,
        p95_amat_ns: sorted[rank - 1],
        std_amat_ns: var.sqrt(),
        achieved_split: state.placement.primary_fraction(),
        mean_u_p: mean(|r| r.u_p),
        mean_u_s: mean(|r| r.u_s),
        mean_u_ing: mean(|r| r.u_ing),
        mean_u_egr: mean(|r| r.u_egr),
        saturated_intervals: records.iter().filter(|r| r.saturated).count(),
        link: state.totals,
        final_backlog_ing: state.backlog_ing,
        final_backlog_egr: state.backlog_egr,
    }
}

pub fn write_metrics_csv<W: Write>(records: &[IntervalRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{},{}",
            r.amat,
            r.service_time,
            r.queuing_delay,
            r.cxl_interface_delay,
            r.u_p,
            r.u_s,
            r.u_ing,
            r.u_egr,
            r.mem_backlog_ing,
            r.mem_backlog_egr,
            r.achieved_split
        )?;
    }
    Ok(())
}
