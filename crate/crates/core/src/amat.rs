//! Analytical AMAT model and the optimal primary/salvage traffic split.
//!
//! For a demand `D` split as `R` to primary and `1 - R` to salvage memory:
//!
//! ```text
//! U_P = R*D / B_P                 U_S = (1-R)*D / B_S
//! U_ing = (1-R)*D*rho_rd / eta    U_egr = (1-R)*D*(1-rho_rd) / eta   (both / raw link bw)
//! AMAT(R) = R*L_P(U_P) + (1-R)*[L_S(U_S) + L_ing(U_ing) + L_egr(U_egr)]
//! ```
//!
//! The optimizer evaluates AMAT on a discrete grid of splits and returns the
//! minimizer, breaking ties toward the larger primary share.

use serde::{Deserialize, Serialize};

use crate::curves::{Latency, LoadLatencyCurve};
use crate::link::LinkSpec;
use crate::{Error, Gbps, Nanos, Result};

/// Grid spacing of the split optimizer.
pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// Relative AMAT difference treated as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_RHO_RD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemConfigRepr", into = "SystemConfigRepr")]
pub struct SystemConfig {
    /// Peak sustainable primary memory bandwidth.
    pub b_p: Gbps,
    /// Peak sustainable salvage memory bandwidth.
    pub b_s: Gbps,
    pub primary_curve: LoadLatencyCurve,
    pub salvage_curve: LoadLatencyCurve,
    pub link: LinkSpec,
    /// Read share of memory traffic; writes are `1 - rho_rd`.
    pub rho_rd: f64,
}

#[derive(Serialize, Deserialize)]
struct SystemConfigRepr {
    b_p: Gbps,
    b_s: Gbps,
    primary_curve: LoadLatencyCurve,
    salvage_curve: LoadLatencyCurve,
    link: LinkSpec,
    #[serde(default = "default_rho_rd")]
    rho_rd: f64,
}

fn default_rho_rd() -> f64 {
    DEFAULT_RHO_RD
}

impl TryFrom<SystemConfigRepr> for SystemConfig {
    type Error = Error;

    fn try_from(r: SystemConfigRepr) -> Result<Self> {
        let cfg = SystemConfig {
            b_p: r.b_p,
            b_s: r.b_s,
            primary_curve: r.primary_curve,
            salvage_curve: r.salvage_curve,
            link: r.link,
            rho_rd: r.rho_rd,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<SystemConfig> for SystemConfigRepr {
    fn from(c: SystemConfig) -> Self {
        SystemConfigRepr {
            b_p: c.b_p,
            b_s: c.b_s,
            primary_curve: c.primary_curve,
            salvage_curve: c.salvage_curve,
            link: c.link,
            rho_rd: c.rho_rd,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_p > 0.0 && self.b_p.is_finite()) {
            return Err(Error::invalid(
                "system config",
                format!("b_p must be > 0, got {}", self.b_p),
            ));
        }
        if !(self.b_s > 0.0 && self.b_s.is_finite()) {
            return Err(Error::invalid(
                "system config",
                format!("b_s must be > 0, got {}", self.b_s),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho_rd) {
            return Err(Error::invalid(
                "system config",
                format!("rho_rd must be in [0, 1], got {}", self.rho_rd),
            ));
        }
        self.link.validate()
    }

    /// Replaces the salvage memory with one offering `boost * b_p` bandwidth
    /// at `premium` ns over the primary memory's latency. The link keeps
    /// only its queuing behavior so the premium is the whole zero-load gap.
    pub fn with_salvage_variant(&self, premium: Nanos, boost: f64) -> Result<Self> {
        if !(boost > 0.0 && boost.is_finite()) {
            return Err(Error::domain(format!(
                "bandwidth boost must be > 0, got {boost}"
            )));
        }
        let mut cfg = self.clone();
        cfg.b_s = boost * self.b_p;
        cfg.salvage_curve = self
            .primary_curve
            .shift(premium)?
            .with_label(format!("{premium} ns @ {}% boost", boost * 100.0));
        cfg.link.ingress_curve = self.link.ingress_curve.queuing_only();
        cfg.link.egress_curve = self.link.egress_curve.queuing_only();
        cfg.link.base_overhead = 0.0;
        Ok(cfg)
    }
}

/// Fraction of traffic directed to primary memory.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TrafficSplit(f64);

impl TrafficSplit {
    pub const ALL_PRIMARY: TrafficSplit = TrafficSplit(1.0);

    pub fn new(r: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&r) {
            Ok(TrafficSplit(r))
        } else {
            Err(Error::domain(format!(
                "traffic split must be in [0, 1], got {r}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TrafficSplit {
    type Error = Error;

    fn try_from(r: f64) -> Result<Self> {
        TrafficSplit::new(r)
    }
}

impl From<TrafficSplit> for f64 {
    fn from(s: TrafficSplit) -> f64 {
        s.0
    }
}

/// Bandwidth already committed on each resource. Memory axes are in data
/// GB/s; link axes are raw wire GB/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BackgroundLoad {
    pub primary: Gbps,
    pub salvage: Gbps,
    pub link_ing: Gbps,
    pub link_egr: Gbps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmatEval {
    pub u_p: f64,
    pub u_s: f64,
    pub u_ing: f64,
    pub u_egr: f64,
    pub amat: Latency,
}

impl AmatEval {
    pub fn feasible(&self) -> bool {
        !self.amat.is_saturated()
    }

    pub fn max_utilization(&self) -> f64 {
        self.u_p.max(self.u_s).max(self.u_ing).max(self.u_egr)
    }
}

pub fn utilizations(r: TrafficSplit, d: Gbps, cfg: &SystemConfig) -> (f64, f64) {
    let r = r.get();
    (r * d / cfg.b_p, (1.0 - r) * d / cfg.b_s)
}

pub fn amat_of(r: TrafficSplit, d: Gbps, cfg: &SystemConfig) -> Result<AmatEval> {
    amat_with_background(r, d, cfg, &BackgroundLoad::default())
}

/// AMAT of the new traffic when other tenants already load each resource.
/// Utilizations are total device utilizations, background included.
pub fn amat_with_background(
    r: TrafficSplit,
    d: Gbps,
    cfg: &SystemConfig,
    bg: &BackgroundLoad,
) -> Result<AmatEval> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::domain(format!("demand must be >= 0, got {d}")));
    }
    let r = r.get();
    let salvage_demand = (1.0 - r) * d;
    let u_p = (bg.primary + r * d) / cfg.b_p;
    let u_s = (bg.salvage + salvage_demand) / cfg.b_s;
    let (ui, ue) = cfg.link.direction_utilization(salvage_demand, cfg.rho_rd);
    let u_ing = ui + bg.link_ing / cfg.link.raw_bw_per_dir;
    let u_egr = ue + bg.link_egr / cfg.link.raw_bw_per_dir;

    let primary = if r > 0.0 {
        cfg.primary_curve.latency_at(u_p)?.ns()
    } else {
        Some(0.0)
    };
    let salvage = if r < 1.0 {
        let (li, le) = cfg.link.link_latency(u_ing, u_egr)?;
        match (cfg.salvage_curve.latency_at(u_s)?.ns(), li.ns(), le.ns()) {
            (Some(s), Some(i), Some(e)) => Some(s + i + e),
            _ => None,
        }
    } else {
        Some(0.0)
    };
    let amat = match (primary, salvage) {
        (Some(p), Some(s)) => Latency::Ns(r * p + (1.0 - r) * s),
        _ => Latency::Saturated,
    };
    Ok(AmatEval {
        u_p,
        u_s,
        u_ing,
        u_egr,
        amat,
    })
}

/// Candidate splits `{step, 2*step, ..., 1.0}`; 1.0 is always included.
pub fn split_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::domain(format!(
            "grid step must be in (0, 1], got {step}"
        )));
    }
    // k / n is the closest double to each grid value when 1/step is whole
    let n = (1.0 / step).round();
    let whole = (n * step - 1.0).abs() < 1e-12;
    let mut grid: Vec<f64> = (1..)
        .map(|k| if whole { k as f64 / n } else { k as f64 * step })
        .take_while(|&r| r < 1.0 - 1e-9)
        .collect();
    grid.push(1.0);
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub r: TrafficSplit,
    /// AMAT at `r`; `None` when no candidate was feasible.
    pub amat: Option<Nanos>,
    pub capacity_exceeded: bool,
}

pub fn optimal_split(d: Gbps, cfg: &SystemConfig, grid_step: f64) -> Result<SplitDecision> {
    optimal_split_with_background(d, cfg, &BackgroundLoad::default(), grid_step)
}

pub fn optimal_split_with_background(
    d: Gbps,
    cfg: &SystemConfig,
    bg: &BackgroundLoad,
    grid_step: f64,
) -> Result<SplitDecision> {
    let mut evals = Vec::new();
    let mut fallback: Option<(f64, f64)> = None;
    for r in split_grid(grid_step)? {
        let eval = amat_with_background(TrafficSplit(r), d, cfg, bg)?;
        if let Latency::Ns(v) = eval.amat {
            evals.push((r, v));
        }
        let m = eval.max_utilization();
        if fallback.is_none_or(|(_, f)| m <= f) {
            fallback = Some((r, m));
        }
    }
    // values within rounding of the minimum tie; the largest such r wins
    let min = evals.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let best = evals
        .into_iter()
        .rev()
        .find(|&(_, v)| v <= min + TIE_TOLERANCE * min.abs());
    Ok(match best {
        Some((r, v)) => SplitDecision {
            r: TrafficSplit(r),
            amat: Some(v),
            capacity_exceeded: false,
        },
        None => SplitDecision {
            r: TrafficSplit(fallback.expect("grid is never empty").0),
            amat: None,
            capacity_exceeded: true,
        },
    })
}
