//! Cluster-manager view of one server: bandwidth commitments of deployed
//! workloads, admission with split selection, and colocation rules.
//!
//! A workload is *salvaging* when its assigned split sends some traffic over
//! the salvage link. An I/O-intensive workload is never colocated with an
//! active salvaging one, in either deployment order, and never salvages
//! itself.

use serde::{Deserialize, Serialize};

use crate::amat::{amat_with_background, SystemConfig, TrafficSplit};
use crate::splitplan::{ResourceAvailability, SplitCurveSet};
use crate::{Error, Gbps, Result};

pub const DEFAULT_IO_HEAVY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub name: String,
    pub demand_mean: Gbps,
    #[serde(default = "default_rho")]
    pub rho_rd: f64,
    pub io_rx_level: f64,
    pub io_tx_level: f64,
    #[serde(default)]
    pub salvaging: bool,
}

fn default_rho() -> f64 {
    crate::amat::DEFAULT_RHO_RD
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho_rd", self.rho_rd),
            ("io_rx_level", self.io_rx_level),
            ("io_tx_level", self.io_tx_level),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    "workload",
                    format!("`{name}` must be in [0, 1], got {v}"),
                ));
            }
        }
        if !(self.demand_mean >= 0.0 && self.demand_mean.is_finite()) {
            return Err(Error::invalid(
                "workload",
                format!("`demand_mean` must be >= 0, got {}", self.demand_mean),
            ));
        }
        Ok(())
    }

    pub fn io_heavy(&self, threshold: f64) -> bool {
        self.io_rx_level.max(self.io_tx_level) >= threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub workload: WorkloadProfile,
    pub r_star: f64,
    pub commitment: ResourceAvailability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub name: String,
    pub config: SystemConfig,
    #[serde(default)]
    pub deployed: Vec<Deployment>,
    #[serde(default = "zero_axes")]
    committed: ResourceAvailability,
}

fn zero_axes() -> ResourceAvailability {
    ResourceAvailability {
        b_p: 0.0,
        b_s: 0.0,
        link_ing: 0.0,
        link_egr: 0.0,
    }
}

fn add(a: ResourceAvailability, b: ResourceAvailability) -> ResourceAvailability {
    ResourceAvailability {
        b_p: a.b_p + b.b_p,
        b_s: a.b_s + b.b_s,
        link_ing: a.link_ing + b.link_ing,
        link_egr: a.link_egr + b.link_egr,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted {
        r_star: f64,
        /// Grid point of the split curve that was probed.
        curve_key: ResourceAvailability,
    },
    Rejected {
        reason: String,
    },
}

/// One JSON line of the deployment log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event: String,
    pub workload: String,
    pub server: String,
    pub r_star: Option<f64>,
    pub reason: Option<String>,
}

impl Event {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event is plain data")
    }
}

impl ServerState {
    pub fn new(name: impl Into<String>, config: SystemConfig) -> Self {
        ServerState {
            name: name.into(),
            config,
            deployed: Vec::new(),
            committed: zero_axes(),
        }
    }

    /// Checks the deployment list against the stored commitments.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for d in &self.deployed {
            d.workload.validate()?;
        }
        if self.recompute_committed() != self.committed {
            return Err(Error::invalid(
                "server state",
                "committed bandwidth does not match the deployed workloads",
            ));
        }
        let nominal = self.nominal();
        self.committed
            .validate_within(&nominal)
            .map_err(|e| Error::invalid("server state", e.to_string()))
    }

    pub fn nominal(&self) -> ResourceAvailability {
        ResourceAvailability::nominal(&self.config)
    }

    pub fn committed(&self) -> ResourceAvailability {
        self.committed
    }

    pub fn recompute_committed(&self) -> ResourceAvailability {
        self.deployed
            .iter()
            .fold(zero_axes(), |acc, d| add(acc, d.commitment))
    }

    pub fn residual(&self) -> ResourceAvailability {
        let n = self.nominal();
        let c = self.committed;
        ResourceAvailability {
            b_p: n.b_p - c.b_p,
            b_s: n.b_s - c.b_s,
            link_ing: n.link_ing - c.link_ing,
            link_egr: n.link_egr - c.link_egr,
        }
    }

    /// Bandwidth a workload holds on each axis at split `r_star`.
    pub fn commitment_of(&self, wl: &WorkloadProfile, r_star: f64) -> ResourceAvailability {
        let link = &self.config.link;
        let salvage = (1.0 - r_star) * wl.demand_mean;
        let eta = link.link_efficiency();
        let peak = link.raw_bw_per_dir;
        ResourceAvailability {
            b_p: r_star * wl.demand_mean,
            b_s: salvage,
            link_ing: salvage * wl.rho_rd / eta + wl.io_rx_level * peak,
            link_egr: salvage * (1.0 - wl.rho_rd) / eta + wl.io_tx_level * peak,
        }
    }

    pub fn deploy(
        &mut self,
        wl: &WorkloadProfile,
        set: &SplitCurveSet,
        io_heavy_threshold: f64,
    ) -> Result<(Decision, Event)> {
        wl.validate()?;
        if self.deployed.iter().any(|d| d.workload.name == wl.name) {
            return Err(Error::DuplicateWorkload(wl.name.clone()));
        }
        let reject = |this: &Self, reason: String| {
            let event = Event {
                event: "reject".into(),
                workload: wl.name.clone(),
                server: this.name.clone(),
                r_star: None,
                reason: Some(reason.clone()),
            };
            Ok((Decision::Rejected { reason }, event))
        };

        if wl.io_heavy(io_heavy_threshold) {
            if let Some(s) = self.deployed.iter().find(|d| d.workload.salvaging) {
                return reject(
                    self,
                    format!(
                        "rule 3: I/O-intensive workload cannot join server where `{}` salvages I/O bandwidth",
                        s.workload.name
                    ),
                );
            }
        }

        let (curve_key, curve) = match set.select_curve(&self.residual()) {
            Ok(found) => found,
            Err(Error::NoApplicableCurve(why)) => {
                return reject(self, format!("insufficient quantized availability: {why}"))
            }
            Err(e) => return Err(e),
        };
        let probe = curve.probe(wl.demand_mean);
        if probe.capacity_exceeded {
            return reject(
                self,
                format!(
                    "demand {} GB/s exceeds the available capacity",
                    wl.demand_mean
                ),
            );
        }
        let mut r_star = probe.r_star;
        if r_star < 1.0 && wl.io_heavy(io_heavy_threshold) {
            // an I/O-intensive workload keeps its own link free
            let bg = self.residual().background(&self.nominal());
            let all_primary =
                amat_with_background(TrafficSplit::ALL_PRIMARY, wl.demand_mean, &self.config, &bg)?;
            if !all_primary.feasible() {
                return reject(
                    self,
                    "rule 3: I/O-intensive workload cannot salvage and exceeds primary capacity"
                        .into(),
                );
            }
            r_star = 1.0;
        }
        let salvaging = r_star < 1.0;
        if salvaging {
            if let Some(h) = self
                .deployed
                .iter()
                .find(|d| d.workload.io_heavy(io_heavy_threshold))
            {
                return reject(
                    self,
                    format!(
                        "rule 3: split {r_star} would salvage I/O bandwidth next to I/O-intensive `{}`",
                        h.workload.name
                    ),
                );
            }
        }

        let commitment = self.commitment_of(wl, r_star);
        let committed = add(self.committed, commitment);
        if committed.validate_within(&self.nominal()).is_err() {
            return reject(
                self,
                "insufficient capacity for the workload's commitments".into(),
            );
        }

        let mut workload = wl.clone();
        workload.salvaging = salvaging;
        self.deployed.push(Deployment {
            workload,
            r_star,
            commitment,
        });
        self.committed = committed;
        let event = Event {
            event: "deploy".into(),
            workload: wl.name.clone(),
            server: self.name.clone(),
            r_star: Some(r_star),
            reason: None,
        };
        Ok((Decision::Accepted { r_star, curve_key }, event))
    }

    /// Releases `name`'s commitments. Returns the completion event plus an
    /// advisory when salvaging workloads lose an I/O-quiet neighbor.
    pub fn complete(&mut self, name: &str) -> Result<Vec<Event>> {
        let idx = self
            .deployed
            .iter()
            .position(|d| d.workload.name == name)
            .ok_or_else(|| Error::UnknownWorkload(name.to_owned()))?;
        let gone = self.deployed.remove(idx);
        self.committed = self.recompute_committed();

        let mut events = vec![Event {
            event: "complete".into(),
            workload: name.to_owned(),
            server: self.name.clone(),
            r_star: Some(gone.r_star),
            reason: None,
        }];
        let salvagers: Vec<&str> = self
            .deployed
            .iter()
            .filter(|d| d.workload.salvaging)
            .map(|d| d.workload.name.as_str())
            .collect();
        if !gone.workload.salvaging && !salvagers.is_empty() {
            events.push(Event {
                event: "advisory".into(),
                workload: name.to_owned(),
                server: self.name.clone(),
                r_star: None,
                reason: Some(format!(
                    "replace with a workload of similar I/O usage or migrate salvage pages of [{}]",
                    salvagers.join(", ")
                )),
            });
        }
        Ok(events)
    }
}
