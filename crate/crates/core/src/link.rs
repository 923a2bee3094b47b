//! Full-duplex multiplexed serial link.
//!
//! Memory reads load the ingress (device-to-CPU, RX) direction and writes
//! load the egress (CPU-to-device, TX) direction. Link loads are expressed
//! in raw wire bandwidth: payload divided by the link efficiency.

use serde::{Deserialize, Serialize};

use crate::curves::{Latency, LoadLatencyCurve};
use crate::{Error, Gbps, Nanos, Result};

/// Bytes of data moved by one memory read or write.
pub const LINE_BYTES: f64 = 64.0;

/// Per-access transport metadata, in bytes beyond the 64B data line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetadataModel {
    /// Egress bytes per read request.
    pub rd_req_bytes: f64,
    /// Ingress header bytes accompanying each read response.
    pub rd_resp_hdr_bytes: f64,
    /// Egress header bytes accompanying each write.
    pub wr_hdr_bytes: f64,
    /// Ingress bytes per write completion.
    pub wr_cmpl_bytes: f64,
}

impl MetadataModel {
    /// Calibrated so that a 2:1 read/write mix at efficiency 0.94 delivers
    /// 80% of raw bandwidth as read data on ingress and 40% as write data
    /// on egress. Ingress message headers share one size, as do egress ones:
    ///
    /// ```text
    /// ingress: 2*(64 + h_in) + h_in   = 0.94*64*2/0.8  => h_in  = 22.4/3
    /// egress:  2*h_out + (64 + h_out) = 0.94*64*1/0.4  => h_out = 28.8
    /// ```
    pub const CALIBRATED: MetadataModel = MetadataModel {
        rd_req_bytes: 28.8,
        rd_resp_hdr_bytes: 22.4 / 3.0,
        wr_hdr_bytes: 28.8,
        wr_cmpl_bytes: 22.4 / 3.0,
    };

    pub const NONE: MetadataModel = MetadataModel {
        rd_req_bytes: 0.0,
        rd_resp_hdr_bytes: 0.0,
        wr_hdr_bytes: 0.0,
        wr_cmpl_bytes: 0.0,
    };

    fn validate(&self) -> Result<()> {
        let fields = [
            self.rd_req_bytes,
            self.rd_resp_hdr_bytes,
            self.wr_hdr_bytes,
            self.wr_cmpl_bytes,
        ];
        if fields.iter().all(|b| b.is_finite() && *b >= 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("metadata model", format!("{self:?}")))
        }
    }
}

impl Default for MetadataModel {
    fn default() -> Self {
        Self::CALIBRATED
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkSpecRepr", into = "LinkSpecRepr")]
pub struct LinkSpec {
    pub lanes: u32,
    /// Raw transfer rate per direction.
    pub raw_bw_per_dir: Gbps,
    pub flit_payload: u32,
    pub flit_total: u32,
    /// Configured efficiency; `None` derives it from the flit format.
    pub eta: Option<f64>,
    /// Zero-load latency premium of the link path over direct DDR.
    pub base_overhead: Nanos,
    pub ingress_curve: LoadLatencyCurve,
    pub egress_curve: LoadLatencyCurve,
    pub meta: MetadataModel,
}

#[derive(Serialize, Deserialize)]
struct LinkSpecRepr {
    lanes: u32,
    raw_bw_per_dir: Gbps,
    flit_payload: u32,
    flit_total: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    base_overhead: Nanos,
    ingress_curve: LoadLatencyCurve,
    egress_curve: LoadLatencyCurve,
    #[serde(default)]
    meta: MetadataModel,
}

impl TryFrom<LinkSpecRepr> for LinkSpec {
    type Error = Error;

    fn try_from(r: LinkSpecRepr) -> Result<Self> {
        let spec = LinkSpec {
            lanes: r.lanes,
            raw_bw_per_dir: r.raw_bw_per_dir,
            flit_payload: r.flit_payload,
            flit_total: r.flit_total,
            eta: r.eta,
            base_overhead: r.base_overhead,
            ingress_curve: r.ingress_curve,
            egress_curve: r.egress_curve,
            meta: r.meta,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<LinkSpec> for LinkSpecRepr {
    fn from(s: LinkSpec) -> Self {
        LinkSpecRepr {
            lanes: s.lanes,
            raw_bw_per_dir: s.raw_bw_per_dir,
            flit_payload: s.flit_payload,
            flit_total: s.flit_total,
            eta: s.eta,
            base_overhead: s.base_overhead,
            ingress_curve: s.ingress_curve,
            egress_curve: s.egress_curve,
            meta: s.meta,
        }
    }
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.raw_bw_per_dir > 0.0 && self.raw_bw_per_dir.is_finite()) {
            return Err(Error::invalid(
                "link spec",
                format!("raw_bw_per_dir must be > 0, got {}", self.raw_bw_per_dir),
            ));
        }
        if self.flit_payload == 0 || self.flit_payload > self.flit_total {
            return Err(Error::invalid(
                "link spec",
                format!(
                    "flit payload {} must be in 1..={}",
                    self.flit_payload, self.flit_total
                ),
            ));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::invalid(
                    "link spec",
                    format!("eta must be in (0, 1], got {eta}"),
                ));
            }
        }
        if !(self.base_overhead >= 0.0 && self.base_overhead.is_finite()) {
            return Err(Error::invalid(
                "link spec",
                format!("base_overhead must be >= 0, got {}", self.base_overhead),
            ));
        }
        let zero_load = self.ingress_curve.zero_load() + self.egress_curve.zero_load();
        if (zero_load - self.base_overhead).abs() > 1e-9 * self.base_overhead.max(1.0) {
            return Err(Error::invalid(
                "link spec",
                format!(
                    "ingress+egress zero-load latency {zero_load} ns differs from base_overhead {} ns",
                    self.base_overhead
                ),
            ));
        }
        self.meta.validate()
    }

    pub fn link_efficiency(&self) -> f64 {
        self.eta
            .unwrap_or(self.flit_payload as f64 / self.flit_total as f64)
    }

    /// Payload bandwidth one direction can carry.
    pub fn payload_capacity(&self) -> Gbps {
        self.raw_bw_per_dir * self.link_efficiency()
    }

    /// Data bandwidth each direction delivers for a read/write mix once
    /// flit efficiency and per-access metadata are accounted for.
    ///
    /// `read_fraction` is the share of accesses that are reads. Returns
    /// `(rx_eff, tx_eff)`: read data on ingress and write data on egress.
    pub fn effective_direction_bandwidth(&self, read_fraction: f64) -> Result<(Gbps, Gbps)> {
        if !(0.0..=1.0).contains(&read_fraction) {
            return Err(Error::domain(format!(
                "read fraction must be in [0, 1], got {read_fraction}"
            )));
        }
        let m = &self.meta;
        let f = read_fraction;
        let cap = self.payload_capacity();

        let rx_bytes = f * (LINE_BYTES + m.rd_resp_hdr_bytes) + (1.0 - f) * m.wr_cmpl_bytes;
        let tx_bytes = f * m.rd_req_bytes + (1.0 - f) * (LINE_BYTES + m.wr_hdr_bytes);
        let share = |data: f64, total: f64| if total > 0.0 { data / total } else { 0.0 };

        Ok((
            cap * share(f * LINE_BYTES, rx_bytes),
            cap * share((1.0 - f) * LINE_BYTES, tx_bytes),
        ))
    }

    /// Per-direction utilization caused by `salvage_demand` GB/s of memory
    /// traffic, normalized by the raw per-direction bandwidth.
    pub fn direction_utilization(&self, salvage_demand: Gbps, rho_rd: f64) -> (f64, f64) {
        let eta = self.link_efficiency();
        let load_ing = salvage_demand * rho_rd / eta;
        let load_egr = salvage_demand * (1.0 - rho_rd) / eta;
        (
            load_ing / self.raw_bw_per_dir,
            load_egr / self.raw_bw_per_dir,
        )
    }

    pub fn link_latency(&self, u_ing: f64, u_egr: f64) -> Result<(Latency, Latency)> {
        Ok((
            self.ingress_curve.latency_at(u_ing)?,
            self.egress_curve.latency_at(u_egr)?,
        ))
    }
}
