//! Load-latency curves.
//!
//! A curve maps the utilization of a memory device or link direction (a
//! fraction of its peak sustainable bandwidth) to the mean access latency at
//! that load. Curves are piecewise linear between profiled knots; queries
//! beyond the last knot report [`Latency::Saturated`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Nanos, Result};

/// Header line of the curve CSV format.
pub const CSV_HEADER: &str = "utilization,latency_ns";

/// Result of a curve lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Latency {
    Ns(Nanos),
    /// The load lies beyond the curve's last knot; queuing is unbounded.
    Saturated,
}

impl Latency {
    pub fn ns(self) -> Option<Nanos> {
        match self {
            Latency::Ns(v) => Some(v),
            Latency::Saturated => None,
        }
    }

    pub fn is_saturated(self) -> bool {
        matches!(self, Latency::Saturated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct LoadLatencyCurve {
    label: String,
    points: Vec<(f64, Nanos)>,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    #[serde(default)]
    label: String,
    points: Vec<(f64, f64)>,
}

impl TryFrom<CurveRepr> for LoadLatencyCurve {
    type Error = Error;

    fn try_from(repr: CurveRepr) -> Result<Self> {
        LoadLatencyCurve::new(repr.label, repr.points)
    }
}

impl From<LoadLatencyCurve> for CurveRepr {
    fn from(c: LoadLatencyCurve) -> Self {
        CurveRepr {
            label: c.label,
            points: c.points,
        }
    }
}

impl LoadLatencyCurve {
    /// Builds a curve from `(utilization, latency_ns)` knots.
    pub fn new(label: impl Into<String>, points: Vec<(f64, Nanos)>) -> Result<Self> {
        if let Some(idx) = first_violation(&points)? {
            let (u, l) = points[idx];
            return Err(Error::invalid(
                "load-latency curve",
                format!("knot {idx} ({u}, {l}) breaks ordering"),
            ));
        }
        Ok(LoadLatencyCurve {
            label: label.into(),
            points,
        })
    }

    /// Samples `l0 + q * u / (1 - u)` at `n_points` uniform knots on `[0, u_max]`.
    pub fn synthetic(l0: Nanos, q: Nanos, u_max: f64, n_points: usize) -> Result<Self> {
        if !(l0 > 0.0 && l0.is_finite()) {
            return Err(Error::domain(format!("l0 must be positive, got {l0}")));
        }
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::domain(format!("q must be non-negative, got {q}")));
        }
        if !(u_max > 0.0 && u_max < 1.0) {
            return Err(Error::domain(format!(
                "u_max must be in (0, 1), got {u_max}"
            )));
        }
        if n_points < 2 {
            return Err(Error::domain(format!(
                "synthetic curve needs at least 2 points, got {n_points}"
            )));
        }
        let last = (n_points - 1) as f64;
        let points = (0..n_points)
            .map(|i| {
                let u = if i == n_points - 1 {
                    u_max
                } else {
                    u_max * i as f64 / last
                };
                (u, synthetic_latency(l0, q, u))
            })
            .collect();
        LoadLatencyCurve::new(format!("synthetic(l0={l0},q={q},u_max={u_max})"), points)
    }

    /// A curve with the same latency at every load up to `u_max`.
    pub fn flat(latency: Nanos, u_max: f64) -> Result<Self> {
        LoadLatencyCurve::new(
            format!("flat({latency})"),
            vec![(0.0, latency), (u_max, latency)],
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn points(&self) -> &[(f64, Nanos)] {
        &self.points
    }

    /// Latency of the unloaded device.
    pub fn zero_load(&self) -> Nanos {
        self.points[0].1
    }

    /// Highest utilization the curve covers.
    pub fn max_utilization(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn latency_at(&self, u: f64) -> Result<Latency> {
        if u.is_nan() || u < 0.0 {
            return Err(Error::domain(format!("utilization must be >= 0, got {u}")));
        }
        if u > self.max_utilization() {
            return Ok(Latency::Saturated);
        }
        // first knot with utilization >= u
        let idx = self.points.partition_point(|&(ku, _)| ku < u);
        let (u1, l1) = self.points[idx];
        if u1 == u || idx == 0 {
            return Ok(Latency::Ns(l1));
        }
        let (u0, l0) = self.points[idx - 1];
        Ok(Latency::Ns(l0 + (l1 - l0) * (u - u0) / (u1 - u0)))
    }

    /// Adds `delta` ns to every knot.
    pub fn shift(&self, delta: Nanos) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::domain(format!("shift must be >= 0, got {delta}")));
        }
        Ok(LoadLatencyCurve {
            label: self.label.clone(),
            points: self.points.iter().map(|&(u, l)| (u, l + delta)).collect(),
        })
    }

    /// The queuing component alone: zero at no load.
    pub fn queuing_only(&self) -> Self {
        let base = self.zero_load();
        LoadLatencyCurve {
            label: format!("{} (queuing)", self.label),
            points: self.points.iter().map(|&(u, l)| (u, l - base)).collect(),
        }
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).enumerate();
        let header = loop {
            match lines.next() {
                Some((_, "")) => continue,
                Some((_, h)) => break h,
                None => {
                    return Err(Error::CurveParse {
                        row: 0,
                        reason: "empty input".into(),
                    })
                }
            }
        };
        if header != CSV_HEADER {
            return Err(Error::CurveParse {
                row: 0,
                reason: format!("expected header `{CSV_HEADER}`, found `{header}`"),
            });
        }

        let mut points: Vec<(f64, f64)> = Vec::new();
        for (_, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let row = points.len() + 1;
            let err = |reason: String| Error::CurveParse { row, reason };
            let (u, l) = line
                .split_once(',')
                .ok_or_else(|| err(format!("expected two columns, found `{line}`")))?;
            let u: f64 = u
                .trim()
                .parse()
                .map_err(|e| err(format!("bad utilization `{u}`: {e}")))?;
            let l: f64 = l
                .trim()
                .parse()
                .map_err(|e| err(format!("bad latency `{l}`: {e}")))?;
            if !(0.0..=1.0).contains(&u) {
                return Err(err(format!("utilization {u} outside [0, 1]")));
            }
            if !(l.is_finite() && l >= 0.0) {
                return Err(err(format!("latency {l} must be finite and >= 0")));
            }
            if let Some(&(pu, pl)) = points.last() {
                if u <= pu {
                    return Err(err(format!("utilization {u} not above previous {pu}")));
                }
                if l < pl {
                    return Err(err(format!("latency {l} below previous {pl}")));
                }
            }
            points.push((u, l));
        }

        match points.first() {
            None => Err(Error::CurveParse {
                row: 0,
                reason: "no data rows".into(),
            }),
            Some(&(u, _)) if u != 0.0 => Err(Error::CurveParse {
                row: 1,
                reason: format!("first utilization must be 0, got {u}"),
            }),
            _ if points.len() < 2 => Err(Error::CurveParse {
                row: 1,
                reason: "a curve needs at least 2 rows".into(),
            }),
            _ => LoadLatencyCurve::new("csv", points),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(24 * (self.points.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (u, l) in &self.points {
            let _ = writeln!(out, "{u},{l}");
        }
        out
    }
}

/// Closed form behind [`LoadLatencyCurve::synthetic`].
pub fn synthetic_latency(l0: Nanos, q: Nanos, u: f64) -> Nanos {
    l0 + q * u / (1.0 - u)
}

/// Index of the first knot violating the curve invariants, if any.
fn first_violation(points: &[(f64, f64)]) -> Result<Option<usize>> {
    if points.len() < 2 {
        return Err(Error::invalid(
            "load-latency curve",
            format!("needs at least 2 points, got {}", points.len()),
        ));
    }
    if points[0].0 != 0.0 {
        return Ok(Some(0));
    }
    for (i, &(u, l)) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&u) || !l.is_finite() || l < 0.0 {
            return Ok(Some(i));
        }
        if i > 0 {
            let (pu, pl) = points[i - 1];
            if u <= pu || l < pl {
                return Ok(Some(i));
            }
        }
    }
    Ok(None)
}
