//! Offline split-curve generation and deployment-time probing.
//!
//! A [`SplitCurveSet`] holds one [`SplitCurve`] per point of a quantized
//! resource-availability grid. Each curve maps memory demand to the
//! AMAT-optimal split for a server with that much headroom left. At
//! deployment the server's residual availability is rounded down onto the
//! grid and the workload's demand is rounded up onto the curve, so both
//! lookups err toward less optimistic assumptions.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amat::{
    optimal_split_with_background, split_grid, BackgroundLoad, SystemConfig, DEFAULT_GRID_STEP,
};
use crate::{Error, Gbps, Result};

pub const SCHEMA_VERSION: u64 = 1;

/// Default cap on the number of availability grid points.
pub const DEFAULT_GRID_CAP: usize = 4096;

const EPS: f64 = 1e-9;

/// Headroom left on each resource. Memory axes are data GB/s; link axes are
/// raw wire GB/s per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceAvailability {
    pub b_p: Gbps,
    pub b_s: Gbps,
    pub link_ing: Gbps,
    pub link_egr: Gbps,
}

impl ResourceAvailability {
    pub fn nominal(cfg: &SystemConfig) -> Self {
        ResourceAvailability {
            b_p: cfg.b_p,
            b_s: cfg.b_s,
            link_ing: cfg.link.raw_bw_per_dir,
            link_egr: cfg.link.raw_bw_per_dir,
        }
    }

    pub fn axes(&self) -> [f64; 4] {
        [self.b_p, self.b_s, self.link_ing, self.link_egr]
    }

    fn from_axes(a: [f64; 4]) -> Self {
        ResourceAvailability {
            b_p: a[0],
            b_s: a[1],
            link_ing: a[2],
            link_egr: a[3],
        }
    }

    /// Checks `0 <= self <= nominal` on every axis.
    pub fn validate_within(&self, nominal: &ResourceAvailability) -> Result<()> {
        for ((name, v), cap) in AXIS_NAMES.iter().zip(self.axes()).zip(nominal.axes()) {
            if !(v >= 0.0 && v <= cap * (1.0 + EPS)) {
                return Err(Error::domain(format!(
                    "availability `{name}` = {v} outside [0, {cap}]"
                )));
            }
        }
        Ok(())
    }

    /// Load already committed when only `self` remains of `nominal`.
    pub fn background(&self, nominal: &ResourceAvailability) -> BackgroundLoad {
        BackgroundLoad {
            primary: (nominal.b_p - self.b_p).max(0.0),
            salvage: (nominal.b_s - self.b_s).max(0.0),
            link_ing: (nominal.link_ing - self.link_ing).max(0.0),
            link_egr: (nominal.link_egr - self.link_egr).max(0.0),
        }
    }
}

const AXIS_NAMES: [&str; 4] = ["b_p", "b_s", "link_ing", "link_egr"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub demand_gbps: Gbps,
    pub r_star: f64,
    pub capacity_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCurve {
    pub entries: Vec<SplitEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub r_star: f64,
    pub capacity_exceeded: bool,
    /// Grid demand of the entry that answered.
    pub demand_gbps: Gbps,
}

impl SplitCurve {
    fn validate(&self, grid_step: f64) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Schema("split curve has no entries".into()));
        }
        let grid = split_grid(grid_step)?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 && e.demand_gbps <= self.entries[i - 1].demand_gbps {
                return Err(Error::Schema(format!(
                    "split curve demands not strictly increasing at entry {i}"
                )));
            }
            if !grid.iter().any(|g| (g - e.r_star).abs() < EPS) {
                return Err(Error::Schema(format!(
                    "r_star {} at entry {i} is not a grid value",
                    e.r_star
                )));
            }
        }
        Ok(())
    }

    /// Answers with the first entry whose demand is at least `d`. Demands past
    /// the last entry get that entry with the capacity flag forced on.
    pub fn probe(&self, d: Gbps) -> Probe {
        let idx = self.entries.partition_point(|e| e.demand_gbps < d);
        match self.entries.get(idx) {
            Some(e) => Probe {
                r_star: e.r_star,
                capacity_exceeded: e.capacity_exceeded,
                demand_gbps: e.demand_gbps,
            },
            None => {
                let e = self.entries.last().expect("validated non-empty");
                Probe {
                    r_star: e.r_star,
                    capacity_exceeded: true,
                    demand_gbps: e.demand_gbps,
                }
            }
        }
    }
}

/// Optimal split for each demand of `demand_grid` on a server with `avail`
/// headroom left of `base_cfg`'s nominal capacities.
pub fn generate_curve(
    avail: &ResourceAvailability,
    base_cfg: &SystemConfig,
    demand_grid: &[Gbps],
    grid_step: f64,
) -> Result<SplitCurve> {
    if demand_grid.is_empty() {
        return Err(Error::domain("demand grid is empty"));
    }
    if demand_grid.windows(2).any(|w| w[1] <= w[0]) || demand_grid[0] < 0.0 {
        return Err(Error::domain(
            "demand grid must be non-negative and strictly ascending",
        ));
    }
    let nominal = ResourceAvailability::nominal(base_cfg);
    avail.validate_within(&nominal)?;
    let bg = avail.background(&nominal);
    let salvage_closed = avail.b_s <= 0.0 || avail.link_ing <= 0.0 || avail.link_egr <= 0.0;

    let entries = demand_grid
        .iter()
        .map(|&d| {
            let decision = if salvage_closed {
                let all_primary = crate::amat::amat_with_background(
                    crate::amat::TrafficSplit::ALL_PRIMARY,
                    d,
                    base_cfg,
                    &bg,
                )?;
                SplitEntry {
                    demand_gbps: d,
                    r_star: 1.0,
                    capacity_exceeded: !all_primary.feasible(),
                }
            } else {
                let s = optimal_split_with_background(d, base_cfg, &bg, grid_step)?;
                SplitEntry {
                    demand_gbps: d,
                    r_star: s.r.get(),
                    capacity_exceeded: s.capacity_exceeded,
                }
            };
            Ok(decision)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitCurve { entries })
}

/// Availability fractions (of nominal) per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisFractions {
    pub b_p: Vec<f64>,
    pub b_s: Vec<f64>,
    pub link_ing: Vec<f64>,
    pub link_egr: Vec<f64>,
}

impl AxisFractions {
    pub fn uniform(levels: &[f64]) -> Self {
        AxisFractions {
            b_p: levels.to_vec(),
            b_s: levels.to_vec(),
            link_ing: levels.to_vec(),
            link_egr: levels.to_vec(),
        }
    }

    fn axes(&self) -> [&Vec<f64>; 4] {
        [&self.b_p, &self.b_s, &self.link_ing, &self.link_egr]
    }

    fn axes_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.b_p,
            &mut self.b_s,
            &mut self.link_ing,
            &mut self.link_egr,
        ]
    }

    pub fn cardinality(&self) -> usize {
        self.axes().iter().map(|a| a.len()).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nominal: ResourceAvailability,
    pub fractions: AxisFractions,
    pub demands_gbps: Vec<Gbps>,
    pub grid_step: f64,
}

impl GridSpec {
    /// Every axis at 25/50/75/100% of nominal, demands every 1 GB/s from 0
    /// to 1.4x the combined memory bandwidth.
    pub fn default_for(cfg: &SystemConfig) -> Self {
        let top = (1.4 * (cfg.b_p + cfg.b_s)).ceil() as usize;
        GridSpec {
            nominal: ResourceAvailability::nominal(cfg),
            fractions: AxisFractions::uniform(&[0.25, 0.5, 0.75, 1.0]),
            demands_gbps: (0..=top).map(|d| d as f64).collect(),
            grid_step: DEFAULT_GRID_STEP,
        }
    }

    /// A single availability point, given as fractions of nominal.
    pub fn single(cfg: &SystemConfig, point: [f64; 4], demands_gbps: Vec<Gbps>) -> Self {
        GridSpec {
            nominal: ResourceAvailability::nominal(cfg),
            fractions: AxisFractions {
                b_p: vec![point[0]],
                b_s: vec![point[1]],
                link_ing: vec![point[2]],
                link_egr: vec![point[3]],
            },
            demands_gbps,
            grid_step: DEFAULT_GRID_STEP,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, axis) in AXIS_NAMES.iter().zip(self.fractions.axes()) {
            if axis.is_empty() {
                return Err(Error::Schema(format!("grid axis `{name}` is empty")));
            }
            if axis.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::Schema(format!(
                    "grid axis `{name}` has fractions outside [0, 1]"
                )));
            }
        }
        if self.demands_gbps.is_empty() {
            return Err(Error::Schema("demand grid is empty".into()));
        }
        if self.demands_gbps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schema(
                "demand grid is not strictly increasing".into(),
            ));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::Schema(format!(
                "grid_step {} outside (0, 1]",
                self.grid_step
            )));
        }
        Ok(())
    }

    fn canonicalize(&mut self) {
        for axis in self.fractions.axes_mut() {
            axis.sort_by(f64::total_cmp);
            axis.dedup();
        }
    }

    fn point(&self, key: GridKey) -> ResourceAvailability {
        let axes = self.fractions.axes();
        let nominal = self.nominal.axes();
        ResourceAvailability::from_axes(std::array::from_fn(|i| axes[i][key[i]] * nominal[i]))
    }

    fn keys(&self) -> Vec<GridKey> {
        let lens = self.fractions.axes().map(|a| a.len());
        let mut keys = Vec::with_capacity(self.fractions.cardinality());
        for a in 0..lens[0] {
            for b in 0..lens[1] {
                for c in 0..lens[2] {
                    for d in 0..lens[3] {
                        keys.push([a, b, c, d]);
                    }
                }
            }
        }
        keys
    }

    /// Grid indices of `avail`, matched exactly (to rounding) on every axis.
    fn key_of(&self, avail: &ResourceAvailability) -> Option<GridKey> {
        let axes = self.fractions.axes();
        let nominal = self.nominal.axes();
        let values = avail.axes();
        let mut key = [0; 4];
        for i in 0..4 {
            key[i] = axes[i]
                .iter()
                .position(|f| (f * nominal[i] - values[i]).abs() <= EPS * nominal[i].max(1.0))?;
        }
        Some(key)
    }

    /// Rounds `current` down onto the grid.
    fn quantize_down(&self, current: &ResourceAvailability) -> Result<GridKey> {
        let axes = self.fractions.axes();
        let nominal = self.nominal.axes();
        let values = current.axes();
        let mut key = [0; 4];
        for i in 0..4 {
            key[i] = axes[i]
                .iter()
                .rposition(|f| f * nominal[i] <= values[i] + EPS * nominal[i].max(1.0))
                .ok_or_else(|| {
                    Error::NoApplicableCurve(format!(
                        "`{}` availability {} is below the smallest grid point {}",
                        AXIS_NAMES[i],
                        values[i],
                        axes[i][0] * nominal[i]
                    ))
                })?;
        }
        Ok(key)
    }
}

type GridKey = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCurveSet {
    grid_spec: GridSpec,
    curves: BTreeMap<GridKey, SplitCurve>,
}

#[derive(Serialize, Deserialize)]
struct SetFile {
    schema_version: u64,
    grid_spec: GridSpec,
    curves: Vec<CurveRecord>,
}

#[derive(Serialize, Deserialize)]
struct CurveRecord {
    availability: ResourceAvailability,
    entries: Vec<SplitEntry>,
}

impl SplitCurveSet {
    pub fn grid_spec(&self) -> &GridSpec {
        &self.grid_spec
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Curves in canonical grid order with their availability keys.
    pub fn iter(&self) -> impl Iterator<Item = (ResourceAvailability, &SplitCurve)> {
        self.curves
            .iter()
            .map(|(k, c)| (self.grid_spec.point(*k), c))
    }

    /// Curve for `current`, rounded down onto the grid, and the grid point used.
    pub fn select_curve(
        &self,
        current: &ResourceAvailability,
    ) -> Result<(ResourceAvailability, &SplitCurve)> {
        current.validate_within(&self.grid_spec.nominal)?;
        let key = self.grid_spec.quantize_down(current)?;
        let curve = self
            .curves
            .get(&key)
            .ok_or_else(|| Error::NoApplicableCurve(format!("grid point {key:?} has no curve")))?;
        Ok((self.grid_spec.point(key), curve))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SetFile {
            schema_version: SCHEMA_VERSION,
            grid_spec: self.grid_spec.clone(),
            curves: self
                .iter()
                .map(|(availability, c)| CurveRecord {
                    availability,
                    entries: c.entries.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("split curve set is not valid JSON: {e}")))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(SCHEMA_VERSION) => {}
            Some(found) => {
                return Err(Error::SchemaVersion {
                    found,
                    expected: SCHEMA_VERSION,
                })
            }
            None => return Err(Error::Schema("missing `schema_version`".into())),
        }
        let file: SetFile = serde_json::from_value(value)
            .map_err(|e| Error::Schema(format!("split curve set: {e}")))?;

        let mut grid_spec = file.grid_spec;
        grid_spec.validate()?;
        grid_spec.canonicalize();
        if file.curves.is_empty() {
            return Err(Error::Schema("split curve set has no curves".into()));
        }
        let mut curves = BTreeMap::new();
        for (i, rec) in file.curves.into_iter().enumerate() {
            let key = grid_spec.key_of(&rec.availability).ok_or_else(|| {
                Error::Schema(format!(
                    "curve {i} availability {:?} is off the grid",
                    rec.availability
                ))
            })?;
            let curve = SplitCurve {
                entries: rec.entries,
            };
            curve.validate(grid_spec.grid_step)?;
            if curves.insert(key, curve).is_some() {
                return Err(Error::Schema(format!(
                    "curve {i} duplicates grid point {key:?}"
                )));
            }
        }
        Ok(SplitCurveSet { grid_spec, curves })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Generates one curve per availability grid point.
pub fn generate_set(
    base_cfg: &SystemConfig,
    grid_spec: &GridSpec,
    cap: usize,
) -> Result<SplitCurveSet> {
    let mut grid_spec = grid_spec.clone();
    grid_spec.validate()?;
    grid_spec.canonicalize();
    let count = grid_spec.fractions.cardinality();
    if count > cap {
        return Err(Error::GridTooLarge { count, cap });
    }
    // The grid is anchored at this config's capacities.
    grid_spec.nominal = ResourceAvailability::nominal(base_cfg);

    let curves = grid_spec
        .keys()
        .into_par_iter()
        .map(|key| {
            let avail = grid_spec.point(key);
            generate_curve(
                &avail,
                base_cfg,
                &grid_spec.demands_gbps,
                grid_spec.grid_step,
            )
            .map(|c| (key, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitCurveSet {
        grid_spec,
        curves: curves.into_iter().collect(),
    })
}
