//! HAP constellation geometry, device placement, cell assignment and
//! cooperation sets.

use std::io::Write;

use rand::Rng;

use crate::error::{config_err, Result};
use crate::rng::SimRng;

/// Default stratospheric altitude in meters.
pub const DEFAULT_ALTITUDE_M: f64 = 20_000.0;
/// Default footprint radius in meters.
pub const DEFAULT_FOOTPRINT_RADIUS_M: f64 = 50_000.0;

/// Distances closer than this are treated as ties and broken by id.
const TIE_TOLERANCE_M: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct HapNode {
    pub id: usize,
    /// Ground-plane x, y and altitude, meters.
    pub position: [f64; 3],
    pub n_antennas: usize,
    /// Hosts an edge server and runs detection over its cooperation set.
    pub is_edge_anchor: bool,
}

impl HapNode {
    pub fn nadir(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }

    pub fn distance_to(&self, other: &HapNode) -> f64 {
        dist3(self.position, other.position)
    }

    /// 3-D distance from a ground point to this HAP.
    pub fn slant_range(&self, ground: [f64; 2]) -> f64 {
        dist3(self.position, [ground[0], ground[1], 0.0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub haps: Vec<HapNode>,
    pub footprint_radius: f64,
    pub device_positions: Vec<[f64; 2]>,
    /// Id of the HAP whose nadir is horizontally nearest each device.
    pub cell_assignment: Vec<usize>,
}

/// HAPs jointly processed at one edge anchor; the anchor comes first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooperationSet {
    pub anchor: usize,
    pub members: Vec<usize>,
}

impl CooperationSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in ascending id order, used to detect anchors that share a set.
    pub fn sorted_members(&self) -> Vec<usize> {
        let mut m = self.members.clone();
        m.sort_unstable();
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Center,
    Edge,
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Index of the smallest distance; near-ties go to the lowest index.
fn argmin_tied(dists: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in dists.enumerate() {
        match best {
            Some((_, bd)) if d >= bd - TIE_TOLERANCE_M => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}

/// Number of HAPs in a hexagonal layout with `rings` rings around the center.
pub fn hex_count(rings: usize) -> usize {
    1 + 3 * rings * (rings + 1)
}

/// Places `b` HAPs on a hexagonal lattice: one at the origin and the rest on
/// concentric rings, counter-clockwise from the +x axis within each ring.
pub fn build_hex_deployment(
    b: usize,
    spacing: f64,
    altitude: f64,
    n_antennas: usize,
) -> Result<Vec<HapNode>> {
    if !(spacing > 0.0) {
        return Err(config_err(format!("HAP spacing must be positive, got {spacing}")));
    }
    if !(altitude > 0.0) {
        return Err(config_err(format!(
            "HAP altitude must be positive, got {altitude}"
        )));
    }
    if n_antennas == 0 {
        return Err(config_err("HAPs need at least one antenna"));
    }
    let mut rings = 0;
    while hex_count(rings) < b {
        rings += 1;
    }
    if hex_count(rings) != b {
        let lower = hex_count(rings - 1);
        let upper = hex_count(rings);
        let nearest = if b - lower <= upper - b { lower } else { upper };
        return Err(config_err(format!(
            "unsupported HAP count {b}: hexagonal layouts hold 1, 7, 19, 37, ... HAPs (nearest valid count is {nearest})"
        )));
    }

    // axial lattice directions ordered by angle: 0, 60, ..., 300 degrees
    const DIRS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];
    let mut axial = vec![(0i64, 0i64)];
    for ring in 1..=rings as i64 {
        let (mut q, mut r) = (ring, 0);
        for side in 0..6 {
            let (dq, dr) = DIRS[(side + 2) % 6];
            for _ in 0..ring {
                axial.push((q, r));
                q += dq;
                r += dr;
            }
        }
    }

    let half_sqrt3 = 3f64.sqrt() / 2.0;
    Ok(axial
        .into_iter()
        .enumerate()
        .map(|(id, (q, r))| HapNode {
            id,
            position: [
                spacing * (q as f64 + 0.5 * r as f64),
                spacing * half_sqrt3 * r as f64,
                altitude,
            ],
            n_antennas,
            is_edge_anchor: true,
        })
        .collect())
}

/// For every edge-anchor HAP, the `n_co` HAPs nearest to it (itself first).
pub fn build_cooperation_sets(haps: &[HapNode], n_co: usize) -> Result<Vec<CooperationSet>> {
    if n_co == 0 || n_co > haps.len() {
        return Err(config_err(format!(
            "cooperation size n_co = {n_co} must lie in 1..={}",
            haps.len()
        )));
    }
    Ok(haps
        .iter()
        .filter(|h| h.is_edge_anchor)
        .map(|anchor| {
            let mut order: Vec<(i64, usize)> = haps
                .iter()
                .map(|h| ((anchor.distance_to(h) / TIE_TOLERANCE_M).round() as i64, h.id))
                .collect();
            order.sort_unstable();
            CooperationSet {
                anchor: anchor.id,
                members: order.into_iter().take(n_co).map(|(_, id)| id).collect(),
            }
        })
        .collect())
}

impl NetworkTopology {
    /// Topology with no devices placed yet.
    pub fn new(haps: Vec<HapNode>, footprint_radius: f64) -> Result<Self> {
        if haps.is_empty() {
            return Err(config_err("topology needs at least one HAP"));
        }
        if !(footprint_radius > 0.0) {
            return Err(config_err(format!(
                "footprint radius must be positive, got {footprint_radius}"
            )));
        }
        let n_r = haps[0].n_antennas;
        if haps.iter().any(|h| h.n_antennas != n_r) {
            return Err(config_err("all HAPs must carry the same number of antennas"));
        }
        Ok(Self {
            haps,
            footprint_radius,
            device_positions: Vec::new(),
            cell_assignment: Vec::new(),
        })
    }

    pub fn n_haps(&self) -> usize {
        self.haps.len()
    }

    pub fn n_devices(&self) -> usize {
        self.device_positions.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.haps[0].n_antennas
    }

    /// Restricts edge servers to the listed HAP ids; an empty list means all.
    pub fn set_edge_anchors(&mut self, ids: &[usize]) -> Result<()> {
        if let Some(bad) = ids.iter().find(|&&i| i >= self.haps.len()) {
            return Err(config_err(format!(
                "edge anchor id {bad} out of range for {} HAPs",
                self.haps.len()
            )));
        }
        for h in &mut self.haps {
            h.is_edge_anchor = ids.is_empty() || ids.contains(&h.id);
        }
        Ok(())
    }

    /// HAP whose nadir is horizontally nearest to `pos`.
    pub fn nearest_hap(&self, pos: [f64; 2]) -> usize {
        argmin_tied(self.haps.iter().map(|h| dist2(h.nadir(), pos))).unwrap_or(0)
    }

    /// Nearest HAP among a subset of ids (used for anchor selection).
    pub fn nearest_among(&self, pos: [f64; 2], ids: &[usize]) -> Option<usize> {
        argmin_tied(ids.iter().map(|&i| dist2(self.haps[i].nadir(), pos))).map(|j| ids[j])
    }

    pub fn covers(&self, pos: [f64; 2]) -> bool {
        self.haps
            .iter()
            .any(|h| dist2(h.nadir(), pos) <= self.footprint_radius)
    }

    /// Draws `k` devices uniformly over the union of HAP footprints by
    /// rejection from the bounding disc, then assigns cells.
    pub fn place_devices(&mut self, k: usize, rng: &mut SimRng) {
        let reach = self
            .haps
            .iter()
            .map(|h| dist2(h.nadir(), [0.0, 0.0]))
            .fold(0.0, f64::max)
            + self.footprint_radius;
        let mut positions = Vec::with_capacity(k);
        while positions.len() < k {
            let r = reach * rng.random::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.random::<f64>();
            let p = [r * a.cos(), r * a.sin()];
            if self.covers(p) {
                positions.push(p);
            }
        }
        self.device_positions = positions;
        self.assign_cells();
    }

    /// Sets explicit device positions (tests, replay) and assigns cells.
    pub fn with_devices(mut self, positions: Vec<[f64; 2]>) -> Self {
        self.device_positions = positions;
        self.assign_cells();
        self
    }

    pub fn assign_cells(&mut self) {
        self.cell_assignment = self
            .device_positions
            .iter()
            .map(|&p| self.nearest_hap(p))
            .collect();
    }

    /// Devices whose assigned cell is `hap`.
    pub fn cell_members(&self, hap: usize) -> Vec<usize> {
        self.cell_assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == hap)
            .map(|(k, _)| k)
            .collect()
    }

    /// Center iff the horizontal distance to the assigned nadir is at most
    /// `center_fraction * footprint_radius`.
    pub fn classify_region(&self, pos: [f64; 2], center_fraction: f64) -> Region {
        let hap = &self.haps[self.nearest_hap(pos)];
        if dist2(hap.nadir(), pos) <= center_fraction * self.footprint_radius {
            Region::Center
        } else {
            Region::Edge
        }
    }

    pub fn device_regions(&self, center_fraction: f64) -> Vec<Region> {
        self.device_positions
            .iter()
            .map(|&p| self.classify_region(p, center_fraction))
            .collect()
    }

    /// CSV with one row per HAP and per device:
    /// `kind,id,x_m,y_m,z_m,cell,edge_anchor`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,id,x_m,y_m,z_m,cell,edge_anchor")?;
        for h in &self.haps {
            writeln!(
                w,
                "hap,{},{},{},{},{},{}",
                h.id, h.position[0], h.position[1], h.position[2], h.id, h.is_edge_anchor as u8
            )?;
        }
        for (k, p) in self.device_positions.iter().enumerate() {
            writeln!(
                w,
                "device,{},{},{},0,{},0",
                k, p[0], p[1], self.cell_assignment[k]
            )?;
        }
        Ok(())
    }
}
