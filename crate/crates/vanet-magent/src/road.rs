//! Geometric road network (grid of intersections and street segments) and
//! vehicle movement over it.

use thiserror::Error;

const GEOM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: usize,
    pub b: usize,
    pub length_m: f64,
}

impl Segment {
    /// Endpoint opposite to `from`.
    pub fn other(&self, from: usize) -> usize {
        if from == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub intersections: Vec<(f64, f64)>,
    pub segments: Vec<Segment>,
    pub dfa_sites: Vec<usize>,
    /// Segment indices incident to each intersection, ascending.
    incident: Vec<Vec<usize>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RoadError {
    #[error("bad config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DfaPlacement {
    All,
    EveryKth(usize),
    List(Vec<usize>),
}

impl RoadNetwork {
    /// Validates invariants and builds the incidence index.
    pub fn from_parts(
        intersections: Vec<(f64, f64)>,
        pairs: Vec<(usize, usize)>,
        dfa_sites: Vec<usize>,
    ) -> Result<RoadNetwork, RoadError> {
        if pairs.is_empty() {
            return Err(RoadError::BadConfig("no segments".into()));
        }
        if dfa_sites.is_empty() {
            return Err(RoadError::BadConfig("empty DFA site set".into()));
        }
        let mut segments = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            if a >= intersections.len() || b >= intersections.len() || a == b {
                return Err(RoadError::BadConfig(format!("bad segment ({a},{b})")));
            }
            let (xa, ya) = intersections[a];
            let (xb, yb) = intersections[b];
            let length_m = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            segments.push(Segment { a, b, length_m });
        }
        for &site in &dfa_sites {
            if site >= intersections.len() {
                return Err(RoadError::BadConfig(format!("DFA site {site} out of range")));
            }
        }
        let mut incident = vec![Vec::new(); intersections.len()];
        for (i, seg) in segments.iter().enumerate() {
            incident[seg.a].push(i);
            incident[seg.b].push(i);
        }
        let net = RoadNetwork {
            intersections,
            segments,
            dfa_sites,
            incident,
        };
        if !net.is_connected() {
            return Err(RoadError::BadConfig("segment graph is disconnected".into()));
        }
        Ok(net)
    }

    pub fn incident_segments(&self, intersection: usize) -> &[usize] {
        &self.incident[intersection]
    }

    fn is_connected(&self) -> bool {
        let n = self.intersections.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &seg in &self.incident[node] {
                let next = self.segments[seg].other(node);
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|v| v)
    }

    pub fn intersection_xy(&self, intersection: usize) -> (f64, f64) {
        self.intersections[intersection]
    }
}

/// rows x cols Manhattan grid with `block_m` street blocks.
pub fn build_road_network(
    rows: usize,
    cols: usize,
    block_m: f64,
    placement: &DfaPlacement,
) -> Result<RoadNetwork, RoadError> {
    if rows < 1 || cols < 1 {
        return Err(RoadError::BadConfig("grid dimensions must be >= 1".into()));
    }
    if block_m <= 0.0 {
        return Err(RoadError::BadConfig("block length must be > 0".into()));
    }
    let mut intersections = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            intersections.push((c as f64 * block_m, r as f64 * block_m));
        }
    }
    let at = |r: usize, c: usize| r * cols + c;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                pairs.push((at(r, c), at(r, c + 1)));
            }
            if r + 1 < rows {
                pairs.push((at(r, c), at(r + 1, c)));
            }
        }
    }
    let count = intersections.len();
    let dfa_sites: Vec<usize> = match placement {
        DfaPlacement::All => (0..count).collect(),
        DfaPlacement::EveryKth(k) => {
            if *k == 0 {
                return Err(RoadError::BadConfig("every_kth must be >= 1".into()));
            }
            (0..count).step_by(*k).collect()
        }
        DfaPlacement::List(list) => list.clone(),
    };
    RoadNetwork::from_parts(intersections, pairs, dfa_sites)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    /// Moving toward the segment's first endpoint (offset decreasing).
    ToA,
    /// Moving toward the segment's second endpoint (offset increasing).
    ToB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveStatus {
    Moving,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub segment: usize,
    pub offset_m: f64,
    pub speed_mps: f64,
    pub heading: Heading,
}

impl Vehicle {
    pub fn status(&self) -> MoveStatus {
        if self.speed_mps == 0.0 {
            MoveStatus::Stationary
        } else {
            MoveStatus::Moving
        }
    }
}

/// Position of a vehicle in meters: linear interpolation along its segment.
pub fn vehicle_xy(v: &Vehicle, net: &RoadNetwork) -> (f64, f64) {
    let seg = net.segments[v.segment];
    let (xa, ya) = net.intersections[seg.a];
    let (xb, yb) = net.intersections[seg.b];
    let frac = v.offset_m / seg.length_m;
    (xa + (xb - xa) * frac, ya + (yb - ya) * frac)
}

/// Moves a vehicle by speed * dt meters along its heading. Crossing an
/// intersection picks the next segment via `choose` (an index into the
/// candidate list: incident segments minus the arrival segment when degree
/// exceeds 1, so U-turns happen only at dead ends). Leftover distance
/// carries over onto the new segment.
pub fn advance_vehicle(
    v: &Vehicle,
    dt_ms: u64,
    net: &RoadNetwork,
    choose: &mut dyn FnMut(usize) -> usize,
) -> Vehicle {
    let mut out = *v;
    if out.speed_mps == 0.0 || dt_ms == 0 {
        return out;
    }
    let mut remaining = out.speed_mps * dt_ms as f64 / 1000.0;
    while remaining > GEOM_EPS {
        let seg = net.segments[out.segment];
        let to_end = match out.heading {
            Heading::ToB => seg.length_m - out.offset_m,
            Heading::ToA => out.offset_m,
        };
        if remaining < to_end - GEOM_EPS {
            out.offset_m = match out.heading {
                Heading::ToB => out.offset_m + remaining,
                Heading::ToA => out.offset_m - remaining,
            };
            return out;
        }
        remaining -= to_end;
        let reached = match out.heading {
            Heading::ToB => seg.b,
            Heading::ToA => seg.a,
        };
        let incident = net.incident_segments(reached);
        let candidates: Vec<usize> = if incident.len() > 1 {
            incident.iter().copied().filter(|&s| s != out.segment).collect()
        } else {
            incident.to_vec()
        };
        let next = candidates[choose(candidates.len())];
        out.segment = next;
        let next_seg = net.segments[next];
        if next_seg.a == reached {
            out.offset_m = 0.0;
            out.heading = Heading::ToB;
        } else {
            out.offset_m = next_seg.length_m;
            out.heading = Heading::ToA;
        }
    }
    out
}
