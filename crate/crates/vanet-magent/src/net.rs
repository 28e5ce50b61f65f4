//! Radio-layer model: unit-disk connectivity snapshots over all nodes,
//! per-node link resources and transmission-delay accounting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum NodeKind {
    Dfa,
    Vehicle,
}

/// Identity of a node in the scenario: a roadside DFA site or a vehicle.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeId {
    pub kind: NodeKind,
    pub index: u32,
}

impl NodeId {
    pub fn dfa(index: u32) -> NodeId {
        NodeId {
            kind: NodeKind::Dfa,
            index,
        }
    }

    pub fn vehicle(index: u32) -> NodeId {
        NodeId {
            kind: NodeKind::Vehicle,
            index,
        }
    }

    pub fn is_dfa(&self) -> bool {
        self.kind == NodeKind::Dfa
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            NodeKind::Dfa => write!(f, "dfa:{}", self.index),
            NodeKind::Vehicle => write!(f, "veh:{}", self.index),
        }
    }
}

impl std::str::FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, index) = s.split_once(':').ok_or_else(|| format!("bad node id {s}"))?;
        let index: u32 = index.parse().map_err(|_| format!("bad node index {s}"))?;
        match kind {
            "dfa" => Ok(NodeId::dfa(index)),
            "veh" => Ok(NodeId::vehicle(index)),
            _ => Err(format!("bad node kind {s}")),
        }
    }
}

/// Instantaneous link capacity seen at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkResources {
    pub bandwidth_kbps: u64,
    pub buffer_free: u64,
    pub base_latency_ms: u64,
}

/// Static per-node attributes from which snapshots are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeProfile {
    pub bandwidth_kbps: u64,
    pub buffer_bytes: u64,
    pub base_latency_ms: u64,
    pub jitter_ms: u64,
    pub loss_rate: f64,
    pub load_min: f64,
    pub load_max: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Radio adjacency and node resources frozen at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    pub snapshot_time: SimTime,
    pub adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub resources: BTreeMap<NodeId, LinkResources>,
}

impl ConnectivityGraph {
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&node).into_iter().flatten().copied()
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|set| set.contains(&b))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    /// Nodes reachable from `start`, including `start` itself.
    pub fn reachable_from(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([start]);
        let mut frontier = vec![start];
        while let Some(node) = frontier.pop() {
            for next in self.neighbors(node) {
                if seen.insert(next) {
                    frontier.push(next);
                }
            }
        }
        seen
    }

    /// BFS hop distances from `start`.
    pub fn hop_distances(&self, start: NodeId) -> BTreeMap<NodeId, u32> {
        let mut dist = BTreeMap::from([(start, 0)]);
        let mut frontier = std::collections::VecDeque::from([start]);
        while let Some(node) = frontier.pop_front() {
            let d = dist[&node];
            for next in self.neighbors(node) {
                if !dist.contains_key(&next) {
                    dist.insert(next, d + 1);
                    frontier.push_back(next);
                }
            }
        }
        dist
    }
}

/// Unit-disk snapshot: (a, b) linked iff a != b and their Euclidean distance
/// is at most `range_m`.
pub fn connectivity_snapshot(
    positions: &BTreeMap<NodeId, (f64, f64)>,
    range_m: f64,
    resources: &BTreeMap<NodeId, LinkResources>,
    t: SimTime,
) -> ConnectivityGraph {
    let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> = positions
        .keys()
        .map(|&node| (node, BTreeSet::new()))
        .collect();
    let nodes: Vec<(NodeId, (f64, f64))> = positions.iter().map(|(&n, &p)| (n, p)).collect();
    for (i, &(a, pa)) in nodes.iter().enumerate() {
        for &(b, pb) in &nodes[i + 1..] {
            let dist = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt();
            if dist <= range_m {
                adjacency.get_mut(&a).unwrap().insert(b);
                adjacency.get_mut(&b).unwrap().insert(a);
            }
        }
    }
    ConnectivityGraph {
        snapshot_time: t,
        adjacency,
        resources: resources.clone(),
    }
}

/// base latency plus serialization time, rounded up to whole milliseconds.
/// bandwidth is in kbit/s, which is exactly bit/ms.
pub fn transmission_delay(payload_bytes: u64, link: &LinkResources) -> u64 {
    let bits = payload_bytes * 8;
    link.base_latency_ms + bits.div_ceil(link.bandwidth_kbps)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Samples per-node load deterministically from (node, time, seed).
#[derive(Debug, Clone)]
pub struct ResourceModel {
    seed: u64,
    profiles: BTreeMap<NodeId, NodeProfile>,
}

impl ResourceModel {
    pub fn new(seed: u64) -> ResourceModel {
        ResourceModel {
            seed,
            profiles: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, node: NodeId, profile: NodeProfile) {
        self.profiles.insert(node, profile);
    }

    pub fn profile(&self, node: NodeId) -> Result<&NodeProfile, NetError> {
        self.profiles.get(&node).ok_or(NetError::UnknownNode(node))
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.profiles.keys().copied()
    }

    /// Configured capacity minus a pseudo-random load fraction drawn from
    /// (node, t, seed). Repeated calls with the same arguments are identical.
    pub fn sample(&self, node: NodeId, t: SimTime) -> Result<LinkResources, NetError> {
        let profile = self.profile(node)?;
        let kind_bit = match node.kind {
            NodeKind::Dfa => 0u64,
            NodeKind::Vehicle => 1u64,
        };
        let mix = splitmix64(
            self.seed
                ^ splitmix64(kind_bit << 32 | node.index as u64)
                ^ splitmix64(t.millis().wrapping_mul(0x9e37_79b9)),
        );
        let unit = (mix >> 11) as f64 / (1u64 << 53) as f64;
        let load = profile.load_min + unit * (profile.load_max - profile.load_min);
        Ok(LinkResources {
            bandwidth_kbps: ((profile.bandwidth_kbps as f64) * (1.0 - load)).round() as u64,
            buffer_free: ((profile.buffer_bytes as f64) * (1.0 - load)).round() as u64,
            base_latency_ms: profile.base_latency_ms,
        })
    }
}
