//! QoS-aware multi-path route discovery: forward/reverse portable agent
//! payloads, per-DFA multi-path routing tables, constrained path selection,
//! and the pure decision logic for FPA/RPA/OA/IFA steps.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::SimTime;
use crate::net::{ConnectivityGraph, LinkResources, NodeId};

/// State a forward portable agent carries while exploring.
#[derive(Debug, Clone, PartialEq)]
pub struct FpaPayload {
    pub origin_dfa: NodeId,
    /// Ordered (node, sampled resources), starting at the origin. Simple
    /// path: no repeated node.
    pub visited: Vec<(NodeId, LinkResources)>,
}

impl FpaPayload {
    pub fn contains(&self, node: NodeId) -> bool {
        self.visited.iter().any(|(n, _)| *n == node)
    }
}

/// State a reverse portable agent carries on the return trip.
#[derive(Debug, Clone, PartialEq)]
pub struct RpaPayload {
    /// Origin DFA first, destination DFA last.
    pub discovered_path: Vec<NodeId>,
    pub resources: Vec<LinkResources>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OaPayload {
    pub alert_id: u64,
    pub category: String,
    pub issued_at: SimTime,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfaPayload {
    pub query_id: u64,
    pub requester: NodeId,
    pub key: String,
    pub issued_at: SimTime,
    pub visited_dfas: BTreeSet<NodeId>,
    /// Full node trail walked so far, requester first.
    pub trail: Vec<NodeId>,
    /// Remaining hop itinerary of the leg in progress.
    pub route: Vec<NodeId>,
    pub returning: bool,
}

/// A discovered DFA-to-DFA path with its QoS annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub dst_dfa: NodeId,
    pub node_sequence: Vec<NodeId>,
    pub hop_count: usize,
    pub bottleneck_kbps: u64,
    pub min_buffer: u64,
    pub est_delay_ms: u64,
    pub jitter_ms: u64,
    pub worst_loss_rate: f64,
    pub discovered_at: SimTime,
    /// Per-node resources as sampled by the FPA, for recomputation.
    pub node_resources: Vec<LinkResources>,
}

/// Builds a PathRecord from an FPA's visited list. Per-hop delay is the
/// receiving node's base latency; jitter and loss come from the configured
/// per-node attributes supplied by `attrs` (loss_rate, jitter_ms).
pub fn path_record_from_visited(
    visited: &[(NodeId, LinkResources)],
    attrs: &dyn Fn(NodeId) -> (f64, u64),
    discovered_at: SimTime,
) -> PathRecord {
    assert!(visited.len() >= 2, "a path needs at least two nodes");
    let node_sequence: Vec<NodeId> = visited.iter().map(|(n, _)| *n).collect();
    let node_resources: Vec<LinkResources> = visited.iter().map(|(_, r)| *r).collect();
    let bottleneck_kbps = node_resources.iter().map(|r| r.bandwidth_kbps).min().unwrap();
    let min_buffer = node_resources.iter().map(|r| r.buffer_free).min().unwrap();
    let est_delay_ms = node_resources[1..].iter().map(|r| r.base_latency_ms).sum();
    let mut worst_loss_rate = 0.0f64;
    let mut jitter_ms = 0u64;
    for &node in &node_sequence {
        let (loss, jitter) = attrs(node);
        worst_loss_rate = worst_loss_rate.max(loss);
        jitter_ms += jitter;
    }
    PathRecord {
        dst_dfa: *node_sequence.last().unwrap(),
        hop_count: node_sequence.len() - 1,
        node_sequence,
        bottleneck_kbps,
        min_buffer,
        est_delay_ms,
        jitter_ms,
        worst_loss_rate,
        discovered_at,
        node_resources,
    }
}

/// Multi-path table owned by one DFA.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    pub owner_dfa: NodeId,
    pub entries: BTreeMap<NodeId, Vec<PathRecord>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum RoutingError {
    #[error("record path starts at {got}, table owner is {owner}")]
    WrongOwner { owner: NodeId, got: NodeId },
}

impl RoutingTable {
    pub fn new(owner_dfa: NodeId) -> RoutingTable {
        RoutingTable {
            owner_dfa,
            entries: BTreeMap::new(),
        }
    }

    pub fn record_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    /// Drops records older than `cutoff`.
    pub fn evict_stale(&mut self, cutoff: SimTime) {
        for records in self.entries.values_mut() {
            records.retain(|r| r.discovered_at >= cutoff);
        }
        self.entries.retain(|_, records| !records.is_empty());
    }
}

/// Inserts a discovered path. An identical node_sequence refreshes the
/// existing record instead of duplicating it. When `cap` is nonzero the
/// per-destination list is bounded: the record with the smallest bottleneck
/// (ties: older discovered_at) is evicted.
pub fn update_routing_table(
    table: &mut RoutingTable,
    rec: PathRecord,
    cap: usize,
) -> Result<(), RoutingError> {
    let first = rec.node_sequence[0];
    if first != table.owner_dfa {
        return Err(RoutingError::WrongOwner {
            owner: table.owner_dfa,
            got: first,
        });
    }
    let records = table.entries.entry(rec.dst_dfa).or_default();
    if let Some(existing) = records
        .iter_mut()
        .find(|r| r.node_sequence == rec.node_sequence)
    {
        *existing = rec;
        return Ok(());
    }
    records.push(rec);
    if cap > 0 && records.len() > cap {
        let weakest = records
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.bottleneck_kbps, a.discovered_at).cmp(&(b.bottleneck_kbps, b.discovered_at))
            })
            .map(|(i, _)| i)
            .unwrap();
        records.remove(weakest);
    }
    Ok(())
}

/// The four-bound service requirement vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QosRequirement {
    pub min_bandwidth_kbps: u64,
    pub max_delay_ms: u64,
    pub max_jitter_ms: u64,
    pub max_loss_rate: f64,
}

impl QosRequirement {
    pub fn satisfied_by(&self, rec: &PathRecord) -> bool {
        rec.bottleneck_kbps >= self.min_bandwidth_kbps
            && rec.est_delay_ms <= self.max_delay_ms
            && rec.jitter_ms <= self.max_jitter_ms
            && rec.worst_loss_rate <= self.max_loss_rate
    }
}

/// Best feasible path to `dst`: maximal bottleneck, ties broken by smaller
/// hop count then lexicographically smaller node sequence.
pub fn select_qos_path<'a>(
    table: &'a RoutingTable,
    dst: NodeId,
    req: &QosRequirement,
) -> Option<&'a PathRecord> {
    table
        .entries
        .get(&dst)?
        .iter()
        .filter(|r| req.satisfied_by(r))
        .min_by(|a, b| {
            (
                std::cmp::Reverse(a.bottleneck_kbps),
                a.hop_count,
                &a.node_sequence,
            )
                .cmp(&(
                    std::cmp::Reverse(b.bottleneck_kbps),
                    b.hop_count,
                    &b.node_sequence,
                ))
        })
}

/// Outcome of evaluating Algorithm 1 at an FPA's current node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FpaAction {
    /// Budget exhausted or dead end: the agent dies with no other effect.
    Delete,
    /// Non-origin DFA reached: deliver collected info, spawn the RPA, die.
    DeliverAndSpawnRpa,
    /// Forward a clone (with the decremented budget) to each listed
    /// neighbor, then die.
    Forward { neighbors: Vec<NodeId>, new_budget: u32 },
}

/// Algorithm 1 branch order. By default the budget-1 check precedes the DFA
/// check, so a budget-1 agent dies even on a destination DFA;
/// `dfa_check_first` flips that order.
pub fn fpa_decision(
    budget: u32,
    here: NodeId,
    payload: &FpaPayload,
    graph: &ConnectivityGraph,
    dfa_check_first: bool,
) -> FpaAction {
    let at_destination_dfa = here.is_dfa() && here != payload.origin_dfa;
    if dfa_check_first && at_destination_dfa {
        return FpaAction::DeliverAndSpawnRpa;
    }
    if budget == 1 {
        return FpaAction::Delete;
    }
    if at_destination_dfa {
        return FpaAction::DeliverAndSpawnRpa;
    }
    let new_budget = budget - 1;
    let neighbors: Vec<NodeId> = graph
        .neighbors(here)
        .filter(|&n| !payload.contains(n))
        .collect();
    if neighbors.is_empty() {
        FpaAction::Delete
    } else {
        FpaAction::Forward {
            neighbors,
            new_budget,
        }
    }
}

/// Previous node on the discovered path, or None when `here` is the origin.
pub fn rpa_reverse_next(path: &[NodeId], here: NodeId) -> Option<NodeId> {
    let idx = path.iter().position(|&n| n == here)?;
    if idx == 0 {
        None
    } else {
        Some(path[idx - 1])
    }
}

/// Nearest DFA by hop distance in the snapshot (ties: smaller DFA index).
pub fn nearest_dfa(graph: &ConnectivityGraph, from: NodeId) -> Option<NodeId> {
    let dist = graph.hop_distances(from);
    dist.iter()
        .filter(|(n, _)| n.is_dfa())
        .min_by_key(|(n, d)| (**d, n.index))
        .map(|(n, _)| *n)
}

/// Next DFA for an IFA walk: the smallest-index unvisited DFA for which the
/// local routing table holds a feasible path.
pub fn ifa_choose_next<'a>(
    table: &'a RoutingTable,
    all_dfas: &[NodeId],
    visited: &BTreeSet<NodeId>,
    req: &QosRequirement,
) -> Option<(NodeId, &'a PathRecord)> {
    for &dfa in all_dfas {
        if dfa == table.owner_dfa || visited.contains(&dfa) {
            continue;
        }
        if let Some(rec) = select_qos_path(table, dfa, req) {
            return Some((dfa, rec));
        }
    }
    None
}

/// Snapshot of one vehicle's sensors delivered to a DFA.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleStatus {
    pub vehicle: NodeId,
    pub moving: bool,
    pub position: (f64, f64),
    pub sampled_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertMessage {
    pub alert_id: u64,
    pub category: String,
    pub origin: NodeId,
    pub issued_at: SimTime,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoQuery {
    pub query_id: u64,
    pub requester: NodeId,
    pub key: String,
    pub issued_at: SimTime,
    pub answer: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::connectivity_snapshot;

    fn res(bw: u64) -> LinkResources {
        LinkResources {
            bandwidth_kbps: bw,
            buffer_free: 1000,
            base_latency_ms: 5,
        }
    }

    fn attrs(_: NodeId) -> (f64, u64) {
        (0.01, 2)
    }

    fn rec(seq: Vec<NodeId>, bottleneck: u64, at: u64) -> PathRecord {
        let visited: Vec<(NodeId, LinkResources)> = seq
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, res(if i == 0 { bottleneck } else { bottleneck + 100 })))
            .collect();
        path_record_from_visited(&visited, &attrs, SimTime(at))
    }

    #[test]
    fn path_record_aggregates() {
        let visited = vec![
            (NodeId::dfa(0), res(8000)),
            (NodeId::vehicle(1), res(3000)),
            (NodeId::dfa(1), res(5000)),
        ];
        let r = path_record_from_visited(&visited, &attrs, SimTime(10));
        assert_eq!(r.dst_dfa, NodeId::dfa(1));
        assert_eq!(r.hop_count, 2);
        assert_eq!(r.bottleneck_kbps, 3000);
        assert_eq!(r.est_delay_ms, 10);
        assert_eq!(r.jitter_ms, 6);
        assert!((r.worst_loss_rate - 0.01).abs() < 1e-12);
    }

    #[test]
    fn update_empty_table() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        let r = rec(vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::dfa(1)], 2000, 0);
        update_routing_table(&mut table, r, 8).unwrap();
        assert_eq!(table.record_count(), 1);
    }

    #[test]
    fn rediscovery_refreshes_in_place() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        let seq = vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::dfa(1)];
        update_routing_table(&mut table, rec(seq.clone(), 2000, 0), 8).unwrap();
        update_routing_table(&mut table, rec(seq, 4000, 50), 8).unwrap();
        assert_eq!(table.record_count(), 1);
        let stored = &table.entries[&NodeId::dfa(1)][0];
        assert_eq!(stored.bottleneck_kbps, 4000);
        assert_eq!(stored.discovered_at, SimTime(50));
    }

    #[test]
    fn cap_evicts_weakest_bottleneck() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        // 8 distinct paths with bottlenecks 1000..8000
        for i in 0..8u32 {
            let seq = vec![NodeId::dfa(0), NodeId::vehicle(i), NodeId::dfa(1)];
            update_routing_table(&mut table, rec(seq, 1000 * (i as u64 + 1), i as u64), 8).unwrap();
        }
        // 9th path stronger than the current minimum evicts it
        let seq = vec![NodeId::dfa(0), NodeId::vehicle(20), NodeId::dfa(1)];
        update_routing_table(&mut table, rec(seq, 9000, 9), 8).unwrap();
        let records = &table.entries[&NodeId::dfa(1)];
        assert_eq!(records.len(), 8);
        // the sort-by-bottleneck oracle over the 9 candidates keeps the top 8
        let bottlenecks: BTreeSet<u64> = records.iter().map(|r| r.bottleneck_kbps).collect();
        assert!(!bottlenecks.contains(&1000));
        assert!(bottlenecks.contains(&9000));
    }

    #[test]
    fn zero_cap_is_unbounded() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        for i in 0..30u32 {
            let seq = vec![NodeId::dfa(0), NodeId::vehicle(i), NodeId::dfa(1)];
            update_routing_table(&mut table, rec(seq, 1000, i as u64), 0).unwrap();
        }
        assert_eq!(table.record_count(), 30);
    }

    #[test]
    fn wrong_owner_rejected() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        let r = rec(vec![NodeId::dfa(2), NodeId::vehicle(1), NodeId::dfa(1)], 2000, 0);
        assert!(matches!(
            update_routing_table(&mut table, r, 8),
            Err(RoutingError::WrongOwner { .. })
        ));
    }

    fn req(bw: u64, delay: u64) -> QosRequirement {
        QosRequirement {
            min_bandwidth_kbps: bw,
            max_delay_ms: delay,
            max_jitter_ms: 1000,
            max_loss_rate: 1.0,
        }
    }

    #[test]
    fn select_empty_table_none() {
        let table = RoutingTable::new(NodeId::dfa(0));
        assert!(select_qos_path(&table, NodeId::dfa(1), &req(0, 1000)).is_none());
    }

    #[test]
    fn select_single_feasible() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        let r = rec(vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::dfa(1)], 2000, 0);
        update_routing_table(&mut table, r.clone(), 8).unwrap();
        assert_eq!(select_qos_path(&table, NodeId::dfa(1), &req(0, 1000)), Some(&r));
        assert!(select_qos_path(&table, NodeId::dfa(1), &req(90_000, 1000)).is_none());
    }

    #[test]
    fn select_matches_brute_force() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        let seqs = [
            vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::dfa(1)],
            vec![NodeId::dfa(0), NodeId::vehicle(2), NodeId::dfa(1)],
            vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::vehicle(2), NodeId::dfa(1)],
            vec![NodeId::dfa(0), NodeId::vehicle(3), NodeId::dfa(1)],
            vec![NodeId::dfa(0), NodeId::vehicle(4), NodeId::vehicle(5), NodeId::dfa(1)],
            vec![NodeId::dfa(0), NodeId::vehicle(6), NodeId::dfa(1)],
        ];
        let bottlenecks = [3000u64, 5000, 5000, 1000, 5000, 2000];
        for (seq, bn) in seqs.iter().zip(bottlenecks) {
            update_routing_table(&mut table, rec(seq.clone(), bn, 0), 0).unwrap();
        }
        let requirement = req(2000, 1000);
        let got = select_qos_path(&table, NodeId::dfa(1), &requirement).unwrap();
        // brute-force filter + argmax with the documented tie order
        let mut feasible: Vec<&PathRecord> = table.entries[&NodeId::dfa(1)]
            .iter()
            .filter(|r| requirement.satisfied_by(r))
            .collect();
        feasible.sort_by(|a, b| {
            (std::cmp::Reverse(a.bottleneck_kbps), a.hop_count, &a.node_sequence).cmp(&(
                std::cmp::Reverse(b.bottleneck_kbps),
                b.hop_count,
                &b.node_sequence,
            ))
        });
        assert_eq!(got, feasible[0]);
        // the winner is the 2-hop 5000 kbps path via the smaller vehicle id
        assert_eq!(got.node_sequence[1], NodeId::vehicle(2));
    }

    fn line_graph(nodes: &[NodeId]) -> ConnectivityGraph {
        let positions: BTreeMap<NodeId, (f64, f64)> = nodes
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, (i as f64 * 100.0, 0.0)))
            .collect();
        let resources = positions.keys().map(|&n| (n, res(8000))).collect();
        connectivity_snapshot(&positions, 150.0, &resources, SimTime(0))
    }

    #[test]
    fn fpa_budget_one_dies_even_at_dfa() {
        let nodes = [NodeId::dfa(0), NodeId::vehicle(0), NodeId::dfa(1)];
        let graph = line_graph(&nodes);
        let payload = FpaPayload {
            origin_dfa: NodeId::dfa(0),
            visited: vec![
                (NodeId::dfa(0), res(8000)),
                (NodeId::vehicle(0), res(8000)),
                (NodeId::dfa(1), res(8000)),
            ],
        };
        assert_eq!(
            fpa_decision(1, NodeId::dfa(1), &payload, &graph, false),
            FpaAction::Delete
        );
        // flipped ordering delivers instead
        assert_eq!(
            fpa_decision(1, NodeId::dfa(1), &payload, &graph, true),
            FpaAction::DeliverAndSpawnRpa
        );
    }

    #[test]
    fn fpa_delivers_at_dfa_with_budget() {
        let nodes = [NodeId::dfa(0), NodeId::vehicle(0), NodeId::dfa(1)];
        let graph = line_graph(&nodes);
        let payload = FpaPayload {
            origin_dfa: NodeId::dfa(0),
            visited: vec![
                (NodeId::dfa(0), res(8000)),
                (NodeId::vehicle(0), res(8000)),
                (NodeId::dfa(1), res(8000)),
            ],
        };
        assert_eq!(
            fpa_decision(4, NodeId::dfa(1), &payload, &graph, false),
            FpaAction::DeliverAndSpawnRpa
        );
    }

    #[test]
    fn fpa_forwards_to_unvisited_neighbors() {
        // star: vehicle 1 adjacent to A(visited), B, C
        let positions = BTreeMap::from([
            (NodeId::vehicle(0), (0.0, 0.0)),
            (NodeId::vehicle(1), (100.0, 0.0)),
            (NodeId::vehicle(2), (200.0, 0.0)),
            (NodeId::vehicle(3), (100.0, 100.0)),
        ]);
        let resources = positions.keys().map(|&n| (n, res(8000))).collect();
        let graph = connectivity_snapshot(&positions, 110.0, &resources, SimTime(0));
        let payload = FpaPayload {
            origin_dfa: NodeId::dfa(0),
            visited: vec![
                (NodeId::vehicle(0), res(8000)),
                (NodeId::vehicle(1), res(8000)),
            ],
        };
        let action = fpa_decision(3, NodeId::vehicle(1), &payload, &graph, false);
        assert_eq!(
            action,
            FpaAction::Forward {
                neighbors: vec![NodeId::vehicle(2), NodeId::vehicle(3)],
                new_budget: 2
            }
        );
    }

    #[test]
    fn fpa_dead_end_dies() {
        let nodes = [NodeId::dfa(0), NodeId::vehicle(0)];
        let graph = line_graph(&nodes);
        let payload = FpaPayload {
            origin_dfa: NodeId::dfa(0),
            visited: vec![
                (NodeId::dfa(0), res(8000)),
                (NodeId::vehicle(0), res(8000)),
            ],
        };
        assert_eq!(
            fpa_decision(5, NodeId::vehicle(0), &payload, &graph, false),
            FpaAction::Delete
        );
    }

    #[test]
    fn rpa_reverse_walk() {
        let path = vec![NodeId::dfa(0), NodeId::vehicle(1), NodeId::vehicle(2), NodeId::dfa(1)];
        assert_eq!(rpa_reverse_next(&path, NodeId::dfa(1)), Some(NodeId::vehicle(2)));
        assert_eq!(rpa_reverse_next(&path, NodeId::vehicle(2)), Some(NodeId::vehicle(1)));
        assert_eq!(rpa_reverse_next(&path, NodeId::vehicle(1)), Some(NodeId::dfa(0)));
        assert_eq!(rpa_reverse_next(&path, NodeId::dfa(0)), None);
    }

    #[test]
    fn nearest_dfa_ties_to_smaller_index() {
        let nodes = [NodeId::dfa(1), NodeId::vehicle(0), NodeId::dfa(0)];
        let graph = line_graph(&nodes);
        assert_eq!(nearest_dfa(&graph, NodeId::vehicle(0)), Some(NodeId::dfa(0)));
    }

    #[test]
    fn nearest_dfa_unreachable() {
        let positions = BTreeMap::from([
            (NodeId::vehicle(0), (0.0, 0.0)),
            (NodeId::dfa(0), (5000.0, 0.0)),
        ]);
        let resources = positions.keys().map(|&n| (n, res(8000))).collect();
        let graph = connectivity_snapshot(&positions, 250.0, &resources, SimTime(0));
        assert_eq!(nearest_dfa(&graph, NodeId::vehicle(0)), None);
    }

    #[test]
    fn ifa_picks_smallest_feasible_unvisited() {
        let mut table = RoutingTable::new(NodeId::dfa(0));
        for dst in [1u32, 2, 3] {
            let seq = vec![NodeId::dfa(0), NodeId::vehicle(dst), NodeId::dfa(dst)];
            update_routing_table(&mut table, rec(seq, 3000, 0), 8).unwrap();
        }
        let all = vec![NodeId::dfa(0), NodeId::dfa(1), NodeId::dfa(2), NodeId::dfa(3)];
        let visited = BTreeSet::from([NodeId::dfa(1)]);
        let (next, _) = ifa_choose_next(&table, &all, &visited, &req(0, 1000)).unwrap();
        assert_eq!(next, NodeId::dfa(2));
    }
}
