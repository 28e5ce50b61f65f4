//! Scenario orchestration: builds the world from a config, drives the
//! event loop (mobility ticks, discovery rounds, scripted alerts and
//! queries), and emits the output artifacts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::agent::{
    AgentId, AgentKind, AgentPayload, AgentRuntime, AgentState, ArrivalOutcome,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::engine::{Engine, Event, EventKind, EventTarget, SimTime};
use crate::metrics::MetricsSummary;
use crate::net::{
    connectivity_snapshot, ConnectivityGraph, LinkResources, NodeId, NodeProfile, ResourceModel,
};
use crate::road::{advance_vehicle, build_road_network, vehicle_xy, Heading, RoadNetwork, Vehicle};
use crate::routing::{
    fpa_decision, ifa_choose_next, nearest_dfa, path_record_from_visited, rpa_reverse_next,
    update_routing_table, FpaAction, FpaPayload, IfaPayload, InfoQuery, OaPayload, PathRecord,
    QosRequirement, RoutingTable, RpaPayload,
};

const NODE_CACHE_CAP: usize = 16;
const MIGRATION_RETRIES: u32 = 3;
const MIGRATION_RETRY_SPACING_MS: u64 = 500;
const STALE_PERIODS: u64 = 3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("world construction failed: {0}")]
    Build(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct World {
    pub cfg: ScenarioConfig,
    pub engine: Engine,
    pub runtime: AgentRuntime,
    pub road: RoadNetwork,
    pub vehicles: BTreeMap<u32, Vehicle>,
    pub resources: ResourceModel,
    pub graph: ConnectivityGraph,
    /// DFA node ids, ascending; dfas[i] sits at road.dfa_sites[i].
    pub dfas: Vec<NodeId>,
    pub tables: BTreeMap<NodeId, RoutingTable>,
    pub queries: Vec<InfoQuery>,
    seen_alerts: BTreeMap<NodeId, BTreeSet<u64>>,
    node_caches: BTreeMap<NodeId, VecDeque<Vec<NodeId>>>,
    info_keys: BTreeMap<NodeId, BTreeSet<String>>,
    retry_counts: BTreeMap<AgentId, u32>,
    last_tick: SimTime,
    qos: QosRequirement,
}

impl World {
    pub fn build(cfg: ScenarioConfig) -> Result<World, ScenarioError> {
        cfg.validate()?;
        let mut engine = Engine::new(cfg.seed);
        let road = build_road_network(
            cfg.grid.rows,
            cfg.grid.cols,
            cfg.grid.block_m,
            &cfg.dfa.placement.to_placement(),
        )
        .map_err(|e| ScenarioError::Build(e.to_string()))?;

        let profile = NodeProfile {
            bandwidth_kbps: cfg.nodes.bandwidth_kbps,
            buffer_bytes: cfg.nodes.buffer_bytes,
            base_latency_ms: cfg.radio.base_latency_ms,
            jitter_ms: cfg.nodes.jitter_ms,
            loss_rate: cfg.nodes.loss_rate,
            load_min: cfg.nodes.load_fraction.min,
            load_max: cfg.nodes.load_fraction.max,
        };
        let mut resources = ResourceModel::new(cfg.seed);
        let mut runtime = AgentRuntime::new();

        let dfas: Vec<NodeId> = (0..road.dfa_sites.len())
            .map(|i| NodeId::dfa(i as u32))
            .collect();
        for &dfa in &dfas {
            resources.register(dfa, profile);
            runtime.register_node(dfa);
        }

        let mut vehicles = BTreeMap::new();
        for i in 0..cfg.vehicles.count as u32 {
            let node = NodeId::vehicle(i);
            resources.register(node, profile);
            runtime.register_node(node);
            let segment = engine
                .rng_uniform(0, road.segments.len() as i64 - 1)
                .expect("segment range") as usize;
            let length = road.segments[segment].length_m;
            let offset_m = engine.rng_fraction() * length;
            let speed_span = cfg.vehicles.speed_mps.max - cfg.vehicles.speed_mps.min;
            let speed_mps = cfg.vehicles.speed_mps.min + engine.rng_fraction() * speed_span;
            vehicles.insert(
                i,
                Vehicle {
                    segment,
                    offset_m,
                    speed_mps,
                    heading: Heading::ToB,
                },
            );
        }

        let mut tables = BTreeMap::new();
        for &dfa in &dfas {
            tables.insert(dfa, RoutingTable::new(dfa));
        }

        let mut info_keys: BTreeMap<NodeId, BTreeSet<String>> = BTreeMap::new();
        for site in &cfg.info {
            info_keys
                .entry(NodeId::dfa(site.dfa))
                .or_default()
                .extend(site.keys.iter().cloned());
        }

        let queries = cfg
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| InfoQuery {
                query_id: i as u64,
                requester: q.origin.parse().expect("validated"),
                key: q.key.clone(),
                issued_at: SimTime(q.time_ms),
                answer: None,
            })
            .collect();

        let qos = cfg.qos_requirement();
        let mut world = World {
            engine,
            runtime,
            road,
            vehicles,
            resources,
            graph: ConnectivityGraph {
                snapshot_time: SimTime::ZERO,
                adjacency: BTreeMap::new(),
                resources: BTreeMap::new(),
            },
            dfas,
            tables,
            queries,
            seen_alerts: BTreeMap::new(),
            node_caches: BTreeMap::new(),
            info_keys,
            retry_counts: BTreeMap::new(),
            last_tick: SimTime::ZERO,
            qos,
            cfg,
        };
        world.refresh_snapshot();
        Ok(world)
    }

    fn positions(&self) -> BTreeMap<NodeId, (f64, f64)> {
        let mut positions = BTreeMap::new();
        for (i, &dfa) in self.dfas.iter().enumerate() {
            positions.insert(dfa, self.road.intersection_xy(self.road.dfa_sites[i]));
        }
        for (&i, vehicle) in &self.vehicles {
            positions.insert(NodeId::vehicle(i), vehicle_xy(vehicle, &self.road));
        }
        positions
    }

    fn refresh_snapshot(&mut self) {
        let t = self.engine.now();
        let positions = self.positions();
        let sampled: BTreeMap<NodeId, LinkResources> = positions
            .keys()
            .map(|&n| (n, self.resources.sample(n, t).expect("registered node")))
            .collect();
        self.graph = connectivity_snapshot(&positions, self.cfg.radio.range_m, &sampled, t);
    }

    fn agent_size(&self, id: AgentId) -> u64 {
        let record = self.runtime.agent(id).expect("live agent");
        let code = match record.kind {
            AgentKind::DfaResident => self.cfg.agents.code_bytes.dfa,
            AgentKind::Fpa => self.cfg.agents.code_bytes.fpa,
            AgentKind::Rpa => self.cfg.agents.code_bytes.rpa,
            AgentKind::Iva => self.cfg.agents.code_bytes.iva,
            AgentKind::Oa => self.cfg.agents.code_bytes.oa,
            AgentKind::Ifa => self.cfg.agents.code_bytes.ifa,
        };
        code + self.cfg.agents.state_bytes_per_entry * record.payload.entry_count() as u64
    }

    /// Migration with Queue-Manager retry: an absent link is retried up to
    /// 3 times at 500 ms spacing, then the agent is deleted.
    fn try_migrate(&mut self, id: AgentId, to: NodeId) {
        let record = self.runtime.agent(id).expect("live agent");
        let here = record.location;
        let kind = record.kind;
        let attempt = self.retry_counts.get(&id).copied().unwrap_or(0) + 1;
        if self.graph.adjacent(here, to) {
            let bytes = self.agent_size(id);
            let ticket = self
                .runtime
                .migrate_agent(id, to, &self.graph, bytes, attempt, &mut self.engine)
                .expect("adjacency checked");
            self.retry_counts.remove(&id);
            self.engine.record(
                "migration",
                vec![
                    ("agent".into(), Value::from(id.to_string())),
                    ("from".into(), Value::from(here.to_string())),
                    ("to".into(), Value::from(to.to_string())),
                    ("bytes".into(), Value::from(bytes)),
                    ("arrive_ms".into(), Value::from(ticket.arrive_time.millis())),
                    ("attempt".into(), Value::from(attempt)),
                ],
            );
        } else if attempt <= MIGRATION_RETRIES {
            self.retry_counts.insert(id, attempt);
            self.engine.record(
                "migration_retry",
                vec![
                    ("agent".into(), Value::from(id.to_string())),
                    ("to".into(), Value::from(to.to_string())),
                    ("attempt".into(), Value::from(attempt)),
                ],
            );
            self.engine
                .schedule(
                    self.engine.now().plus(MIGRATION_RETRY_SPACING_MS),
                    EventKind::MigrationRetry { to },
                    EventTarget::Agent(id),
                )
                .expect("future event");
        } else {
            self.retry_counts.remove(&id);
            self.engine.record(
                "route_broken",
                vec![
                    ("agent".into(), Value::from(id.to_string())),
                    ("node".into(), Value::from(here.to_string())),
                    ("to".into(), Value::from(to.to_string())),
                ],
            );
            if kind == AgentKind::Ifa {
                if let AgentPayload::Ifa(p) = &self.runtime.agent(id).unwrap().payload {
                    if !p.returning {
                        self.trace_query_unanswered(p.query_id, "route-broken");
                    }
                }
            }
            self.runtime
                .transition_state(id, AgentState::Deleting, here, self.engine.now())
                .expect("running agent can delete");
        }
    }

    fn trace_query_unanswered(&mut self, query_id: u64, reason: &str) {
        self.engine.record(
            "query_unanswered",
            vec![
                ("query_id".into(), Value::from(query_id)),
                ("reason".into(), Value::from(reason)),
            ],
        );
    }

    fn node_attrs(&self) -> impl Fn(NodeId) -> (f64, u64) + '_ {
        |node| {
            let p = self.resources.profile(node).expect("registered node");
            (p.loss_rate, p.jitter_ms)
        }
    }

    /// One resident agent per DFA and one IVA per vehicle.
    fn spawn_static_agents(&mut self) {
        for dfa in self.dfas.clone() {
            self.runtime
                .create_agent(AgentKind::DfaResident, dfa, AgentPayload::None, None, SimTime::ZERO)
                .expect("dfa resident agent");
        }
        let indices: Vec<u32> = self.vehicles.keys().copied().collect();
        for i in indices {
            let id = self
                .runtime
                .create_agent(
                    AgentKind::Iva,
                    NodeId::vehicle(i),
                    AgentPayload::Iva,
                    None,
                    SimTime::ZERO,
                )
                .expect("iva agent");
            self.runtime.subscribe(id, &format!("alerts@veh:{i}"));
        }
    }

    /// Schedules the recurring and scripted events, then drains the queue
    /// up to (but excluding) duration_ms.
    pub fn run(&mut self) {
        let duration = self.cfg.duration_ms;
        if duration > 0 {
            self.spawn_static_agents();
        }
        self.engine
            .schedule(SimTime::ZERO, EventKind::MobilityTick, EventTarget::None)
            .expect("t=0");
        self.engine
            .schedule(SimTime::ZERO, EventKind::DiscoveryRound, EventTarget::None)
            .expect("t=0");
        for (i, alert) in self.cfg.alerts.clone().iter().enumerate() {
            let origin: NodeId = alert.origin.parse().expect("validated");
            self.engine
                .schedule(
                    SimTime(alert.time_ms),
                    EventKind::AlertRaised { alert_index: i },
                    EventTarget::Node(origin),
                )
                .expect("t >= 0");
        }
        for (i, query) in self.cfg.queries.clone().iter().enumerate() {
            let origin: NodeId = query.origin.parse().expect("validated");
            self.engine
                .schedule(
                    SimTime(query.time_ms),
                    EventKind::QueryIssued { query_index: i },
                    EventTarget::Node(origin),
                )
                .expect("t >= 0");
        }
        while self
            .engine
            .peek_time()
            .is_some_and(|t| t.millis() < duration)
        {
            let event = self.engine.step().expect("peeked");
            self.handle(event);
        }
        let (scheduled, dispatched, remaining) = self.engine.counts();
        self.engine.record(
            "end",
            vec![
                ("scheduled".into(), Value::from(scheduled)),
                ("dispatched".into(), Value::from(dispatched)),
                ("remaining".into(), Value::from(remaining)),
            ],
        );
    }

    fn handle(&mut self, event: Event) {
        match event.kind {
            EventKind::MobilityTick => self.on_mobility_tick(),
            EventKind::DiscoveryRound => self.on_discovery_round(),
            EventKind::AgentArrival => {
                if let EventTarget::Agent(id) = event.target {
                    self.on_agent_arrival(id);
                }
            }
            EventKind::MigrationRetry { to } => {
                if let EventTarget::Agent(id) = event.target {
                    if self.runtime.agent(id).map(|r| r.state) == Ok(AgentState::Running) {
                        self.try_migrate(id, to);
                    }
                }
            }
            EventKind::AlertRaised { alert_index } => {
                if let EventTarget::Node(origin) = event.target {
                    self.on_alert_raised(alert_index, origin);
                }
            }
            EventKind::QueryIssued { query_index } => self.on_query_issued(query_index),
            EventKind::TaskStep { .. } => {}
        }
    }

    fn on_mobility_tick(&mut self) {
        let now = self.engine.now();
        let dt = now.millis() - self.last_tick.millis();
        self.last_tick = now;
        if dt > 0 {
            let indices: Vec<u32> = self.vehicles.keys().copied().collect();
            for i in indices {
                let vehicle = self.vehicles[&i];
                let road = &self.road;
                let engine = &mut self.engine;
                let moved = advance_vehicle(&vehicle, dt, road, &mut |n| {
                    engine.rng_uniform(0, n as i64 - 1).expect("candidates") as usize
                });
                self.vehicles.insert(i, moved);
            }
        }
        self.refresh_snapshot();

        // IVA sensor reports to the nearest reachable DFA
        let indices: Vec<u32> = self.vehicles.keys().copied().collect();
        for i in indices {
            let node = NodeId::vehicle(i);
            match nearest_dfa(&self.graph, node) {
                Some(dfa) => {
                    let vehicle = self.vehicles[&i];
                    let (x, y) = vehicle_xy(&vehicle, &self.road);
                    self.engine.record(
                        "iva_report",
                        vec![
                            ("vehicle".into(), Value::from(node.to_string())),
                            ("dfa".into(), Value::from(dfa.to_string())),
                            (
                                "status".into(),
                                Value::from(if vehicle.speed_mps == 0.0 {
                                    "stationary"
                                } else {
                                    "moving"
                                }),
                            ),
                            ("x".into(), Value::from((x * 1000.0).round() / 1000.0)),
                            ("y".into(), Value::from((y * 1000.0).round() / 1000.0)),
                        ],
                    );
                }
                None => {
                    self.engine.record(
                        "iva_unreachable",
                        vec![("vehicle".into(), Value::from(node.to_string()))],
                    );
                }
            }
        }

        let next = self.engine.now().plus(self.cfg.mobility.tick_ms);
        if next.millis() < self.cfg.duration_ms {
            self.engine
                .schedule(next, EventKind::MobilityTick, EventTarget::None)
                .expect("future event");
        }
    }

    fn on_discovery_round(&mut self) {
        let now = self.engine.now();
        let stale_cutoff = now
            .millis()
            .checked_sub(STALE_PERIODS * self.cfg.discovery.period_ms);
        if let Some(cutoff) = stale_cutoff {
            for table in self.tables.values_mut() {
                table.evict_stale(SimTime(cutoff));
            }
        }
        let dfas = self.dfas.clone();
        for dfa in dfas {
            let reachable = self.graph.reachable_from(dfa);
            let targets: Vec<String> = reachable
                .iter()
                .filter(|n| n.is_dfa() && **n != dfa)
                .map(|n| n.to_string())
                .collect();
            self.engine.record(
                "reachability",
                vec![
                    ("origin".into(), Value::from(dfa.to_string())),
                    ("targets".into(), Value::from(targets.join(";"))),
                ],
            );
            self.launch_discovery(dfa);
        }
        let next = self.engine.now().plus(self.cfg.discovery.period_ms);
        if next.millis() < self.cfg.duration_ms {
            self.engine
                .schedule(next, EventKind::DiscoveryRound, EventTarget::None)
                .expect("future event");
        }
    }

    /// One FPA per current neighbor, each carrying the origin's sampled
    /// resources and the full hop budget.
    pub fn launch_discovery(&mut self, dfa: NodeId) {
        let neighbors: Vec<NodeId> = self.graph.neighbors(dfa).collect();
        if neighbors.is_empty() {
            self.engine.record(
                "no_neighbors",
                vec![("origin".into(), Value::from(dfa.to_string()))],
            );
            return;
        }
        let origin_res = self.graph.resources[&dfa];
        let budget = self.cfg.discovery.hop_budget;
        let now = self.engine.now();
        for neighbor in neighbors {
            let payload = AgentPayload::Fpa(FpaPayload {
                origin_dfa: dfa,
                visited: vec![(dfa, origin_res)],
            });
            let id = self
                .runtime
                .create_agent(AgentKind::Fpa, dfa, payload, Some(budget), now)
                .expect("dfa registered");
            self.engine.record(
                "fpa_spawn",
                vec![
                    ("agent".into(), Value::from(id.to_string())),
                    ("origin".into(), Value::from(dfa.to_string())),
                ],
            );
            self.try_migrate(id, neighbor);
        }
    }

    fn on_agent_arrival(&mut self, id: AgentId) {
        let Ok(record) = self.runtime.agent(id) else {
            return;
        };
        if record.state != AgentState::Resuming {
            return;
        }
        let outcome = self
            .runtime
            .complete_arrival(
                id,
                &self.graph,
                self.cfg.migration.loss_on_link_break,
                self.engine.now(),
            )
            .expect("pending migration");
        if outcome == ArrivalOutcome::Lost {
            self.engine.record(
                "migration_lost",
                vec![("agent".into(), Value::from(id.to_string()))],
            );
            return;
        }
        match self.runtime.agent(id).expect("arrived").kind {
            AgentKind::Fpa => self.fpa_step(id),
            AgentKind::Rpa => self.rpa_step(id),
            AgentKind::Oa => self.oa_step(id),
            AgentKind::Ifa => self.ifa_arrived(id),
            AgentKind::DfaResident | AgentKind::Iva => {}
        }
    }

    /// Algorithm 1 at the FPA's current node.
    fn fpa_step(&mut self, id: AgentId) {
        let now = self.engine.now();
        let record = self.runtime.agent(id).expect("live agent").clone();
        let here = record.location;
        let budget = record.hop_budget.expect("fpa carries budget");
        let AgentPayload::Fpa(mut payload) = record.payload else {
            panic!("fpa payload");
        };
        payload
            .visited
            .push((here, self.graph.resources[&here]));
        let action = fpa_decision(
            budget,
            here,
            &payload,
            &self.graph,
            self.cfg.algorithms.fpa_dfa_check_first,
        );
        match action {
            FpaAction::Delete => {
                self.runtime
                    .set_payload(id, AgentPayload::Fpa(payload))
                    .unwrap();
                self.runtime
                    .transition_state(id, AgentState::Deleting, here, now)
                    .expect("running agent");
            }
            FpaAction::DeliverAndSpawnRpa => {
                self.engine.record(
                    "dfa_info",
                    vec![
                        ("dfa".into(), Value::from(here.to_string())),
                        ("origin".into(), Value::from(payload.origin_dfa.to_string())),
                        ("hops".into(), Value::from(payload.visited.len() as u64 - 1)),
                    ],
                );
                let rpa_payload = AgentPayload::Rpa(RpaPayload {
                    discovered_path: payload.visited.iter().map(|(n, _)| *n).collect(),
                    resources: payload.visited.iter().map(|(_, r)| *r).collect(),
                });
                self.runtime
                    .set_payload(id, AgentPayload::Fpa(payload))
                    .unwrap();
                self.runtime
                    .transition_state(id, AgentState::Deleting, here, now)
                    .expect("running agent");
                let rpa = self
                    .runtime
                    .create_agent(AgentKind::Rpa, here, rpa_payload, None, now)
                    .expect("node registered");
                self.rpa_step(rpa);
            }
            FpaAction::Forward {
                neighbors,
                new_budget,
            } => {
                self.runtime
                    .set_payload(id, AgentPayload::Fpa(payload))
                    .unwrap();
                self.runtime.set_hop_budget(id, new_budget).unwrap();
                let clones = self
                    .runtime
                    .clone_agent(id, neighbors.len(), now)
                    .expect("running agent");
                for (&clone, &neighbor) in clones.iter().zip(neighbors.iter()) {
                    let origin = match &self.runtime.agent(clone).unwrap().payload {
                        AgentPayload::Fpa(p) => p.origin_dfa,
                        _ => unreachable!(),
                    };
                    self.engine.record(
                        "fpa_spawn",
                        vec![
                            ("agent".into(), Value::from(clone.to_string())),
                            ("origin".into(), Value::from(origin.to_string())),
                        ],
                    );
                    self.try_migrate(clone, neighbor);
                }
                self.runtime
                    .transition_state(id, AgentState::Deleting, here, now)
                    .expect("running agent");
            }
        }
    }

    /// Algorithm 2 at the RPA's current node.
    fn rpa_step(&mut self, id: AgentId) {
        let now = self.engine.now();
        let record = self.runtime.agent(id).expect("live agent").clone();
        let here = record.location;
        let AgentPayload::Rpa(payload) = record.payload else {
            panic!("rpa payload");
        };
        let origin = payload.discovered_path[0];
        if here == origin {
            let visited: Vec<(NodeId, LinkResources)> = payload
                .discovered_path
                .iter()
                .copied()
                .zip(payload.resources.iter().copied())
                .collect();
            let rec = path_record_from_visited(&visited, &self.node_attrs(), now);
            self.trace_path_delivered(&rec);
            let cap = self.cfg.discovery.table_cap;
            let table = self.tables.get_mut(&origin).expect("dfa table");
            update_routing_table(table, rec, cap).expect("path starts at owner");
            self.runtime
                .transition_state(id, AgentState::Deleting, here, now)
                .expect("running agent");
            return;
        }
        // intermediate node: cache the path info locally, then travel on
        let cache = self.node_caches.entry(here).or_default();
        cache.push_back(payload.discovered_path.clone());
        if cache.len() > NODE_CACHE_CAP {
            cache.pop_front();
        }
        self.engine.record(
            "node_cache",
            vec![
                ("node".into(), Value::from(here.to_string())),
                (
                    "sequence".into(),
                    Value::from(join_nodes(&payload.discovered_path)),
                ),
            ],
        );
        let next = rpa_reverse_next(&payload.discovered_path, here).expect("not at origin");
        self.try_migrate(id, next);
    }

    fn trace_path_delivered(&mut self, rec: &PathRecord) {
        let bandwidths: Vec<String> = rec
            .node_resources
            .iter()
            .map(|r| r.bandwidth_kbps.to_string())
            .collect();
        let latencies: Vec<String> = rec
            .node_resources
            .iter()
            .map(|r| r.base_latency_ms.to_string())
            .collect();
        self.engine.record(
            "path_delivered",
            vec![
                ("owner".into(), Value::from(rec.node_sequence[0].to_string())),
                ("dst".into(), Value::from(rec.dst_dfa.to_string())),
                ("sequence".into(), Value::from(join_nodes(&rec.node_sequence))),
                ("hop_count".into(), Value::from(rec.hop_count as u64)),
                ("bottleneck_kbps".into(), Value::from(rec.bottleneck_kbps)),
                ("est_delay_ms".into(), Value::from(rec.est_delay_ms)),
                ("jitter_ms".into(), Value::from(rec.jitter_ms)),
                ("worst_loss_rate".into(), Value::from(rec.worst_loss_rate)),
                ("bandwidths".into(), Value::from(bandwidths.join(";"))),
                ("latencies".into(), Value::from(latencies.join(";"))),
            ],
        );
    }

    fn on_alert_raised(&mut self, alert_index: usize, origin: NodeId) {
        let alert = self.cfg.alerts[alert_index].clone();
        let now = self.engine.now();
        let alert_id = alert_index as u64;
        let reachable = self.graph.reachable_from(origin).len() as u64;
        self.engine.record(
            "alert_raised",
            vec![
                ("alert_id".into(), Value::from(alert_id)),
                ("origin".into(), Value::from(origin.to_string())),
                ("category".into(), Value::from(alert.category.clone())),
                ("reachable".into(), Value::from(reachable)),
            ],
        );
        let payload = AgentPayload::Oa(OaPayload {
            alert_id,
            category: alert.category,
            issued_at: now,
            body: alert.body,
        });
        let id = self
            .runtime
            .create_agent(AgentKind::Oa, origin, payload, Some(alert.hop_budget), now)
            .expect("origin registered");
        self.oa_step(id);
    }

    /// Dissemination with per-node duplicate suppression.
    fn oa_step(&mut self, id: AgentId) {
        let now = self.engine.now();
        let record = self.runtime.agent(id).expect("live agent").clone();
        let here = record.location;
        let budget = record.hop_budget.expect("oa carries budget");
        let AgentPayload::Oa(payload) = record.payload else {
            panic!("oa payload");
        };
        let seen = self.seen_alerts.entry(here).or_default();
        if seen.contains(&payload.alert_id) {
            self.engine.record(
                "alert_suppressed",
                vec![
                    ("alert_id".into(), Value::from(payload.alert_id)),
                    ("node".into(), Value::from(here.to_string())),
                ],
            );
            self.runtime
                .transition_state(id, AgentState::Deleting, here, now)
                .expect("running agent");
            return;
        }
        seen.insert(payload.alert_id);
        self.engine.record(
            "alert_delivered",
            vec![
                ("alert_id".into(), Value::from(payload.alert_id)),
                ("node".into(), Value::from(here.to_string())),
                (
                    "latency_ms".into(),
                    Value::from(now.millis() - payload.issued_at.millis()),
                ),
            ],
        );
        if here.kind == crate::net::NodeKind::Vehicle {
            self.runtime
                .post_event(&format!("alerts@veh:{}", here.index), &payload.body, now);
        }
        if budget > 1 {
            self.runtime.set_hop_budget(id, budget - 1).unwrap();
            let neighbors: Vec<NodeId> = self.graph.neighbors(here).collect();
            let clones = self
                .runtime
                .clone_agent(id, neighbors.len(), now)
                .expect("running agent");
            for (&clone, &neighbor) in clones.iter().zip(neighbors.iter()) {
                self.try_migrate(clone, neighbor);
            }
        }
        self.runtime
            .transition_state(id, AgentState::Deleting, here, now)
            .expect("running agent");
    }

    fn on_query_issued(&mut self, query_index: usize) {
        let now = self.engine.now();
        let query = self.queries[query_index].clone();
        self.engine.record(
            "query_issued",
            vec![
                ("query_id".into(), Value::from(query.query_id)),
                ("origin".into(), Value::from(query.requester.to_string())),
                ("key".into(), Value::from(query.key.clone())),
            ],
        );
        let budget = self.cfg.queries[query_index].hop_budget;
        let payload = AgentPayload::Ifa(IfaPayload {
            query_id: query.query_id,
            requester: query.requester,
            key: query.key,
            issued_at: now,
            visited_dfas: BTreeSet::new(),
            trail: vec![query.requester],
            route: Vec::new(),
            returning: false,
        });
        let id = self
            .runtime
            .create_agent(AgentKind::Ifa, query.requester, payload, Some(budget), now)
            .expect("requester registered");
        self.ifa_step(id);
    }

    /// IFA decision at a DFA: answer locally, or walk to the
    /// smallest-index unvisited DFA reachable under the query QoS bounds.
    fn ifa_step(&mut self, id: AgentId) {
        let now = self.engine.now();
        let record = self.runtime.agent(id).expect("live agent").clone();
        let here = record.location;
        let budget = record.hop_budget.expect("ifa carries budget");
        let AgentPayload::Ifa(mut payload) = record.payload else {
            panic!("ifa payload");
        };
        payload.visited_dfas.insert(here);
        let key_here = self
            .info_keys
            .get(&here)
            .is_some_and(|keys| keys.contains(&payload.key));
        if key_here {
            let qid = payload.query_id as usize;
            self.queries[qid].answer = Some(format!("{}@{}", payload.key, here));
            self.engine.record(
                "query_answered",
                vec![
                    ("query_id".into(), Value::from(payload.query_id)),
                    ("dfa".into(), Value::from(here.to_string())),
                    (
                        "latency_ms".into(),
                        Value::from(now.millis() - payload.issued_at.millis()),
                    ),
                ],
            );
            payload.returning = true;
            if here == payload.requester {
                self.runtime
                    .set_payload(id, AgentPayload::Ifa(payload))
                    .unwrap();
                self.runtime
                    .transition_state(id, AgentState::Deleting, here, now)
                    .expect("running agent");
                return;
            }
            // rpa-style reverse travel along the walked trail
            let mut back: Vec<NodeId> = payload.trail.clone();
            back.reverse();
            payload.route = back[1..].to_vec();
            let first = payload.route[0];
            self.runtime
                .set_payload(id, AgentPayload::Ifa(payload))
                .unwrap();
            self.try_migrate(id, first);
            return;
        }
        if budget <= 1 {
            self.trace_query_unanswered(payload.query_id, "budget-exhausted");
            self.runtime
                .set_payload(id, AgentPayload::Ifa(payload))
                .unwrap();
            self.runtime
                .transition_state(id, AgentState::Deleting, here, now)
                .expect("running agent");
            return;
        }
        let table = self.tables.get(&here).expect("dfa table");
        match ifa_choose_next(table, &self.dfas, &payload.visited_dfas, &self.qos) {
            Some((_, rec)) => {
                payload.route = rec.node_sequence[1..].to_vec();
                let first = payload.route[0];
                self.runtime
                    .set_payload(id, AgentPayload::Ifa(payload))
                    .unwrap();
                self.runtime.set_hop_budget(id, budget - 1).unwrap();
                self.try_migrate(id, first);
            }
            None => {
                self.trace_query_unanswered(payload.query_id, "no-feasible-path");
                self.runtime
                    .set_payload(id, AgentPayload::Ifa(payload))
                    .unwrap();
                self.runtime
                    .transition_state(id, AgentState::Deleting, here, now)
                    .expect("running agent");
            }
        }
    }

    fn ifa_arrived(&mut self, id: AgentId) {
        let now = self.engine.now();
        let record = self.runtime.agent(id).expect("live agent").clone();
        let here = record.location;
        let AgentPayload::Ifa(mut payload) = record.payload else {
            panic!("ifa payload");
        };
        debug_assert_eq!(payload.route.first(), Some(&here));
        payload.route.remove(0);
        payload.trail.push(here);
        if let Some(&next) = payload.route.first() {
            self.runtime
                .set_payload(id, AgentPayload::Ifa(payload))
                .unwrap();
            self.try_migrate(id, next);
            return;
        }
        if payload.returning {
            // back at the requester with the answer
            self.runtime
                .set_payload(id, AgentPayload::Ifa(payload))
                .unwrap();
            self.runtime
                .transition_state(id, AgentState::Deleting, here, now)
                .expect("running agent");
            return;
        }
        self.runtime
            .set_payload(id, AgentPayload::Ifa(payload))
            .unwrap();
        self.ifa_step(id);
    }

    // ---- output artifacts ----

    pub fn routes_csv(&self) -> String {
        let mut out = String::from(
            "owner_dfa,dst_dfa,node_sequence,hop_count,bottleneck_kbps,est_delay_ms,worst_loss_rate,discovered_at_ms\n",
        );
        for table in self.tables.values() {
            for (dst, records) in &table.entries {
                for rec in records {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        table.owner_dfa,
                        dst,
                        join_nodes(&rec.node_sequence),
                        rec.hop_count,
                        rec.bottleneck_kbps,
                        rec.est_delay_ms,
                        rec.worst_loss_rate,
                        rec.discovered_at.millis()
                    ));
                }
            }
        }
        out
    }

    pub fn paths_per_pair_csv(&self) -> String {
        let mut out = String::from("owner_dfa,dst_dfa,path_count\n");
        for table in self.tables.values() {
            for (dst, records) in &table.entries {
                out.push_str(&format!(
                    "{},{},{}\n",
                    table.owner_dfa,
                    dst,
                    records.len()
                ));
            }
        }
        out
    }

    pub fn coverage_over_time_csv(&self) -> String {
        let mut out = String::from("time_ms,alert_id,covered_count\n");
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for rec in &self.engine.trace {
            if rec.category == "alert_delivered" {
                let alert_id = rec.get_u64("alert_id").unwrap_or(0);
                let count = counts.entry(alert_id).or_insert(0);
                *count += 1;
                out.push_str(&format!("{},{},{}\n", rec.time.millis(), alert_id, count));
            }
        }
        out
    }

    pub fn metrics(&self) -> MetricsSummary {
        MetricsSummary::from_trace(&self.engine.trace)
    }

    pub fn write_outputs(&self, out_dir: &Path) -> Result<(), ScenarioError> {
        std::fs::create_dir_all(out_dir)?;
        let trace_file = std::fs::File::create(out_dir.join("trace.jsonl"))?;
        self.engine.write_trace(std::io::BufWriter::new(trace_file))?;
        std::fs::write(out_dir.join("lifelog.csv"), self.runtime.lifelog_csv())?;
        std::fs::write(out_dir.join("routes.csv"), self.routes_csv())?;
        std::fs::write(out_dir.join("metrics.json"), self.metrics().to_json())?;
        std::fs::write(
            out_dir.join("coverage_over_time.csv"),
            self.coverage_over_time_csv(),
        )?;
        std::fs::write(out_dir.join("paths_per_pair.csv"), self.paths_per_pair_csv())?;
        Ok(())
    }
}

pub fn join_nodes(nodes: &[NodeId]) -> String {
    nodes
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Builds the world, runs the scenario to its duration and writes all
/// artifact files into `out_dir`.
pub fn run_scenario(
    cfg: ScenarioConfig,
    out_dir: &Path,
) -> Result<MetricsSummary, ScenarioError> {
    let mut world = World::build(cfg)?;
    world.run();
    world.write_outputs(out_dir)?;
    Ok(world.metrics())
}
