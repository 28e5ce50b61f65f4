//! Mobile-agent platform: lifecycle state machine, life-state audit log,
//! migration and cloning over the simulated network, naming directory,
//! event notification and migration checkpoints.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::{Engine, EventKind, EventTarget, SimTime};
use crate::net::{transmission_delay, ConnectivityGraph, NodeId};
use crate::routing::{FpaPayload, IfaPayload, OaPayload, RpaPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentState {
    Creating,
    Running,
    Suspending,
    Resuming,
    Deleting,
}

impl AgentState {
    pub const ALL: [AgentState; 5] = [
        AgentState::Creating,
        AgentState::Running,
        AgentState::Suspending,
        AgentState::Resuming,
        AgentState::Deleting,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            AgentState::Creating => "creating",
            AgentState::Running => "running",
            AgentState::Suspending => "suspending",
            AgentState::Resuming => "resuming",
            AgentState::Deleting => "deleting",
        }
    }
}

impl std::str::FromStr for AgentState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "creating" => Ok(AgentState::Creating),
            "running" => Ok(AgentState::Running),
            "suspending" => Ok(AgentState::Suspending),
            "resuming" => Ok(AgentState::Resuming),
            "deleting" => Ok(AgentState::Deleting),
            _ => Err(format!("bad agent state {s}")),
        }
    }
}

/// The allowed lifecycle transition relation (8 pairs).
pub fn transition_allowed(from: AgentState, to: AgentState) -> bool {
    use AgentState::*;
    matches!(
        (from, to),
        (Creating, Running)
            | (Running, Suspending)
            | (Running, Resuming)
            | (Running, Deleting)
            | (Suspending, Running)
            | (Suspending, Deleting)
            | (Resuming, Running)
            | (Resuming, Deleting)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    DfaResident,
    Fpa,
    Rpa,
    Iva,
    Oa,
    Ifa,
}

impl AgentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AgentKind::DfaResident => "dfa",
            AgentKind::Fpa => "fpa",
            AgentKind::Rpa => "rpa",
            AgentKind::Iva => "iva",
            AgentKind::Oa => "oa",
            AgentKind::Ifa => "ifa",
        }
    }

    /// FPA, OA and IFA carry a hop budget; the others never do.
    pub fn budgeted(&self) -> bool {
        matches!(self, AgentKind::Fpa | AgentKind::Oa | AgentKind::Ifa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub kind: AgentKind,
    pub counter: u64,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.counter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentPayload {
    None,
    Fpa(FpaPayload),
    Rpa(RpaPayload),
    Oa(OaPayload),
    Ifa(IfaPayload),
    Iva,
}

impl AgentPayload {
    /// Number of state entries carried, for transfer-size accounting.
    pub fn entry_count(&self) -> usize {
        match self {
            AgentPayload::None | AgentPayload::Iva => 0,
            AgentPayload::Fpa(p) => p.visited.len(),
            AgentPayload::Rpa(p) => p.discovered_path.len(),
            AgentPayload::Oa(_) => 1,
            AgentPayload::Ifa(p) => p.trail.len() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub agent_id: AgentId,
    pub kind: AgentKind,
    pub owner: NodeId,
    pub state: AgentState,
    /// Current node; while Resuming this is the migration destination.
    pub location: NodeId,
    pub payload: AgentPayload,
    pub hop_budget: Option<u32>,
}

/// Four-tuple life-state log entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LifeLogEntry {
    pub agent_id: AgentId,
    pub state: AgentState,
    pub node: NodeId,
    pub time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationTicket {
    pub agent_id: AgentId,
    pub from: NodeId,
    pub to: NodeId,
    pub attempt: u32,
    pub depart_time: SimTime,
    pub arrive_time: SimTime,
}

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: AgentState, to: AgentState },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("nodes {from} and {to} are not adjacent")]
    NotAdjacent { from: NodeId, to: NodeId },
    #[error("agent {0} is not running")]
    NotRunning(AgentId),
    #[error("name {0} not found in directory")]
    NotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOutcome {
    Completed,
    /// Link broke mid-flight and loss modeling is enabled.
    Lost,
}

#[derive(Debug, Default)]
pub struct AgentRuntime {
    agents: BTreeMap<AgentId, AgentRecord>,
    next_counter: BTreeMap<AgentKind, u64>,
    pub lifelog: Vec<LifeLogEntry>,
    directory: BTreeMap<String, (NodeId, SimTime)>,
    checkpoints: BTreeMap<AgentId, AgentRecord>,
    pending: BTreeMap<AgentId, MigrationTicket>,
    subscriptions: BTreeMap<String, Vec<AgentId>>,
    inboxes: BTreeMap<AgentId, Vec<String>>,
    known_nodes: BTreeSet<NodeId>,
}

impl AgentRuntime {
    pub fn new() -> AgentRuntime {
        AgentRuntime::default()
    }

    pub fn register_node(&mut self, node: NodeId) {
        self.known_nodes.insert(node);
    }

    pub fn agent(&self, id: AgentId) -> Result<&AgentRecord, RuntimeError> {
        self.agents.get(&id).ok_or(RuntimeError::UnknownAgent(id))
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentRecord> {
        self.agents.values()
    }

    pub fn checkpoint_of(&self, id: AgentId) -> Option<&AgentRecord> {
        self.checkpoints.get(&id)
    }

    pub fn pending_ticket(&self, id: AgentId) -> Option<&MigrationTicket> {
        self.pending.get(&id)
    }

    fn log(&mut self, agent_id: AgentId, state: AgentState, node: NodeId, time: SimTime) {
        self.lifelog.push(LifeLogEntry {
            agent_id,
            state,
            node,
            time,
        });
    }

    /// Creates an agent in Creating state and immediately activates it to
    /// Running at the owner node.
    pub fn create_agent(
        &mut self,
        kind: AgentKind,
        owner: NodeId,
        payload: AgentPayload,
        hop_budget: Option<u32>,
        t: SimTime,
    ) -> Result<AgentId, RuntimeError> {
        if !self.known_nodes.contains(&owner) {
            return Err(RuntimeError::UnknownNode(owner));
        }
        if kind.budgeted() != hop_budget.is_some() {
            return Err(RuntimeError::InvariantViolation(format!(
                "hop_budget present iff kind is FPA/OA/IFA (kind {}, budget {:?})",
                kind.tag(),
                hop_budget
            )));
        }
        let counter = self.next_counter.entry(kind).or_insert(0);
        let agent_id = AgentId {
            kind,
            counter: *counter,
        };
        *counter += 1;
        let record = AgentRecord {
            agent_id,
            kind,
            owner,
            state: AgentState::Creating,
            location: owner,
            payload,
            hop_budget,
        };
        self.agents.insert(agent_id, record);
        self.log(agent_id, AgentState::Creating, owner, t);
        self.directory.insert(agent_id.to_string(), (owner, t));
        self.transition_state(agent_id, AgentState::Running, owner, t)?;
        Ok(agent_id)
    }

    pub fn transition_state(
        &mut self,
        id: AgentId,
        new: AgentState,
        node: NodeId,
        t: SimTime,
    ) -> Result<(), RuntimeError> {
        let record = self
            .agents
            .get_mut(&id)
            .ok_or(RuntimeError::UnknownAgent(id))?;
        if !transition_allowed(record.state, new) {
            return Err(RuntimeError::IllegalTransition {
                from: record.state,
                to: new,
            });
        }
        record.state = new;
        record.location = node;
        self.log(id, new, node, t);
        if new == AgentState::Deleting {
            self.directory.remove(&id.to_string());
            self.pending.remove(&id);
            self.checkpoints.remove(&id);
        }
        Ok(())
    }

    /// Starts a migration: checkpoint, Resuming, arrival event scheduled at
    /// depart + transmission delay of the agent's transfer size over the
    /// departure node's link.
    pub fn migrate_agent(
        &mut self,
        id: AgentId,
        to: NodeId,
        graph: &ConnectivityGraph,
        size_bytes: u64,
        attempt: u32,
        engine: &mut Engine,
    ) -> Result<MigrationTicket, RuntimeError> {
        let record = self.agent(id)?;
        if record.state != AgentState::Running {
            return Err(RuntimeError::NotRunning(id));
        }
        let from = record.location;
        if !graph.adjacent(from, to) {
            return Err(RuntimeError::NotAdjacent { from, to });
        }
        let link = graph
            .resources
            .get(&from)
            .ok_or(RuntimeError::UnknownNode(from))?;
        let delay = transmission_delay(size_bytes, link);
        let depart_time = engine.now();
        let arrive_time = depart_time.plus(delay.max(1));
        self.transition_state(id, AgentState::Resuming, to, depart_time)?;
        self.checkpoints.insert(id, self.agents[&id].clone());
        let ticket = MigrationTicket {
            agent_id: id,
            from,
            to,
            attempt,
            depart_time,
            arrive_time,
        };
        self.pending.insert(id, ticket);
        engine
            .schedule(arrive_time, EventKind::AgentArrival, EventTarget::Agent(id))
            .expect("arrival is in the future");
        Ok(ticket)
    }

    /// Finishes an in-flight migration when its arrival event fires.
    pub fn complete_arrival(
        &mut self,
        id: AgentId,
        graph: &ConnectivityGraph,
        loss_on_link_break: bool,
        t: SimTime,
    ) -> Result<ArrivalOutcome, RuntimeError> {
        let ticket = *self
            .pending
            .get(&id)
            .ok_or(RuntimeError::UnknownAgent(id))?;
        self.pending.remove(&id);
        if loss_on_link_break && !graph.adjacent(ticket.from, ticket.to) {
            self.transition_state(id, AgentState::Deleting, ticket.to, t)?;
            return Ok(ArrivalOutcome::Lost);
        }
        self.transition_state(id, AgentState::Running, ticket.to, t)?;
        self.checkpoints.remove(&id);
        self.directory.insert(id.to_string(), (ticket.to, t));
        Ok(ArrivalOutcome::Completed)
    }

    /// n fresh agents with deep-copied payloads at the original's node.
    pub fn clone_agent(
        &mut self,
        id: AgentId,
        n: usize,
        t: SimTime,
    ) -> Result<Vec<AgentId>, RuntimeError> {
        let record = self.agent(id)?;
        if record.state != AgentState::Running {
            return Err(RuntimeError::NotRunning(id));
        }
        let (kind, owner, location, payload, budget) = (
            record.kind,
            record.owner,
            record.location,
            record.payload.clone(),
            record.hop_budget,
        );
        let mut clones = Vec::with_capacity(n);
        for _ in 0..n {
            let clone_id = self.create_agent(kind, location, payload.clone(), budget, t)?;
            // owner stays with the original creator
            self.agents.get_mut(&clone_id).unwrap().owner = owner;
            clones.push(clone_id);
        }
        Ok(clones)
    }

    pub fn directory_lookup(&self, name: &str) -> Result<NodeId, RuntimeError> {
        self.directory
            .get(name)
            .map(|&(node, _)| node)
            .ok_or_else(|| RuntimeError::NotFound(name.to_string()))
    }

    pub fn subscribe(&mut self, id: AgentId, topic: &str) {
        let subs = self.subscriptions.entry(topic.to_string()).or_default();
        if !subs.contains(&id) {
            subs.push(id);
        }
    }

    /// Delivers a notification to every live subscriber of `topic`, waking
    /// Suspending subscribers first. Returns the delivery count.
    pub fn post_event(&mut self, topic: &str, payload: &str, t: SimTime) -> usize {
        let subscribers = self.subscriptions.get(topic).cloned().unwrap_or_default();
        let mut delivered = 0;
        for id in subscribers {
            let Some(record) = self.agents.get(&id) else {
                continue;
            };
            match record.state {
                AgentState::Deleting => continue,
                AgentState::Suspending => {
                    let node = record.location;
                    self.transition_state(id, AgentState::Running, node, t)
                        .expect("Suspending -> Running is allowed");
                }
                _ => {}
            }
            self.inboxes
                .entry(id)
                .or_default()
                .push(format!("{topic}:{payload}"));
            delivered += 1;
        }
        delivered
    }

    pub fn inbox(&self, id: AgentId) -> &[String] {
        self.inboxes.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn set_hop_budget(&mut self, id: AgentId, budget: u32) -> Result<(), RuntimeError> {
        let record = self
            .agents
            .get_mut(&id)
            .ok_or(RuntimeError::UnknownAgent(id))?;
        if record.hop_budget.is_none() {
            return Err(RuntimeError::InvariantViolation(format!(
                "agent {id} carries no hop budget"
            )));
        }
        record.hop_budget = Some(budget);
        Ok(())
    }

    pub fn set_payload(&mut self, id: AgentId, payload: AgentPayload) -> Result<(), RuntimeError> {
        let record = self
            .agents
            .get_mut(&id)
            .ok_or(RuntimeError::UnknownAgent(id))?;
        record.payload = payload;
        Ok(())
    }

    /// lifelog.csv: agent_id,kind,state,node,time_ms in dispatch order.
    pub fn lifelog_csv(&self) -> String {
        let mut out = String::from("agent_id,kind,state,node,time_ms\n");
        for entry in &self.lifelog {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                entry.agent_id,
                entry.agent_id.kind.tag(),
                entry.state.tag(),
                entry.node,
                entry.time.millis()
            ));
        }
        out
    }
}
