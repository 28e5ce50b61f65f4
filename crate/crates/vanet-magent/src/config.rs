//! Scenario configuration: JSON schema, documented defaults, validation
//! with all failures reported together, and exact effective-config
//! round-tripping.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::DfaPlacement;

fn d_seed() -> u64 { 1 }
fn d_duration() -> u64 { 60_000 }
fn d_rows() -> usize { 5 }
fn d_cols() -> usize { 5 }
fn d_block() -> f64 { 200.0 }
fn d_vehicle_count() -> usize { 12 }
fn d_speed_min() -> f64 { 5.0 }
fn d_speed_max() -> f64 { 15.0 }
fn d_range() -> f64 { 250.0 }
fn d_base_latency() -> u64 { 5 }
fn d_bandwidth() -> u64 { 8000 }
fn d_buffer() -> u64 { 65_536 }
fn d_load_min() -> f64 { 0.0 }
fn d_load_max() -> f64 { 0.5 }
fn d_jitter() -> u64 { 2 }
fn d_loss() -> f64 { 0.01 }
fn d_code_dfa() -> u64 { 4000 }
fn d_code_fpa() -> u64 { 2000 }
fn d_code_rpa() -> u64 { 2000 }
fn d_code_iva() -> u64 { 1000 }
fn d_code_oa() -> u64 { 1500 }
fn d_code_ifa() -> u64 { 1500 }
fn d_state_bytes() -> u64 { 100 }
fn d_hop_budget() -> u32 { 4 }
fn d_period() -> u64 { 10_000 }
fn d_table_cap() -> usize { 8 }
fn d_tick() -> u64 { 1000 }
fn d_qos_delay() -> u64 { 100_000 }
fn d_qos_jitter() -> u64 { 100_000 }
fn d_qos_loss() -> f64 { 1.0 }
fn d_alert_budget() -> u32 { 8 }

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    #[serde(default = "d_rows")]
    pub rows: usize,
    #[serde(default = "d_cols")]
    pub cols: usize,
    #[serde(default = "d_block")]
    pub block_m: f64,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg { rows: d_rows(), cols: d_cols(), block_m: d_block() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedCfg {
    #[serde(default = "d_speed_min")]
    pub min: f64,
    #[serde(default = "d_speed_max")]
    pub max: f64,
}

impl Default for SpeedCfg {
    fn default() -> Self {
        SpeedCfg { min: d_speed_min(), max: d_speed_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehiclesCfg {
    #[serde(default = "d_vehicle_count")]
    pub count: usize,
    #[serde(default)]
    pub speed_mps: SpeedCfg,
}

impl Default for VehiclesCfg {
    fn default() -> Self {
        VehiclesCfg { count: d_vehicle_count(), speed_mps: SpeedCfg::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementCfg {
    All,
    EveryKth(usize),
    List(Vec<usize>),
}

impl PlacementCfg {
    pub fn to_placement(&self) -> DfaPlacement {
        match self {
            PlacementCfg::All => DfaPlacement::All,
            PlacementCfg::EveryKth(k) => DfaPlacement::EveryKth(*k),
            PlacementCfg::List(list) => DfaPlacement::List(list.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DfaCfg {
    #[serde(default = "default_placement")]
    pub placement: PlacementCfg,
}

fn default_placement() -> PlacementCfg {
    PlacementCfg::EveryKth(4)
}

impl Default for DfaCfg {
    fn default() -> Self {
        DfaCfg { placement: default_placement() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioCfg {
    #[serde(default = "d_range")]
    pub range_m: f64,
    #[serde(default = "d_base_latency")]
    pub base_latency_ms: u64,
}

impl Default for RadioCfg {
    fn default() -> Self {
        RadioCfg { range_m: d_range(), base_latency_ms: d_base_latency() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadCfg {
    #[serde(default = "d_load_min")]
    pub min: f64,
    #[serde(default = "d_load_max")]
    pub max: f64,
}

impl Default for LoadCfg {
    fn default() -> Self {
        LoadCfg { min: d_load_min(), max: d_load_max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesCfg {
    #[serde(default = "d_bandwidth")]
    pub bandwidth_kbps: u64,
    #[serde(default = "d_buffer")]
    pub buffer_bytes: u64,
    #[serde(default)]
    pub load_fraction: LoadCfg,
    #[serde(default = "d_jitter")]
    pub jitter_ms: u64,
    #[serde(default = "d_loss")]
    pub loss_rate: f64,
}

impl Default for NodesCfg {
    fn default() -> Self {
        NodesCfg {
            bandwidth_kbps: d_bandwidth(),
            buffer_bytes: d_buffer(),
            load_fraction: LoadCfg::default(),
            jitter_ms: d_jitter(),
            loss_rate: d_loss(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeBytesCfg {
    #[serde(default = "d_code_dfa")]
    pub dfa: u64,
    #[serde(default = "d_code_fpa")]
    pub fpa: u64,
    #[serde(default = "d_code_rpa")]
    pub rpa: u64,
    #[serde(default = "d_code_iva")]
    pub iva: u64,
    #[serde(default = "d_code_oa")]
    pub oa: u64,
    #[serde(default = "d_code_ifa")]
    pub ifa: u64,
}

impl Default for CodeBytesCfg {
    fn default() -> Self {
        CodeBytesCfg {
            dfa: d_code_dfa(),
            fpa: d_code_fpa(),
            rpa: d_code_rpa(),
            iva: d_code_iva(),
            oa: d_code_oa(),
            ifa: d_code_ifa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsCfg {
    #[serde(default)]
    pub code_bytes: CodeBytesCfg,
    #[serde(default = "d_state_bytes")]
    pub state_bytes_per_entry: u64,
}

impl Default for AgentsCfg {
    fn default() -> Self {
        AgentsCfg {
            code_bytes: CodeBytesCfg::default(),
            state_bytes_per_entry: d_state_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoveryCfg {
    #[serde(default = "d_hop_budget")]
    pub hop_budget: u32,
    #[serde(default = "d_period")]
    pub period_ms: u64,
    /// 0 means unbounded.
    #[serde(default = "d_table_cap")]
    pub table_cap: usize,
}

impl Default for DiscoveryCfg {
    fn default() -> Self {
        DiscoveryCfg {
            hop_budget: d_hop_budget(),
            period_ms: d_period(),
            table_cap: d_table_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityCfg {
    #[serde(default = "d_tick")]
    pub tick_ms: u64,
}

impl Default for MobilityCfg {
    fn default() -> Self {
        MobilityCfg { tick_ms: d_tick() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosCfg {
    #[serde(default)]
    pub min_bandwidth_kbps: u64,
    #[serde(default = "d_qos_delay")]
    pub max_delay_ms: u64,
    #[serde(default = "d_qos_jitter")]
    pub max_jitter_ms: u64,
    #[serde(default = "d_qos_loss")]
    pub max_loss_rate: f64,
}

impl Default for QosCfg {
    fn default() -> Self {
        QosCfg {
            min_bandwidth_kbps: 0,
            max_delay_ms: d_qos_delay(),
            max_jitter_ms: d_qos_jitter(),
            max_loss_rate: d_qos_loss(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertCfg {
    pub time_ms: u64,
    /// Node id string like "dfa:0" or "veh:3".
    pub origin: String,
    pub category: String,
    #[serde(default)]
    pub body: String,
    #[serde(default = "d_alert_budget")]
    pub hop_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryCfg {
    pub time_ms: u64,
    /// Requesting DFA, e.g. "dfa:0".
    pub origin: String,
    pub key: String,
    #[serde(default = "d_alert_budget")]
    pub hop_budget: u32,
}

/// Where information keys live, for IFA lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoSiteCfg {
    pub dfa: u32,
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmsCfg {
    /// Flips the forward-agent branch order so the DFA check precedes the
    /// budget-exhaustion check.
    #[serde(default)]
    pub fpa_dfa_check_first: bool,
}

impl Default for AlgorithmsCfg {
    fn default() -> Self {
        AlgorithmsCfg { fpa_dfa_check_first: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigrationCfg {
    /// Route in-flight agents to Deleting when their link breaks.
    #[serde(default)]
    pub loss_on_link_break: bool,
}

impl Default for MigrationCfg {
    fn default() -> Self {
        MigrationCfg { loss_on_link_break: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCfg {
    #[serde(default = "d_bench_n")]
    pub server_count: u64,
    #[serde(default = "d_bench_q")]
    pub request_bytes: u64,
    #[serde(default = "d_bench_q")]
    pub response_bytes: u64,
    #[serde(default = "d_code_fpa")]
    pub agent_code_bytes: u64,
    #[serde(default = "d_state_bytes")]
    pub state_bytes_per_visit: u64,
    #[serde(default = "d_bench_p")]
    pub per_visit_processing_ms: u64,
    #[serde(default = "d_bench_l")]
    pub per_leg_latency_ms: u64,
    #[serde(default = "d_bench_k")]
    pub partitions: u64,
}

impl Default for BenchCfg {
    fn default() -> Self {
        BenchCfg {
            server_count: d_bench_n(),
            request_bytes: d_bench_q(),
            response_bytes: d_bench_q(),
            agent_code_bytes: d_code_fpa(),
            state_bytes_per_visit: d_state_bytes(),
            per_visit_processing_ms: d_bench_p(),
            per_leg_latency_ms: d_bench_l(),
            partitions: d_bench_k(),
        }
    }
}

fn d_bench_n() -> u64 { 4 }
fn d_bench_q() -> u64 { 500 }
fn d_bench_p() -> u64 { 5 }
fn d_bench_l() -> u64 { 10 }
fn d_bench_k() -> u64 { 2 }

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_duration")]
    pub duration_ms: u64,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub vehicles: VehiclesCfg,
    #[serde(default)]
    pub dfa: DfaCfg,
    #[serde(default)]
    pub radio: RadioCfg,
    #[serde(default)]
    pub nodes: NodesCfg,
    #[serde(default)]
    pub agents: AgentsCfg,
    #[serde(default)]
    pub discovery: DiscoveryCfg,
    #[serde(default)]
    pub mobility: MobilityCfg,
    #[serde(default)]
    pub qos: QosCfg,
    #[serde(default)]
    pub alerts: Vec<AlertCfg>,
    #[serde(default)]
    pub queries: Vec<QueryCfg>,
    #[serde(default)]
    pub info: Vec<InfoSiteCfg>,
    #[serde(default)]
    pub algorithms: AlgorithmsCfg,
    #[serde(default)]
    pub migration: MigrationCfg,
    #[serde(default)]
    pub bench: BenchCfg,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    NotFound(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioConfig {
    /// Checks every documented constraint, reporting all violations.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.grid.rows < 1 {
            errors.push("grid.rows: must be >= 1".to_string());
        }
        if self.grid.cols < 1 {
            errors.push("grid.cols: must be >= 1".to_string());
        }
        if self.grid.block_m <= 0.0 {
            errors.push("grid.block_m: must be > 0".to_string());
        }
        if self.grid.rows * self.grid.cols < 2 {
            errors.push("grid: needs at least 2 intersections".to_string());
        }
        if self.vehicles.speed_mps.min < 0.0 {
            errors.push("vehicles.speed_mps.min: must be >= 0".to_string());
        }
        if self.vehicles.speed_mps.min > self.vehicles.speed_mps.max {
            errors.push(
                "vehicles.speed_mps.min, vehicles.speed_mps.max: min exceeds max".to_string(),
            );
        }
        if let PlacementCfg::EveryKth(0) = self.dfa.placement {
            errors.push("dfa.placement.every_kth: must be >= 1".to_string());
        }
        if let PlacementCfg::List(list) = &self.dfa.placement {
            if list.is_empty() {
                errors.push("dfa.placement.list: must be non-empty".to_string());
            }
        }
        if self.radio.range_m <= 0.0 {
            errors.push("radio.range_m: must be > 0".to_string());
        }
        if self.radio.base_latency_ms < 1 {
            errors.push("radio.base_latency_ms: must be >= 1".to_string());
        }
        if self.nodes.bandwidth_kbps < 1 {
            errors.push("nodes.bandwidth_kbps: must be >= 1".to_string());
        }
        let load = &self.nodes.load_fraction;
        if !(0.0..=1.0).contains(&load.min)
            || !(0.0..=1.0).contains(&load.max)
            || load.min > load.max
        {
            errors.push(
                "nodes.load_fraction.min, nodes.load_fraction.max: need 0 <= min <= max <= 1"
                    .to_string(),
            );
        }
        if !(0.0..=1.0).contains(&self.nodes.loss_rate) {
            errors.push("nodes.loss_rate: must be in [0, 1]".to_string());
        }
        if self.discovery.hop_budget < 1 {
            errors.push("discovery.hop_budget: must be >= 1".to_string());
        }
        if self.discovery.period_ms < 1 {
            errors.push("discovery.period_ms: must be >= 1".to_string());
        }
        if self.mobility.tick_ms < 1 {
            errors.push("mobility.tick_ms: must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.qos.max_loss_rate) {
            errors.push("qos.max_loss_rate: must be in [0, 1]".to_string());
        }
        for (i, alert) in self.alerts.iter().enumerate() {
            if alert.origin.parse::<crate::net::NodeId>().is_err() {
                errors.push(format!("alerts[{i}].origin: bad node id '{}'", alert.origin));
            }
            if alert.hop_budget < 1 {
                errors.push(format!("alerts[{i}].hop_budget: must be >= 1"));
            }
        }
        for (i, query) in self.queries.iter().enumerate() {
            match query.origin.parse::<crate::net::NodeId>() {
                Ok(node) if node.is_dfa() => {}
                _ => errors.push(format!(
                    "queries[{i}].origin: must be a DFA node id, got '{}'",
                    query.origin
                )),
            }
            if query.hop_budget < 1 {
                errors.push(format!("queries[{i}].hop_budget: must be >= 1"));
            }
        }
        if self.bench.server_count < 1 {
            errors.push("bench.server_count: must be >= 1".to_string());
        } else if self.bench.partitions < 1 || self.bench.partitions > self.bench.server_count {
            errors.push("bench.partitions: must be in [1, bench.server_count]".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(errors))
        }
    }

    pub fn qos_requirement(&self) -> crate::routing::QosRequirement {
        crate::routing::QosRequirement {
            min_bandwidth_kbps: self.qos.min_bandwidth_kbps,
            max_delay_ms: self.qos.max_delay_ms,
            max_jitter_ms: self.qos.max_jitter_ms,
            max_loss_rate: self.qos.max_loss_rate,
        }
    }

    pub fn bench_task(&self) -> crate::bench::TaskSpec {
        crate::bench::TaskSpec {
            server_count: self.bench.server_count,
            request_bytes: self.bench.request_bytes,
            response_bytes: self.bench.response_bytes,
            agent_code_bytes: self.bench.agent_code_bytes,
            state_bytes_per_visit: self.bench.state_bytes_per_visit,
            per_visit_processing_ms: self.bench.per_visit_processing_ms,
            per_leg_latency_ms: self.bench.per_leg_latency_ms,
            partitions: self.bench.partitions,
        }
    }

    /// Serialized effective config; re-parsing it yields an equal config.
    pub fn to_effective_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::NotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_full_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.grid.rows, 5);
        assert_eq!(cfg.discovery.hop_budget, 4);
    }

    #[test]
    fn speed_min_over_max_names_both_keys() {
        let err = parse_config_str(
            r#"{"vehicles": {"speed_mps": {"min": 20.0, "max": 5.0}}}"#,
        )
        .unwrap_err();
        let ConfigError::Validation(errors) = err else {
            panic!("expected validation error");
        };
        assert!(errors[0].contains("vehicles.speed_mps.min"));
        assert!(errors[0].contains("vehicles.speed_mps.max"));
    }

    #[test]
    fn all_violations_reported_together() {
        let err = parse_config_str(
            r#"{"grid": {"rows": 0, "block_m": -1.0}, "discovery": {"hop_budget": 0}}"#,
        )
        .unwrap_err();
        let ConfigError::Validation(errors) = err else {
            panic!("expected validation error");
        };
        assert!(errors.len() >= 3, "{errors:?}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str(r#"{"grdi": {}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    #[test]
    fn parse_error_carries_line_info() {
        let err = parse_config_str("{\n  \"seed\": oops\n}").unwrap_err();
        let ConfigError::Parse(msg) = err else {
            panic!("expected parse error");
        };
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = parse_config_str(
            r#"{
                "seed": 99,
                "dfa": {"placement": {"every_kth": 3}},
                "alerts": [{"time_ms": 5000, "origin": "dfa:0", "category": "accident"}],
                "queries": [{"time_ms": 6000, "origin": "dfa:0", "key": "traffic"}],
                "info": [{"dfa": 1, "keys": ["traffic"]}]
            }"#,
        )
        .unwrap();
        let emitted = cfg.to_effective_json();
        let reparsed = parse_config_str(&emitted).unwrap();
        assert_eq!(cfg, reparsed);
        // and a second emission is byte-identical
        assert_eq!(emitted, reparsed.to_effective_json());
    }

    #[test]
    fn missing_file_not_found() {
        let err = parse_config(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(matches!(err, ConfigError::NotFound(_)));
    }

    #[test]
    fn bad_query_origin_rejected() {
        let err = parse_config_str(
            r#"{"queries": [{"time_ms": 0, "origin": "veh:1", "key": "x"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
    }
}
