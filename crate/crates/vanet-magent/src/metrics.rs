//! Scenario metrics, aggregated exclusively from the trace log so every
//! reported number is recomputable from trace.jsonl alone.

use std::collections::BTreeSet;

use serde_json::{Map, Value};

use crate::engine::TraceRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// DFA pairs with at least one delivered path over reachable DFA pairs.
    pub discovery_success_ratio: f64,
    pub mean_path_delay_ms: f64,
    pub max_path_delay_ms: u64,
    pub mean_path_jitter_ms: f64,
    pub alert_coverage_ratio: f64,
    pub mean_alert_latency_ms: f64,
    pub query_answer_ratio: f64,
    pub mean_query_latency_ms: f64,
    pub total_agent_bytes: u64,
}

fn ratio(numer: u64, denom: u64) -> f64 {
    if denom == 0 {
        1.0
    } else {
        numer as f64 / denom as f64
    }
}

fn mean(sum: u64, count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}

impl MetricsSummary {
    pub fn from_trace(trace: &[TraceRecord]) -> MetricsSummary {
        let mut reachable_pairs: BTreeSet<(String, String)> = BTreeSet::new();
        let mut delivered_pairs: BTreeSet<(String, String)> = BTreeSet::new();
        let mut path_delay_sum = 0u64;
        let mut path_jitter_sum = 0u64;
        let mut path_count = 0u64;
        let mut max_path_delay = 0u64;
        let mut alert_reachable = 0u64;
        let mut alert_delivered = 0u64;
        let mut alert_latency_sum = 0u64;
        let mut queries_issued = 0u64;
        let mut queries_answered = 0u64;
        let mut query_latency_sum = 0u64;
        let mut agent_bytes = 0u64;

        for rec in trace {
            match rec.category.as_str() {
                "reachability" => {
                    let origin = rec.get_str("origin").unwrap_or_default().to_string();
                    for target in rec
                        .get_str("targets")
                        .unwrap_or_default()
                        .split(';')
                        .filter(|s| !s.is_empty())
                    {
                        reachable_pairs.insert((origin.clone(), target.to_string()));
                    }
                }
                "path_delivered" => {
                    let owner = rec.get_str("owner").unwrap_or_default().to_string();
                    let dst = rec.get_str("dst").unwrap_or_default().to_string();
                    delivered_pairs.insert((owner, dst));
                    let delay = rec.get_u64("est_delay_ms").unwrap_or(0);
                    path_delay_sum += delay;
                    max_path_delay = max_path_delay.max(delay);
                    path_jitter_sum += rec.get_u64("jitter_ms").unwrap_or(0);
                    path_count += 1;
                }
                "alert_raised" => {
                    alert_reachable += rec.get_u64("reachable").unwrap_or(0);
                }
                "alert_delivered" => {
                    alert_delivered += 1;
                    alert_latency_sum += rec.get_u64("latency_ms").unwrap_or(0);
                }
                "query_issued" => queries_issued += 1,
                "query_answered" => {
                    queries_answered += 1;
                    query_latency_sum += rec.get_u64("latency_ms").unwrap_or(0);
                }
                "migration" => {
                    agent_bytes += rec.get_u64("bytes").unwrap_or(0);
                }
                _ => {}
            }
        }

        // only count delivered pairs that were also observed reachable, so
        // the ratio stays in [0, 1]
        let delivered_reachable = delivered_pairs
            .iter()
            .filter(|p| reachable_pairs.contains(*p))
            .count() as u64;

        MetricsSummary {
            discovery_success_ratio: ratio(delivered_reachable, reachable_pairs.len() as u64),
            mean_path_delay_ms: mean(path_delay_sum, path_count),
            max_path_delay_ms: max_path_delay,
            mean_path_jitter_ms: mean(path_jitter_sum, path_count),
            alert_coverage_ratio: ratio(alert_delivered, alert_reachable),
            mean_alert_latency_ms: mean(alert_latency_sum, alert_delivered),
            query_answer_ratio: ratio(queries_answered, queries_issued),
            mean_query_latency_ms: mean(query_latency_sum, queries_answered),
            total_agent_bytes: agent_bytes,
        }
    }

    /// Flat key/value JSON, stable key order.
    pub fn to_json(&self) -> String {
        let mut map = Map::new();
        map.insert("alert_coverage_ratio".into(), self.alert_coverage_ratio.into());
        map.insert("discovery_success_ratio".into(), self.discovery_success_ratio.into());
        map.insert("max_path_delay_ms".into(), self.max_path_delay_ms.into());
        map.insert("mean_alert_latency_ms".into(), self.mean_alert_latency_ms.into());
        map.insert("mean_path_delay_ms".into(), self.mean_path_delay_ms.into());
        map.insert("mean_path_jitter_ms".into(), self.mean_path_jitter_ms.into());
        map.insert("mean_query_latency_ms".into(), self.mean_query_latency_ms.into());
        map.insert("query_answer_ratio".into(), self.query_answer_ratio.into());
        map.insert("total_agent_bytes".into(), self.total_agent_bytes.into());
        serde_json::to_string_pretty(&Value::Object(map)).expect("metrics serialize")
    }
}
