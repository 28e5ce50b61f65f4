//! Client-server vs. mobile-agent dispatch strategies over a parameterized
//! multi-server retrieval task, measured as latency, traffic and message
//! count. Each strategy has a closed form and an independent event-driven
//! execution; the two must agree exactly.

use thiserror::Error;

use crate::engine::{Engine, EventKind, EventTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSpec {
    pub server_count: u64,
    pub request_bytes: u64,
    pub response_bytes: u64,
    pub agent_code_bytes: u64,
    pub state_bytes_per_visit: u64,
    pub per_visit_processing_ms: u64,
    pub per_leg_latency_ms: u64,
    pub partitions: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.server_count < 1 {
            return Err(BenchError::BadTask("server_count must be >= 1".into()));
        }
        if self.partitions < 1 || self.partitions > self.server_count {
            return Err(BenchError::BadTask(format!(
                "partitions must be in [1, {}]",
                self.server_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    SeqCs,
    SeqMa,
    ParCs,
    ParMa,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::SeqCs, Strategy::SeqMa, Strategy::ParCs, Strategy::ParMa];

    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::SeqCs => "seq-cs",
            Strategy::SeqMa => "seq-ma",
            Strategy::ParCs => "par-cs",
            Strategy::ParMa => "par-ma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub total_latency_ms: u64,
    pub total_bytes: u64,
    pub message_count: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("bad task: {0}")]
    BadTask(String),
}

/// Server itinerary split into `k` contiguous blocks, as equal as possible
/// (the first n mod k blocks are one larger).
pub fn partition_blocks(n: u64, k: u64) -> Vec<u64> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|i| base + u64::from(i < extra)).collect()
}

fn seq_ma_cost(block: u64, task: &TaskSpec) -> (u64, u64, u64) {
    // legs 0..=block, leg i carries code + i * state bytes
    let bytes = (block + 1) * task.agent_code_bytes
        + task.state_bytes_per_visit * block * (block + 1) / 2;
    let latency = (block + 1) * task.per_leg_latency_ms + block * task.per_visit_processing_ms;
    (latency, bytes, block + 1)
}

/// Closed-form cost of one strategy.
pub fn run_strategy(strategy: Strategy, task: &TaskSpec) -> Result<StrategyResult, BenchError> {
    task.validate()?;
    let n = task.server_count;
    let (total_latency_ms, total_bytes, message_count) = match strategy {
        Strategy::SeqCs => (
            n * (2 * task.per_leg_latency_ms + task.per_visit_processing_ms),
            n * (task.request_bytes + task.response_bytes),
            2 * n,
        ),
        Strategy::ParCs => (
            2 * task.per_leg_latency_ms + task.per_visit_processing_ms,
            n * (task.request_bytes + task.response_bytes),
            2 * n,
        ),
        Strategy::SeqMa => seq_ma_cost(n, task),
        Strategy::ParMa => {
            let mut latency = 0;
            let mut bytes = 0;
            let mut messages = 0;
            for block in partition_blocks(n, task.partitions) {
                let (l, b, m) = seq_ma_cost(block, task);
                latency = latency.max(l);
                bytes += b;
                messages += m;
            }
            (latency, bytes, messages)
        }
    };
    Ok(StrategyResult {
        strategy,
        total_latency_ms,
        total_bytes,
        message_count,
    })
}

#[derive(Debug, Clone, Copy)]
enum UnitStage {
    CsRequestArrive,
    CsProcessDone,
    CsResponseArrive,
    MaArrive,
    MaProcessDone,
}

#[derive(Debug, Clone, Copy)]
struct Unit {
    /// CS: servers left to visit. MA: block size.
    size: u64,
    progress: u64,
}

/// Independent event-driven execution: every message or agent leg is a
/// scheduled event, bytes are accumulated at each send, and total latency
/// is the clock at the last unit's completion.
pub fn run_strategy_event_driven(
    strategy: Strategy,
    task: &TaskSpec,
) -> Result<StrategyResult, BenchError> {
    task.validate()?;
    let n = task.server_count;
    let mut engine = Engine::new(0);
    let mut units: Vec<Unit> = Vec::new();
    let mut stages: Vec<(usize, UnitStage)> = Vec::new();
    let mut bytes = 0u64;
    let mut messages = 0u64;
    let mut finish = 0u64;

    let blocks: Vec<(u64, bool)> = match strategy {
        Strategy::SeqCs => vec![(n, false)],
        Strategy::ParCs => (0..n).map(|_| (1, false)).collect(),
        Strategy::SeqMa => vec![(n, true)],
        Strategy::ParMa => partition_blocks(n, task.partitions)
            .into_iter()
            .map(|b| (b, true))
            .collect(),
    };

    let push = |engine: &mut Engine,
                    stages: &mut Vec<(usize, UnitStage)>,
                    unit: usize,
                    stage: UnitStage,
                    delay: u64| {
        let step_id = stages.len() as u64;
        stages.push((unit, stage));
        engine
            .schedule(
                engine.now().plus(delay),
                EventKind::TaskStep { step_id },
                EventTarget::None,
            )
            .expect("future event");
    };

    for (idx, &(size, is_ma)) in blocks.iter().enumerate() {
        units.push(Unit { size, progress: 0 });
        if is_ma {
            // leg 0 departs the client immediately
            bytes += task.agent_code_bytes;
            messages += 1;
            push(&mut engine, &mut stages, idx, UnitStage::MaArrive, task.per_leg_latency_ms);
        } else {
            bytes += task.request_bytes;
            messages += 1;
            push(
                &mut engine,
                &mut stages,
                idx,
                UnitStage::CsRequestArrive,
                task.per_leg_latency_ms,
            );
        }
    }

    while let Some(event) = engine.step() {
        let EventKind::TaskStep { step_id } = event.kind else {
            unreachable!("bench schedules only task steps");
        };
        let (unit_idx, stage) = stages[step_id as usize];
        let unit = units[unit_idx];
        match stage {
            UnitStage::CsRequestArrive => {
                push(
                    &mut engine,
                    &mut stages,
                    unit_idx,
                    UnitStage::CsProcessDone,
                    task.per_visit_processing_ms,
                );
            }
            UnitStage::CsProcessDone => {
                bytes += task.response_bytes;
                messages += 1;
                push(
                    &mut engine,
                    &mut stages,
                    unit_idx,
                    UnitStage::CsResponseArrive,
                    task.per_leg_latency_ms,
                );
            }
            UnitStage::CsResponseArrive => {
                units[unit_idx].progress += 1;
                if units[unit_idx].progress < unit.size {
                    bytes += task.request_bytes;
                    messages += 1;
                    push(
                        &mut engine,
                        &mut stages,
                        unit_idx,
                        UnitStage::CsRequestArrive,
                        task.per_leg_latency_ms,
                    );
                } else {
                    finish = finish.max(engine.now().millis());
                }
            }
            UnitStage::MaArrive => {
                if unit.progress < unit.size {
                    push(
                        &mut engine,
                        &mut stages,
                        unit_idx,
                        UnitStage::MaProcessDone,
                        task.per_visit_processing_ms,
                    );
                } else {
                    // final arrival back at the client
                    finish = finish.max(engine.now().millis());
                }
            }
            UnitStage::MaProcessDone => {
                units[unit_idx].progress += 1;
                let visits = units[unit_idx].progress;
                bytes += task.agent_code_bytes + visits * task.state_bytes_per_visit;
                messages += 1;
                push(&mut engine, &mut stages, unit_idx, UnitStage::MaArrive, task.per_leg_latency_ms);
            }
        }
    }

    Ok(StrategyResult {
        strategy,
        total_latency_ms: finish,
        total_bytes: bytes,
        message_count: messages,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub results: Vec<StrategyResult>,
    /// Strategies sorted by latency, then bytes.
    pub ranking: Vec<Strategy>,
}

pub fn compare_strategies(task: &TaskSpec) -> Result<Comparison, BenchError> {
    let results: Vec<StrategyResult> = Strategy::ALL
        .iter()
        .map(|&s| run_strategy(s, task))
        .collect::<Result<_, _>>()?;
    let mut ranked = results.clone();
    ranked.sort_by_key(|r| (r.total_latency_ms, r.total_bytes, r.strategy));
    Ok(Comparison {
        ranking: ranked.iter().map(|r| r.strategy).collect(),
        results,
    })
}

/// strategy_bench.csv rows for one task.
pub fn bench_csv(task: &TaskSpec, results: &[StrategyResult]) -> String {
    let mut out =
        String::from("strategy,n,q,s,c,u,L,p,k,total_latency_ms,total_bytes,message_count\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.strategy.tag(),
            task.server_count,
            task.request_bytes,
            task.response_bytes,
            task.agent_code_bytes,
            task.state_bytes_per_visit,
            task.per_leg_latency_ms,
            task.per_visit_processing_ms,
            task.partitions,
            r.total_latency_ms,
            r.total_bytes,
            r.message_count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(n: u64, k: u64) -> TaskSpec {
        TaskSpec {
            server_count: n,
            request_bytes: 500,
            response_bytes: 500,
            agent_code_bytes: 2000,
            state_bytes_per_visit: 100,
            per_visit_processing_ms: 5,
            per_leg_latency_ms: 10,
            partitions: k,
        }
    }

    #[test]
    fn single_server_collapse() {
        let t = task(1, 1);
        let cs = run_strategy(Strategy::SeqCs, &t).unwrap();
        let ma = run_strategy(Strategy::SeqMa, &t).unwrap();
        assert_eq!(cs.total_latency_ms, 25); // 2L + p
        assert_eq!(ma.total_latency_ms, 25);
        assert_eq!(ma.total_bytes, 2 * 2000 + 100);
        assert_eq!(cs.total_bytes, 1000);
    }

    #[test]
    fn four_server_reference_task() {
        let t = task(4, 2);
        let seq_cs = run_strategy(Strategy::SeqCs, &t).unwrap();
        assert_eq!(seq_cs.total_bytes, 4000);
        assert_eq!(seq_cs.total_latency_ms, 100);
        assert_eq!(seq_cs.message_count, 8);
        let seq_ma = run_strategy(Strategy::SeqMa, &t).unwrap();
        assert_eq!(seq_ma.total_bytes, 11_000);
        assert_eq!(seq_ma.total_latency_ms, 70);
        assert_eq!(seq_ma.message_count, 5);
        let par_cs = run_strategy(Strategy::ParCs, &t).unwrap();
        assert_eq!(par_cs.total_latency_ms, 25);
    }

    #[test]
    fn par_ma_full_fanout_matches_par_cs_latency() {
        let t = task(4, 4);
        let par_ma = run_strategy(Strategy::ParMa, &t).unwrap();
        let par_cs = run_strategy(Strategy::ParCs, &t).unwrap();
        assert_eq!(par_ma.total_latency_ms, par_cs.total_latency_ms);
    }

    #[test]
    fn par_ma_single_partition_equals_seq_ma_bytes() {
        let t = task(7, 1);
        let par_ma = run_strategy(Strategy::ParMa, &t).unwrap();
        let seq_ma = run_strategy(Strategy::SeqMa, &t).unwrap();
        assert_eq!(par_ma.total_bytes, seq_ma.total_bytes);
        assert_eq!(par_ma.total_latency_ms, seq_ma.total_latency_ms);
    }

    #[test]
    fn partition_shapes() {
        assert_eq!(partition_blocks(4, 2), vec![2, 2]);
        assert_eq!(partition_blocks(5, 2), vec![3, 2]);
        assert_eq!(partition_blocks(7, 3), vec![3, 2, 2]);
    }

    #[test]
    fn bad_task_rejected() {
        let mut t = task(4, 5);
        assert!(run_strategy(Strategy::ParMa, &t).is_err());
        t.partitions = 0;
        assert!(run_strategy(Strategy::ParMa, &t).is_err());
    }

    #[test]
    fn event_driven_matches_closed_forms() {
        for n in [1u64, 2, 3, 4, 7, 10] {
            for k in 1..=n.min(4) {
                let t = task(n, k);
                for strategy in Strategy::ALL {
                    let closed = run_strategy(strategy, &t).unwrap();
                    let stepped = run_strategy_event_driven(strategy, &t).unwrap();
                    assert_eq!(closed, stepped, "n={n} k={k} {strategy:?}");
                }
            }
        }
    }

    #[test]
    fn parallel_dominance() {
        for n in 1..=10u64 {
            let t = task(n, 1);
            let seq = run_strategy(Strategy::SeqCs, &t).unwrap();
            let par = run_strategy(Strategy::ParCs, &t).unwrap();
            assert!(par.total_latency_ms <= seq.total_latency_ms);
            let mut prev = u64::MAX;
            for k in 1..=n {
                let mut tk = t;
                tk.partitions = k;
                let ma = run_strategy(Strategy::ParMa, &tk).unwrap();
                assert!(ma.total_latency_ms <= prev, "n={n} k={k}");
                prev = ma.total_latency_ms;
            }
        }
    }

    #[test]
    fn agent_traffic_advantage_when_state_free() {
        // u=0, c < q+s: (n+1)c < n(q+s) for n=4, c=600, q+s=1000
        let t = TaskSpec {
            server_count: 4,
            request_bytes: 500,
            response_bytes: 500,
            agent_code_bytes: 600,
            state_bytes_per_visit: 0,
            per_visit_processing_ms: 5,
            per_leg_latency_ms: 10,
            partitions: 1,
        };
        let ma = run_strategy(Strategy::SeqMa, &t).unwrap();
        let cs = run_strategy(Strategy::SeqCs, &t).unwrap();
        assert_eq!(ma.total_bytes, 3000);
        assert_eq!(cs.total_bytes, 4000);
        assert!(ma.total_bytes < cs.total_bytes);
    }

    #[test]
    fn comparison_table_has_four_rows() {
        let cmp = compare_strategies(&task(4, 2)).unwrap();
        assert_eq!(cmp.results.len(), 4);
        // ParCS and ParMA(k=4 would tie): with k=2, ParCS < ParMA < SeqMA < SeqCS by latency
        assert_eq!(cmp.ranking[0], Strategy::ParCs);
        assert_eq!(*cmp.ranking.last().unwrap(), Strategy::SeqCs);
    }
}
