//! Runs compiled actions against a [`ToolRuntime`].
//!
//! Each subtask's actions form a chain that runs in order on one worker.
//! Chains are layered by their cross-chain dependencies; within a layer up
//! to `parallelism` chains run at once.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use tog_core::exec::{critical_path, ActionRecord, ActionStatus, Correction};
use tog_core::{correct_inputs, Action, BoundArg, ExecutionReport, Resource, StateMemory};

use crate::error::{Stage, TogError};
use crate::tools::{ToolInput, ToolRuntime};

struct Shared {
    memory: StateMemory,
    status: BTreeMap<u32, ActionStatus>,
    records: Vec<ActionRecord>,
    corrections: Vec<Correction>,
}

/// Seq lists, one per subtask, grouped into layers that may run together.
fn chain_layers(actions: &[Action]) -> Vec<Vec<Vec<u32>>> {
    let mut chains: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
    for a in actions {
        chains.entry(a.subtask_id).or_default().push(a.seq);
        owner.insert(a.seq, a.subtask_id);
    }
    // Actions are topologically ordered, so one pass settles every level.
    let mut level: BTreeMap<u32, usize> = BTreeMap::new();
    for a in actions {
        let deps = a
            .depends_on
            .iter()
            .filter_map(|d| owner.get(d))
            .filter(|&&s| s != a.subtask_id)
            .map(|s| level.get(s).copied().unwrap_or(0) + 1)
            .max()
            .unwrap_or(0);
        let l = level.entry(a.subtask_id).or_insert(0);
        *l = (*l).max(deps);
    }
    let depth = level.values().copied().max().map_or(0, |m| m + 1);
    let mut layers = vec![Vec::new(); depth];
    for (sid, seqs) in chains {
        layers[level[&sid]].push(seqs);
    }
    layers
}

/// Executes `actions` with `initial` pre-loaded into state memory.
pub fn execute(
    actions: &[Action],
    initial: &[Resource],
    runtime: &ToolRuntime,
    parallelism: usize,
) -> Result<ExecutionReport, TogError> {
    let by_seq: BTreeMap<u32, &Action> = actions.iter().map(|a| (a.seq, a)).collect();
    let mut memory = StateMemory::new();
    for r in initial {
        if !memory.contains(&r.id) {
            memory
                .write(r.clone(), Duration::ZERO)
                .map_err(|e| TogError::core(Stage::Execute, e))?;
        }
    }
    let shared = Mutex::new(Shared {
        memory,
        status: BTreeMap::new(),
        records: Vec::new(),
        corrections: Vec::new(),
    });
    let epoch = Instant::now();
    let workers = parallelism.max(1);

    for layer in chain_layers(actions) {
        let queue = Mutex::new(layer.into_iter());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let next = queue.lock().expect("queue lock").next();
                    let Some(chain) = next else { break };
                    for seq in chain {
                        run_action(by_seq[&seq], runtime, &shared, epoch);
                    }
                });
            }
        });
    }

    let Shared {
        memory,
        status,
        mut records,
        mut corrections,
    } = shared.into_inner().expect("state lock");
    records.sort_by_key(|r| r.seq);
    corrections.sort_by(|a, b| (a.seq, &a.arg).cmp(&(b.seq, &b.arg)));
    let final_resources = actions
        .iter()
        .filter(|a| a.ends_plan && status.get(&a.seq) == Some(&ActionStatus::Ok))
        .filter_map(|a| memory.get(&a.output).map(|e| e.resource.clone()))
        .collect();
    let durations = records
        .iter()
        .map(|r| (r.seq, r.end.saturating_sub(r.start)))
        .collect();
    Ok(ExecutionReport {
        final_resources,
        wall_clock: records.iter().map(|r| r.end).max().unwrap_or_default(),
        critical_path: critical_path(actions, &durations),
        records,
        corrections,
    })
}

fn run_action(action: &Action, runtime: &ToolRuntime, shared: &Mutex<Shared>, epoch: Instant) {
    let start = epoch.elapsed();
    let record = |status, inputs, error: Option<String>| ActionRecord {
        seq: action.seq,
        tool: action.tool.name.clone(),
        subtask_id: action.subtask_id,
        inputs,
        output: action.output.clone(),
        status,
        error,
        start,
        end: epoch.elapsed(),
    };
    let finish = |rec: ActionRecord, corrections: Vec<Correction>| {
        let mut st = shared.lock().expect("state lock");
        st.status.insert(rec.seq, rec.status);
        st.corrections.extend(corrections);
        st.records.push(rec);
    };

    let prepared = {
        let st = shared.lock().expect("state lock");
        let blocked = action
            .depends_on
            .iter()
            .find(|d| st.status.get(d) != Some(&ActionStatus::Ok));
        match blocked {
            Some(d) => Err((ActionStatus::Skipped, format!("dependency {d} did not succeed"))),
            None => correct_inputs(action, &st.memory)
                .map(|(fixed, log)| {
                    let inputs: Vec<ToolInput> = fixed
                        .inputs
                        .iter()
                        .map(|i| ToolInput {
                            name: i.name.clone(),
                            rtype: i.rtype.clone(),
                            value: match &i.value {
                                BoundArg::Resource(id) => st
                                    .memory
                                    .get(id)
                                    .map(|e| e.resource.value.clone())
                                    .unwrap_or_default(),
                                BoundArg::Inline(text) => text.clone(),
                            },
                        })
                        .collect();
                    (fixed, log, inputs)
                })
                .map_err(|e| (ActionStatus::Failed, e.to_string())),
        }
    };
    let (fixed, log, inputs) = match prepared {
        Ok(p) => p,
        Err((status, msg)) => {
            log::info!("action {} ({}) {msg}", action.seq, action.tool.name);
            return finish(record(status, action.inputs.clone(), Some(msg)), Vec::new());
        }
    };

    let outcome = runtime
        .invoke(&action.tool, &inputs, &action.output)
        .map_err(|e| e.to_string())
        .and_then(|res| {
            let mut st = shared.lock().expect("state lock");
            st.memory
                .write(res.output, epoch.elapsed())
                .map_err(|e| e.to_string())
        });
    let rec = match outcome {
        Ok(()) => record(ActionStatus::Ok, fixed.inputs, None),
        Err(msg) => {
            log::warn!("action {} ({}) failed: {msg}", action.seq, action.tool.name);
            record(ActionStatus::Failed, fixed.inputs, Some(msg))
        }
    };
    finish(rec, log);
}

#[derive(Serialize)]
struct TraceLine<'a> {
    seq: u32,
    tool: &'a str,
    subtask: u32,
    inputs: BTreeMap<&'a str, &'a str>,
    output: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<&'a str>,
    status: ActionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    start_ms: u128,
    end_ms: u128,
}

/// One JSON line per action record.
pub fn write_trace(path: &Path, report: &ExecutionReport) -> Result<(), TogError> {
    let finals: BTreeMap<&str, &str> = report
        .final_resources
        .iter()
        .map(|r| (r.id.as_str(), r.value.as_str()))
        .collect();
    let mut out = Vec::new();
    for r in &report.records {
        let line = TraceLine {
            seq: r.seq,
            tool: &r.tool,
            subtask: r.subtask_id,
            inputs: r.inputs.iter().map(|i| (i.name.as_str(), i.value.value())).collect(),
            output: &r.output,
            value: finals.get(r.output.as_str()).copied(),
            status: r.status,
            error: r.error.as_deref(),
            start_ms: r.start.as_millis(),
            end_ms: r.end.as_millis(),
        };
        serde_json::to_writer(&mut out, &line).expect("trace line serializes");
        out.push(b'\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| TogError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| TogError::io(path, e))?;
    f.write_all(&out).map_err(|e| TogError::io(path, e))
}

/// Seqs whose status differs from Ok, for summaries.
pub fn unsuccessful(report: &ExecutionReport) -> BTreeSet<u32> {
    report
        .records
        .iter()
        .filter(|r| r.status != ActionStatus::Ok)
        .map(|r| r.seq)
        .collect()
}
