//! Actions, state memory, runtime input correction and responses.
//!
//! The scheduler that actually runs actions lives in the std crate; this
//! module owns everything that does not need threads or IO.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write;
use core::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experts::{prompts, BoundArg};
use crate::graph::ToolSpec;
use crate::search::RankedPlan;
use crate::types::{parse_placeholder, GenPlaceholder, Resource, ResourceType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionInput {
    pub name: String,
    #[serde(rename = "type")]
    pub rtype: ResourceType,
    pub value: BoundArg,
}

/// One tool invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub seq: u32,
    pub tool: Arc<ToolSpec>,
    pub subtask_id: u32,
    pub inputs: Vec<ActionInput>,
    pub output: String,
    pub output_type: ResourceType,
    /// Actions that must succeed before this one may run.
    pub depends_on: Vec<u32>,
    /// The output is the final result of a plan.
    pub ends_plan: bool,
}

/// Turns bound plans into actions, stage by stage, subtask id within a
/// stage and step order within a plan. References to another subtask's
/// `<GEN>-d` are rewritten to the id that subtask's plan for the requested
/// type actually produces.
pub fn compile_actions(plans: &[RankedPlan], schedule: &[Vec<u32>]) -> Result<Vec<Action>> {
    let mut finals: BTreeMap<(u32, ResourceType), String> = BTreeMap::new();
    let mut by_subtask: BTreeMap<u32, Vec<&RankedPlan>> = BTreeMap::new();
    for p in plans {
        finals
            .entry((p.subtask_id, p.target.clone()))
            .or_insert_with(|| p.optimal.final_output().raw());
        by_subtask.entry(p.subtask_id).or_default().push(p);
    }
    let mut deps_of: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for p in plans {
        for step in &p.optimal.binding.steps {
            for (_, arg) in step {
                if let BoundArg::Resource(id) = arg {
                    if let Some(d) = cross_ref(id) {
                        if d != p.subtask_id {
                            deps_of.entry(p.subtask_id).or_default().insert(d);
                        }
                    }
                }
            }
        }
    }

    let mut actions: Vec<Action> = Vec::new();
    let mut producer: BTreeMap<String, u32> = BTreeMap::new();
    let mut last_of_subtask: BTreeMap<u32, u32> = BTreeMap::new();

    for stage in schedule {
        let mut ids = stage.clone();
        ids.sort_unstable();
        for sid in ids {
            let Some(subtask_plans) = by_subtask.get(&sid) else {
                continue;
            };
            let mut prev: Option<u32> = None;
            for plan in subtask_plans {
                let path = &plan.optimal.path;
                let binding = &plan.optimal.binding;
                if binding.steps.len() != path.steps.len() {
                    return Err(Error::IllFormedSolution(format!(
                        "subtask {sid}: {} steps but {} bindings",
                        path.steps.len(),
                        binding.steps.len()
                    )));
                }
                let mut local: BTreeSet<String> = BTreeSet::new();
                let last = path.steps.len().saturating_sub(1);
                for (si, (step, bound)) in path.steps.iter().zip(&binding.steps).enumerate() {
                    let seq = actions.len() as u32;
                    let mut depends: BTreeSet<u32> = BTreeSet::new();
                    if let Some(p) = prev {
                        depends.insert(p);
                    } else {
                        for d in deps_of.get(&sid).into_iter().flatten() {
                            if let Some(&a) = last_of_subtask.get(d) {
                                depends.insert(a);
                            }
                        }
                    }
                    let mut inputs = Vec::with_capacity(bound.len());
                    for ((name, value), spec) in bound.iter().zip(&step.tool.args) {
                        let value = match value {
                            BoundArg::Resource(id) if GenPlaceholder::looks_like(id) => {
                                let resolved = if local.contains(id) {
                                    id.clone()
                                } else {
                                    let d = parse_placeholder(id)
                                        .map_err(|_| Error::UnresolvedReference(id.clone()))?
                                        .id;
                                    finals
                                        .get(&(d, spec.rtype.clone()))
                                        .cloned()
                                        .ok_or_else(|| Error::UnresolvedReference(id.clone()))?
                                };
                                if let Some(&p) = producer.get(&resolved) {
                                    depends.insert(p);
                                }
                                BoundArg::Resource(resolved)
                            }
                            other => other.clone(),
                        };
                        inputs.push(ActionInput {
                            name: name.clone(),
                            rtype: spec.rtype.clone(),
                            value,
                        });
                    }
                    let output = step.output.raw();
                    if producer.insert(output.clone(), seq).is_some() {
                        return Err(Error::DuplicateResource(output));
                    }
                    local.insert(output.clone());
                    actions.push(Action {
                        seq,
                        tool: step.tool.clone(),
                        subtask_id: sid,
                        inputs,
                        output,
                        output_type: step.tool.ret.rtype.clone(),
                        depends_on: depends.into_iter().collect(),
                        ends_plan: si == last,
                    });
                    prev = Some(seq);
                }
            }
            if let Some(p) = prev {
                last_of_subtask.insert(sid, p);
            }
        }
    }

    // Every reference must be to something that will exist.
    for a in &actions {
        for i in &a.inputs {
            if let BoundArg::Resource(id) = &i.value {
                if GenPlaceholder::looks_like(id) && !producer.contains_key(id) {
                    return Err(Error::UnresolvedReference(id.clone()));
                }
            }
        }
    }
    Ok(actions)
}

fn cross_ref(id: &str) -> Option<u32> {
    if GenPlaceholder::looks_like(id) {
        parse_placeholder(id).ok().map(|p| p.id)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemoryEntry {
    pub resource: Resource,
    /// Offset from the start of the session.
    pub written_at: Duration,
}

/// Write-once store of every resource in a session, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateMemory {
    entries: Vec<MemoryEntry>,
    index: BTreeMap<String, usize>,
}

impl StateMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, resource: Resource, at: Duration) -> Result<()> {
        if self.index.contains_key(&resource.id) {
            return Err(Error::DuplicateResource(resource.id));
        }
        self.index.insert(resource.id.clone(), self.entries.len());
        self.entries.push(MemoryEntry {
            resource,
            written_at: at,
        });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&MemoryEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn most_recent_of_type(&self, rtype: &ResourceType) -> Option<&MemoryEntry> {
        self.entries.iter().rev().find(|e| &e.resource.rtype == rtype)
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Correction {
    pub seq: u32,
    pub arg: String,
    pub from: String,
    pub to: String,
}

/// Replaces input ids missing from memory with the most recent entry of the
/// declared type. Present ids of the wrong type are an error, never
/// silently re-bound.
pub fn correct_inputs(action: &Action, memory: &StateMemory) -> Result<(Action, Vec<Correction>)> {
    let mut fixed = action.clone();
    let mut log = Vec::new();
    for input in &mut fixed.inputs {
        let BoundArg::Resource(id) = &input.value else {
            continue;
        };
        match memory.get(id) {
            Some(e) if e.resource.rtype == input.rtype => {}
            Some(e) => {
                return Err(Error::TypeMismatch {
                    what: format!("{}.{}", action.tool.name, input.name),
                    expected: input.rtype.name().to_owned(),
                    found: e.resource.rtype.name().to_owned(),
                })
            }
            None => {
                let sub = memory.most_recent_of_type(&input.rtype).ok_or_else(|| {
                    Error::MissingInput {
                        seq: action.seq,
                        tool: action.tool.name.clone(),
                        rtype: input.rtype.name().to_owned(),
                    }
                })?;
                log.push(Correction {
                    seq: action.seq,
                    arg: input.name.clone(),
                    from: id.clone(),
                    to: sub.resource.id.clone(),
                });
                input.value = BoundArg::Resource(sub.resource.id.clone());
            }
        }
    }
    Ok((fixed, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionRecord {
    pub seq: u32,
    pub tool: String,
    pub subtask_id: u32,
    /// Inputs after correction.
    pub inputs: Vec<ActionInput>,
    pub output: String,
    pub status: ActionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub start: Duration,
    pub end: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecutionReport {
    /// One record per action, in seq order.
    pub records: Vec<ActionRecord>,
    pub corrections: Vec<Correction>,
    /// Outputs of each plan's last action that completed, in seq order.
    pub final_resources: Vec<Resource>,
    pub wall_clock: Duration,
    /// Longest chain of dependent action durations.
    pub critical_path: Duration,
}

impl ExecutionReport {
    pub fn statuses(&self) -> Vec<ActionStatus> {
        self.records.iter().map(|r| r.status).collect()
    }

    pub fn succeeded(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == ActionStatus::Ok)
            .count()
    }
}

/// Seqs of actions whose output is a plan's final result.
pub fn final_actions(actions: &[Action]) -> Vec<u32> {
    actions.iter().filter(|a| a.ends_plan).map(|a| a.seq).collect()
}

/// Forward closure of `failed` over `depends_on`.
pub fn downstream_of(actions: &[Action], failed: &BTreeSet<u32>) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for a in actions {
        if a
            .depends_on
            .iter()
            .any(|d| failed.contains(d) || out.contains(d))
        {
            out.insert(a.seq);
        }
    }
    out
}

/// Longest path through the dependency DAG weighted by each action's
/// duration.
pub fn critical_path(actions: &[Action], durations: &BTreeMap<u32, Duration>) -> Duration {
    let mut finish: BTreeMap<u32, Duration> = BTreeMap::new();
    let mut best = Duration::ZERO;
    for a in actions {
        let start = a
            .depends_on
            .iter()
            .filter_map(|d| finish.get(d))
            .max()
            .copied()
            .unwrap_or(Duration::ZERO);
        let end = start + durations.get(&a.seq).copied().unwrap_or(Duration::ZERO);
        finish.insert(a.seq, end);
        best = best.max(end);
    }
    best
}

pub trait Responder {
    fn respond(&self, request: &str, actions: &[Action], report: &ExecutionReport) -> Result<String>;
}

/// Deterministic plain-text responder.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateResponder;

pub const CANNOT_FINISH: &str = "I can not finish the task.";

impl Responder for TemplateResponder {
    fn respond(&self, request: &str, _actions: &[Action], report: &ExecutionReport) -> Result<String> {
        let mut out = String::new();
        if report.succeeded() == 0 {
            out.push_str(CANNOT_FINISH);
            if !report.records.is_empty() {
                out.push_str(" No tool produced a result.");
            }
            out.push('\n');
            return Ok(out);
        }
        if report.final_resources.is_empty() {
            out.push_str("I could only finish part of the task.\n");
        } else {
            let parts: Vec<String> = report
                .final_resources
                .iter()
                .map(|r| {
                    if r.rtype.is_inline() {
                        format!("{} ({})", r.value, r.rtype)
                    } else {
                        format!("{} file {}", r.rtype, r.value)
                    }
                })
                .collect();
            let _ = writeln!(out, "Answer to \"{}\": {}", request.trim(), parts.join("; "));
        }
        let tools: Vec<&str> = report.records.iter().map(|r| r.tool.as_str()).collect();
        let _ = writeln!(out, "Workflow: {}", tools.join(" -> "));
        out.push_str("Results:\n");
        out.push_str(&summarize_results(report));
        Ok(out)
    }
}

fn summarize_results(report: &ExecutionReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        match r.status {
            ActionStatus::Ok => {
                let _ = writeln!(out, "- [{}] {} -> {}", r.seq, r.tool, r.output);
            }
            ActionStatus::Failed => {
                let _ = writeln!(
                    out,
                    "- [{}] {} failed: {}",
                    r.seq,
                    r.tool,
                    r.error.as_deref().unwrap_or("unknown error")
                );
            }
            ActionStatus::Skipped => {
                let _ = writeln!(out, "- [{}] {} skipped", r.seq, r.tool);
            }
        }
    }
    for f in &report.final_resources {
        let _ = writeln!(out, "- {} ({}): {}", f.id, f.rtype, f.value);
    }
    out
}

/// Response prompt for a language-model responder.
pub fn render_response_prompt(
    assistant_name: &str,
    request: &str,
    report: &ExecutionReport,
) -> String {
    let mut workflow = String::new();
    for r in &report.records {
        let args: Vec<String> = r
            .inputs
            .iter()
            .map(|i| format!("{}={}", i.name, i.value.value()))
            .collect();
        let _ = writeln!(
            workflow,
            "{}. {}({}) -> {} [{}]",
            r.seq,
            r.tool,
            args.join(", "),
            r.output,
            match r.status {
                ActionStatus::Ok => "ok",
                ActionStatus::Failed => "failed",
                ActionStatus::Skipped => "skipped",
            }
        );
    }
    let results: String = report
        .final_resources
        .iter()
        .map(|f| format!("{} ({}): {}\n", f.id, f.rtype, f.value))
        .collect();
    prompts::fill(
        prompts::RESPOND,
        &[
            ("assistant_name", assistant_name),
            ("request", request),
            ("solution", &workflow),
            ("results", &results),
        ],
    )
}

/// Uses `responder`, falling back to the template if it fails.
pub fn generate_response(
    request: &str,
    actions: &[Action],
    report: &ExecutionReport,
    responder: &dyn Responder,
) -> String {
    responder
        .respond(request, actions, report)
        .or_else(|_| TemplateResponder.respond(request, actions, report))
        .unwrap_or_else(|_| String::from(CANNOT_FINISH))
}
