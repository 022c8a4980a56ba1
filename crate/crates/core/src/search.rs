//! Depth-first solution search over the tool graph.
//!
//! Starting from the subtask's argument types, the search repeatedly picks
//! applicable tools, adds each tool's return type to the available set and
//! records the current tool sequence whenever the step returns the requested
//! type. A goal hit does not stop the descent; only the path-length limit
//! does. Which applicable tools are expanded is decided by the strategy,
//! using assessor scores.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::ops::AddAssign;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decompose::{ArgValue, Subtask};
use crate::error::{Error, Result};
use crate::experts::{
    assess_tool, bind_arguments, rank_solutions, ArgumentBinding, ResourceExpert, Score,
    SolutionExpert, SolutionScore, ToolAssessor,
};
use crate::graph::{ToolGraph, ToolSpec};
use crate::types::{GenPlaceholder, Resource, ResourceType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
    Adaptive,
    Exhaustive,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Greedy,
        Strategy::Beam,
        Strategy::Adaptive,
        Strategy::Exhaustive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::Adaptive => "adaptive",
            Strategy::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub beam_width: usize,
    pub adaptive_threshold: u8,
    pub max_path_len: usize,
    pub allow_tool_reuse: bool,
    /// Restrict candidates to the subtask's domains.
    pub use_domains: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Adaptive,
            beam_width: 3,
            adaptive_threshold: 3,
            max_path_len: 10,
            allow_tool_reuse: false,
            use_domains: true,
        }
    }
}

impl SearchConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam-width must be at least 1".into()));
        }
        if !(1..=5).contains(&self.adaptive_threshold) {
            return Err(Error::InvalidConfig(
                "adaptive-threshold must lie in [1, 5]".into(),
            ));
        }
        if self.max_path_len == 0 {
            return Err(Error::InvalidConfig("max-path-len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathStep {
    pub tool: Arc<ToolSpec>,
    pub output: GenPlaceholder,
}

/// An ordered tool sequence that turns the subtask arguments into the
/// requested return type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionPath {
    pub steps: Vec<PathStep>,
    pub terminal_type: ResourceType,
}

impl SolutionPath {
    /// Output ids are provisional (the step index) until the path is chosen
    /// for execution.
    pub fn from_tools(tools: Vec<Arc<ToolSpec>>) -> Result<Self> {
        let terminal_type = tools
            .last()
            .ok_or_else(|| Error::IllFormedSolution("a solution needs at least one step".into()))?
            .ret
            .rtype
            .clone();
        let steps = tools
            .into_iter()
            .enumerate()
            .map(|(i, tool)| PathStep {
                tool,
                output: GenPlaceholder::new(i as u32),
            })
            .collect();
        Ok(Self {
            steps,
            terminal_type,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    /// Tool-node expansions.
    pub visited_tools: u64,
    pub solutions_found: u64,
    /// Calls that reached the assessor (cache misses).
    pub assessor_calls: u64,
    /// Score lookups including cache hits.
    pub assessments: u64,
}

impl AddAssign for SearchStats {
    fn add_assign(&mut self, rhs: Self) {
        self.visited_tools += rhs.visited_tools;
        self.solutions_found += rhs.solutions_found;
        self.assessor_calls += rhs.assessor_calls;
        self.assessments += rhs.assessments;
    }
}

/// Orders candidates by descending score then name and keeps those the
/// strategy allows.
pub fn select_candidates<'a>(
    mut candidates: Vec<(&'a Arc<ToolSpec>, Score)>,
    cfg: &SearchConfig,
) -> Vec<&'a Arc<ToolSpec>> {
    candidates.sort_by(|(ta, sa), (tb, sb)| sb.cmp(sa).then_with(|| ta.name.cmp(&tb.name)));
    let keep = match cfg.strategy {
        Strategy::Greedy => candidates.len().min(1),
        Strategy::Beam => candidates.len().min(cfg.beam_width),
        Strategy::Adaptive => candidates
            .iter()
            .take_while(|(_, s)| s.get() >= cfg.adaptive_threshold)
            .count(),
        Strategy::Exhaustive => candidates.len(),
    };
    candidates.truncate(keep);
    candidates.into_iter().map(|(t, _)| t).collect()
}

struct Searcher<'a> {
    subtask: &'a Subtask,
    graph: &'a ToolGraph,
    cfg: &'a SearchConfig,
    assessor: &'a dyn ToolAssessor,
    cache: BTreeMap<String, Score>,
}

struct Frame {
    path: Vec<Arc<ToolSpec>>,
    available: BTreeMap<ResourceType, usize>,
}

impl<'a> Searcher<'a> {
    fn new(
        subtask: &'a Subtask,
        graph: &'a ToolGraph,
        cfg: &'a SearchConfig,
        assessor: &'a dyn ToolAssessor,
    ) -> Result<Self> {
        cfg.validate()?;
        if subtask.args.is_empty() {
            return Err(Error::InvalidSubtask(format!(
                "subtask {} has no arguments to start from",
                subtask.id
            )));
        }
        if subtask.returns.is_empty() {
            return Err(Error::InvalidSubtask(format!(
                "subtask {} declares no return",
                subtask.id
            )));
        }
        Ok(Self {
            subtask,
            graph,
            cfg,
            assessor,
            cache: BTreeMap::new(),
        })
    }

    fn search(&mut self, target: &ResourceType) -> Result<(Vec<SolutionPath>, SearchStats)> {
        let mut stats = SearchStats::default();
        let mut frame = Frame {
            path: Vec::new(),
            available: self.subtask.arg_types().into_iter().map(|t| (t, 1)).collect(),
        };
        let mut found: Vec<Vec<Arc<ToolSpec>>> = Vec::new();
        self.expand(target, &mut frame, &mut found, &mut stats)?;

        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(found.len());
        for tools in found {
            let key: Vec<String> = tools.iter().map(|t| t.name.clone()).collect();
            if seen.insert(key) {
                out.push(SolutionPath::from_tools(tools)?);
            }
        }
        stats.solutions_found = out.len() as u64;
        Ok((out, stats))
    }

    fn expand(
        &mut self,
        target: &ResourceType,
        frame: &mut Frame,
        found: &mut Vec<Vec<Arc<ToolSpec>>>,
        stats: &mut SearchStats,
    ) -> Result<()> {
        if frame.path.len() >= self.cfg.max_path_len {
            return Ok(());
        }
        let domains = if self.cfg.use_domains {
            &self.subtask.domains[..]
        } else {
            &[]
        };
        let available = &frame.available;
        let candidates: Vec<&Arc<ToolSpec>> = self
            .graph
            .applicable_where(|t| available.get(t).is_some_and(|&n| n > 0), domains)
            .into_iter()
            .filter(|t| {
                self.cfg.allow_tool_reuse || !frame.path.iter().any(|p| p.name == t.name)
            })
            .collect();
        let mut scored = Vec::with_capacity(candidates.len());
        for tool in candidates {
            scored.push((tool, self.score(tool, stats)?));
        }
        let selected: Vec<Arc<ToolSpec>> = select_candidates(scored, self.cfg)
            .into_iter()
            .cloned()
            .collect();

        for tool in selected {
            stats.visited_tools += 1;
            let ret = tool.ret.rtype.clone();
            *frame.available.entry(ret.clone()).or_insert(0) += 1;
            frame.path.push(tool);
            if &ret == target {
                found.push(frame.path.clone());
            }
            self.expand(target, frame, found, stats)?;
            frame.path.pop();
            if let Some(n) = frame.available.get_mut(&ret) {
                *n -= 1;
            }
        }
        Ok(())
    }

    fn score(&mut self, tool: &ToolSpec, stats: &mut SearchStats) -> Result<Score> {
        stats.assessments += 1;
        if let Some(&s) = self.cache.get(&tool.name) {
            return Ok(s);
        }
        stats.assessor_calls += 1;
        let assessment = assess_tool(self.subtask, tool, self.assessor)?;
        self.cache.insert(tool.name.clone(), assessment.score);
        Ok(assessment.score)
    }
}

/// Searches every declared return of `subtask` independently and
/// concatenates the solutions in declaration order.
pub fn dfs_search(
    subtask: &Subtask,
    graph: &ToolGraph,
    cfg: &SearchConfig,
    assessor: &dyn ToolAssessor,
) -> Result<(Vec<SolutionPath>, SearchStats)> {
    let mut searcher = Searcher::new(subtask, graph, cfg, assessor)?;
    let mut all = Vec::new();
    let mut stats = SearchStats::default();
    for ret in &subtask.returns {
        let (found, s) = searcher.search(&ret.rtype)?;
        all.extend(found);
        stats += s;
    }
    Ok((all, stats))
}

/// A chosen solution with its arguments bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundSolution {
    pub subtask_id: u32,
    pub path: SolutionPath,
    pub binding: ArgumentBinding,
}

impl BoundSolution {
    pub fn final_output(&self) -> GenPlaceholder {
        self.path
            .steps
            .last()
            .expect("bound solutions are never empty")
            .output
    }
}

/// Outcome of planning one declared return of a subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPlan {
    pub subtask_id: u32,
    pub target: ResourceType,
    pub optimal: BoundSolution,
    pub optimal_score: Score,
    /// Other solutions the expert scored at or above the threshold.
    pub alternatives: Vec<SolutionScore>,
    pub stats: SearchStats,
}

/// Minimum expert score for a solution to be offered as an alternative.
pub const ALTERNATIVE_THRESHOLD: u8 = 3;

/// Hands out fresh `<GEN>` ids for intermediate outputs. Start it above the
/// subtask id range so it never collides with `<GEN>-{subtask}`.
#[derive(Debug, Clone)]
pub struct GenIdAllocator {
    next: u32,
}

impl GenIdAllocator {
    pub fn starting_at(next: u32) -> Self {
        Self { next }
    }

    pub fn allocate(&mut self) -> GenPlaceholder {
        let p = GenPlaceholder::new(self.next);
        self.next += 1;
        p
    }
}

/// Resources a subtask can draw on: its literal media arguments and the
/// placeholders of the dependency outputs it consumes, in argument order.
/// Literal media arguments that appear in `initial` keep that entry.
pub fn subtask_resources(subtask: &Subtask, initial: &[Resource]) -> Vec<Resource> {
    let mut out: Vec<Resource> = Vec::new();
    for arg in &subtask.args {
        let res = match &arg.value {
            ArgValue::Gen(p) => Resource::new(p.raw(), arg.rtype.clone(), p.raw()),
            ArgValue::Literal(_) if arg.rtype.is_inline() => continue,
            ArgValue::Literal(v) => initial
                .iter()
                .find(|r| &r.id == v)
                .cloned()
                .unwrap_or_else(|| Resource::new(v.clone(), arg.rtype.clone(), v.clone())),
        };
        if !out.iter().any(|r| r.id == res.id && r.rtype == res.rtype) {
            out.push(res);
        }
    }
    out
}

/// Search, rank and bind: the full planning step for one subtask.
pub struct Planner<'a> {
    pub graph: &'a ToolGraph,
    pub config: &'a SearchConfig,
    pub assessor: &'a dyn ToolAssessor,
    pub solution_expert: &'a dyn SolutionExpert,
    pub resource_expert: &'a dyn ResourceExpert,
}

impl Planner<'_> {
    /// Plans each declared return of `subtask`; one [`RankedPlan`] per return.
    pub fn plan_subtask(
        &self,
        subtask: &Subtask,
        request: &str,
        resources: &[Resource],
        ids: &mut GenIdAllocator,
    ) -> Result<Vec<RankedPlan>> {
        let mut searcher = Searcher::new(subtask, self.graph, self.config, self.assessor)?;
        let mut plans = Vec::with_capacity(subtask.returns.len());
        for (ri, ret) in subtask.returns.iter().enumerate() {
            let (solutions, stats) = searcher.search(&ret.rtype)?;
            if solutions.is_empty() {
                return Err(Error::PlanningFailed {
                    subtask: subtask.id,
                    target: ret.rtype.name().to_owned(),
                });
            }
            let mut ranked =
                rank_solutions(subtask, request, &solutions, self.solution_expert)?.into_iter();
            let best = ranked.next().expect("ranking preserves a non-empty list");
            let alternatives: Vec<SolutionScore> = ranked
                .filter(|s| s.score.get() >= ALTERNATIVE_THRESHOLD)
                .collect();

            let mut path = best.solution;
            let last = path.steps.len() - 1;
            for (si, step) in path.steps.iter_mut().enumerate() {
                step.output = if si == last && ri == 0 {
                    ret.placeholder
                } else {
                    ids.allocate()
                };
            }
            let binding =
                bind_arguments(subtask, &path, resources, request, self.resource_expert)?;
            plans.push(RankedPlan {
                subtask_id: subtask.id,
                target: ret.rtype.clone(),
                optimal: BoundSolution {
                    subtask_id: subtask.id,
                    path,
                    binding,
                },
                optimal_score: best.score,
                alternatives,
                stats,
            });
        }
        Ok(plans)
    }
}
