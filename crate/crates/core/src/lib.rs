//! Planning core of the tool-graph orchestration engine.
//!
//! A request is decomposed into typed subtasks, each subtask is solved by
//! searching a bipartite graph of tools and resource types, the chosen
//! solutions are bound to concrete resources and compiled into actions.
//! Everything here is `no_std` with `alloc`; IO, threads and the CLI live in
//! the companion `tog` crate.

#![no_std]

extern crate alloc;

pub mod decompose;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experts;
pub mod graph;
pub mod search;
pub mod toolbox;
pub mod types;

pub use decompose::{
    decompose, parse_decomposition, subtask_schedule, Decomposer, DecompositionResult,
    RuleDecomposer, Subtask,
};
pub use error::{Error, Result};
pub use eval::{aggregate, judge_case, BenchmarkCase, CaseRecord, Difficulty, EvalReport, Ratio};
pub use exec::{compile_actions, correct_inputs, Action, ExecutionReport, StateMemory};
pub use experts::{
    ArgumentBinding, BoundArg, MockAssessor, MockResourceExpert, MockSolutionExpert,
    ResourceExpert, Score, SolutionExpert, ToolAssessor,
};
pub use graph::{build_graph, ToolGraph, ToolSpec};
pub use search::{dfs_search, Planner, RankedPlan, SearchConfig, SearchStats, SolutionPath, Strategy};
pub use toolbox::default_registry;
pub use types::{GenPlaceholder, Resource, ResourceType, Vocabulary};
