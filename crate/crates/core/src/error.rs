use alloc::string::String;

use thiserror::Error;

/// Every failure the planner core can report.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("unknown resource type `{0}`")]
    UnknownResourceType(String),
    #[error("unknown task domain `{0}`")]
    UnknownDomain(String),
    #[error("malformed placeholder `{0}`")]
    MalformedPlaceholder(String),
    #[error("duplicate tool `{0}`")]
    DuplicateTool(String),
    #[error("invalid tool `{tool}`: {reason}")]
    InvalidTool { tool: String, reason: String },
    #[error("malformed registry document: {0}")]
    MalformedRegistry(String),

    #[error("protocol violation in `{field}`: {reason}")]
    ProtocolViolation { field: String, reason: String },
    #[error("decomposition failed after {attempts} attempts: {last}")]
    DecompositionFailed { attempts: usize, last: String },
    #[error("request could not be decomposed into any subtask")]
    EmptyDecomposition,

    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid subtask: {0}")]
    InvalidSubtask(String),
    #[error("no solution found for subtask {subtask} (return type {target})")]
    PlanningFailed { subtask: u32, target: String },

    #[error("tool assessor unavailable: {0}")]
    AssessorUnavailable(String),
    #[error("tool assessor protocol error: {0}")]
    AssessorProtocolError(String),
    #[error("solution expert unavailable: {0}")]
    ExpertUnavailable(String),
    #[error("solution expert protocol error: {0}")]
    ExpertProtocolError(String),
    #[error("ill-formed solution: {0}")]
    IllFormedSolution(String),
    #[error("no resource can be bound to argument `{arg}` of `{tool}` (type {rtype})")]
    UnbindableArgument {
        tool: String,
        arg: String,
        rtype: String,
    },
    #[error("binding for `{tool}` names resource `{resource}` which is not available")]
    BindingHallucination { tool: String, resource: String },
    #[error("type mismatch for `{what}`: expected {expected}, found {found}")]
    TypeMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("unresolved reference `{0}`")]
    UnresolvedReference(String),
    #[error("resource `{0}` already written to state memory")]
    DuplicateResource(String),
    #[error("action {seq} (`{tool}`) is missing an input of type {rtype}")]
    MissingInput {
        seq: u32,
        tool: String,
        rtype: String,
    },

    #[error("gold annotation references unregistered tool `{0}`")]
    UnknownGoldTool(String),
    #[error("benchmark case is inconsistent: {0}")]
    InvalidBenchmarkCase(String),
    #[error("benchmark contains no cases")]
    EmptyBenchmark,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn violation(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::ProtocolViolation {
        field: field.into(),
        reason: reason.into(),
    }
}
