use std::fmt;
use std::path::PathBuf;

use thiserror::Error;
use tog_core::Error as CoreError;

/// Pipeline stage an error was raised in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Decompose,
    Plan,
    Bind,
    Compile,
    Execute,
    Bench,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Load => "load",
            Stage::Decompose => "decompose",
            Stage::Plan => "plan",
            Stage::Bind => "bind",
            Stage::Compile => "compile",
            Stage::Execute => "execute",
            Stage::Bench => "bench",
        })
    }
}

#[derive(Debug, Error)]
pub enum TogError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{stage} failed: {source}")]
    Core {
        stage: Stage,
        #[source]
        source: CoreError,
    },
    #[error("benchmark harness error: {0}")]
    Bench(String),
}

/// Documented process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const PROTOCOL: u8 = 4;
    pub const PLANNING: u8 = 5;
    pub const RUN: u8 = 6;
    pub const BENCH: u8 = 7;
}

impl TogError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TogError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn core(stage: Stage, source: CoreError) -> Self {
        TogError::Core { stage, source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            TogError::Config(_) => exit::USAGE,
            TogError::Io { .. } => exit::IO,
            TogError::Bench(_) => exit::BENCH,
            TogError::Core { source, .. } => match source {
                CoreError::InvalidConfig(_) => exit::USAGE,
                CoreError::PlanningFailed { .. } | CoreError::InvalidSubtask(_) => exit::PLANNING,
                CoreError::UnknownGoldTool(_)
                | CoreError::InvalidBenchmarkCase(_)
                | CoreError::EmptyBenchmark => exit::BENCH,
                CoreError::EmptyDecomposition
                | CoreError::UnresolvedReference(_)
                | CoreError::DuplicateResource(_)
                | CoreError::MissingInput { .. } => exit::RUN,
                _ => exit::PROTOCOL,
            },
        }
    }
}

/// Stage a planning error belongs to.
pub fn planning_stage(e: &CoreError) -> Stage {
    match e {
        CoreError::UnbindableArgument { .. }
        | CoreError::BindingHallucination { .. }
        | CoreError::TypeMismatch { .. } => Stage::Bind,
        _ => Stage::Plan,
    }
}
