//! Tool assessment, solution ranking and argument binding.
//!
//! Each role sits behind a trait with a deterministic mock. Whatever an
//! implementation returns, the engine re-validates it: scores must be in
//! range and bindings may only name resources that actually exist with the
//! declared type.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::Serialize;
use serde_json::Value;

use crate::decompose::{extract_solution_block, Subtask};
use crate::error::{Error, Result};
use crate::graph::ToolSpec;
use crate::search::SolutionPath;
use crate::types::{describe_types, parse_placeholder, GenPlaceholder, Resource};

/// Retries granted to an expert whose binding fails validation.
pub const BINDING_RETRIES: usize = 2;

/// A relevance score on the 1..=5 rubric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Score(u8);

impl Score {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(v: u8) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&v).then_some(Self(v))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolAssessment {
    pub tool: String,
    pub score: Score,
    pub thought: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionScore {
    pub solution: SolutionPath,
    pub score: Score,
    pub thought: String,
}

/// A bound argument: a resource id from state memory, or inline text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundArg {
    Resource(String),
    Inline(String),
}

impl BoundArg {
    pub fn value(&self) -> &str {
        match self {
            BoundArg::Resource(s) | BoundArg::Inline(s) => s,
        }
    }
}

/// (argument name, bound value) pairs for one step, in the tool's argument
/// order.
pub type StepBinding = Vec<(String, BoundArg)>;

/// Bindings for every step of a solution path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ArgumentBinding {
    pub steps: Vec<StepBinding>,
}

pub trait ToolAssessor {
    fn assess(&self, task: &Subtask, tool: &ToolSpec) -> Result<ToolAssessment>;
}

pub trait SolutionExpert {
    /// One (score, thought) per input solution, in input order.
    fn score_solutions(
        &self,
        task: &Subtask,
        request: &str,
        solutions: &[SolutionPath],
    ) -> Result<Vec<(Score, String)>>;
}

/// What a resource expert sees when filling in one step.
#[derive(Debug, Clone, Copy)]
pub struct BindingContext<'a> {
    pub task: &'a Subtask,
    pub request: &'a str,
    pub tool: &'a ToolSpec,
    /// Resources available at this step, oldest first.
    pub available: &'a [Resource],
}

pub trait ResourceExpert {
    fn bind_step(&self, ctx: &BindingContext<'_>) -> Result<StepBinding>;
}

macro_rules! forward_impls {
    ($($tr:ident { $($body:tt)* })*) => {$(
        impl<T: $tr + ?Sized> $tr for &T { $($body)* }
        impl<T: $tr + ?Sized> $tr for alloc::boxed::Box<T> { $($body)* }
        impl<T: $tr + ?Sized> $tr for alloc::sync::Arc<T> { $($body)* }
    )*};
}

forward_impls! {
    ToolAssessor {
        fn assess(&self, task: &Subtask, tool: &ToolSpec) -> Result<ToolAssessment> {
            (**self).assess(task, tool)
        }
    }
    SolutionExpert {
        fn score_solutions(&self, task: &Subtask, request: &str, solutions: &[SolutionPath])
            -> Result<Vec<(Score, String)>> {
            (**self).score_solutions(task, request, solutions)
        }
    }
    ResourceExpert {
        fn bind_step(&self, ctx: &BindingContext<'_>) -> Result<StepBinding> {
            (**self).bind_step(ctx)
        }
    }
}

/// Scores `tool` for `task`, checking the reply refers to the right tool.
pub fn assess_tool(
    task: &Subtask,
    tool: &ToolSpec,
    assessor: &dyn ToolAssessor,
) -> Result<ToolAssessment> {
    let a = assessor.assess(task, tool)?;
    if a.tool != tool.name {
        return Err(Error::AssessorProtocolError(format!(
            "asked to score `{}`, got a score for `{}`",
            tool.name, a.tool
        )));
    }
    Ok(a)
}

/// One line per step: `toolname(desc): argtypes -> rettype`.
pub fn format_solution(s: &SolutionPath) -> Result<String> {
    if s.steps.is_empty() {
        return Err(Error::IllFormedSolution("empty solution path".into()));
    }
    let mut out = String::new();
    for (i, step) in s.steps.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let t = &step.tool;
        let args: Vec<&str> = t.args.iter().map(|a| a.rtype.name()).collect();
        let _ = write!(
            out,
            "{}({}): {} -> {}",
            t.name,
            t.description,
            args.join(", "),
            t.ret.rtype
        );
    }
    Ok(out)
}

/// Orders solutions by descending expert score, then shorter path, then
/// step names.
pub fn rank_solutions(
    task: &Subtask,
    request: &str,
    solutions: &[SolutionPath],
    expert: &dyn SolutionExpert,
) -> Result<Vec<SolutionScore>> {
    if solutions.is_empty() {
        return Err(Error::IllFormedSolution("nothing to rank".into()));
    }
    for s in solutions {
        format_solution(s)?;
    }
    let scores = expert.score_solutions(task, request, solutions)?;
    if scores.len() != solutions.len() {
        return Err(Error::ExpertProtocolError(format!(
            "expected {} scores, got {}",
            solutions.len(),
            scores.len()
        )));
    }
    let mut ranked: Vec<SolutionScore> = solutions
        .iter()
        .cloned()
        .zip(scores)
        .map(|(solution, (score, thought))| SolutionScore {
            solution,
            score,
            thought,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.solution.len().cmp(&b.solution.len()))
            .then_with(|| a.solution.tool_names().cmp(&b.solution.tool_names()))
    });
    Ok(ranked)
}

/// Binds every step of `path`, re-validating the expert's answer each time.
///
/// The pool starts with `available`; each step's output is appended after
/// the step is bound, so later steps may consume it.
pub fn bind_arguments(
    task: &Subtask,
    path: &SolutionPath,
    available: &[Resource],
    request: &str,
    expert: &dyn ResourceExpert,
) -> Result<ArgumentBinding> {
    let mut pool: Vec<Resource> = available.to_vec();
    let mut steps = Vec::with_capacity(path.steps.len());
    for step in &path.steps {
        let ctx = BindingContext {
            task,
            request,
            tool: &step.tool,
            available: &pool,
        };
        let mut last = None;
        let mut accepted = None;
        for _ in 0..=BINDING_RETRIES {
            let proposal = expert.bind_step(&ctx)?;
            match validate_step(task, &step.tool, &pool, proposal) {
                Ok(b) => {
                    accepted = Some(b);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        match accepted {
            Some(b) => steps.push(b),
            None => return Err(last.expect("at least one attempt was made")),
        }
        let out = step.output.raw();
        pool.push(Resource::new(out.clone(), step.tool.ret.rtype.clone(), out));
    }
    Ok(ArgumentBinding { steps })
}

/// Checks one step binding and returns it in the tool's argument order.
pub fn validate_step(
    task: &Subtask,
    tool: &ToolSpec,
    pool: &[Resource],
    mut proposal: StepBinding,
) -> Result<StepBinding> {
    let mut names = BTreeSet::new();
    for (name, _) in &proposal {
        if !names.insert(name.as_str()) {
            return Err(Error::ExpertProtocolError(format!(
                "argument `{name}` of `{}` bound twice",
                tool.name
            )));
        }
    }
    let mut out = Vec::with_capacity(tool.args.len());
    for arg in &tool.args {
        let pos = proposal
            .iter()
            .position(|(n, _)| *n == arg.name)
            .ok_or_else(|| {
                Error::ExpertProtocolError(format!(
                    "argument `{}` of `{}` left unbound",
                    arg.name, tool.name
                ))
            })?;
        let (name, bound) = proposal.swap_remove(pos);
        match &bound {
            BoundArg::Resource(id) => {
                if !pool.iter().any(|r| &r.id == id && r.rtype == arg.rtype) {
                    return Err(match pool.iter().find(|r| &r.id == id) {
                        Some(found) => Error::TypeMismatch {
                            what: format!("{}.{}", tool.name, arg.name),
                            expected: arg.rtype.name().to_owned(),
                            found: found.rtype.name().to_owned(),
                        },
                        None => Error::BindingHallucination {
                            tool: tool.name.clone(),
                            resource: id.clone(),
                        },
                    });
                }
            }
            BoundArg::Inline(v) => {
                let supplied = task.inline_args().any(|(t, lit)| *t == arg.rtype && lit == v);
                if !arg.rtype.is_text() && !supplied {
                    return Err(Error::BindingHallucination {
                        tool: tool.name.clone(),
                        resource: v.clone(),
                    });
                }
            }
        }
        out.push((name, bound));
    }
    if let Some((extra, _)) = proposal.first() {
        return Err(Error::ExpertProtocolError(format!(
            "`{}` has no argument `{extra}`",
            tool.name
        )));
    }
    Ok(out)
}

const STOPWORDS: &[&str] = &[
    "about", "after", "all", "also", "and", "any", "are", "before", "can", "could", "each",
    "for", "from", "give", "given", "how", "into", "its", "make", "one", "out", "please",
    "should", "some", "that", "the", "their", "them", "then", "there", "these", "this",
    "those", "use", "using", "what", "which", "why", "will", "with", "would", "you", "your",
];

const FILE_EXTENSIONS: &[&str] = &[
    "png", "jpg", "jpeg", "gif", "bmp", "webp", "wav", "mp3", "flac", "ogg", "mp4", "avi",
    "mov", "mkv", "txt", "html", "json",
];

/// Lowercase content words of `text`, with a naive plural strip.
pub fn keywords(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| w.len() >= 3)
        .map(str::to_ascii_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()) && !FILE_EXTENSIONS.contains(&w.as_str()))
        .filter(|w| !w.bytes().all(|b| b.is_ascii_digit()))
        .map(|mut w| {
            if w.len() > 3 && w.ends_with('s') {
                w.pop();
            }
            w
        })
        .collect()
}

/// Keyword-overlap assessor: no shared keyword scores 2, one scores 3, more
/// score 4; a tool returning one of the subtask's return types gets +1.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockAssessor;

impl MockAssessor {
    pub fn score(task: &Subtask, tool: &ToolSpec) -> (u8, usize) {
        let task_kw = keywords(&task.description);
        let mut tool_kw = keywords(&tool.name);
        tool_kw.extend(keywords(&tool.description));
        let overlap = task_kw.intersection(&tool_kw).count();
        let base = match overlap {
            0 => 2,
            1 => 3,
            _ => 4,
        };
        let bonus = u8::from(task.return_types().any(|t| *t == tool.ret.rtype));
        ((base + bonus).min(Score::MAX), overlap)
    }
}

impl ToolAssessor for MockAssessor {
    fn assess(&self, task: &Subtask, tool: &ToolSpec) -> Result<ToolAssessment> {
        let (score, overlap) = Self::score(task, tool);
        Ok(ToolAssessment {
            tool: tool.name.clone(),
            score: Score(score),
            thought: format!("{overlap} shared keywords"),
        })
    }
}

/// Fixed per-tool scores with a default for unlisted tools.
#[derive(Debug, Clone)]
pub struct TableAssessor {
    scores: BTreeMap<String, Score>,
    default: Score,
}

impl TableAssessor {
    /// Panics on scores outside 1..=5.
    pub fn new<'a>(scores: impl IntoIterator<Item = (&'a str, u8)>, default: u8) -> Self {
        let score = |v: u8| Score::new(v).expect("table scores must lie in 1..=5");
        Self {
            scores: scores
                .into_iter()
                .map(|(n, s)| (n.to_owned(), score(s)))
                .collect(),
            default: score(default),
        }
    }
}

impl ToolAssessor for TableAssessor {
    fn assess(&self, _task: &Subtask, tool: &ToolSpec) -> Result<ToolAssessment> {
        Ok(ToolAssessment {
            tool: tool.name.clone(),
            score: self.scores.get(&tool.name).copied().unwrap_or(self.default),
            thought: String::from("table lookup"),
        })
    }
}

/// Prefers the shortest solutions: `5 - min(4, len - shortest_len)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSolutionExpert;

impl SolutionExpert for MockSolutionExpert {
    fn score_solutions(
        &self,
        _task: &Subtask,
        _request: &str,
        solutions: &[SolutionPath],
    ) -> Result<Vec<(Score, String)>> {
        let shortest = solutions.iter().map(SolutionPath::len).min().unwrap_or(0);
        Ok(solutions
            .iter()
            .map(|s| {
                let extra = s.len() - shortest;
                let score = Score(Score::MAX - extra.min(4) as u8);
                (score, format!("{extra} steps above the shortest solution"))
            })
            .collect())
    }
}

/// Binds each argument to the most recent resource of its type. Text
/// arguments with no text resource take the subtask description; other
/// inline arguments may take a literal the subtask supplied.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockResourceExpert;

impl ResourceExpert for MockResourceExpert {
    fn bind_step(&self, ctx: &BindingContext<'_>) -> Result<StepBinding> {
        ctx.tool
            .args
            .iter()
            .map(|arg| {
                let bound = if let Some(r) = ctx.available.iter().rev().find(|r| r.rtype == arg.rtype) {
                    BoundArg::Resource(r.id.clone())
                } else if arg.rtype.is_text() {
                    BoundArg::Inline(ctx.task.description.clone())
                } else if let Some((_, v)) = ctx.task.inline_args().find(|(t, _)| **t == arg.rtype) {
                    BoundArg::Inline(v.to_owned())
                } else {
                    return Err(Error::UnbindableArgument {
                        tool: ctx.tool.name.clone(),
                        arg: arg.name.clone(),
                        rtype: arg.rtype.name().to_owned(),
                    });
                };
                Ok((arg.name.clone(), bound))
            })
            .collect()
    }
}

/// Prompt templates with `{{name}}` slots.
pub mod prompts {
    use alloc::string::String;

    pub const DECOMPOSE: &str = include_str!("../prompts/decompose.txt");
    pub const ASSESS_TOOL: &str = include_str!("../prompts/assess_tool.txt");
    pub const RANK_SOLUTION: &str = include_str!("../prompts/rank_solution.txt");
    pub const BIND_RESOURCES: &str = include_str!("../prompts/bind_resources.txt");
    pub const RESPOND: &str = include_str!("../prompts/respond.txt");

    /// Substitutes `{{key}}` for each pair; unknown slots are left alone.
    pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
        let mut out = String::from(template);
        for (k, v) in vars {
            let slot = alloc::format!("{{{{{k}}}}}");
            out = out.replace(&slot, v);
        }
        out
    }
}

fn describe_args(tool: &ToolSpec) -> String {
    tool.args
        .iter()
        .map(|a| format!("{} ({})", a.name, a.rtype))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_assessment_prompt(task: &Subtask, tool: &ToolSpec) -> String {
    prompts::fill(
        prompts::ASSESS_TOOL,
        &[
            ("task", &task.description),
            ("tool_name", &tool.name),
            ("tool_description", &tool.description),
            ("arguments", &describe_args(tool)),
            ("returns", &format!("{} ({})", tool.ret.name, tool.ret.rtype)),
        ],
    )
}

pub fn render_ranking_prompt(task: &Subtask, request: &str, solution: &SolutionPath) -> Result<String> {
    Ok(prompts::fill(
        prompts::RANK_SOLUTION,
        &[
            ("request", request),
            ("task", &task.description),
            ("solution", &format_solution(solution)?),
        ],
    ))
}

pub fn render_binding_prompt(ctx: &BindingContext<'_>) -> String {
    let resources = ctx
        .available
        .iter()
        .map(|r| format!("{{\"type\": \"{}\", \"value\": \"{}\"}}", r.rtype, r.id))
        .collect::<Vec<_>>()
        .join(", ");
    let input = ctx
        .tool
        .args
        .iter()
        .map(|a| format!("{{\"{}\": <{}>}}", a.name, a.rtype))
        .collect::<Vec<_>>()
        .join(", ");
    let types: Vec<_> = ctx.tool.args.iter().map(|a| &a.rtype).collect();
    prompts::fill(
        prompts::BIND_RESOURCES,
        &[
            ("request", ctx.request),
            ("task_description", &ctx.task.description),
            ("resources", &format!("[{resources}]")),
            ("tool_name", &ctx.tool.name),
            ("tool_description", &ctx.tool.description),
            ("arguments", &describe_types(types)),
            ("returns", ctx.tool.ret.rtype.name()),
            ("input", &format!("[{input}]")),
        ],
    )
}

fn solution_json(reply: &str) -> core::result::Result<Value, String> {
    let body = extract_solution_block(reply).unwrap_or(reply).trim();
    serde_json::from_str(body).map_err(|e| format!("reply is not JSON: {e}"))
}

fn field<'v>(obj: &'v Value, key: &str) -> Option<&'v Value> {
    let map = obj.as_object()?;
    map.get(key)
        .or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}

fn parse_score_reply(reply: &str) -> core::result::Result<(Score, String), String> {
    let v = solution_json(reply)?;
    let raw = field(&v, "Score").ok_or("missing `Score`")?;
    let n = match raw {
        Value::Number(n) => n.as_i64().ok_or("`Score` is not an integer")?,
        Value::String(s) => s.trim().parse::<i64>().map_err(|_| "`Score` is not an integer")?,
        _ => return Err("`Score` is not an integer".into()),
    };
    let score = u8::try_from(n)
        .ok()
        .and_then(Score::new)
        .ok_or_else(|| format!("score {n} outside 1..=5"))?;
    let thought = match field(&v, "Thought") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    Ok((score, thought))
}

/// Parses an assessor reply of the form `<Solution>{"Thought": .., "Score": n}</Solution>`.
pub fn parse_assessment_reply(tool: &str, reply: &str) -> Result<ToolAssessment> {
    let (score, thought) = parse_score_reply(reply).map_err(Error::AssessorProtocolError)?;
    Ok(ToolAssessment {
        tool: tool.to_owned(),
        score,
        thought,
    })
}

pub fn parse_solution_score_reply(reply: &str) -> Result<(Score, String)> {
    parse_score_reply(reply).map_err(Error::ExpertProtocolError)
}

/// Parses a binder reply: a list of single-entry objects (or one object)
/// keyed by argument name or argument type. Ids found in `available`, and
/// `<GEN>` references (compound forms normalized), become resource
/// references; other values of inline types become inline text.
pub fn parse_binding_reply(
    reply: &str,
    tool: &ToolSpec,
    available: &[Resource],
) -> Result<StepBinding> {
    let v = solution_json(reply).map_err(Error::ExpertProtocolError)?;
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut push_obj = |obj: &serde_json::Map<String, Value>| {
        for (k, val) in obj {
            let s = match val {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            entries.push((k.clone(), s));
        }
    };
    match &v {
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Object(o) => push_obj(o),
                    _ => {
                        return Err(Error::ExpertProtocolError(
                            "binding list entries must be objects".into(),
                        ))
                    }
                }
            }
        }
        Value::Object(o) => push_obj(o),
        _ => {
            return Err(Error::ExpertProtocolError(
                "binding must be a list or an object".into(),
            ))
        }
    }

    let mut used = alloc::vec![false; entries.len()];
    let mut out = Vec::with_capacity(tool.args.len());
    for arg in &tool.args {
        let pos = (0..entries.len())
            .find(|&i| !used[i] && entries[i].0 == arg.name)
            .or_else(|| (0..entries.len()).find(|&i| !used[i] && entries[i].0 == arg.rtype.name()))
            .ok_or_else(|| {
                Error::ExpertProtocolError(format!("no value for argument `{}`", arg.name))
            })?;
        used[pos] = true;
        let value = entries[pos].1.trim().to_owned();
        let bound = if available.iter().any(|r| r.id == value) {
            BoundArg::Resource(value)
        } else if GenPlaceholder::looks_like(&value) {
            BoundArg::Resource(parse_placeholder(&value)?.raw())
        } else if arg.rtype.is_inline() {
            BoundArg::Inline(value)
        } else {
            BoundArg::Resource(value)
        };
        out.push((arg.name.clone(), bound));
    }
    Ok(out)
}
