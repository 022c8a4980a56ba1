//! Benchmark cases, per-case predicates and aggregate metrics.
//!
//! For each case the predicted bundle (all bound solutions of the request)
//! is judged on five predicates: irrelevant tool used (F), necessary tools
//! present (H), hallucinated resource referenced (P), types consistent (Q)
//! and solved (W). Metrics are exact fractions over cases.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecutionReport;
use crate::experts::BoundArg;
use crate::graph::ToolGraph;
use crate::search::BoundSolution;
use crate::types::{GenPlaceholder, Resource, ResourceType, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// Tier for a solution needing `n` distinct tools.
    pub fn for_tool_count(n: usize) -> Self {
        match n {
            0 | 1 => Difficulty::Easy,
            2 | 3 => Difficulty::Medium,
            _ => Difficulty::Hard,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnnotation {
    /// Any one of these sets counts as containing the necessary tools.
    pub acceptable_tool_sets: Vec<BTreeSet<String>>,
    pub allowed_tools: BTreeSet<String>,
    pub expected_final_types: Vec<ResourceType>,
}

impl GoldAnnotation {
    /// Size of the smallest acceptable set.
    pub fn necessary_count(&self) -> usize {
        self.acceptable_tool_sets
            .iter()
            .map(BTreeSet::len)
            .min()
            .unwrap_or(0)
    }

    pub fn tool_names(&self) -> impl Iterator<Item = &String> {
        self.allowed_tools
            .iter()
            .chain(self.acceptable_tool_sets.iter().flatten())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkCase {
    pub id: String,
    pub instruction: String,
    pub difficulty: Difficulty,
    pub initial_resources: Vec<Resource>,
    pub gold: GoldAnnotation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDoc {
    id: String,
    instruction: String,
    difficulty: Difficulty,
    #[serde(default)]
    initial_resources: Vec<ResourceDoc>,
    gold: GoldDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(rename = "type")]
    rtype: String,
    value: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoldDoc {
    acceptable_tool_sets: Vec<BTreeSet<String>>,
    allowed_tools: BTreeSet<String>,
    expected_final_types: Vec<String>,
}

impl BenchmarkCase {
    /// Parses one JSON-lines record and checks it is self-consistent.
    pub fn parse(line: &str, vocab: &Vocabulary) -> Result<Self> {
        let doc: CaseDoc = serde_json::from_str(line)
            .map_err(|e| Error::InvalidBenchmarkCase(format!("{e}")))?;
        let initial_resources = doc
            .initial_resources
            .into_iter()
            .map(|r| {
                Ok(Resource::new(
                    r.id.unwrap_or_else(|| r.value.clone()),
                    vocab.resource_type(&r.rtype)?,
                    r.value,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let expected_final_types = doc
            .gold
            .expected_final_types
            .iter()
            .map(|t| vocab.resource_type(t))
            .collect::<Result<Vec<_>>>()?;
        let case = BenchmarkCase {
            id: doc.id,
            instruction: doc.instruction,
            difficulty: doc.difficulty,
            initial_resources,
            gold: GoldAnnotation {
                acceptable_tool_sets: doc.gold.acceptable_tool_sets,
                allowed_tools: doc.gold.allowed_tools,
                expected_final_types,
            },
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidBenchmarkCase(format!("{}: {msg}", self.id)));
        if self.instruction.trim().is_empty() {
            return bad("empty instruction".into());
        }
        if self.gold.acceptable_tool_sets.is_empty()
            || self.gold.acceptable_tool_sets.iter().any(BTreeSet::is_empty)
        {
            return bad("every case needs non-empty acceptable tool sets".into());
        }
        if let Some(set) = self
            .gold
            .acceptable_tool_sets
            .iter()
            .find(|s| !s.is_subset(&self.gold.allowed_tools))
        {
            return bad(format!("acceptable set {set:?} is not within the allowed tools"));
        }
        let tier = Difficulty::for_tool_count(self.gold.necessary_count());
        if tier != self.difficulty {
            return bad(format!(
                "labelled {} but needs {} tools ({tier})",
                self.difficulty,
                self.gold.necessary_count()
            ));
        }
        if self.gold.expected_final_types.is_empty() {
            return bad("no expected final types".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = CaseDoc {
            id: self.id.clone(),
            instruction: self.instruction.clone(),
            difficulty: self.difficulty,
            initial_resources: self
                .initial_resources
                .iter()
                .map(|r| ResourceDoc {
                    id: (r.id != r.value).then(|| r.id.clone()),
                    rtype: r.rtype.name().to_owned(),
                    value: r.value.clone(),
                })
                .collect(),
            gold: GoldDoc {
                acceptable_tool_sets: self.gold.acceptable_tool_sets.clone(),
                allowed_tools: self.gold.allowed_tools.clone(),
                expected_final_types: self
                    .gold
                    .expected_final_types
                    .iter()
                    .map(|t| t.name().to_owned())
                    .collect(),
            },
        };
        serde_json::to_string(&doc).expect("case docs always serialize")
    }
}

/// Parses a JSON-lines suite; blank lines and `#` comments are skipped.
pub fn parse_suite(text: &str, vocab: &Vocabulary) -> Result<Vec<BenchmarkCase>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(BenchmarkCase::parse(line, vocab).map_err(|e| match e {
            Error::InvalidBenchmarkCase(m) => Error::InvalidBenchmarkCase(format!("line {}: {m}", n + 1)),
            other => other,
        })?);
    }
    Ok(out)
}

/// Predicate values for one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub difficulty: Difficulty,
    pub irrelevant: bool,
    pub necessary: bool,
    pub hallucinated: bool,
    pub consistent: bool,
    pub solved: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CaseRecord {
    /// Record for a case whose pipeline stopped before producing a
    /// prediction.
    pub fn failed(case: &BenchmarkCase, error: String) -> Self {
        Self {
            case_id: case.id.clone(),
            difficulty: case.difficulty,
            irrelevant: false,
            necessary: false,
            hallucinated: false,
            consistent: true,
            solved: false,
            error: Some(error),
        }
    }
}

fn check_gold_tools(case: &BenchmarkCase, registry: &ToolGraph) -> Result<()> {
    match case.gold.tool_names().find(|t| registry.tool(t).is_none()) {
        Some(t) => Err(Error::UnknownGoldTool(t.clone())),
        None => Ok(()),
    }
}

/// Judges a predicted bundle against the gold annotation. `exec` is the
/// execution report, if the prediction was run.
pub fn judge_case(
    case: &BenchmarkCase,
    registry: &ToolGraph,
    predicted: &[BoundSolution],
    exec: Option<&ExecutionReport>,
) -> Result<CaseRecord> {
    check_gold_tools(case, registry)?;

    let tools: BTreeSet<&str> = predicted
        .iter()
        .flat_map(|s| s.path.steps.iter().map(|st| st.tool.name.as_str()))
        .collect();
    let irrelevant = tools.iter().any(|t| !case.gold.allowed_tools.contains(*t));
    let necessary = case
        .gold
        .acceptable_tool_sets
        .iter()
        .any(|set| set.iter().all(|t| tools.contains(t.as_str())));

    // Every id a binding may legitimately reference, with its possible types.
    let mut known: BTreeMap<String, BTreeSet<ResourceType>> = BTreeMap::new();
    for r in &case.initial_resources {
        known.entry(r.id.clone()).or_default().insert(r.rtype.clone());
    }
    for s in predicted {
        for st in &s.path.steps {
            known
                .entry(st.output.raw())
                .or_default()
                .insert(st.tool.ret.rtype.clone());
        }
        known
            .entry(GenPlaceholder::new(s.subtask_id).raw())
            .or_default()
            .insert(s.path.terminal_type.clone());
    }

    let mut hallucinated = false;
    let mut consistent = true;
    for s in predicted {
        for (st, bound) in s.path.steps.iter().zip(&s.binding.steps) {
            for arg in &st.tool.args {
                let Some((_, value)) = bound.iter().find(|(n, _)| *n == arg.name) else {
                    consistent = false;
                    continue;
                };
                match value {
                    BoundArg::Resource(id) => match known.get(id) {
                        None => hallucinated = true,
                        Some(types) => consistent &= types.contains(&arg.rtype),
                    },
                    BoundArg::Inline(_) => consistent &= arg.rtype.is_inline(),
                }
            }
        }
    }

    let produced_expected = exec.is_some_and(|report| {
        let mut have: BTreeMap<&ResourceType, usize> = BTreeMap::new();
        for r in &report.final_resources {
            *have.entry(&r.rtype).or_insert(0) += 1;
        }
        case.gold.expected_final_types.iter().all(|t| match have.get_mut(t) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
    });
    let solved = !predicted.is_empty() && necessary && !hallucinated && consistent && produced_expected;

    Ok(CaseRecord {
        case_id: case.id.clone(),
        difficulty: case.difficulty,
        irrelevant,
        necessary,
        hallucinated,
        consistent,
        solved,
        error: None,
    })
}

/// An exact non-negative fraction in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    /// Panics if `den` is zero.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "ratio with zero denominator");
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Ratio", 3)?;
        st.serialize_field("num", &self.num)?;
        st.serialize_field("den", &self.den)?;
        st.serialize_field("value", &self.as_f64())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TierScores {
    pub easy: Option<Ratio>,
    pub medium: Option<Ratio>,
    pub hard: Option<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    pub cases: Vec<CaseRecord>,
    pub ir: Ratio,
    pub nr: Ratio,
    pub hr: Ratio,
    pub cr: Ratio,
    pub se: Ratio,
    pub se_by_difficulty: TierScores,
}

fn proportion<'a>(records: impl IntoIterator<Item = &'a CaseRecord>, pred: impl Fn(&CaseRecord) -> bool) -> Option<Ratio> {
    let (mut hit, mut total) = (0u64, 0u64);
    for r in records {
        total += 1;
        hit += u64::from(pred(r));
    }
    (total > 0).then(|| Ratio::new(hit, total))
}

pub fn aggregate(records: Vec<CaseRecord>) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyBenchmark);
    }
    let all = |p: fn(&CaseRecord) -> bool| proportion(&records, p).expect("records are non-empty");
    let tier = |d: Difficulty| proportion(records.iter().filter(|r| r.difficulty == d), |r| r.solved);
    Ok(EvalReport {
        ir: all(|r| r.irrelevant),
        nr: all(|r| r.necessary),
        hr: all(|r| r.hallucinated),
        cr: all(|r| r.consistent),
        se: all(|r| r.solved),
        se_by_difficulty: TierScores {
            easy: tier(Difficulty::Easy),
            medium: tier(Difficulty::Medium),
            hard: tier(Difficulty::Hard),
        },
        cases: records,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Aligned text table, one row labelled `label`.
    pub fn to_table(&self, label: &str) -> String {
        let cell = |r: Option<Ratio>| match r {
            Some(r) => format!("{:.3}", r.as_f64()),
            None => String::from("-"),
        };
        let width = label.len().max(10);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            "", "IR↓", "NR↑", "HR↓", "CR↑", "SE", "easy", "medium", "hard"
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
            label,
            cell(Some(self.ir)),
            cell(Some(self.nr)),
            cell(Some(self.hr)),
            cell(Some(self.cr)),
            cell(Some(self.se)),
            cell(self.se_by_difficulty.easy),
            cell(self.se_by_difficulty.medium),
            cell(self.se_by_difficulty.hard),
        );
        out
    }
}
