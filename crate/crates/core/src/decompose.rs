//! Task decomposition: the subtask protocol, its validation, pluggable
//! decomposers and the parallel stage schedule.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{violation, Error, Result};
use crate::types::{parse_placeholder, Domain, GenPlaceholder, ResourceType, Vocabulary};

/// Retries granted to a decomposer whose output fails validation.
pub const DECOMPOSE_RETRIES: usize = 2;

/// Value of a subtask argument: a literal (path or inline text) or a
/// reference to a resource generated by a prerequisite subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArgValue {
    Literal(String),
    Gen(GenPlaceholder),
}

impl ArgValue {
    pub fn render(&self) -> String {
        match self {
            ArgValue::Literal(s) => s.clone(),
            ArgValue::Gen(p) => p.raw(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedValue {
    pub rtype: ResourceType,
    pub value: ArgValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReturnSpec {
    pub rtype: ResourceType,
    pub placeholder: GenPlaceholder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtask {
    pub id: u32,
    pub description: String,
    pub domains: Vec<Domain>,
    pub dep: Vec<u32>,
    pub args: Vec<TypedValue>,
    pub returns: Vec<ReturnSpec>,
}

impl Subtask {
    /// Distinct argument types: the search's starting resource set.
    pub fn arg_types(&self) -> BTreeSet<ResourceType> {
        self.args.iter().map(|a| a.rtype.clone()).collect()
    }

    pub fn return_types(&self) -> impl Iterator<Item = &ResourceType> {
        self.returns.iter().map(|r| &r.rtype)
    }

    /// Literal arguments of inline types (user-supplied text and the like).
    pub fn inline_args(&self) -> impl Iterator<Item = (&ResourceType, &str)> {
        self.args.iter().filter_map(|a| match &a.value {
            ArgValue::Literal(v) if a.rtype.is_inline() => Some((&a.rtype, v.as_str())),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionResult {
    pub subtasks: Vec<Subtask>,
    pub source_request: String,
}

impl DecompositionResult {
    pub fn subtask(&self, id: u32) -> Option<&Subtask> {
        self.subtasks.get(id as usize).filter(|s| s.id == id)
    }

    /// Protocol JSON (an array of subtask records).
    pub fn to_json(&self) -> String {
        let docs: Vec<SubtaskDoc> = self.subtasks.iter().map(SubtaskDoc::from).collect();
        serde_json::to_string(&docs).expect("subtask docs always serialize")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubtaskDoc {
    description: String,
    #[serde(alias = "task")]
    domains: Vec<String>,
    id: u32,
    #[serde(default)]
    dep: DepDoc,
    args: Vec<ValueDoc>,
    returns: Vec<ValueDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum DepDoc {
    Many(Vec<u32>),
    One(u32),
}

impl Default for DepDoc {
    fn default() -> Self {
        DepDoc::Many(Vec::new())
    }
}

impl DepDoc {
    fn into_vec(self) -> Vec<u32> {
        match self {
            DepDoc::Many(v) => v,
            DepDoc::One(x) => vec![x],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueDoc {
    #[serde(rename = "type")]
    rtype: String,
    value: String,
}

impl From<&Subtask> for SubtaskDoc {
    fn from(s: &Subtask) -> Self {
        SubtaskDoc {
            description: s.description.clone(),
            domains: s.domains.iter().map(|d| d.name().to_owned()).collect(),
            id: s.id,
            dep: DepDoc::Many(s.dep.clone()),
            args: s
                .args
                .iter()
                .map(|a| ValueDoc {
                    rtype: a.rtype.name().to_owned(),
                    value: a.value.render(),
                })
                .collect(),
            returns: s
                .returns
                .iter()
                .map(|r| ValueDoc {
                    rtype: r.rtype.name().to_owned(),
                    value: r.placeholder.raw(),
                })
                .collect(),
        }
    }
}

/// Parses and validates a decomposition document. The document may be
/// wrapped in `<Solution>` tags.
pub fn parse_decomposition(doc: &str, vocab: &Vocabulary) -> Result<DecompositionResult> {
    let body = extract_solution_block(doc).unwrap_or(doc);
    let docs: Vec<SubtaskDoc> =
        serde_json::from_str(body.trim()).map_err(|e| violation("document", format!("{e}")))?;
    let mut subtasks = docs
        .into_iter()
        .map(|d| resolve_subtask(d, vocab))
        .collect::<Result<Vec<_>>>()?;
    subtasks.sort_by_key(|s| s.id);
    validate_subtasks(&subtasks)?;
    Ok(DecompositionResult {
        subtasks,
        source_request: String::new(),
    })
}

fn resolve_subtask(d: SubtaskDoc, vocab: &Vocabulary) -> Result<Subtask> {
    let at = |field: &str| format!("subtasks[{}].{field}", d.id);
    if d.description.trim().is_empty() {
        return Err(violation(at("description"), "empty description"));
    }
    let domains = d
        .domains
        .iter()
        .map(|name| {
            vocab
                .domain(name)
                .map_err(|_| violation(at("task"), format!("unknown domain `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let resolve_type = |field: &str, name: &str| {
        vocab
            .resource_type(name)
            .map_err(|_| violation(at(field), format!("unknown resource type `{name}`")))
    };
    let mut args = Vec::with_capacity(d.args.len());
    for a in &d.args {
        let rtype = resolve_type("args", &a.rtype)?;
        let value = if GenPlaceholder::looks_like(&a.value) {
            ArgValue::Gen(
                parse_placeholder(&a.value).map_err(|e| violation(at("args"), e.to_string()))?,
            )
        } else {
            ArgValue::Literal(a.value.clone())
        };
        args.push(TypedValue { rtype, value });
    }
    let mut returns = Vec::with_capacity(d.returns.len());
    for r in &d.returns {
        let rtype = resolve_type("returns", &r.rtype)?;
        let placeholder =
            parse_placeholder(&r.value).map_err(|e| violation(at("returns"), e.to_string()))?;
        returns.push(ReturnSpec { rtype, placeholder });
    }
    Ok(Subtask {
        id: d.id,
        description: d.description,
        domains,
        dep: d.dep.into_vec(),
        args,
        returns,
    })
}

fn validate_subtasks(subtasks: &[Subtask]) -> Result<()> {
    for (pos, s) in subtasks.iter().enumerate() {
        let at = |field: &str| format!("subtasks[{}].{field}", s.id);
        if s.id as usize != pos {
            return Err(violation(
                "id",
                format!("ids must be contiguous from 0; expected {pos}, found {}", s.id),
            ));
        }
        let mut seen = BTreeSet::new();
        for &d in &s.dep {
            if d >= s.id {
                return Err(violation(
                    at("dep"),
                    format!("dependency {d} is not an earlier subtask"),
                ));
            }
            if !seen.insert(d) {
                return Err(violation(at("dep"), format!("dependency {d} listed twice")));
            }
        }
        if s.args.is_empty() {
            return Err(violation(at("args"), "a subtask needs at least one argument"));
        }
        for a in &s.args {
            if let ArgValue::Gen(p) = &a.value {
                if !s.dep.contains(&p.id) {
                    return Err(violation(
                        at("args"),
                        format!("placeholder {p} does not refer to a listed dependency"),
                    ));
                }
                let producer = &subtasks[p.id as usize];
                if !producer.return_types().any(|t| *t == a.rtype) {
                    return Err(violation(
                        at("args"),
                        format!("subtask {} does not return a {}", p.id, a.rtype),
                    ));
                }
            }
        }
        if s.returns.is_empty() {
            return Err(violation(at("returns"), "a subtask needs at least one return"));
        }
        for r in &s.returns {
            if r.placeholder.id != s.id {
                return Err(violation(
                    at("returns"),
                    format!("return placeholder {} must carry the subtask id", r.placeholder),
                ));
            }
        }
    }
    Ok(())
}

/// Text between the first `<Solution>` and the following `</Solution>`.
pub fn extract_solution_block(text: &str) -> Option<&str> {
    let start = text.find("<Solution>")? + "<Solution>".len();
    let end = text[start..].find("</Solution>")? + start;
    Some(text[start..end].trim())
}

/// Produces protocol JSON for a request.
pub trait Decomposer {
    fn decompose(&self, request: &str) -> Result<String>;

    /// Exclusive decomposers must not be called concurrently.
    fn is_exclusive(&self) -> bool {
        false
    }
}

impl<T: Decomposer + ?Sized> Decomposer for &T {
    fn decompose(&self, request: &str) -> Result<String> {
        (**self).decompose(request)
    }
    fn is_exclusive(&self) -> bool {
        (**self).is_exclusive()
    }
}

impl<T: Decomposer + ?Sized> Decomposer for Box<T> {
    fn decompose(&self, request: &str) -> Result<String> {
        (**self).decompose(request)
    }
    fn is_exclusive(&self) -> bool {
        (**self).is_exclusive()
    }
}

/// Runs `decomposer` and re-validates its output, retrying malformed
/// output up to `retries` more times.
pub fn decompose(
    request: &str,
    decomposer: &dyn Decomposer,
    vocab: &Vocabulary,
    retries: usize,
) -> Result<DecompositionResult> {
    if request.trim().is_empty() {
        return Err(Error::EmptyDecomposition);
    }
    let mut last = String::from("no attempt made");
    for _ in 0..=retries {
        let raw = match decomposer.decompose(request) {
            Ok(raw) => raw,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        match parse_decomposition(&raw, vocab) {
            Ok(d) if d.subtasks.is_empty() => return Err(Error::EmptyDecomposition),
            Ok(mut d) => {
                d.source_request = request.to_owned();
                return Ok(d);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::DecompositionFailed {
        attempts: retries + 1,
        last,
    })
}

/// Longest-path layering: stage `i` holds every subtask whose deepest
/// dependency sits in stage `i - 1`.
pub fn subtask_schedule(d: &DecompositionResult) -> Vec<Vec<u32>> {
    let mut level = vec![0usize; d.subtasks.len()];
    for s in &d.subtasks {
        level[s.id as usize] = s
            .dep
            .iter()
            .map(|&p| level[p as usize] + 1)
            .max()
            .unwrap_or(0);
    }
    let depth = level.iter().copied().max().map_or(0, |m| m + 1);
    let mut stages = vec![Vec::new(); depth];
    for s in &d.subtasks {
        stages[level[s.id as usize]].push(s.id);
    }
    stages
}

struct Stage {
    domain: &'static str,
    inputs: &'static [&'static str],
    ret: &'static str,
    hint: &'static str,
}

struct Rule {
    keywords: &'static [&'static str],
    stages: &'static [Stage],
}

macro_rules! rule {
    ([$($kw:expr),+] => $($domain:expr, [$($input:expr),*], $ret:expr, $hint:expr);+) => {
        Rule {
            keywords: &[$($kw),+],
            stages: &[$(Stage { domain: $domain, inputs: &[$($input),*], ret: $ret, hint: $hint }),+],
        }
    };
}

// Rules sharing a keyword are tried in order; the first whose inputs can be
// satisfied wins.
const RULES: &[Rule] = &[
    rule!(["remove", "erase", "take away", "delete", "replace"] =>
        "image-editing", ["image", "text"], "image", "text_image_editing"),
    rule!(["crop"] =>
        "image-perception", ["image", "text"], "bbox", "visual_grounding";
        "image-editing", ["image"], "image", "image_cropping"),
    rule!(["mask"] => "image-perception", ["image", "text"], "mask", "instance_segmentation"),
    rule!(["segment"] => "image-perception", ["image"], "segmentation", "segment_anything"),
    rule!(["caption", "describe"] => "video-perception", ["video"], "text", "video_captioning"),
    rule!(["caption", "describe"] => "image-perception", ["image"], "text", "image_captioning"),
    rule!(["detect", "locate", "find the"] =>
        "image-perception", ["image"], "bbox", "object_detection"),
    rule!(["classify", "what kind"] => "audio-perception", ["audio"], "category", "audio_classification"),
    rule!(["classify", "what kind"] => "video-perception", ["video"], "category", "video_classification"),
    rule!(["classify", "what kind"] => "image-perception", ["image"], "category", "image_classification"),
    rule!(["summarize", "summary"] =>
        "natural-language-processing", ["text"], "text", "summarization"),
    rule!(["tags", "keywords"] => "natural-language-processing", ["text"], "tags", "text_to_tags"),
    rule!(["sentiment"] =>
        "natural-language-processing", ["text"], "category", "sentiment_analysis"),
    rule!(["music", "song"] => "audio-generation", ["text"], "audio", "text_to_music"),
    rule!(["speech", "aloud", "read out"] => "audio-generation", ["text"], "audio", "text_to_speech"),
    rule!(["dub"] => "video-processing", ["video", "audio"], "video", "dub_video"),
    rule!(["webpage", "web page"] => "video-processing", ["video", "text"], "html", "video_to_webpage"),
    rule!(["animate", "make a video", "generate a video", "create a video"] =>
        "video-generation", ["image", "audio"], "video", "image_audio_to_video"),
    rule!(["animate", "make a video", "generate a video", "create a video"] =>
        "video-generation", ["image"], "video", "image_to_video"),
    rule!(["animate", "make a video", "generate a video", "create a video"] =>
        "video-generation", ["text"], "video", "text_to_video"),
    rule!(["edge"] => "image-processing", ["image"], "edge", "image_to_edge"),
    rule!(["depth"] => "image-processing", ["image"], "depth", "image_to_depth"),
    rule!(["line drawing", "lines"] => "image-processing", ["image"], "line", "image_to_line"),
    rule!(["hed"] => "image-processing", ["image"], "hed", "image_to_hed"),
    rule!(["scribble"] => "image-processing", ["image"], "scribble", "image_to_scribble"),
    rule!(["pose"] => "image-processing", ["image"], "pose", "image_to_pose"),
    rule!(["normal map", "surface normal"] =>
        "image-processing", ["image"], "normal", "image_to_normal"),
    rule!(["generate", "draw", "create", "paint", "picture of"] =>
        "image-generation", ["text"], "image", "text_to_image"),
];

const QUESTION_STARTS: &[&str] = &[
    "what", "how", "why", "who", "where", "when", "which", "is ", "are ", "does ", "do ", "can ",
    "please determine", "tell me",
];

/// Deterministic keyword-table decomposer.
///
/// Requests are split into clauses at sentence boundaries, `;` and `then`.
/// A clause introduced by `then` consumes the output of the clause before
/// it. A clause naming several files of the type it needs fans out into one
/// subtask per file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleDecomposer {
    /// Append tool-name hints to each description.
    pub prior_knowledge: bool,
}

#[derive(Serialize)]
struct OutDoc {
    description: String,
    task: Vec<&'static str>,
    id: u32,
    dep: Vec<u32>,
    args: Vec<OutValue>,
    returns: Vec<OutValue>,
}

#[derive(Serialize)]
struct OutValue {
    #[serde(rename = "type")]
    rtype: &'static str,
    value: String,
}

struct Produced {
    id: u32,
    rtype: &'static str,
}

impl Decomposer for RuleDecomposer {
    fn decompose(&self, request: &str) -> Result<String> {
        let mut docs: Vec<OutDoc> = Vec::new();
        let mut previous: Vec<Produced> = Vec::new();
        for (clause, chained) in split_clauses(request) {
            let upstream: Vec<Produced> = if chained {
                core::mem::take(&mut previous)
            } else {
                previous.clear();
                Vec::new()
            };
            match self.plan_clause(&clause, &upstream, &mut docs) {
                Some(produced) => previous = produced,
                None if clause_has_rule(&clause) => return Ok(String::from("[]")),
                None => previous = upstream,
            }
        }
        Ok(serde_json::to_string(&docs).expect("decomposition docs serialize"))
    }
}

impl RuleDecomposer {
    fn plan_clause(
        &self,
        clause: &str,
        upstream: &[Produced],
        docs: &mut Vec<OutDoc>,
    ) -> Option<Vec<Produced>> {
        let lower = clause.to_lowercase();
        let files = find_files(clause);
        let mut candidates: Vec<(usize, usize)> = RULES
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                r.keywords
                    .iter()
                    .filter_map(|k| lower.find(k))
                    .min()
                    .map(|pos| (pos, i))
            })
            .collect();
        candidates.sort();
        for (_, idx) in candidates {
            if let Some(out) = self.apply_rule(&RULES[idx], clause, &files, upstream, docs) {
                return Some(out);
            }
        }
        if is_question(&lower) {
            let qa_image: &[Stage] = &[Stage {
                domain: "question-answering",
                inputs: &["image", "text"],
                ret: "text",
                hint: "image_question_answering",
            }];
            let qa_text: &[Stage] = &[Stage {
                domain: "question-answering",
                inputs: &["text"],
                ret: "text",
                hint: "question_answering",
            }];
            for stages in [qa_image, qa_text] {
                let rule = Rule { keywords: &[], stages };
                if let Some(out) = self.apply_rule(&rule, clause, &files, upstream, docs) {
                    return Some(out);
                }
            }
        }
        None
    }

    fn apply_rule(
        &self,
        rule: &Rule,
        clause: &str,
        files: &[(String, &'static str)],
        upstream: &[Produced],
        docs: &mut Vec<OutDoc>,
    ) -> Option<Vec<Produced>> {
        let first = &rule.stages[0];
        // The media input that drives fan-out: the first non-text input.
        let primary = first.inputs.iter().copied().find(|t| *t != "text");
        let primary_from_upstream = primary.is_some_and(|p| upstream.iter().any(|u| u.rtype == p));
        let fan: Vec<Option<&str>> = match primary {
            Some(p) if !primary_from_upstream => {
                let matching: Vec<&str> = files
                    .iter()
                    .filter(|(_, t)| *t == p)
                    .map(|(f, _)| f.as_str())
                    .collect();
                if matching.is_empty() {
                    return None;
                }
                matching.into_iter().map(Some).collect()
            }
            _ => vec![None],
        };
        // Every other required media input must be available somewhere.
        for input in first.inputs.iter().filter(|t| **t != "text" && Some(**t) != primary) {
            let ok = upstream.iter().any(|u| u.rtype == *input) || files.iter().any(|(_, t)| t == input);
            if !ok {
                return None;
            }
        }

        let mut produced = Vec::new();
        for primary_file in fan {
            let mut prev: Option<Produced> = None;
            for (si, stage) in rule.stages.iter().enumerate() {
                let id = docs.len() as u32;
                let mut dep = Vec::new();
                let mut args = Vec::new();
                let mut filled: BTreeSet<&str> = BTreeSet::new();
                let sources: Vec<&Produced> = match &prev {
                    Some(p) => vec![p],
                    None => upstream.iter().collect(),
                };
                for src in sources {
                    if !dep.contains(&src.id) {
                        dep.push(src.id);
                    }
                    args.push(OutValue {
                        rtype: src.rtype,
                        value: GenPlaceholder::new(src.id).raw(),
                    });
                    filled.insert(src.rtype);
                }
                for input in stage.inputs {
                    if filled.contains(input) {
                        continue;
                    }
                    let value = if *input == "text" {
                        clause.to_owned()
                    } else if si == 0 && Some(*input) == primary && primary_file.is_some() {
                        primary_file.unwrap_or_default().to_owned()
                    } else if let Some((f, _)) = files.iter().find(|(_, t)| t == input) {
                        f.clone()
                    } else {
                        return None;
                    };
                    args.push(OutValue { rtype: input, value });
                    filled.insert(input);
                }
                let mut description = clause.to_owned();
                if self.prior_knowledge {
                    description.push_str(" (consider tools: ");
                    description.push_str(stage.hint);
                    description.push(')');
                }
                docs.push(OutDoc {
                    description,
                    task: vec![stage.domain],
                    id,
                    dep,
                    args,
                    returns: vec![OutValue {
                        rtype: stage.ret,
                        value: GenPlaceholder::new(id).raw(),
                    }],
                });
                prev = Some(Produced { id, rtype: stage.ret });
            }
            produced.extend(prev);
        }
        Some(produced)
    }
}

fn clause_has_rule(clause: &str) -> bool {
    let lower = clause.to_lowercase();
    RULES
        .iter()
        .any(|r| r.keywords.iter().any(|k| lower.contains(k)))
        || is_question(&lower)
}

fn is_question(lower: &str) -> bool {
    lower.ends_with('?') || QUESTION_STARTS.iter().any(|q| lower.starts_with(q))
}

/// Splits at sentence ends, `;` and `then`. The flag marks clauses that
/// were introduced by `then`.
fn split_clauses(request: &str) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    for sentence in split_sentences(request) {
        let lower = sentence.to_lowercase();
        let mut chained = false;
        let mut last = 0;
        let mut search = 0;
        while let Some(rel) = lower[search..].find(" then ") {
            let at = search + rel;
            push_clause(&mut out, &sentence[last..at], chained);
            chained = true;
            last = at + " then ".len();
            search = last;
        }
        push_clause(&mut out, &sentence[last..], chained);
    }
    out
}

fn push_clause(out: &mut Vec<(String, bool)>, raw: &str, chained: bool) {
    let trimmed = raw
        .trim()
        .trim_start_matches(|c: char| c == ',' || c.is_whitespace())
        .trim_end_matches(|c: char| c == ',' || c == '.' || c == '!' || c.is_whitespace());
    let trimmed = trimmed
        .strip_prefix("and ")
        .unwrap_or(trimmed)
        .trim_end_matches(" and")
        .trim();
    if !trimmed.is_empty() {
        out.push((trimmed.to_owned(), chained));
    }
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    for i in 0..bytes.len() {
        let b = bytes[i];
        let boundary = match b {
            b';' | b'\n' => true,
            b'.' | b'?' | b'!' => bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()),
            _ => false,
        };
        if boundary {
            // keep `?` so the clause still reads as a question
            let end = if b == b'?' { i + 1 } else { i };
            out.push(&text[start..end]);
            start = i + 1;
        }
    }
    out.push(&text[start..]);
    out
}

fn find_files(clause: &str) -> Vec<(String, &'static str)> {
    clause
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '(' | ')' | '"' | '\'' | '`'))
        .map(|tok| tok.trim_end_matches(['.', '?', '!', ':']))
        .filter_map(|tok| {
            let ext = tok.rsplit_once('.')?.1.to_ascii_lowercase();
            let rtype = match ext.as_str() {
                "png" | "jpg" | "jpeg" | "gif" | "bmp" | "webp" => "image",
                "wav" | "mp3" | "flac" | "ogg" => "audio",
                "mp4" | "avi" | "mov" | "mkv" => "video",
                _ => return None,
            };
            Some((tok.to_owned(), rtype))
        })
        .collect()
}
