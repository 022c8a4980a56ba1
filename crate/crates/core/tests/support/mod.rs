//! Random tool-graph instances and a brute-force path enumerator used as an
//! independent reference for the search.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

use tog_core::decompose::{ArgValue, ReturnSpec, TypedValue};
use tog_core::experts::TableAssessor;
use tog_core::graph::{build_graph, ArgSpec, ToolGraph, ToolSpec};
use tog_core::types::{GenPlaceholder, BUILTIN_DOMAINS, BUILTIN_TYPES};
use tog_core::{SolutionPath, Subtask, Vocabulary};

pub struct Instance {
    pub tools: Vec<ToolSpec>,
    pub graph: ToolGraph,
    pub subtask: Subtask,
    pub scores: Vec<(String, u8)>,
    pub max_len: usize,
}

impl Instance {
    pub fn assessor(&self) -> TableAssessor {
        TableAssessor::new(self.scores.iter().map(|(n, s)| (n.as_str(), *s)), 1)
    }
}

/// A random instance with at most `max_tools` tools and path limit in
/// `1..=max_len`.
pub fn random_instance(seed: u64, max_tools: usize, max_len: usize) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let vocab = Vocabulary::builtin();
    let mut type_names: Vec<&str> = BUILTIN_TYPES.to_vec();
    type_names.shuffle(&mut rng);
    let n_types = rng.random_range(3..=6);
    let types: Vec<_> = type_names[..n_types]
        .iter()
        .map(|t| vocab.resource_type(t).unwrap())
        .collect();
    let domains: Vec<_> = BUILTIN_DOMAINS[..3]
        .iter()
        .map(|d| vocab.domain(d).unwrap())
        .collect();

    let n_tools = rng.random_range(1..=max_tools);
    let mut tools = Vec::with_capacity(n_tools);
    for i in 0..n_tools {
        let n_args = rng.random_range(1..=3.min(types.len()));
        let mut arg_types = types.clone();
        arg_types.shuffle(&mut rng);
        let args = arg_types[..n_args]
            .iter()
            .enumerate()
            .map(|(j, t)| ArgSpec::new(format!("a{j}"), t.clone()))
            .collect();
        let ret = types.choose(&mut rng).unwrap().clone();
        let tool_domains = vec![domains.choose(&mut rng).unwrap().clone()];
        tools.push(
            ToolSpec::new(format!("t{i:02}"), "random tool", tool_domains, args, ArgSpec::new("out", ret))
                .unwrap(),
        );
    }

    let n_in = rng.random_range(1..=2);
    let mut in_types = types.clone();
    in_types.shuffle(&mut rng);
    let args = in_types[..n_in]
        .iter()
        .map(|t| TypedValue {
            rtype: t.clone(),
            value: ArgValue::Literal(format!("input.{t}")),
        })
        .collect();
    let subtask_domains = if rng.random_bool(0.5) {
        vec![]
    } else {
        let mut d = domains.clone();
        d.shuffle(&mut rng);
        d.truncate(rng.random_range(1..=2));
        d
    };
    let subtask = Subtask {
        id: 0,
        description: "random subtask".into(),
        domains: subtask_domains,
        dep: vec![],
        args,
        returns: vec![ReturnSpec {
            rtype: types.choose(&mut rng).unwrap().clone(),
            placeholder: GenPlaceholder::new(0),
        }],
    };
    let scores = tools
        .iter()
        .map(|t| (t.name.clone(), rng.random_range(1..=5)))
        .collect();
    let max_len = rng.random_range(1..=max_len);
    Instance {
        graph: build_graph(tools.clone()).unwrap(),
        tools,
        subtask,
        scores,
        max_len,
    }
}

/// Every tool sequence of length `1..=m` in which each tool's arguments are
/// covered by the subtask inputs plus earlier outputs. Returns the
/// sequences ending in the goal type and the total number of sequences.
pub fn brute_force(
    tools: &[ToolSpec],
    subtask: &Subtask,
    m: usize,
    reuse: bool,
    use_domains: bool,
) -> (BTreeSet<Vec<String>>, u64) {
    let goal = &subtask.returns[0].rtype;
    let allowed: Vec<usize> = (0..tools.len())
        .filter(|&i| {
            !use_domains
                || subtask.domains.is_empty()
                || tools[i].domains.iter().any(|d| subtask.domains.contains(d))
        })
        .collect();
    let mut solutions = BTreeSet::new();
    let mut count = 0u64;
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::new();
        for seq in &frontier {
            let mut have: Vec<&str> = subtask.args.iter().map(|a| a.rtype.name()).collect();
            have.extend(seq.iter().map(|&i| tools[i].ret.rtype.name()));
            for &i in &allowed {
                if !reuse && seq.contains(&i) {
                    continue;
                }
                if !tools[i].args.iter().all(|a| have.contains(&a.rtype.name())) {
                    continue;
                }
                let mut ext = seq.clone();
                ext.push(i);
                count += 1;
                if &tools[i].ret.rtype == goal {
                    solutions.insert(ext.iter().map(|&j| tools[j].name.clone()).collect());
                }
                next.push(ext);
            }
        }
        frontier = next;
    }
    (solutions, count)
}

pub fn path_set(paths: &[SolutionPath]) -> BTreeSet<Vec<String>> {
    paths
        .iter()
        .map(|p| p.tool_names().into_iter().map(str::to_owned).collect())
        .collect()
}

/// A random decomposition that satisfies every protocol rule.
pub fn random_decomposition(seed: u64) -> tog_core::DecompositionResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let vocab = Vocabulary::builtin();
    let ty = |n: &str| vocab.resource_type(n).unwrap();
    let n = rng.random_range(1..=5u32);
    let mut subtasks: Vec<Subtask> = Vec::new();
    for id in 0..n {
        let dep: Vec<u32> = (0..id).filter(|_| rng.random_bool(0.4)).collect();
        let mut args = Vec::new();
        for &d in &dep {
            let producer: &Subtask = &subtasks[d as usize];
            let t = producer.returns.choose(&mut rng).unwrap().rtype.clone();
            args.push(TypedValue {
                rtype: t,
                value: ArgValue::Gen(GenPlaceholder::new(d)),
            });
        }
        let n_lit = if args.is_empty() { rng.random_range(1..=2) } else { rng.random_range(0..=1) };
        for k in 0..n_lit {
            let t = *BUILTIN_TYPES.choose(&mut rng).unwrap();
            let value = if ty(t).is_inline() {
                format!("some {t} value {k}")
            } else {
                format!("{t}_{id}_{k}.dat")
            };
            args.push(TypedValue {
                rtype: ty(t),
                value: ArgValue::Literal(value),
            });
        }
        args.shuffle(&mut rng);
        let n_ret = rng.random_range(1..=2);
        let returns = (0..n_ret)
            .map(|_| ReturnSpec {
                rtype: ty(BUILTIN_TYPES.choose(&mut rng).unwrap()),
                placeholder: GenPlaceholder::new(id),
            })
            .collect();
        let mut domains: Vec<_> = BUILTIN_DOMAINS.to_vec();
        domains.shuffle(&mut rng);
        subtasks.push(Subtask {
            id,
            description: format!("subtask number {id} of seed {seed}"),
            domains: domains[..rng.random_range(1..=2)]
                .iter()
                .map(|d| vocab.domain(d).unwrap())
                .collect(),
            dep,
            args,
            returns,
        });
    }
    tog_core::DecompositionResult {
        subtasks,
        source_request: String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Cycle,
    BadType,
    DanglingPlaceholder,
}

pub const MUTATIONS: [Mutation; 3] = [Mutation::Cycle, Mutation::BadType, Mutation::DanglingPlaceholder];

/// Applies one single-field mutation to the protocol JSON of `d`.
pub fn mutate(d: &tog_core::DecompositionResult, kind: Mutation, seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut doc: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
    let items = doc.as_array_mut().unwrap();
    let n = items.len() as u64;
    let i = rng.random_range(0..items.len());
    let item = &mut items[i];
    match kind {
        Mutation::Cycle => {
            // depend on itself or on a later subtask
            let target = rng.random_range(i as u64..n);
            item["dep"].as_array_mut().unwrap().push(target.into());
        }
        Mutation::BadType => {
            let field = if rng.random_bool(0.5) { "args" } else { "returns" };
            let list = item[field].as_array_mut().unwrap();
            let k = rng.random_range(0..list.len());
            list[k]["type"] = "picture".into();
        }
        Mutation::DanglingPlaceholder => {
            let deps: Vec<u64> = item["dep"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap())
                .collect();
            let missing = (0..n + 3).filter(|k| !deps.contains(k)).collect::<Vec<_>>();
            let k = *missing.choose(&mut rng).unwrap();
            item["args"]
                .as_array_mut()
                .unwrap()
                .push(serde_json::json!({"type": "image", "value": format!("<GEN>-{k}")}));
        }
    }
    doc.to_string()
}

pub struct FixtureCase {
    pub case: tog_core::BenchmarkCase,
    pub predicted: Vec<tog_core::search::BoundSolution>,
    pub exec: Option<tog_core::ExecutionReport>,
    /// Hand-derived (F, H, P, Q, W).
    pub expect: [bool; 5],
}

type StepDef<'a> = (&'a str, u32, &'a [&'a str]);

/// Bound solution for subtask `sid`; bindings starting with `"` are inline.
pub fn bound(sid: u32, steps: &[StepDef<'_>]) -> tog_core::search::BoundSolution {
    use tog_core::experts::ArgumentBinding;
    use tog_core::search::{BoundSolution, PathStep};
    let g = build_graph(tog_core::default_registry()).unwrap();
    let path = SolutionPath {
        steps: steps
            .iter()
            .map(|(t, out, _)| PathStep {
                tool: g.tool(t).unwrap().clone(),
                output: GenPlaceholder::new(*out),
            })
            .collect(),
        terminal_type: g.tool(steps.last().unwrap().0).unwrap().ret.rtype.clone(),
    };
    let binding = ArgumentBinding {
        steps: steps
            .iter()
            .map(|(t, _, binds)| {
                g.tool(t)
                    .unwrap()
                    .args
                    .iter()
                    .zip(binds.iter())
                    .map(|(a, v)| {
                        let b = match v.strip_prefix('"') {
                            Some(text) => tog_core::BoundArg::Inline(text.trim_end_matches('"').to_owned()),
                            None => tog_core::BoundArg::Resource((*v).to_owned()),
                        };
                        (a.name.clone(), b)
                    })
                    .collect()
            })
            .collect(),
    };
    BoundSolution { subtask_id: sid, path, binding }
}

fn fixture_case(id: &str, gold: &[&str], allowed: &[&str], expected: &[&str], initial: &[(&str, &str)]) -> tog_core::BenchmarkCase {
    use tog_core::eval::GoldAnnotation;
    let vocab = Vocabulary::builtin();
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let gold_set = set(gold);
    tog_core::BenchmarkCase {
        id: id.into(),
        instruction: format!("fixture {id}"),
        difficulty: tog_core::Difficulty::for_tool_count(gold_set.len()),
        initial_resources: initial
            .iter()
            .map(|(v, t)| Resource::new(*v, vocab.resource_type(t).unwrap(), *v))
            .collect(),
        gold: GoldAnnotation {
            acceptable_tool_sets: vec![gold_set],
            allowed_tools: set(allowed),
            expected_final_types: expected.iter().map(|t| vocab.resource_type(t).unwrap()).collect(),
        },
    }
}

fn produced(types: &[&str]) -> Option<tog_core::ExecutionReport> {
    let vocab = Vocabulary::builtin();
    Some(tog_core::ExecutionReport {
        final_resources: types
            .iter()
            .enumerate()
            .map(|(i, t)| Resource::new(format!("out{i}"), vocab.resource_type(t).unwrap(), format!("/ws/out{i}")))
            .collect(),
        ..Default::default()
    })
}

use tog_core::Resource;

/// Ten judged cases whose predicates were worked out by hand.
pub fn metric_fixture() -> Vec<FixtureCase> {
    let img = &[("a.png", "image")][..];
    vec![
        FixtureCase {
            case: fixture_case("exact", &["image_to_edge"], &["image_to_edge"], &["edge"], img),
            predicted: vec![bound(0, &[("image_to_edge", 0, &["a.png"])])],
            exec: produced(&["edge"]),
            expect: [false, true, false, true, true],
        },
        FixtureCase {
            case: fixture_case("extra-tool", &["image_to_edge"], &["image_to_edge"], &["edge"], img),
            predicted: vec![
                bound(0, &[("image_to_edge", 0, &["a.png"])]),
                bound(1, &[("text_to_music", 1, &["\"calm piano\""])]),
            ],
            exec: produced(&["edge", "audio"]),
            expect: [true, true, false, true, true],
        },
        FixtureCase {
            case: fixture_case("ghost", &["image_captioning"], &["image_captioning"], &["text"], img),
            predicted: vec![bound(0, &[("image_captioning", 0, &["ghost.png"])])],
            exec: produced(&["text"]),
            expect: [false, true, true, true, false],
        },
        FixtureCase {
            case: fixture_case(
                "missing-tool",
                &["image_captioning", "text_to_speech"],
                &["image_captioning", "text_to_speech"],
                &["audio"],
                img,
            ),
            predicted: vec![bound(0, &[("image_captioning", 0, &["a.png"])])],
            exec: produced(&["text"]),
            expect: [false, false, false, true, false],
        },
        FixtureCase {
            case: fixture_case(
                "detect-crop",
                &["object_detection", "image_cropping"],
                &["object_detection", "image_cropping", "visual_grounding"],
                &["image"],
                img,
            ),
            predicted: vec![bound(0, &[
                ("object_detection", 7, &["a.png"]),
                ("image_cropping", 0, &["a.png", "<GEN>-7"]),
            ])],
            exec: produced(&["image"]),
            expect: [false, true, false, true, true],
        },
        FixtureCase {
            case: fixture_case("type-conflict", &["image_to_edge"], &["image_to_edge"], &["edge"], &[("a.png", "image"), ("song.wav", "audio")]),
            predicted: vec![bound(0, &[("image_to_edge", 0, &["song.wav"])])],
            exec: produced(&["edge"]),
            expect: [false, true, false, false, false],
        },
        FixtureCase {
            case: fixture_case("not-run", &["image_to_edge"], &["image_to_edge"], &["edge"], img),
            predicted: vec![bound(0, &[("image_to_edge", 0, &["a.png"])])],
            exec: None,
            expect: [false, true, false, true, false],
        },
        FixtureCase {
            case: fixture_case(
                "short-output",
                &["image_to_edge", "image_to_depth", "image_to_hed", "image_to_line"],
                &["image_to_edge", "image_to_depth", "image_to_hed", "image_to_line"],
                &["edge", "depth", "hed", "line"],
                img,
            ),
            predicted: vec![
                bound(0, &[("image_to_edge", 0, &["a.png"])]),
                bound(1, &[("image_to_depth", 1, &["a.png"])]),
                bound(2, &[("image_to_hed", 2, &["a.png"])]),
                bound(3, &[("image_to_line", 3, &["a.png"])]),
            ],
            exec: produced(&["edge", "depth", "hed"]),
            expect: [false, true, false, true, false],
        },
        FixtureCase {
            case: fixture_case(
                "cross-ref",
                &["image_captioning", "text_to_speech"],
                &["image_captioning", "text_to_speech"],
                &["audio"],
                img,
            ),
            predicted: vec![
                bound(0, &[("image_captioning", 0, &["a.png"])]),
                bound(1, &[("text_to_speech", 1, &["<GEN>-0"])]),
            ],
            exec: produced(&["text", "audio"]),
            expect: [false, true, false, true, true],
        },
        FixtureCase {
            case: fixture_case(
                "dangling-ref",
                &["image_captioning", "text_to_speech"],
                &["image_captioning", "text_to_speech"],
                &["audio"],
                img,
            ),
            predicted: vec![
                bound(0, &[("image_captioning", 0, &["a.png"])]),
                bound(1, &[("text_to_speech", 1, &["<GEN>-3"])]),
            ],
            exec: produced(&["text", "audio"]),
            expect: [false, true, true, true, false],
        },
    ]
}
