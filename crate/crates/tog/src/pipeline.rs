//! The end-to-end engine: decompose, plan, compile, execute, respond.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tog_core::decompose::{ArgValue, DECOMPOSE_RETRIES};
use tog_core::exec::{generate_response, Responder, TemplateResponder};
use tog_core::graph::parse_registry;
use tog_core::search::GenIdAllocator;
use tog_core::{
    aggregate, build_graph, compile_actions, decompose, default_registry, judge_case,
    subtask_schedule, Action, BenchmarkCase, CaseRecord, Decomposer, DecompositionResult,
    EvalReport, ExecutionReport, MockAssessor, MockResourceExpert, MockSolutionExpert,
    RankedPlan, Resource, ResourceExpert, RuleDecomposer, SearchConfig, SearchStats,
    SolutionExpert, ToolAssessor, ToolGraph, Vocabulary,
};

use crate::config::{DecomposerBackend, EngineConfig, ExpertBackend, ResponderBackend};
use crate::error::{planning_stage, Stage, TogError};
use crate::executor::execute;
use crate::remote::{
    ChatClient, RemoteAssessor, RemoteDecomposer, RemoteResourceExpert, RemoteResponder,
    RemoteSolutionExpert,
};
use crate::tools::ToolRuntime;

/// Planning result for one request.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub decomposition: DecompositionResult,
    pub schedule: Vec<Vec<u32>>,
    /// One plan per subtask return, in schedule order.
    pub plans: Vec<RankedPlan>,
    /// Initial resources plus literal media arguments.
    pub initial: Vec<Resource>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub plan: PlanOutcome,
    pub actions: Vec<Action>,
    /// Unset on a dry run.
    pub report: Option<ExecutionReport>,
    pub response: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutcome {
    pub strategy: String,
    pub report: EvalReport,
    /// Mean tool expansions per case.
    pub mean_visited: f64,
}

pub struct Engine {
    pub vocab: Vocabulary,
    pub graph: ToolGraph,
    pub config: EngineConfig,
    decomposer: Box<dyn Decomposer>,
    assessor: Box<dyn ToolAssessor>,
    solution_expert: Box<dyn SolutionExpert>,
    resource_expert: Box<dyn ResourceExpert>,
    responder: Box<dyn Responder>,
    runtime: ToolRuntime,
}

impl Engine {
    pub fn from_config(config: EngineConfig) -> Result<Self, TogError> {
        config.validate()?;
        let vocab = Vocabulary::builtin();
        let tools = match &config.tool_registry {
            Some(path) => {
                let doc = std::fs::read_to_string(path).map_err(|e| TogError::io(path, e))?;
                parse_registry(&doc, &vocab).map_err(|e| TogError::core(Stage::Load, e))?
            }
            None => default_registry(),
        };
        let graph = build_graph(tools).map_err(|e| TogError::core(Stage::Load, e))?;

        let client = || -> Result<ChatClient, TogError> {
            let remote = config.remote.as_ref().expect("validated: remote section present");
            ChatClient::from_config(remote).map_err(|e| TogError::Config(e.to_string()))
        };
        let decomposer: Box<dyn Decomposer> = match config.decomposer {
            DecomposerBackend::Rule => Box::new(RuleDecomposer {
                prior_knowledge: config.prior_knowledge,
            }),
            DecomposerBackend::Remote => Box::new(RemoteDecomposer {
                client: client()?,
                tool_hints: config
                    .prior_knowledge
                    .then(|| graph.tools().iter().map(|t| t.name.clone()).collect()),
            }),
        };
        let (assessor, solution_expert, resource_expert): (
            Box<dyn ToolAssessor>,
            Box<dyn SolutionExpert>,
            Box<dyn ResourceExpert>,
        ) = match config.experts {
            ExpertBackend::Mock => (
                Box::new(MockAssessor),
                Box::new(MockSolutionExpert),
                Box::new(MockResourceExpert),
            ),
            ExpertBackend::Remote => (
                Box::new(RemoteAssessor { client: client()? }),
                Box::new(RemoteSolutionExpert { client: client()? }),
                Box::new(RemoteResourceExpert { client: client()? }),
            ),
        };
        let responder: Box<dyn Responder> = match config.responder {
            ResponderBackend::Template => Box::new(TemplateResponder),
            ResponderBackend::Remote => Box::new(RemoteResponder {
                client: client()?,
                assistant_name: config.assistant_name.clone(),
            }),
        };
        let runtime = ToolRuntime::from_config(&config);
        Ok(Self {
            vocab,
            graph,
            config,
            decomposer,
            assessor,
            solution_expert,
            resource_expert,
            responder,
            runtime,
        })
    }

    pub fn runtime(&self) -> &ToolRuntime {
        &self.runtime
    }

    pub fn set_runtime(&mut self, runtime: ToolRuntime) {
        self.runtime = runtime;
    }

    pub fn set_assessor(&mut self, assessor: Box<dyn ToolAssessor>) {
        self.assessor = assessor;
    }

    pub fn set_resource_expert(&mut self, expert: Box<dyn ResourceExpert>) {
        self.resource_expert = expert;
    }

    pub fn decompose(&self, request: &str) -> Result<DecompositionResult, TogError> {
        decompose(request, &*self.decomposer, &self.vocab, DECOMPOSE_RETRIES)
            .map_err(|e| TogError::core(Stage::Decompose, e))
    }

    /// Plans an already decomposed request.
    pub fn plan_decomposition(
        &self,
        decomposition: DecompositionResult,
        initial: &[Resource],
        search: &SearchConfig,
    ) -> Result<PlanOutcome, TogError> {
        let schedule = subtask_schedule(&decomposition);
        let mut all_initial = initial.to_vec();
        for t in &decomposition.subtasks {
            for a in &t.args {
                if let ArgValue::Literal(v) = &a.value {
                    if !a.rtype.is_inline() && !all_initial.iter().any(|r| &r.id == v) {
                        all_initial.push(Resource::new(v.clone(), a.rtype.clone(), v.clone()));
                    }
                }
            }
        }

        let planner = tog_core::Planner {
            graph: &self.graph,
            config: search,
            assessor: &*self.assessor,
            solution_expert: &*self.solution_expert,
            resource_expert: &*self.resource_expert,
        };
        let mut ids = GenIdAllocator::starting_at(decomposition.subtasks.len() as u32);
        let mut plans = Vec::new();
        let mut stats = SearchStats::default();
        for stage in &schedule {
            for sid in stage {
                let subtask = decomposition.subtask(*sid).expect("schedule lists known ids");
                let resources = tog_core::search::subtask_resources(subtask, &all_initial);
                let planned = planner
                    .plan_subtask(subtask, &decomposition.source_request, &resources, &mut ids)
                    .map_err(|e| TogError::core(planning_stage(&e), e))?;
                for p in &planned {
                    stats += p.stats;
                }
                plans.extend(planned);
            }
        }
        Ok(PlanOutcome {
            decomposition,
            schedule,
            plans,
            initial: all_initial,
            stats,
        })
    }

    pub fn plan(&self, request: &str, initial: &[Resource]) -> Result<PlanOutcome, TogError> {
        let d = self.decompose(request)?;
        self.plan_decomposition(d, initial, &self.config.search)
    }

    pub fn compile(&self, plan: &PlanOutcome) -> Result<Vec<Action>, TogError> {
        compile_actions(&plan.plans, &plan.schedule).map_err(|e| TogError::core(Stage::Compile, e))
    }

    /// Plans and, unless `dry_run`, executes and answers.
    pub fn run(
        &self,
        request: &str,
        initial: &[Resource],
        dry_run: bool,
    ) -> Result<RunOutcome, TogError> {
        let plan = self.plan(request, initial)?;
        let actions = self.compile(&plan)?;
        if dry_run {
            return Ok(RunOutcome {
                plan,
                actions,
                report: None,
                response: None,
            });
        }
        let report = execute(&actions, &plan.initial, &self.runtime, self.config.parallelism)?;
        let response = generate_response(request, &actions, &report, &*self.responder);
        Ok(RunOutcome {
            plan,
            actions,
            report: Some(report),
            response: Some(response),
        })
    }

    /// Scores every case with `search`. Planning or execution failures count
    /// against the case; a gold annotation naming an unknown tool aborts.
    pub fn run_benchmark(
        &self,
        cases: &[BenchmarkCase],
        search: &SearchConfig,
        workspace: &Path,
    ) -> Result<BenchOutcome, TogError> {
        for case in cases {
            judge_case(case, &self.graph, &[], None).map_err(|e| TogError::core(Stage::Bench, e))?;
        }
        let mut records = Vec::with_capacity(cases.len());
        let mut visited = 0u64;
        for case in cases {
            let dir: PathBuf = workspace.join(search.strategy.as_str()).join(&case.id);
            let (record, v) = self.bench_case(case, search, &dir)?;
            visited += v;
            records.push(record);
        }
        let report = aggregate(records).map_err(|e| TogError::core(Stage::Bench, e))?;
        Ok(BenchOutcome {
            strategy: search.strategy.as_str().to_owned(),
            mean_visited: visited as f64 / cases.len() as f64,
            report,
        })
    }

    fn bench_case(
        &self,
        case: &BenchmarkCase,
        search: &SearchConfig,
        dir: &Path,
    ) -> Result<(CaseRecord, u64), TogError> {
        let planned = self
            .decompose(&case.instruction)
            .and_then(|d| self.plan_decomposition(d, &case.initial_resources, search));
        let plan = match planned {
            Ok(p) => p,
            Err(e) => {
                log::info!("case {}: {e}", case.id);
                return Ok((CaseRecord::failed(case, e.to_string()), 0));
            }
        };
        let visited = plan.stats.visited_tools;
        let report = match self.compile(&plan).and_then(|actions| {
            let rt = self.runtime.with_workspace(dir);
            execute(&actions, &plan.initial, &rt, self.config.parallelism)
        }) {
            Ok(r) => Some(r),
            Err(TogError::Io { path, source }) => return Err(TogError::io(path, source)),
            Err(e) => {
                log::info!("case {}: {e}", case.id);
                None
            }
        };
        let predicted: Vec<_> = plan.plans.iter().map(|p| p.optimal.clone()).collect();
        let record = judge_case(case, &self.graph, &predicted, report.as_ref())
            .map_err(|e| TogError::core(Stage::Bench, e))?;
        Ok((record, visited))
    }
}
