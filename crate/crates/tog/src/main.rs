use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tog_core::decompose::parse_decomposition;
use tog_core::eval::parse_suite;
use tog_core::exec::ActionStatus;
use tog_core::{Action, RankedPlan, Resource, SearchConfig, Strategy};

use tog::error::{exit, Stage};
use tog::executor::write_trace;
use tog::{Engine, EngineConfig, PlanOutcome, TogError};

const BUNDLED_SUITE: &str = include_str!("../assets/bench_suite.jsonl");

#[derive(Parser)]
#[command(name = "tog", version, about = "Plan and run tool chains over a tool graph")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Engine configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    #[arg(long, global = true)]
    adaptive_threshold: Option<u8>,
    #[arg(long, global = true)]
    max_path_len: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Directory for generated media.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose and plan a request without executing it.
    Plan {
        request: Option<String>,
        /// Read a decomposition document instead of decomposing a request.
        #[arg(long, conflicts_with = "request")]
        task: Option<PathBuf>,
        /// Media files available to the request.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Plan, execute and answer a request.
    Run {
        request: String,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Stop after compiling the action list.
        #[arg(long)]
        dry_run: bool,
        /// Write a JSONL execution trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a benchmark suite (the bundled one by default).
    Bench {
        suite: Option<PathBuf>,
        /// Run every search strategy.
        #[arg(long)]
        all_strategies: bool,
        #[arg(long)]
        json: bool,
    },
    /// Inspect the tool graph.
    Graph {
        #[arg(long)]
        stats: bool,
        #[arg(long, conflicts_with = "stats")]
        dot: bool,
    },
    /// List registered tools.
    Tools,
}

fn load_config(g: &GlobalOpts) -> Result<EngineConfig, TogError> {
    let mut cfg = match &g.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    let s = &mut cfg.search;
    if let Some(v) = g.strategy {
        s.strategy = v;
    }
    if let Some(v) = g.beam_width {
        s.beam_width = v;
    }
    if let Some(v) = g.adaptive_threshold {
        s.adaptive_threshold = v;
    }
    if let Some(v) = g.max_path_len {
        s.max_path_len = v;
    }
    if let Some(v) = g.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = &g.workspace {
        cfg.workspace = v.clone();
    }
    Ok(cfg)
}

fn input_resources(paths: &[PathBuf], engine: &Engine) -> Result<Vec<Resource>, TogError> {
    paths
        .iter()
        .map(|p| {
            if !p.is_file() {
                return Err(TogError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
                ));
            }
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
            let ty = match ext.as_str() {
                "png" | "jpg" | "jpeg" | "gif" | "bmp" | "webp" => "image",
                "wav" | "mp3" | "flac" | "ogg" => "audio",
                "mp4" | "avi" | "mov" | "mkv" => "video",
                _ => {
                    return Err(TogError::Config(format!(
                        "cannot tell the media type of {}",
                        p.display()
                    )))
                }
            };
            let rtype = engine.vocab.resource_type(ty).expect("built-in type");
            let id = p.to_string_lossy().into_owned();
            Ok(Resource::new(id.clone(), rtype, id))
        })
        .collect()
}

fn render_plan(plan: &RankedPlan) -> String {
    let mut out = String::new();
    let names: Vec<&str> = plan.optimal.path.tool_names();
    let _ = writeln!(
        out,
        "subtask {} -> {} (score {}): {}",
        plan.subtask_id,
        plan.target,
        plan.optimal_score.get(),
        names.join(" -> ")
    );
    for (step, binding) in plan.optimal.path.steps.iter().zip(&plan.optimal.binding.steps) {
        let args: Vec<String> = binding.iter().map(|(n, v)| format!("{n}={}", v.value())).collect();
        let _ = writeln!(out, "  {}({}) -> {}", step.tool.name, args.join(", "), step.output);
    }
    for alt in &plan.alternatives {
        let _ = writeln!(
            out,
            "  alternative (score {}): {}",
            alt.score.get(),
            alt.solution.tool_names().join(" -> ")
        );
    }
    out
}

fn plan_json(outcome: &PlanOutcome) -> serde_json::Value {
    let plans: Vec<_> = outcome
        .plans
        .iter()
        .map(|p| {
            json!({
                "subtask": p.subtask_id,
                "target": p.target,
                "score": p.optimal_score,
                "tools": p.optimal.path.tool_names(),
                "outputs": p.optimal.path.steps.iter().map(|s| s.output).collect::<Vec<_>>(),
                "binding": p.optimal.binding,
                "alternatives": p.alternatives.iter().map(|a| json!({
                    "score": a.score,
                    "tools": a.solution.tool_names(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "decomposition": serde_json::from_str::<serde_json::Value>(&outcome.decomposition.to_json())
            .expect("decomposition JSON"),
        "schedule": outcome.schedule,
        "plans": plans,
        "stats": outcome.stats,
    })
}

fn render_actions(actions: &[Action]) -> String {
    let mut out = String::from("actions:\n");
    for a in actions {
        let args: Vec<String> =
            a.inputs.iter().map(|i| format!("{}={}", i.name, i.value.value())).collect();
        let _ = writeln!(out, "  {}. {}({}) -> {}", a.seq, a.tool.name, args.join(", "), a.output);
    }
    out
}

fn run(cli: Cli) -> Result<u8, TogError> {
    let cfg = load_config(&cli.global)?;
    let engine = Engine::from_config(cfg)?;
    match cli.command {
        Command::Plan { request, task, inputs, json } => {
            let initial = input_resources(&inputs, &engine)?;
            let outcome = match (request, task) {
                (_, Some(path)) => {
                    let doc = read(&path)?;
                    let d = parse_decomposition(&doc, &engine.vocab)
                        .map_err(|e| TogError::core(Stage::Decompose, e))?;
                    engine.plan_decomposition(d, &initial, &engine.config.search)?
                }
                (Some(r), None) => engine.plan(&r, &initial)?,
                (None, None) => {
                    return Err(TogError::Config("plan needs a request or --task".into()))
                }
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&plan_json(&outcome)).expect("json"));
            } else {
                for p in &outcome.plans {
                    print!("{}", render_plan(p));
                }
                println!(
                    "visited {} tools, {} solutions",
                    outcome.stats.visited_tools, outcome.stats.solutions_found
                );
            }
            Ok(exit::OK)
        }
        Command::Run { request, inputs, dry_run, trace } => {
            let initial = input_resources(&inputs, &engine)?;
            let outcome = engine.run(&request, &initial, dry_run)?;
            for p in &outcome.plan.plans {
                print!("{}", render_plan(p));
            }
            print!("{}", render_actions(&outcome.actions));
            let Some(report) = outcome.report else {
                return Ok(exit::OK);
            };
            if let Some(path) = trace {
                write_trace(&path, &report)?;
            }
            for r in &report.records {
                let status = match r.status {
                    ActionStatus::Ok => "ok",
                    ActionStatus::Failed => "failed",
                    ActionStatus::Skipped => "skipped",
                };
                match &r.error {
                    Some(e) => println!("  [{status}] {}. {}: {e}", r.seq, r.tool),
                    None => println!("  [{status}] {}. {}", r.seq, r.tool),
                }
            }
            log::info!(
                "wall clock {:?}, critical path {:?}",
                report.wall_clock,
                report.critical_path
            );
            println!("{}", outcome.response.unwrap_or_default());
            let all_ok = report.records.iter().all(|r| r.status == ActionStatus::Ok);
            Ok(if all_ok { exit::OK } else { exit::RUN })
        }
        Command::Bench { suite, all_strategies, json } => {
            let text = match &suite {
                Some(p) => read(p)?,
                None => BUNDLED_SUITE.to_owned(),
            };
            let cases = parse_suite(&text, &engine.vocab).map_err(|e| TogError::core(Stage::Bench, e))?;
            let strategies: Vec<Strategy> = if all_strategies {
                Strategy::ALL.to_vec()
            } else {
                vec![engine.config.search.strategy]
            };
            let ws = engine.config.workspace.join("bench");
            let mut outcomes = Vec::new();
            for s in strategies {
                let search = SearchConfig { strategy: s, ..engine.config.search };
                outcomes.push(engine.run_benchmark(&cases, &search, &ws)?);
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&outcomes).expect("json"));
            } else {
                for (i, o) in outcomes.iter().enumerate() {
                    let table = o.report.to_table(&o.strategy);
                    // Only the first table keeps its header.
                    let body = if i == 0 { table.as_str() } else { table.split_once('\n').map_or("", |x| x.1) };
                    print!("{body}");
                }
                for o in &outcomes {
                    println!("{}: mean visited tools {:.2}", o.strategy, o.mean_visited);
                }
            }
            Ok(exit::OK)
        }
        Command::Graph { stats, dot } => {
            let g = &engine.graph;
            if dot {
                print!("{}", g.export_dot());
            } else {
                println!("tools: {}", g.tools().len());
                println!("resource types: {}", g.resource_nodes().len());
                println!("nodes: {}", g.node_count());
                println!("edges: {}", g.edge_count());
                if !stats {
                    for r in g.resource_nodes() {
                        let consumers: Vec<&str> = g.consumers_of(r).map(|t| t.name.as_str()).collect();
                        println!("  {r} -> {}", consumers.join(", "));
                    }
                }
            }
            Ok(exit::OK)
        }
        Command::Tools => {
            for t in engine.graph.tools() {
                let args: Vec<String> = t.args.iter().map(|a| format!("{}: {}", a.name, a.rtype)).collect();
                let domains: Vec<&str> = t.domains.iter().map(|d| d.name()).collect();
                println!("{} [{}] ({}) -> {}", t.name, domains.join(", "), args.join(", "), t.ret.rtype);
            }
            Ok(exit::OK)
        }
    }
}

fn read(path: &Path) -> Result<String, TogError> {
    std::fs::read_to_string(path).map_err(|e| TogError::io(path, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
