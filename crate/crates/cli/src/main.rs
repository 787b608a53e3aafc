use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowforge::agent::{Trace, TraceStatus};
use flowforge::es::{BuildStrategy, ESConfig, ExecStrategy, Selection};
use flowforge::harness::{
    desk_path, load_graph_file, reevaluate, report, run_experiment, BackendChoice, ExperimentConfig, HarnessError, Mode,
    ReportFormat,
};
use flowforge::llm::BackendConfig;
use flowforge::whitebox::diagnose;

const API_KEY_VAR: &str = "FLOWFORGE_API_KEY";

#[derive(Parser)]
#[command(name = "flowforge", version, about = "Synthesize, run and score workflow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration over a dataset.
    Run(RunArgs),
    /// Re-run the black-box tests on every stored graph of a run.
    Eval {
        dir: PathBuf,
    },
    /// White-box comparison of a candidate graph against a golden graph.
    Compare {
        golden: PathBuf,
        candidate: PathBuf,
        /// Source trace for the fidelity score.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the metrics table of a run directory.
    Report {
        dir: PathBuf,
        #[arg(long, default_value = "md")]
        format: ReportFormat,
    },
    /// Pretty-print a stored trace.
    Replay {
        trace: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    React,
    PlanExecute,
    EnhancedReact,
    Es,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecArg {
    React,
    PlanExecute,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildArg {
    React,
    PlanAndBuild,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    All,
    AllSuccess,
    RandomSuccess,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Dataset directory or index file; defaults to the bundled desk suite.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "es")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "plan-execute")]
    exec_strategy: ExecArg,
    #[arg(long, value_enum, default_value = "plan-and-build")]
    build_strategy: BuildArg,
    #[arg(long, default_value_t = 3)]
    rollouts: u32,
    #[arg(long, value_enum, default_value = "all")]
    selection: SelectionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chat-completions endpoint; without it the scripted backend is used.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "off")]
    json_constraint: Switch,
    /// Comma-separated instance ids; all when omitted.
    #[arg(long, value_delimiter = ',')]
    instances: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> ExperimentConfig {
        let mode = match self.mode {
            ModeArg::React => Mode::React,
            ModeArg::PlanExecute => Mode::PlanExecute,
            ModeArg::EnhancedReact => Mode::EnhancedReact,
            ModeArg::Es => Mode::Es,
        };
        let mut config = ExperimentConfig::new(self.dataset.clone().unwrap_or_else(desk_path), mode, &self.out);
        config.instances = self.instances.clone();
        config.seed = self.seed;
        config.jobs = self.jobs;
        if mode == Mode::Es {
            config.es = Some(ESConfig {
                exec_strategy: match self.exec_strategy {
                    ExecArg::React => ExecStrategy::React,
                    ExecArg::PlanExecute => ExecStrategy::PlanExecute,
                },
                build_strategy: match self.build_strategy {
                    BuildArg::React => BuildStrategy::React,
                    BuildArg::PlanAndBuild => BuildStrategy::PlanAndBuild,
                },
                n_rollouts: self.rollouts,
                selection: match self.selection {
                    SelectionArg::All => Selection::All,
                    SelectionArg::AllSuccess => Selection::AllSuccess,
                    SelectionArg::RandomSuccess => Selection::RandomSuccess,
                },
                seed: None,
            });
        }
        if let Some(endpoint) = &self.endpoint {
            let mut backend = BackendConfig {
                endpoint: endpoint.clone(),
                json_constraint: matches!(self.json_constraint, Switch::On),
                api_key: std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty()),
                ..BackendConfig::default()
            };
            if let Some(m) = &self.model {
                backend.model = m.clone();
            }
            config.backend = BackendChoice::Http(backend);
        }
        config
    }
}

/// Failure that maps to exit code 2.
struct ConfigError(String);

impl From<HarnessError> for ConfigError {
    fn from(e: HarnessError) -> Self {
        ConfigError(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, ConfigError> {
    match command {
        Command::Run(args) => {
            let summary = run_experiment(&args.config())?;
            let passed = summary.cases.iter().filter(|c| c.passed()).count();
            print!("{}", report(&summary.dir, ReportFormat::Markdown)?);
            eprintln!(
                "{} cases, {passed} passed, {} computed, {} errors; config {}",
                summary.cases.len(),
                summary.computed.len(),
                summary.errors(),
                summary.config_hash
            );
            Ok(if summary.errors() > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Eval { dir } => {
            let cases = reevaluate(&dir)?;
            print!("{}", report(&dir, ReportFormat::Markdown)?);
            eprintln!("re-evaluated {} cases", cases.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { golden, candidate, trace } => {
            let g = load_graph_file(&golden)?;
            let c = load_graph_file(&candidate)?;
            let t = trace.as_deref().map(read_trace).transpose()?;
            let d = diagnose(&g, &c, t.as_ref()).map_err(|e| ConfigError(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&d).expect("diagnostics serialize"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dir, format } => {
            print!("{}", report(&dir, format)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { trace } => {
            print!("{}", render_trace(&read_trace(&trace)?));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_trace(path: &Path) -> Result<Trace, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Trace::from_jsonl(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

fn render_trace(t: &Trace) -> String {
    let mut out = String::new();
    writeln!(out, "task: {} ({})", t.task_id, t.strategy).unwrap();
    if let Some(h) = &t.config_hash {
        writeln!(out, "config: {h}").unwrap();
    }
    writeln!(out, "query: {}", t.query).unwrap();
    render_phase(t, &mut out);
    if let Some(p) = &t.posthoc {
        writeln!(out, "\n-- post-hoc phase ({})", p.strategy).unwrap();
        render_phase(p, &mut out);
    }
    out
}

fn render_phase(t: &Trace, out: &mut String) {
    if let Some(plan) = &t.plan {
        writeln!(out, "plan: {}", plan.analysis).unwrap();
        for (i, s) in plan.steps.iter().enumerate() {
            writeln!(out, "  {}. {s}", i + 1).unwrap();
        }
    }
    for s in &t.steps {
        let tag = s.partition.map(|p| p.short()).unwrap_or("?");
        let mark = if s.ok { "" } else { " [error]" };
        writeln!(out, "[{}] {tag} {}({}){mark}", s.index, s.action, s.args_str).unwrap();
        if !s.reasoning.is_empty() {
            writeln!(out, "    thought: {}", s.reasoning).unwrap();
        }
        writeln!(out, "    -> {}", s.observation.replace('\n', "\n       ")).unwrap();
    }
    let status = match &t.status {
        TraceStatus::Success => "success".to_string(),
        TraceStatus::Failed { reason, detail } => format!("failed ({reason:?}) {detail}"),
    };
    writeln!(out, "status: {status}").unwrap();
    writeln!(out, "answer: {}", t.final_answer.as_deref().unwrap_or("(none)")).unwrap();
}
