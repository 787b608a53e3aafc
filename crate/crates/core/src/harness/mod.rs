//! Dataset loading, experiment runs, on-disk layout and reports.

pub mod dataset;
mod report;
pub mod script;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};

use crate::agent::{run_enhanced_react, run_plan_execute, run_react, SessionLimits, Trace};
use crate::es::{run_es, ESConfig, ESResult};
use crate::eval::{evaluate_es, evaluate_single, BlackBox, CaseResult};
use crate::exec::ExecLimits;
use crate::graph::WorkflowGraph;
use crate::llm::{BackendConfig, ChatBackend, HttpBackend, LlmError, ScriptedBackend};
use crate::whitebox::diagnose;

pub use dataset::{desk_path, load_dataset, DatasetError, Difficulty, Instance};
pub use report::{load_cases, mode_rank, reevaluate, report, write_reports, Coverage, ReportFormat};

pub const CONFIG_FILE: &str = "config.json";
pub const CASE_FILE: &str = "case_result.json";
pub const GRAPH_FILE: &str = "graph.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    React,
    PlanExecute,
    EnhancedReact,
    Es,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    /// Transcripts replayed from each instance's golden graph.
    Scripted,
    Http(BackendConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Instance ids to run; empty runs all.
    #[serde(default)]
    pub instances: Vec<String>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub es: Option<ESConfig>,
    pub backend: BackendChoice,
    #[serde(default)]
    pub limits: SessionLimits,
    #[serde(default)]
    pub exec_limits: ExecLimits,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, mode: Mode, out: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            instances: Vec::new(),
            mode,
            es: (mode == Mode::Es).then(ESConfig::default),
            backend: BackendChoice::Scripted,
            limits: SessionLimits::default(),
            exec_limits: ExecLimits::default(),
            seed: 0,
            out: out.into(),
            jobs: 1,
        }
    }

    /// Label used in reports, e.g. `ReAct` or `ES-P&E`.
    pub fn mode_label(&self) -> String {
        match self.mode {
            Mode::React => "ReAct".into(),
            Mode::PlanExecute => "P&E".into(),
            Mode::EnhancedReact => "Enhanced ReAct".into(),
            Mode::Es => self.es.as_ref().map(ESConfig::label).unwrap_or_else(|| "ES".into()),
        }
    }

    /// Directory-safe mode name.
    pub fn mode_slug(&self) -> String {
        match (self.mode, &self.es) {
            (Mode::Es, Some(es)) => format!("es_{}_{}", snake(es.exec_strategy), snake(es.build_strategy)),
            (m, _) => snake(m),
        }
    }

    /// Hex digest of the canonical JSON form. Output location and job
    /// count are not part of it.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        match (self.mode, &self.es) {
            (Mode::Es, None) => Err(HarnessError::Config("es mode needs an ES configuration".into())),
            (Mode::Es, Some(es)) => {
                let mut es = es.clone();
                es.seed = Some(0);
                es.check().map_err(|e| HarnessError::Config(e.to_string()))
            }
            _ => Ok(()),
        }
    }
}

fn snake<T: Serialize>(v: T) -> String {
    serde_json::to_value(v).ok().and_then(|j| j.as_str().map(str::to_string)).unwrap_or_default()
}

/// Per-instance seed, independent of instance order.
pub fn instance_seed(seed: u64, id: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}/{id}").as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("backend setup failed: {0}")]
    Backend(#[from] LlmError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("no case results under {0}")]
    EmptyRun(PathBuf),
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

pub(crate) fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// The persisted per-case record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub config_hash: String,
    pub result: CaseResult,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub cases: Vec<CaseResult>,
    /// Instances computed in this invocation (the rest were resumed).
    pub computed: Vec<String>,
}

impl RunSummary {
    /// Cases whose final stage was cut off by a transport failure.
    pub fn errors(&self) -> usize {
        self.cases.iter().filter(|c| c.aborted).count()
    }
}

/// Reads a graph file written by a run, a dataset instance, or a bare graph document.
pub fn load_graph_file(path: &Path) -> Result<WorkflowGraph, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let json: Json = serde_json::from_str(&text).map_err(|e| HarnessError::Schema { path: path.into(), message: e.to_string() })?;
    let doc = json.get("graph").or_else(|| json.get("golden_graph")).unwrap_or(&json);
    WorkflowGraph::from_json(doc).map_err(|e| HarnessError::Schema { path: path.into(), message: e.to_string() })
}

fn case_dir(out: &Path, id: &str) -> PathBuf {
    out.join("cases").join(id)
}

fn resumed(dir: &Path, hash: &str) -> Option<CaseResult> {
    let text = std::fs::read_to_string(dir.join(CASE_FILE)).ok()?;
    let rec: CaseRecord = serde_json::from_str(&text).ok()?;
    (rec.config_hash == hash).then_some(rec.result)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    config.check()?;
    let all = load_dataset(&config.dataset)?;
    let instances: Vec<Instance> = if config.instances.is_empty() {
        all
    } else {
        config
            .instances
            .iter()
            .map(|id| all.iter().find(|i| &i.id == id).cloned().ok_or_else(|| HarnessError::UnknownInstance(id.clone())))
            .collect::<Result<_, _>>()?
    };
    let hash = config.hash();
    let mut doc = serde_json::to_value(config).expect("config serializes");
    doc["config_hash"] = json!(hash);
    doc["instance_ids"] = json!(instances.iter().map(|i| &i.id).collect::<Vec<_>>());
    write(&config.out.join(CONFIG_FILE), &serde_json::to_string_pretty(&doc).expect("json serializes"))?;

    let http = match &config.backend {
        BackendChoice::Http(b) => Some(HttpBackend::new(b.clone())?),
        BackendChoice::Scripted => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let outcomes: Vec<Result<(CaseResult, bool), HarnessError>> = pool.install(|| {
        let run_one = |inst: &Instance| {
            let dir = case_dir(&config.out, &inst.id);
            if let Some(done) = resumed(&dir, &hash) {
                return Ok((done, false));
            }
            let scripted;
            let backend: &dyn ChatBackend = match &http {
                Some(h) => h,
                None => {
                    scripted = ScriptedBackend::new(script::transcript(inst, config.mode, config.es.as_ref(), config.limits));
                    &scripted
                }
            };
            run_case(config, &hash, inst, backend, &dir).map(|c| (c, true))
        };
        if config.jobs <= 1 {
            instances.iter().map(run_one).collect()
        } else {
            instances.par_iter().map(run_one).collect()
        }
    });
    let mut cases = Vec::new();
    let mut computed = Vec::new();
    for o in outcomes {
        let (case, fresh) = o?;
        if fresh {
            computed.push(case.instance_id.clone());
        }
        cases.push(case);
    }
    write_reports(&config.out)?;
    Ok(RunSummary { dir: config.out.clone(), config_hash: hash, cases, computed })
}

/// Runs each configuration into `<out>/<mode slug>` and writes combined
/// reports at `out`.
pub fn run_matrix(configs: &[ExperimentConfig], out: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let mut summaries = Vec::new();
    for c in configs {
        let mut c = c.clone();
        c.out = out.join(c.mode_slug());
        summaries.push(run_experiment(&c)?);
    }
    write_reports(out)?;
    Ok(summaries)
}

/// The four paradigms of the main comparison.
pub fn standard_matrix(dataset: &Path, seed: u64) -> Vec<ExperimentConfig> {
    use crate::es::{BuildStrategy, ExecStrategy};
    let mut out = Vec::new();
    for mode in [Mode::React, Mode::PlanExecute] {
        let mut c = ExperimentConfig::new(dataset, mode, "");
        c.seed = seed;
        out.push(c);
    }
    for (exec, build) in [(ExecStrategy::React, BuildStrategy::React), (ExecStrategy::PlanExecute, BuildStrategy::PlanAndBuild)] {
        let mut c = ExperimentConfig::new(dataset, Mode::Es, "");
        c.seed = seed;
        c.es = Some(ESConfig { exec_strategy: exec, build_strategy: build, ..ESConfig::default() });
        out.push(c);
    }
    out
}

fn save_trace(dir: &Path, name: &str, trace: &Trace, hash: &str) -> Result<(), HarnessError> {
    let mut t = trace.clone();
    t.config_hash = Some(hash.to_string());
    write(&dir.join(format!("{name}.trace.jsonl")), &t.to_jsonl())
}

fn save_outputs(dir: &Path, hash: &str, graph: Option<&WorkflowGraph>, bb: &BlackBox) -> Result<(), HarnessError> {
    if let Some(g) = graph {
        let doc = json!({"config_hash": hash, "graph": g.to_json()});
        write(&dir.join(GRAPH_FILE), &serde_json::to_string_pretty(&doc).expect("json serializes"))?;
    }
    for (k, (log, v)) in bb.logs.iter().zip(&bb.verdicts).enumerate() {
        if let Some(log) = log {
            let header = json!({"record": "header", "config_hash": hash, "test": k}).to_string();
            write(&dir.join(format!("test_{k}.runlog.jsonl")), &format!("{header}\n{}", log.to_jsonl(v.actual.as_deref())))?;
        }
    }
    Ok(())
}

/// Trace the graph was summarized from: the first successful selected
/// rollout, else the first selected one.
pub fn es_source(result: &ESResult) -> Option<&Trace> {
    let picked = || result.selected.iter().map(|&i| &result.traces[i]);
    picked().find(|t| t.status.is_success()).or_else(|| picked().next())
}

fn run_case(
    config: &ExperimentConfig,
    hash: &str,
    inst: &Instance,
    backend: &dyn ChatBackend,
    dir: &Path,
) -> Result<CaseResult, HarnessError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tools = inst.registry();
    let task = inst.task(0);
    let label = config.mode_label();
    let (mut case, graph, source) = match config.mode {
        Mode::Es => {
            let mut es = config.es.clone().expect("checked");
            es.seed = Some(instance_seed(config.seed, &inst.id));
            let result =
                run_es(&task, &tools, backend, &es, config.limits).map_err(|e| HarnessError::Config(e.to_string()))?;
            for (k, t) in result.traces.iter().enumerate() {
                save_trace(dir, &format!("rollout_{k}"), t, hash)?;
            }
            if let Some(b) = &result.build_trace {
                save_trace(dir, "build", b, hash)?;
            }
            let (case, bb) = evaluate_es(&inst.id, &label, &result, &tools, &inst.tests, config.exec_limits);
            save_outputs(dir, hash, result.graph.as_ref(), &bb)?;
            let source = es_source(&result).cloned();
            (case, result.graph, source)
        }
        mode => {
            let run = match mode {
                Mode::React => run_react(&task, &tools, backend, config.limits),
                Mode::PlanExecute => run_plan_execute(&task, &tools, backend, config.limits),
                _ => run_enhanced_react(&task, &tools, backend, config.limits),
            };
            save_trace(dir, "session", &run.trace, hash)?;
            let (case, bb) = evaluate_single(&inst.id, &label, &run, &tools, &inst.tests, config.exec_limits);
            save_outputs(dir, hash, run.graph.as_ref(), &bb)?;
            (case, run.graph, Some(run.trace))
        }
    };
    case.category = inst.category.as_str().to_string();
    if let (Some(golden), Some(g)) = (&inst.golden_graph, &graph) {
        case.whitebox = diagnose(golden, g, source.as_ref()).ok();
    }
    let rec = CaseRecord { config_hash: hash.to_string(), result: case.clone() };
    write(&dir.join(CASE_FILE), &serde_json::to_string_pretty(&rec).expect("record serializes"))?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::new("d", Mode::Es, "x");
        let mut b = a.clone();
        b.out = "y".into();
        b.jobs = 8;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn seeds_depend_on_id_only() {
        assert_eq!(instance_seed(7, "a"), instance_seed(7, "a"));
        assert_ne!(instance_seed(7, "a"), instance_seed(7, "b"));
        assert_ne!(instance_seed(7, "a"), instance_seed(8, "a"));
    }

    #[test]
    fn labels_and_slugs() {
        let c = ExperimentConfig::new("d", Mode::Es, "x");
        assert_eq!(c.mode_label(), "ES-P&E");
        assert_eq!(c.mode_slug(), "es_plan_execute_plan_and_build");
        assert_eq!(ExperimentConfig::new("d", Mode::PlanExecute, "x").mode_slug(), "plan_execute");
        let mut bad = c.clone();
        bad.es = None;
        assert!(bad.check().is_err());
    }
}

