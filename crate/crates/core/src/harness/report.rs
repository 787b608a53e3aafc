use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value as Json;

use crate::eval::report::{breakdown_markdown, metrics_csv, metrics_markdown};
use crate::eval::{classify_failure, metrics_by_mode, run_blackbox, CaseResult, Ratio};

use super::{io_err, load_dataset, load_graph_file, write, CaseRecord, ExperimentConfig, HarnessError, CASE_FILE, CONFIG_FILE, GRAPH_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

/// Completed versus expected cases across the runs under a directory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    pub done: usize,
    pub expected: usize,
}

impl Coverage {
    pub fn partial(&self) -> bool {
        self.done < self.expected
    }
}

/// Table order: single-stage modes first, then the two-stage variants.
pub fn mode_rank(mode: &str) -> usize {
    ["ReAct", "P&E", "Enhanced ReAct", "ES-ReAct", "ES-P&E", "ES-ReAct→P&E", "ES-P&E→ReAct"]
        .iter()
        .position(|m| *m == mode)
        .unwrap_or(usize::MAX)
}

fn run_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    if dir.join(CONFIG_FILE).is_file() {
        out.push(dir.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "cases"))
        .collect();
    entries.sort();
    for e in entries {
        run_dirs(&e, out)?;
    }
    Ok(())
}

struct RunDir {
    path: PathBuf,
    config: ExperimentConfig,
    hash: String,
    ids: Vec<String>,
}

fn read_run(path: &Path) -> Result<RunDir, HarnessError> {
    let file = path.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
    let bad = |m: String| HarnessError::Schema { path: file.clone(), message: m };
    let json: Json = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let config: ExperimentConfig = serde_json::from_value(json.clone()).map_err(|e| bad(e.to_string()))?;
    let hash = json["config_hash"].as_str().ok_or_else(|| bad("missing config_hash".into()))?.to_string();
    let ids = json["instance_ids"]
        .as_array()
        .ok_or_else(|| bad("missing instance_ids".into()))?
        .iter()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    Ok(RunDir { path: path.to_path_buf(), config, hash, ids })
}

fn runs(dir: &Path) -> Result<Vec<RunDir>, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::EmptyRun(dir.to_path_buf()));
    }
    let mut dirs = Vec::new();
    run_dirs(dir, &mut dirs)?;
    dirs.iter().map(|d| read_run(d)).collect()
}

fn record_path(run: &RunDir, id: &str) -> PathBuf {
    run.path.join("cases").join(id).join(CASE_FILE)
}

fn read_record(path: &Path) -> Option<CaseRecord> {
    serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

fn sort_cases(cases: &mut [CaseResult]) {
    cases.sort_by(|a, b| (mode_rank(&a.mode), &a.mode, &a.instance_id).cmp(&(mode_rank(&b.mode), &b.mode, &b.instance_id)));
}

/// Completed case results of every run under `dir`, in report order.
pub fn load_cases(dir: &Path) -> Result<(Vec<CaseResult>, Coverage), HarnessError> {
    let mut cases = Vec::new();
    let mut cov = Coverage::default();
    for run in runs(dir)? {
        cov.expected += run.ids.len();
        for id in &run.ids {
            if let Some(rec) = read_record(&record_path(&run, id)).filter(|r| r.config_hash == run.hash) {
                cov.done += 1;
                cases.push(rec.result);
            }
        }
    }
    if cases.is_empty() {
        return Err(HarnessError::EmptyRun(dir.to_path_buf()));
    }
    sort_cases(&mut cases);
    Ok((cases, cov))
}

fn totals(cases: &[CaseResult]) -> (usize, usize) {
    let mut tests: BTreeMap<&str, usize> = BTreeMap::new();
    for c in cases {
        tests.entry(&c.instance_id).or_insert(c.verdicts.len());
    }
    (tests.len(), tests.values().sum())
}

fn coverage_line(cov: Coverage) -> String {
    format!("Coverage: {}/{} cases ({}%)", cov.done, cov.expected, Ratio::percent(cov.done as u64, cov.expected as u64).round(1))
}

/// Metrics table for the runs under `dir`.
pub fn report(dir: &Path, format: ReportFormat) -> Result<String, HarnessError> {
    let (cases, cov) = load_cases(dir)?;
    let tables = metrics_by_mode(&cases);
    let mut out = String::new();
    match format {
        ReportFormat::Markdown => {
            let (instances, tests) = totals(&cases);
            out.push_str("# Results\n\n");
            writeln!(out, "Total: {instances} instances, {tests} tests").unwrap();
            if cov.partial() {
                writeln!(out, "{}", coverage_line(cov)).unwrap();
            }
            out.push('\n');
            out.push_str(&metrics_markdown(&tables));
        }
        ReportFormat::Csv => {
            if cov.partial() {
                writeln!(out, "# {}", coverage_line(cov)).unwrap();
            }
            out.push_str(&metrics_csv(&tables));
        }
    }
    Ok(out)
}

/// Writes report.md, report.csv and breakdown.md into `dir`.
pub fn write_reports(dir: &Path) -> Result<(), HarnessError> {
    let (cases, _) = load_cases(dir)?;
    write(&dir.join("report.md"), &report(dir, ReportFormat::Markdown)?)?;
    write(&dir.join("report.csv"), &report(dir, ReportFormat::Csv)?)?;
    write(&dir.join("breakdown.md"), &format!("# Breakdown\n\n{}", breakdown_markdown(&cases)))
}

/// Re-runs the black-box tests on every stored graph and rewrites the
/// case records and reports.
pub fn reevaluate(dir: &Path) -> Result<Vec<CaseResult>, HarnessError> {
    for run in runs(dir)? {
        let dataset = load_dataset(&run.config.dataset)?;
        for id in &run.ids {
            let path = record_path(&run, id);
            let Some(mut rec) = read_record(&path).filter(|r| r.config_hash == run.hash) else {
                continue;
            };
            let Some(inst) = dataset.iter().find(|i| &i.id == id) else {
                return Err(HarnessError::UnknownInstance(id.clone()));
            };
            let graph_path = path.with_file_name(GRAPH_FILE);
            let graph = if graph_path.is_file() { Some(load_graph_file(&graph_path)?) } else { None };
            let bb = run_blackbox(graph.as_ref(), &inst.registry(), &inst.tests, run.config.exec_limits);
            rec.result.verdicts = bb.verdicts;
            rec.result.failure = classify_failure(&rec.result).ok();
            write(&path, &serde_json::to_string_pretty(&rec).expect("record serializes"))?;
        }
    }
    write_reports(dir)?;
    Ok(load_cases(dir)?.0)
}
