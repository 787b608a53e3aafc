//! Black-box evaluation, metrics and trace diagnostics.

mod metrics;
mod mti;
pub mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentRun, FailReason, Trace, TraceStep};
use crate::es::ESResult;
use crate::exec::{execute, ExecLimits, RunLog};
use crate::graph::{validate, ViolationCode, WorkflowGraph};
use crate::tools::{Partition, Registry};
use crate::value::{canonical_text, Value};
use crate::whitebox::Diagnostics;

pub use metrics::{compute_metrics, delta_percent, metrics_by_mode, MetricsTable, Ratio};
pub use mti::{classify_mti, mti_rate, MtiClass, MtiSummary};

pub const NO_GRAPH: &str = "No Graph available for validation";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("case `{0}` passed; only failed cases have a failure class")]
    CalledOnPassingCase(String),
    #[error("baseline mode `{0}` has no cases")]
    UnknownBaseline(String),
}

/// A held-out test: input overlay and expected answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: BTreeMap<String, Value>,
    pub expected: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub verdict: Verdict,
    pub expected: String,
    pub actual: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureClass {
    ExecOnlyNoGraph,
    GraphOnlyNoExec,
    BothPartialFailed,
    EmptyError,
}

impl FailureClass {
    pub const ALL: [FailureClass; 4] = [
        FailureClass::ExecOnlyNoGraph,
        FailureClass::GraphOnlyNoExec,
        FailureClass::BothPartialFailed,
        FailureClass::EmptyError,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureClass::ExecOnlyNoGraph => "Exec only, no graph",
            FailureClass::GraphOnlyNoExec => "Graph only, no exec",
            FailureClass::BothPartialFailed => "Both partial/failed",
            FailureClass::EmptyError => "Empty/error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectoryQuality {
    CompleteErrorFree,
    IncompleteOrErroneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub instance_id: String,
    pub mode: String,
    #[serde(default)]
    pub category: String,
    pub verdicts: Vec<TestVerdict>,
    pub exec_complete: bool,
    pub graph_produced: bool,
    pub graph_valid: bool,
    #[serde(default)]
    pub violations: Vec<ViolationCode>,
    pub business_steps: u32,
    pub total_steps: u32,
    /// The final stage stopped on a transport-level error.
    pub aborted: bool,
    pub mti: MtiClass,
    pub failure: Option<FailureClass>,
    pub trajectory: TrajectoryQuality,
    pub exec_tokens: u64,
    /// Absent for single-stage modes.
    pub summarize_tokens: Option<u64>,
    #[serde(default)]
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whitebox: Option<Diagnostics>,
}

impl CaseResult {
    /// Every test passes (and there is at least one).
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.verdict == Verdict::Pass)
    }

    pub fn passed_tests(&self) -> usize {
        self.verdicts.iter().filter(|v| v.verdict == Verdict::Pass).count()
    }

    pub fn both_success(&self) -> bool {
        self.exec_complete && self.graph_valid
    }

    pub fn total_tokens(&self) -> u64 {
        self.exec_tokens + self.summarize_tokens.unwrap_or(0)
    }

    /// Per-case test pass rate as a fraction.
    pub fn pass_fraction(&self) -> Ratio {
        if self.verdicts.is_empty() {
            Ratio::zero()
        } else {
            Ratio::new(self.passed_tests() as i128, self.verdicts.len() as i128)
        }
    }
}

/// Exact-match normal form: JSON-readable answers go through
/// `canonical_text`, anything else is trimmed.
pub fn normalize_answer(s: &str) -> String {
    let t = s.trim();
    serde_json::from_str::<serde_json::Value>(t)
        .ok()
        .and_then(|j| Value::from_json(&j).ok())
        .map(|v| canonical_text(&v))
        .unwrap_or_else(|| t.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackBox {
    pub verdicts: Vec<TestVerdict>,
    pub logs: Vec<Option<RunLog>>,
}

pub fn run_blackbox(graph: Option<&WorkflowGraph>, tools: &Registry, tests: &[TestCase], limits: ExecLimits) -> BlackBox {
    let mut out = BlackBox { verdicts: Vec::new(), logs: Vec::new() };
    for t in tests {
        let expected = normalize_answer(&t.expected);
        let Some(graph) = graph else {
            out.verdicts.push(TestVerdict {
                verdict: Verdict::Fail,
                expected,
                actual: None,
                reason: Some(NO_GRAPH.to_string()),
            });
            out.logs.push(None);
            continue;
        };
        match execute(graph, tools, &t.input, limits) {
            Ok(run) => {
                let actual = normalize_answer(&run.answer);
                let verdict = if actual == expected { Verdict::Pass } else { Verdict::Fail };
                out.verdicts.push(TestVerdict { verdict, expected, actual: Some(actual), reason: None });
                out.logs.push(Some(run.log));
            }
            Err(e) => {
                out.verdicts.push(TestVerdict {
                    verdict: Verdict::Error,
                    expected,
                    actual: None,
                    reason: Some(e.to_string()),
                });
                out.logs.push(None);
            }
        }
    }
    out
}

/// Succeeded, made a business call, and finished with an answer.
pub fn exec_completeness(trace: &Trace) -> bool {
    trace.status.is_success()
        && trace.has_business_call()
        && trace.final_answer.as_deref().is_some_and(|a| !a.trim().is_empty())
}

fn error_free(trace: &Trace) -> bool {
    trace.all_steps().iter().all(|s| s.ok && s.format_retries == 0)
}

fn quality(traces: &[&Trace]) -> TrajectoryQuality {
    if !traces.is_empty() && traces.iter().all(|t| exec_completeness(t) && error_free(t)) {
        TrajectoryQuality::CompleteErrorFree
    } else {
        TrajectoryQuality::IncompleteOrErroneous
    }
}

fn transport_abort(trace: &Trace) -> bool {
    matches!(
        trace.status.fail_reason(),
        Some(FailReason::TransportError | FailReason::TranscriptExhausted)
    )
}

fn business_steps(traces: &[&Trace]) -> u32 {
    traces
        .iter()
        .flat_map(|t| t.all_steps())
        .filter(|s| s.ok && s.partition == Some(Partition::Business))
        .count() as u32
}

fn graph_check(graph: Option<&WorkflowGraph>, tools: &Registry) -> (bool, Vec<ViolationCode>) {
    match graph {
        None => (false, Vec::new()),
        Some(g) => {
            let report = validate(g, |n| tools.is_business(n));
            (report.valid, report.codes().into_iter().collect())
        }
    }
}

pub fn classify_failure(case: &CaseResult) -> Result<FailureClass, EvalError> {
    if case.passed() {
        return Err(EvalError::CalledOnPassingCase(case.instance_id.clone()));
    }
    Ok(if case.exec_complete && !case.graph_produced {
        FailureClass::ExecOnlyNoGraph
    } else if case.graph_produced && case.business_steps == 0 {
        FailureClass::GraphOnlyNoExec
    } else if case.total_steps == 0 || case.aborted {
        FailureClass::EmptyError
    } else {
        FailureClass::BothPartialFailed
    })
}

fn finish_case(mut case: CaseResult) -> CaseResult {
    case.failure = classify_failure(&case).ok();
    case
}

/// Scores a single-stage run.
pub fn evaluate_single(
    instance_id: &str,
    mode: &str,
    run: &AgentRun,
    tools: &Registry,
    tests: &[TestCase],
    limits: ExecLimits,
) -> (CaseResult, BlackBox) {
    let bb = run_blackbox(run.graph.as_ref(), tools, tests, limits);
    let (graph_valid, violations) = graph_check(run.graph.as_ref(), tools);
    let steps: Vec<&TraceStep> = run.trace.all_steps();
    let last_phase = run.trace.posthoc.as_deref().unwrap_or(&run.trace);
    let case = CaseResult {
        instance_id: instance_id.to_string(),
        mode: mode.to_string(),
        category: String::new(),
        verdicts: bb.verdicts.clone(),
        exec_complete: exec_completeness(&run.trace),
        graph_produced: run.graph.is_some(),
        graph_valid,
        violations,
        business_steps: business_steps(&[&run.trace]),
        total_steps: steps.len() as u32,
        aborted: transport_abort(last_phase),
        mti: classify_mti(&steps),
        failure: None,
        trajectory: quality(&[&run.trace]),
        exec_tokens: run.trace.usage().output_tokens,
        summarize_tokens: None,
        selected: Vec::new(),
        error: None,
        whitebox: None,
    };
    (finish_case(case), bb)
}

/// Scores a two-stage run. Execution counts as complete when some
/// selected rollout is complete.
pub fn evaluate_es(
    instance_id: &str,
    mode: &str,
    result: &ESResult,
    tools: &Registry,
    tests: &[TestCase],
    limits: ExecLimits,
) -> (CaseResult, BlackBox) {
    let bb = run_blackbox(result.graph.as_ref(), tools, tests, limits);
    let (graph_valid, violations) = graph_check(result.graph.as_ref(), tools);
    let selected: Vec<&Trace> = result.selected.iter().map(|&i| &result.traces[i]).collect();
    let all: Vec<&Trace> = result.traces.iter().chain(result.build_trace.as_ref()).collect();
    let mti = all
        .iter()
        .map(|t| classify_mti(&t.all_steps()))
        .max()
        .unwrap_or(MtiClass::Clean);
    let aborted = match &result.build_trace {
        Some(b) => transport_abort(b),
        None => result.traces.iter().all(transport_abort),
    };
    let case = CaseResult {
        instance_id: instance_id.to_string(),
        mode: mode.to_string(),
        category: String::new(),
        verdicts: bb.verdicts.clone(),
        exec_complete: selected.iter().any(|t| exec_completeness(t)),
        graph_produced: result.graph.is_some(),
        graph_valid,
        violations,
        business_steps: business_steps(&result.traces.iter().collect::<Vec<_>>()),
        total_steps: all.iter().map(|t| t.all_steps().len() as u32).sum(),
        aborted,
        mti,
        failure: None,
        trajectory: quality(&selected),
        exec_tokens: result.exec_usage.output_tokens,
        summarize_tokens: Some(result.summarize_usage.output_tokens),
        selected: result.selected.clone(),
        error: result.error.as_ref().map(|e| e.to_string()),
        whitebox: None,
    };
    (finish_case(case), bb)
}

/// Cases grouped by mode in order of first appearance.
pub fn group_by_mode(cases: &[CaseResult]) -> Vec<(String, Vec<&CaseResult>)> {
    let mut groups: Vec<(String, Vec<&CaseResult>)> = Vec::new();
    for c in cases {
        match groups.iter_mut().find(|(m, _)| *m == c.mode) {
            Some((_, g)) => g.push(c),
            None => groups.push((c.mode.clone(), vec![c])),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureBreakdown {
    pub mode: String,
    pub counts: Vec<(FailureClass, u64)>,
    pub total: u64,
}

pub fn failure_breakdown(mode: &str, cases: &[&CaseResult]) -> FailureBreakdown {
    let failures: Vec<FailureClass> = cases.iter().filter_map(|c| classify_failure(c).ok()).collect();
    FailureBreakdown {
        mode: mode.to_string(),
        counts: FailureClass::ALL
            .iter()
            .map(|f| (*f, failures.iter().filter(|x| *x == f).count() as u64))
            .collect(),
        total: failures.len() as u64,
    }
}

/// A cell of a conditioned pass-rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub cases: usize,
    /// Mean of per-case pass rates, as a percentage.
    pub mean_rate: Option<Ratio>,
    /// Passing tests over all tests in the cell, as a percentage.
    pub pooled_rate: Option<Ratio>,
}

fn cell(label: &str, cases: &[&CaseResult]) -> Cell {
    let (mean_rate, pooled_rate) = if cases.is_empty() {
        (None, None)
    } else {
        let sum = cases.iter().fold(Ratio::zero(), |acc, c| acc + c.pass_fraction());
        let mean = Ratio::int(100) * sum / Ratio::int(cases.len() as i128);
        let passed: usize = cases.iter().map(|c| c.passed_tests()).sum();
        let tests: usize = cases.iter().map(|c| c.verdicts.len()).sum();
        (Some(mean), Some(Ratio::percent(passed as u64, tests as u64)))
    };
    Cell { label: label.to_string(), cases: cases.len(), mean_rate, pooled_rate }
}

fn split4(
    cases: &[CaseResult],
    labels: [&str; 4],
    row: impl Fn(&CaseResult) -> bool,
    col: impl Fn(&CaseResult) -> bool,
) -> Vec<Cell> {
    let pick = |r: bool, c: bool| -> Vec<&CaseResult> { cases.iter().filter(|x| row(x) == r && col(x) == c).collect() };
    vec![
        cell(labels[0], &pick(true, true)),
        cell(labels[1], &pick(true, false)),
        cell(labels[2], &pick(false, true)),
        cell(labels[3], &pick(false, false)),
    ]
}

/// Pass rates split by execution outcome and trajectory quality.
pub fn condition_on_execution(cases: &[CaseResult]) -> Vec<Cell> {
    split4(
        cases,
        [
            "Execution ✓, complete and error-free",
            "Execution ✓, incomplete or erroneous",
            "Execution ✗, complete and error-free",
            "Execution ✗, incomplete or erroneous",
        ],
        |c| c.exec_complete,
        |c| c.trajectory == TrajectoryQuality::CompleteErrorFree,
    )
}

/// Pass rates split by execution outcome and graph validity.
pub fn quadrant(cases: &[CaseResult]) -> Vec<Cell> {
    split4(
        cases,
        [
            "Execution ✓ + Graph ✓",
            "Execution ✓ + Graph ✗",
            "Execution ✗ + Graph ✓",
            "Execution ✗ + Graph ✗",
        ],
        |c| c.exec_complete,
        |c| c.graph_valid,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRow {
    pub mode: String,
    pub cases: usize,
    pub exec_mean: Ratio,
    pub summarize_mean: Option<Ratio>,
    pub total_mean: Ratio,
    pub baseline: Option<String>,
    pub delta: Option<Ratio>,
}

/// Baseline of each two-stage mode in the token table.
pub fn default_baseline(mode: &str) -> Option<&'static str> {
    match mode {
        "ES-ReAct" | "ES-ReAct→P&E" => Some("ReAct"),
        "ES-P&E" | "ES-P&E→ReAct" => Some("P&E"),
        _ => None,
    }
}

/// Mean output tokens per mode and Δ% against each mode's baseline.
pub fn token_report(cases: &[CaseResult], baseline_of: impl Fn(&str) -> Option<String>) -> Result<Vec<TokenRow>, EvalError> {
    let groups = group_by_mode(cases);
    let mean = |g: &[&CaseResult], f: &dyn Fn(&CaseResult) -> u64| {
        Ratio::new(g.iter().map(|c| f(c) as i128).sum(), g.len() as i128)
    };
    let totals: BTreeMap<&str, Ratio> = groups
        .iter()
        .map(|(m, g)| (m.as_str(), mean(g, &|c| c.total_tokens())))
        .collect();
    let mut rows = Vec::new();
    for (mode, g) in &groups {
        let total_mean = totals[mode.as_str()];
        let two_stage = g.iter().any(|c| c.summarize_tokens.is_some());
        let baseline = baseline_of(mode);
        let delta = match &baseline {
            Some(b) => {
                let base = totals.get(b.as_str()).ok_or_else(|| EvalError::UnknownBaseline(b.clone()))?;
                Some(delta_percent(total_mean, *base))
            }
            None => None,
        };
        rows.push(TokenRow {
            mode: mode.clone(),
            cases: g.len(),
            exec_mean: mean(g, &|c| c.exec_tokens),
            summarize_mean: two_stage.then(|| mean(g, &|c| c.summarize_tokens.unwrap_or(0))),
            total_mean,
            baseline,
            delta,
        });
    }
    Ok(rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn case(mode: &str, passed: usize, tests: usize) -> CaseResult {
        let verdict = |ok: bool| TestVerdict {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            expected: "1".into(),
            actual: Some(if ok { "1" } else { "2" }.into()),
            reason: None,
        };
        CaseResult {
            instance_id: "x".into(),
            mode: mode.into(),
            category: String::new(),
            verdicts: (0..tests).map(|i| verdict(i < passed)).collect(),
            exec_complete: true,
            graph_produced: true,
            graph_valid: true,
            violations: Vec::new(),
            business_steps: 1,
            total_steps: 3,
            aborted: false,
            mti: MtiClass::Clean,
            failure: None,
            trajectory: TrajectoryQuality::CompleteErrorFree,
            exec_tokens: 10,
            summarize_tokens: None,
            selected: Vec::new(),
            error: None,
            whitebox: None,
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer(" 6.0 "), "6");
        assert_eq!(normalize_answer("[1.0, 2.5]"), "[1, 2.5]");
        assert_eq!(normalize_answer(" ok "), "ok");
        assert_eq!(normalize_answer("\"6\""), "6");
    }

    #[test]
    fn missing_graph_fails_every_test() {
        let tests = vec![TestCase { input: BTreeMap::new(), expected: "1".into() }; 3];
        let bb = run_blackbox(None, &crate::tools::full_registry(), &tests, ExecLimits::default());
        assert!(bb.verdicts.iter().all(|v| v.verdict == Verdict::Fail && v.reason.as_deref() == Some(NO_GRAPH)));
    }

    #[test]
    fn failure_classes() {
        let mut c = case("ReAct", 0, 2);
        c.graph_produced = false;
        assert_eq!(classify_failure(&c), Ok(FailureClass::ExecOnlyNoGraph));
        c.exec_complete = false;
        c.graph_produced = true;
        c.business_steps = 0;
        assert_eq!(classify_failure(&c), Ok(FailureClass::GraphOnlyNoExec));
        c.graph_produced = false;
        c.aborted = true;
        assert_eq!(classify_failure(&c), Ok(FailureClass::EmptyError));
        c.aborted = false;
        assert_eq!(classify_failure(&c), Ok(FailureClass::BothPartialFailed));
        assert!(classify_failure(&case("ReAct", 2, 2)).is_err());
    }

    #[test]
    fn quadrant_cells_partition_cases() {
        let mut cases: Vec<CaseResult> = (0..5).map(|i| case("ES-ReAct", i % 3, 2)).collect();
        cases[1].exec_complete = false;
        cases[1].verdicts.iter_mut().for_each(|v| v.verdict = Verdict::Fail);
        cases[2].graph_valid = false;
        let cells = quadrant(&cases);
        assert_eq!(cells.iter().map(|c| c.cases).sum::<usize>(), 5);
        assert_eq!(cells[2].mean_rate.unwrap().round(1), "0.0");
        assert_eq!(cells[3].mean_rate, None);
    }

    #[test]
    fn token_delta_against_baseline() {
        let mut cases = vec![case("P&E", 0, 1)];
        cases[0].exec_tokens = 14132;
        let mut es = case("ES-P&E", 0, 1);
        es.exec_tokens = 8777;
        es.summarize_tokens = Some(547);
        cases.push(es);
        let rows = token_report(&cases, |m| default_baseline(m).map(str::to_string)).unwrap();
        assert_eq!(rows[0].delta, None);
        assert_eq!(rows[0].summarize_mean, None);
        assert_eq!(rows[1].total_mean, Ratio::int(9324));
        assert_eq!(rows[1].delta.unwrap().round(1), "-34.0");
        let err = token_report(&cases[1..], |m| default_baseline(m).map(str::to_string)).unwrap_err();
        assert_eq!(err, EvalError::UnknownBaseline("P&E".into()));
    }
}
