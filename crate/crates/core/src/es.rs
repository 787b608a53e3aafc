//! Two-stage pipeline: solve with business tools, then rebuild the
//! solution as a workflow graph from the recorded traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    observation_message, plan_context, plan_observer, run_plan_execute, run_react, step_instruction, Session,
    SessionLimits, Task, Trace,
};
use crate::graph::{graph_tool_specs, WorkflowGraph};
use crate::llm::{ChatBackend, ChatMessage, Usage};
use crate::prompts::{self, fill};
use crate::tools::{finish_spec, Partition, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStrategy {
    React,
    PlanExecute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStrategy {
    React,
    PlanAndBuild,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    AllSuccess,
    RandomSuccess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ESConfig {
    pub exec_strategy: ExecStrategy,
    pub build_strategy: BuildStrategy,
    pub n_rollouts: u32,
    pub selection: Selection,
    pub seed: Option<u64>,
}

impl Default for ESConfig {
    fn default() -> Self {
        ESConfig {
            exec_strategy: ExecStrategy::PlanExecute,
            build_strategy: BuildStrategy::PlanAndBuild,
            n_rollouts: 3,
            selection: Selection::All,
            seed: None,
        }
    }
}

impl ESConfig {
    pub fn check(&self) -> Result<(), EsError> {
        if self.n_rollouts == 0 {
            return Err(EsError::ZeroRollouts);
        }
        if self.selection == Selection::RandomSuccess && self.seed.is_none() {
            return Err(EsError::MissingSeed);
        }
        Ok(())
    }

    /// Mode label, e.g. `ES-P&E` or `ES-ReAct→P&E` for mixed strategies.
    pub fn label(&self) -> String {
        match (self.exec_strategy, self.build_strategy) {
            (ExecStrategy::React, BuildStrategy::React) => "ES-ReAct".into(),
            (ExecStrategy::PlanExecute, BuildStrategy::PlanAndBuild) => "ES-P&E".into(),
            (ExecStrategy::React, BuildStrategy::PlanAndBuild) => "ES-ReAct→P&E".into(),
            (ExecStrategy::PlanExecute, BuildStrategy::React) => "ES-P&E→ReAct".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum EsError {
    #[error("n_rollouts must be at least 1")]
    ZeroRollouts,
    #[error("random_success selection needs a seed")]
    MissingSeed,
    #[error("no traces to summarize")]
    NoTracesToSummarize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ESResult {
    pub traces: Vec<Trace>,
    pub selected: Vec<usize>,
    pub graph: Option<WorkflowGraph>,
    /// Absent when selection left nothing to summarize.
    pub build_trace: Option<Trace>,
    pub exec_usage: Usage,
    pub summarize_usage: Usage,
    pub error: Option<EsError>,
}

impl ESResult {
    pub fn usage(&self) -> Usage {
        self.exec_usage + self.summarize_usage
    }
}

/// Business tools plus `finish`; graph tools are dropped.
pub fn execute_tools(registry: &Registry) -> Registry {
    let mut tools = registry.restrict(&[Partition::Business, Partition::Terminal]);
    if !tools.contains("finish") {
        tools.register_spec(finish_spec()).expect("finish is not registered yet");
    }
    tools
}

/// The five graph tools plus `finish`.
pub fn summarize_tools() -> Registry {
    let mut tools = Registry::new();
    for spec in graph_tool_specs().into_iter().chain([finish_spec()]) {
        tools.register_spec(spec).expect("graph tool names are distinct");
    }
    tools
}

pub fn run_execute_stage(
    task: &Task,
    registry: &Registry,
    backend: &dyn ChatBackend,
    config: &ESConfig,
    limits: SessionLimits,
) -> Vec<Trace> {
    let tools = execute_tools(registry);
    (0..config.n_rollouts)
        .map(|_| match config.exec_strategy {
            ExecStrategy::React => run_react(task, &tools, backend, limits).trace,
            ExecStrategy::PlanExecute => run_plan_execute(task, &tools, backend, limits).trace,
        })
        .collect()
}

pub fn select_traces(traces: &[Trace], selection: Selection, seed: Option<u64>) -> Vec<usize> {
    let successes: Vec<usize> = (0..traces.len()).filter(|&i| traces[i].status.is_success()).collect();
    match selection {
        Selection::All => (0..traces.len()).collect(),
        Selection::AllSuccess => successes,
        Selection::RandomSuccess => {
            if successes.is_empty() {
                return Vec::new();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            vec![successes[rng.random_range(0..successes.len())]]
        }
    }
}

/// Renders the selected traces as the summarize-stage input.
pub fn format_trace_input(traces: &[&Trace]) -> Result<String, EsError> {
    if traces.is_empty() {
        return Err(EsError::NoTracesToSummarize);
    }
    let mut out = String::from(prompts::TRACE_INPUT_HEADER);
    out.push_str("\n\n");
    for (i, t) in traces.iter().enumerate() {
        let status = if t.status.is_success() { "Success" } else { "Failed" };
        out.push_str(&format!(
            "### Execution {}: {}\n**Query**: {}\n**Status**: {}\n**Final Answer**: {}\n\n**Function Calls**:\n",
            i + 1,
            t.task_id,
            t.query,
            status,
            t.final_answer.as_deref().unwrap_or("(none)")
        ));
        for (n, s) in t.business_calls().enumerate() {
            out.push_str(&format!("- Step {}: `{}({})` -> `{}`\n", n + 1, s.action, s.args_str, s.observation));
        }
        out.push('\n');
    }
    out.push_str(prompts::TRACE_INPUT_FOOTER);
    Ok(out)
}

pub fn run_summarize_stage(
    task: &Task,
    trace_text: &str,
    backend: &dyn ChatBackend,
    build: BuildStrategy,
    limits: SessionLimits,
) -> (Option<WorkflowGraph>, Trace) {
    let tools = summarize_tools();
    let docs = tools.render_signatures(&[Partition::GraphConstruction, Partition::Terminal]);
    match build {
        BuildStrategy::React => {
            let mut trace = Trace::new(&task.id, "es_build_react", &task.query);
            let mut session = Session::new(backend, &tools, limits, fill(prompts::GRAPH_SYSTEM, &[("tools_prompt", &docs)]));
            session.messages.push(ChatMessage::user(trace_text));
            session.run_steps(&mut trace, observation_message);
            let graph = built(&trace, session.graph);
            (graph, trace)
        }
        BuildStrategy::PlanAndBuild => {
            let mut trace = Trace::new(&task.id, "es_build_plan", &task.query);
            let mut planner =
                Session::new(backend, &tools, limits, fill(prompts::GRAPH_PLAN_SYSTEM, &[("tools_prompt", &docs)]));
            planner.messages.push(ChatMessage::user(trace_text));
            let Some(plan) = planner.plan(&mut trace) else {
                return (None, trace);
            };
            let mut session =
                Session::new(backend, &tools, limits, fill(prompts::GRAPH_EXECUTE_SYSTEM, &[("tools_prompt", &docs)]));
            let first = format!("{}\n\n{}", plan_context(trace_text, &plan), step_instruction(1, &plan.steps[0], &[]));
            session.messages.push(ChatMessage::user(first));
            session.run_steps(&mut trace, plan_observer(plan.steps.clone()));
            let graph = built(&trace, session.graph);
            (graph, trace)
        }
    }
}

fn built(trace: &Trace, graph: WorkflowGraph) -> Option<WorkflowGraph> {
    (trace.status.is_success() && !graph.is_empty()).then_some(graph)
}

pub fn run_es(
    task: &Task,
    registry: &Registry,
    backend: &dyn ChatBackend,
    config: &ESConfig,
    limits: SessionLimits,
) -> Result<ESResult, EsError> {
    config.check()?;
    let traces = run_execute_stage(task, registry, backend, config, limits);
    let exec_usage = traces.iter().map(Trace::usage).sum();
    let selected = select_traces(&traces, config.selection, config.seed);
    let picked: Vec<&Trace> = selected.iter().map(|&i| &traces[i]).collect();
    let mut result = ESResult {
        traces: Vec::new(),
        selected: selected.clone(),
        graph: None,
        build_trace: None,
        exec_usage,
        summarize_usage: Usage::default(),
        error: None,
    };
    match format_trace_input(&picked) {
        Ok(text) => {
            let (graph, build) = run_summarize_stage(task, &text, backend, config.build_strategy, limits);
            result.summarize_usage = build.usage();
            result.graph = graph;
            result.build_trace = Some(build);
        }
        Err(e) => result.error = Some(e),
    }
    result.traces = traces;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{FailReason, TraceStatus};
    use crate::llm::ScriptedBackend;
    use crate::tools::full_registry;
    use serde_json::{json, Value as Json};

    fn act(action: &str, input: Json) -> String {
        json!({"reasoning": "r", "action": action, "action_input": input}).to_string()
    }

    fn task() -> Task {
        Task {
            id: "sum".into(),
            query: "Calculate sum of [1,2,3]".into(),
        }
    }

    fn ok_rollout() -> Vec<String> {
        vec![act("sum_list", json!({"xs": [1, 2, 3]})), act("finish", json!({"answer": "6"}))]
    }

    fn build_turns() -> Vec<String> {
        vec![
            act("add_start_node", json!({"initial_data": {"xs": [1, 2, 3]}})),
            act("add_function_node", json!({"node_id": "step1", "function": "sum_list", "input_keys": {"xs": "xs"}, "output_key": "total"})),
            act("add_end_node", json!({"result_key": "total"})),
            act("add_edge", json!({"from_node": "__start__", "to_node": "step1"})),
            act("add_edge", json!({"from_node": "step1", "to_node": "__end__"})),
            act("finish", json!({"answer": "graph complete"})),
        ]
    }

    fn failed(reason: FailReason) -> Trace {
        let mut t = Trace::new("t", "react", "q");
        t.status = TraceStatus::Failed { reason, detail: String::new() };
        t
    }

    #[test]
    fn selection_modes() {
        let s = Trace::new("t", "react", "q");
        let traces = vec![s.clone(), failed(FailReason::StepLimit), s];
        assert_eq!(select_traces(&traces, Selection::All, None), vec![0, 1, 2]);
        assert_eq!(select_traces(&traces, Selection::AllSuccess, None), vec![0, 2]);
        let pick = select_traces(&traces, Selection::RandomSuccess, Some(7));
        assert!(pick == vec![0] || pick == vec![2]);
        assert_eq!(pick, select_traces(&traces, Selection::RandomSuccess, Some(7)));
        let none = vec![failed(FailReason::StepLimit); 3];
        assert!(select_traces(&none, Selection::AllSuccess, None).is_empty());
        assert!(select_traces(&none, Selection::RandomSuccess, Some(1)).is_empty());
    }

    #[test]
    fn trace_input_template() {
        let b = ScriptedBackend::new(ok_rollout());
        let trace = run_react(&task(), &execute_tools(&full_registry()), &b, SessionLimits::default()).trace;
        let text = format_trace_input(&[&trace]).unwrap();
        assert!(text.starts_with("## Execution Trace(s) to Convert\n\n### Execution 1: sum\n**Query**: Calculate sum of [1,2,3]\n**Status**: Success\n**Final Answer**: 6\n"));
        assert!(text.contains("- Step 1: `sum_list(xs=[1, 2, 3])` -> `6`"));
        assert!(text.ends_with("Respond with JSON only."));
        let two = format_trace_input(&[&trace, &trace]).unwrap();
        assert_eq!(two.matches("### Execution").count(), 2);
        assert_eq!(format_trace_input(&[]), Err(EsError::NoTracesToSummarize));
    }

    #[test]
    fn react_build_produces_linear_graph() {
        let b = ScriptedBackend::new(build_turns());
        let (graph, trace) = run_summarize_stage(&task(), "traces", &b, BuildStrategy::React, SessionLimits::default());
        assert!(trace.status.is_success());
        let g = graph.unwrap();
        assert_eq!(g.nodes().len(), 3);
        assert_eq!(g.edges().len(), 2);
        let req = &b.requests()[0];
        assert!(req[0].content.contains("add_function_node"));
        assert!(!req[0].content.contains("sum_list("));
        assert_eq!(req[1].content, "traces");
    }

    #[test]
    fn plan_build_produces_same_graph() {
        let plan = json!({"analysis": "one call", "steps": ["Step 1: Add start node with initial data containing xs", "Step 2: Add the sum node", "Step 3: Add end node and edges"]}).to_string();
        let turns: Vec<String> = std::iter::once(plan).chain(build_turns()).collect();
        let b = ScriptedBackend::new(turns);
        let (graph, trace) = run_summarize_stage(&task(), "traces", &b, BuildStrategy::PlanAndBuild, SessionLimits::default());
        assert!(trace.plan.is_some());
        let b2 = ScriptedBackend::new(build_turns());
        let (react_graph, _) = run_summarize_stage(&task(), "traces", &b2, BuildStrategy::React, SessionLimits::default());
        assert_eq!(graph, react_graph);
        assert!(b.requests()[1][1].content.contains("Now execute Step 1"));
    }

    #[test]
    fn build_format_exhaustion_drops_graph() {
        let b = ScriptedBackend::new(vec!["nope".to_string(); 6]);
        let (graph, trace) = run_summarize_stage(&task(), "traces", &b, BuildStrategy::React, SessionLimits::default());
        assert!(graph.is_none());
        assert_eq!(trace.status.fail_reason(), Some(FailReason::FormatExhausted));
    }

    #[test]
    fn full_pipeline_react() {
        let mut turns = Vec::new();
        for _ in 0..3 {
            turns.extend(ok_rollout());
        }
        turns.extend(build_turns());
        let b = ScriptedBackend::new(turns);
        let config = ESConfig {
            exec_strategy: ExecStrategy::React,
            build_strategy: BuildStrategy::React,
            ..ESConfig::default()
        };
        let r = run_es(&task(), &full_registry(), &b, &config, SessionLimits::default()).unwrap();
        assert_eq!(r.traces.len(), 3);
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert!(r.graph.is_some());
        let total: Usage = r.traces.iter().map(Trace::usage).sum::<Usage>() + r.build_trace.as_ref().unwrap().usage();
        assert_eq!(r.usage(), total);
        for t in &r.traces {
            assert!(t.steps.iter().all(|s| s.partition != Some(Partition::GraphConstruction)));
        }
        assert!(r.build_trace.unwrap().steps.iter().all(|s| s.partition != Some(Partition::Business)));
        // Execute-stage prompts never document graph tools.
        assert!(!b.requests()[0][0].content.contains("add_start_node"));
    }

    #[test]
    fn no_successes_means_no_graph() {
        let b = ScriptedBackend::new(vec!["garbage".to_string(); 18]);
        let config = ESConfig {
            exec_strategy: ExecStrategy::React,
            selection: Selection::AllSuccess,
            ..ESConfig::default()
        };
        let r = run_es(&task(), &full_registry(), &b, &config, SessionLimits::default()).unwrap();
        assert!(r.graph.is_none());
        assert_eq!(r.error, Some(EsError::NoTracesToSummarize));
        assert_eq!(r.traces.len(), 3);
    }

    #[test]
    fn config_checks() {
        let c = ESConfig { n_rollouts: 0, ..ESConfig::default() };
        assert_eq!(c.check(), Err(EsError::ZeroRollouts));
        let c = ESConfig { selection: Selection::RandomSuccess, ..ESConfig::default() };
        assert_eq!(c.check(), Err(EsError::MissingSeed));
        assert_eq!(ESConfig::default().label(), "ES-P&E");
    }
}
