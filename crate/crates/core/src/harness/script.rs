//! Deterministic transcripts replayed from golden graphs, used by the
//! scripted backend.

use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};

use crate::agent::SessionLimits;
use crate::es::{select_traces, BuildStrategy, ESConfig, ExecStrategy};
use crate::exec::{execute, ExecLimits};
use crate::graph::{NodeBody, WorkflowGraph};
use crate::agent::{Trace, TraceStatus, FailReason};

use super::dataset::Instance;
use super::Mode;

pub const GARBAGE: &str = "Let me think about which function fits best here.";

pub fn act(reasoning: &str, action: &str, input: Json) -> String {
    serde_json::to_string_pretty(&json!({"reasoning": reasoning, "action": action, "action_input": input})).expect("json serializes")
}

pub fn plan(analysis: &str, steps: &[String]) -> String {
    serde_json::to_string_pretty(&json!({"analysis": analysis, "steps": steps})).expect("json serializes")
}

/// Business calls made by the golden graph on the instance's first
/// example, and the answer it produces.
pub fn golden_solution(inst: &Instance) -> Option<(Vec<(String, Json)>, String)> {
    let graph = inst.golden_graph.as_ref()?;
    let input = inst.examples.first().map(|e| e.input.clone()).unwrap_or_default();
    let run = execute(graph, &inst.registry(), &input, ExecLimits::default()).ok()?;
    let calls = run
        .log
        .calls
        .iter()
        .map(|c| (c.tool.clone(), serde_json::to_value(&c.args).expect("values serialize")))
        .collect();
    Some((calls, run.answer))
}

/// Graph-tool calls that rebuild `graph`: nodes first, then edges.
pub fn build_calls(graph: &WorkflowGraph) -> Vec<(String, Json)> {
    let mut out = Vec::new();
    for n in graph.nodes() {
        match &n.body {
            NodeBody::Start { initial_data } => out.push(("add_start_node".into(), json!({"initial_data": initial_data}))),
            NodeBody::FunctionCall { function, input_keys, output_key } => out.push((
                "add_function_node".into(),
                json!({"node_id": n.id, "function": function, "input_keys": input_keys, "output_key": output_key}),
            )),
            NodeBody::Condition { condition_expr } => out.push((
                "add_condition_node".into(),
                json!({"node_id": n.id, "condition_expr": condition_expr}),
            )),
            NodeBody::End { result_key } => {
                let mut args = Map::new();
                if let Some(k) = result_key {
                    args.insert("result_key".into(), json!(k));
                }
                out.push(("add_end_node".into(), Json::Object(args)));
            }
            NodeBody::Llm => {}
        }
    }
    for e in graph.edges() {
        let mut args = Map::new();
        args.insert("from_node".into(), json!(e.from));
        args.insert("to_node".into(), json!(e.to));
        if let Some(l) = &e.label {
            args.insert("label".into(), json!(l));
        }
        out.push(("add_edge".into(), Json::Object(args)));
    }
    out
}

fn turns(calls: &[(String, Json)]) -> Vec<String> {
    calls.iter().map(|(a, i)| act(&format!("Call {a}."), a, i.clone())).collect()
}

fn finish(answer: &str) -> String {
    act("Done.", "finish", json!({"answer": answer}))
}

fn exec_plan(calls: &[(String, Json)]) -> String {
    let mut steps: Vec<String> = calls.iter().map(|(a, _)| format!("Call {a}")).collect();
    steps.push("Report the final answer".into());
    plan("Solve the task with the available functions.", &steps)
}

fn build_plan(calls: &[(String, Json)]) -> String {
    let mut steps: Vec<String> = calls.iter().map(|(a, _)| format!("Use {a}")).collect();
    steps.push("Finish".into());
    plan("Rebuild the execution as a workflow graph.", &steps)
}

/// Stable per-instance number that picks transcript variants.
pub fn variant(id: &str) -> u8 {
    Sha256::digest(id.as_bytes())[0]
}

/// Single-stage ReAct: solve, then optionally build the graph before
/// finishing.
pub fn react(inst: &Instance, with_graph: bool) -> Vec<String> {
    let Some((calls, answer)) = golden_solution(inst) else {
        return Vec::new();
    };
    let mut out = turns(&calls);
    if with_graph {
        out.extend(turns(&build_calls(inst.golden_graph.as_ref().expect("solution implies graph"))));
    }
    out.push(finish(&answer));
    out
}

/// Single-stage plan-and-execute; `solve` off skips the business calls.
pub fn plan_execute(inst: &Instance, solve: bool) -> Vec<String> {
    let Some((calls, answer)) = golden_solution(inst) else {
        return Vec::new();
    };
    let build = build_calls(inst.golden_graph.as_ref().expect("solution implies graph"));
    let mut all: Vec<(String, Json)> = if solve { calls } else { Vec::new() };
    all.extend(build);
    let mut out = vec![exec_plan(&all)];
    out.extend(turns(&all));
    out.push(finish(if solve { &answer } else { "graph complete" }));
    out
}

pub fn enhanced_react(inst: &Instance) -> Vec<String> {
    let Some((calls, answer)) = golden_solution(inst) else {
        return Vec::new();
    };
    let mut out = turns(&calls);
    out.push(finish(&answer));
    out.extend(turns(&build_calls(inst.golden_graph.as_ref().expect("solution implies graph"))));
    out.push(finish("graph complete"));
    out
}

/// Rollout `r` of an instance fails on formatting when this holds.
pub fn rollout_fails(inst: &Instance, r: u32) -> bool {
    (variant(&inst.id) as u32 + r) % 4 == 3
}

/// Execute-stage rollouts followed by the summarize stage, in the order
/// the pipeline consumes them.
pub fn es(inst: &Instance, config: &ESConfig, limits: SessionLimits) -> Vec<String> {
    let Some((calls, answer)) = golden_solution(inst) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut fake = Vec::new();
    for r in 0..config.n_rollouts {
        let mut t = Trace::new(&inst.id, "scripted", "");
        if rollout_fails(inst, r) {
            out.extend(std::iter::repeat_n(GARBAGE.to_string(), limits.max_format_retries as usize + 1));
            t.status = TraceStatus::Failed { reason: FailReason::FormatExhausted, detail: String::new() };
        } else {
            if config.exec_strategy == ExecStrategy::PlanExecute {
                out.push(exec_plan(&calls));
            }
            out.extend(turns(&calls));
            out.push(finish(&answer));
        }
        fake.push(t);
    }
    if select_traces(&fake, config.selection, config.seed).is_empty() {
        return out;
    }
    let build = build_calls(inst.golden_graph.as_ref().expect("solution implies graph"));
    if config.build_strategy == BuildStrategy::PlanAndBuild {
        out.push(build_plan(&build));
    }
    out.extend(turns(&build));
    out.push(finish("graph complete"));
    out
}

/// Transcript for one case of a run.
pub fn transcript(inst: &Instance, mode: Mode, es_config: Option<&ESConfig>, limits: SessionLimits) -> Vec<String> {
    let v = variant(&inst.id) % 3;
    match mode {
        Mode::React => react(inst, v != 0),
        Mode::PlanExecute => plan_execute(inst, v != 1),
        Mode::EnhancedReact => enhanced_react(inst),
        Mode::Es => es(inst, es_config.expect("es mode carries a config"), limits),
    }
}
