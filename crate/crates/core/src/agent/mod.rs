//! Single-stage agent strategies and the shared session loop.

mod trace;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::codec::{self, parse_action, parse_plan, Action, DecodeError};
use crate::graph::{apply_graph_tool, render_state, missing_elements, WorkflowGraph};
use crate::llm::{ChatBackend, ChatMessage, LlmError};
use crate::prompts::{self, fill};
use crate::tools::{args_string, Args, Partition, Registry, ToolError, ToolErrorKind};
use crate::value::{canonical_json_text, canonical_text, Value};

pub use trace::{FailReason, PlanRecord, Trace, TraceStatus, TraceStep};

/// A task as shown to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub query: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionLimits {
    pub max_steps: u32,
    pub max_tool_retries: u32,
    pub max_format_retries: u32,
}

impl Default for SessionLimits {
    fn default() -> Self {
        SessionLimits {
            max_steps: 30,
            max_tool_retries: 3,
            max_format_retries: codec::MAX_FORMAT_RETRIES,
        }
    }
}

/// Renders an action's arguments as `k=v`, in the tool's parameter order
/// when the tool is known.
pub fn render_args(tools: &Registry, action: &str, args: &Map<String, Json>) -> String {
    let mut keys: Vec<&String> = args.keys().collect();
    if let Some(spec) = tools.spec(action) {
        keys.sort_by_key(|k| spec.params.iter().position(|p| &p.name == *k).unwrap_or(usize::MAX));
    }
    args_string(keys.into_iter().map(|k| (k.as_str(), canonical_json_text(&args[k]))))
}

/// The error-recovery message for a failed call.
pub fn tool_error_message(err: &ToolError, retry_count: u32, max_retries: u32) -> String {
    fill(
        prompts::TOOL_ERROR,
        &[
            ("function_name", &err.tool),
            ("args_str", &err.args),
            ("error", &err.message),
            ("signature_info", &err.signature_info),
            ("retry_count", &retry_count.to_string()),
            ("max_retries", &max_retries.to_string()),
        ],
    )
}

/// What the observation callback sees after a successful call.
pub struct StepView<'a> {
    pub step: &'a TraceStep,
    pub graph: &'a WorkflowGraph,
    pub successful_calls: &'a [&'a TraceStep],
}

pub fn observation_message(view: &StepView<'_>) -> String {
    if view.step.partition == Some(Partition::GraphConstruction) {
        graph_observation(&view.step.observation, view.graph)
    } else {
        format!("Observation: {}", view.step.observation)
    }
}

pub fn graph_observation(result: &str, graph: &WorkflowGraph) -> String {
    let missing = missing_elements(graph);
    let state = render_state(graph);
    // render_state already ends with the missing-elements section.
    let (state_part, missing_part) = match state.rfind("\n\nMissing Elements") {
        Some(i) => (&state[..i], state[i + 2..].to_string()),
        None => (state.as_str(), String::new()),
    };
    debug_assert_eq!(missing.is_empty(), missing_part.ends_with("None"));
    fill(
        prompts::GRAPH_OBSERVATION,
        &[("result_str", result), ("graph_state", state_part), ("missing_info", &missing_part)],
    )
}

/// One conversation with a backend over a fixed tool set.
pub struct Session<'a> {
    backend: &'a dyn ChatBackend,
    tools: &'a Registry,
    limits: SessionLimits,
    pub messages: Vec<ChatMessage>,
    pub graph: WorkflowGraph,
}

enum Outcome {
    Finished,
    Stopped,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn ChatBackend, tools: &'a Registry, limits: SessionLimits, system: String) -> Self {
        Session {
            backend,
            tools,
            limits,
            messages: vec![ChatMessage::system(system)],
            graph: WorkflowGraph::new(),
        }
    }

    fn fail(trace: &mut Trace, err: DecodeError) {
        trace.trailing_usage += err.usage();
        let (reason, detail) = match &err {
            DecodeError::FormatExhausted { .. } => (FailReason::FormatExhausted, err.to_string()),
            DecodeError::Backend { error: LlmError::TranscriptExhausted, .. } => (FailReason::TranscriptExhausted, err.to_string()),
            DecodeError::Backend { .. } => (FailReason::TransportError, err.to_string()),
        };
        trace.status = TraceStatus::Failed { reason, detail };
    }

    /// Planning call; on failure the trace is marked failed.
    pub fn plan(&mut self, trace: &mut Trace) -> Option<PlanRecord> {
        match codec::query_and_decode(self.backend, &mut self.messages, parse_plan, self.limits.max_format_retries) {
            Ok(d) => {
                let record = PlanRecord {
                    analysis: d.value.analysis,
                    steps: d.value.steps,
                    usage: d.usage,
                    format_retries: d.format_retries,
                };
                trace.plan = Some(record.clone());
                Some(record)
            }
            Err(e) => {
                Self::fail(trace, e);
                None
            }
        }
    }

    fn execute(&mut self, action: &Action) -> (Option<Partition>, Result<String, ToolError>) {
        let partition = self.tools.partition(&action.action);
        let result = match partition {
            Some(Partition::Business) => {
                let mut args = Args::new();
                let mut bad = None;
                for (k, v) in &action.action_input {
                    match Value::from_json(v) {
                        Ok(v) => {
                            args.insert(k.clone(), v);
                        }
                        Err(e) => bad = Some(format!("argument `{k}`: {e}")),
                    }
                }
                match bad {
                    Some(message) => {
                        let spec = self.tools.spec(&action.action).expect("partition implies spec");
                        Err(ToolError {
                            tool: action.action.clone(),
                            kind: ToolErrorKind::ArgumentMismatch,
                            args: render_args(self.tools, &action.action, &action.action_input),
                            message,
                            signature_info: spec.signature_info(),
                        })
                    }
                    None => self.tools.execute(&action.action, &args).map(|v| canonical_text(&v)),
                }
            }
            Some(Partition::GraphConstruction) => apply_graph_tool(&mut self.graph, &action.action, &action.action_input),
            Some(Partition::Terminal) => unreachable!("finish is handled by the loop"),
            None => Err(self
                .tools
                .unknown_tool(&action.action, render_args(self.tools, &action.action, &action.action_input))),
        };
        (partition, result)
    }

    /// Runs decode/execute/observe until finish or a limit. `observe`
    /// builds the next user message after a successful call.
    pub fn run_steps(&mut self, trace: &mut Trace, mut observe: impl FnMut(&StepView<'_>) -> String) {
        match self.step_loop(trace, &mut observe) {
            Outcome::Finished | Outcome::Stopped => {}
        }
    }

    fn step_loop(&mut self, trace: &mut Trace, observe: &mut impl FnMut(&StepView<'_>) -> String) -> Outcome {
        let mut retry_count = 0u32;
        loop {
            if trace.steps.len() as u32 >= self.limits.max_steps {
                trace.status = TraceStatus::Failed {
                    reason: FailReason::StepLimit,
                    detail: format!("step limit of {} reached", self.limits.max_steps),
                };
                return Outcome::Stopped;
            }
            let decoded = match codec::query_and_decode(self.backend, &mut self.messages, parse_action, self.limits.max_format_retries) {
                Ok(d) => d,
                Err(e) => {
                    Self::fail(trace, e);
                    return Outcome::Stopped;
                }
            };
            let action = decoded.value;
            let index = trace.steps.len() as u32;
            let args_str = render_args(self.tools, &action.action, &action.action_input);
            if action.action == "finish" && self.tools.partition("finish") == Some(Partition::Terminal) {
                let answer = action.action_input.get("answer").map(canonical_json_text).unwrap_or_default();
                trace.no_business_call = !trace.has_business_call();
                trace.steps.push(TraceStep {
                    index,
                    reasoning: action.reasoning,
                    action: action.action,
                    args: action.action_input,
                    args_str,
                    observation: answer.clone(),
                    ok: true,
                    partition: Some(Partition::Terminal),
                    usage: decoded.usage,
                    format_retries: decoded.format_retries,
                    tool_retries: retry_count,
                });
                trace.final_answer = Some(answer);
                trace.status = TraceStatus::Success;
                return Outcome::Finished;
            }
            let (partition, result) = self.execute(&action);
            let ok = result.is_ok();
            let observation = match &result {
                Ok(o) => o.clone(),
                Err(e) => format!("Error: {}", e.message),
            };
            trace.steps.push(TraceStep {
                index,
                reasoning: action.reasoning,
                action: action.action,
                args: action.action_input,
                args_str,
                observation,
                ok,
                partition,
                usage: decoded.usage,
                format_retries: decoded.format_retries,
                tool_retries: retry_count,
            });
            if !ok {
                retry_count += 1;
            }
            match result {
                Ok(_) => {
                    retry_count = 0;
                    let successful: Vec<&TraceStep> = trace.steps.iter().filter(|s| s.ok).collect();
                    let view = StepView {
                        step: trace.steps.last().expect("just pushed"),
                        graph: &self.graph,
                        successful_calls: &successful,
                    };
                    let msg = observe(&view);
                    self.messages.push(ChatMessage::user(msg));
                }
                Err(err) => {
                    if retry_count > self.limits.max_tool_retries {
                        trace.status = TraceStatus::Failed {
                            reason: FailReason::ToolRetriesExhausted,
                            detail: format!("{} failed {} times in a row: {}", err.tool, retry_count, err.message),
                        };
                        return Outcome::Stopped;
                    }
                    self.messages.push(ChatMessage::user(tool_error_message(&err, retry_count, self.limits.max_tool_retries)));
                }
            }
        }
    }
}

/// Prompt text for a tool set: every documented tool in the registry.
pub fn functions_text(tools: &Registry) -> String {
    tools.render_signatures(&[Partition::Business, Partition::GraphConstruction, Partition::Terminal])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    React,
    PlanExecute,
    EnhancedReact,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::React => "react",
            Strategy::PlanExecute => "plan_execute",
            Strategy::EnhancedReact => "enhanced_react",
        }
    }
}

/// Result of a single-stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub trace: Trace,
    /// Graph built during the session; `None` unless the phase that
    /// built it finished successfully.
    pub graph: Option<WorkflowGraph>,
}

fn graph_if_built(trace: &Trace, graph: WorkflowGraph) -> Option<WorkflowGraph> {
    (trace.status.is_success() && !graph.is_empty()).then_some(graph)
}

pub fn run_react(task: &Task, tools: &Registry, backend: &dyn ChatBackend, limits: SessionLimits) -> AgentRun {
    let mut trace = Trace::new(&task.id, Strategy::React.label(), &task.query);
    let system = fill(prompts::REACT_SYSTEM, &[("functions_text", &functions_text(tools))]);
    let mut session = Session::new(backend, tools, limits, system);
    session.messages.push(ChatMessage::user(task.query.clone()));
    session.run_steps(&mut trace, observation_message);
    let graph = graph_if_built(&trace, session.graph);
    AgentRun { trace, graph }
}

/// Accumulated "Previous results" lines.
pub fn previous_results(calls: &[&TraceStep]) -> String {
    let lines: Vec<String> = calls
        .iter()
        .filter(|s| s.partition != Some(Partition::Terminal))
        .enumerate()
        .map(|(i, s)| format!("- Step {}: `{}({})` -> `{}`", i + 1, s.action, s.args_str, s.observation))
        .collect();
    if lines.is_empty() {
        "(none yet)".to_string()
    } else {
        lines.join("\n")
    }
}

pub fn step_instruction(n: usize, description: &str, calls: &[&TraceStep]) -> String {
    fill(
        prompts::STEP_INSTRUCTION,
        &[
            ("step_number", &n.to_string()),
            ("step_description", description),
            ("accumulated_step_context", &previous_results(calls)),
        ],
    )
}

pub fn plan_context(query: &str, plan: &PlanRecord) -> String {
    let steps: Vec<&str> = plan.steps.iter().map(String::as_str).collect();
    format!("{query}\n\n## Plan Analysis\n{}\n\n## Plan Steps\n{}", plan.analysis, steps.join("\n"))
}

/// Observation callback that walks the plan steps, then falls back to
/// plain observations once every step has been issued.
pub fn plan_observer(steps: Vec<String>) -> impl FnMut(&StepView<'_>) -> String {
    let mut next = 1usize;
    move |view| {
        let obs = observation_message(view);
        if next < steps.len() {
            next += 1;
            format!("{obs}\n\n{}", step_instruction(next, &steps[next - 1], view.successful_calls))
        } else {
            obs
        }
    }
}

pub fn run_plan_execute(task: &Task, tools: &Registry, backend: &dyn ChatBackend, limits: SessionLimits) -> AgentRun {
    let mut trace = Trace::new(&task.id, Strategy::PlanExecute.label(), &task.query);
    let docs = functions_text(tools);
    let mut planner = Session::new(backend, tools, limits, fill(prompts::PLAN_SYSTEM, &[("functions_text", &docs)]));
    planner.messages.push(ChatMessage::user(task.query.clone()));
    let Some(plan) = planner.plan(&mut trace) else {
        return AgentRun { trace, graph: None };
    };
    let mut session = Session::new(backend, tools, limits, fill(prompts::EXECUTE_SYSTEM, &[("functions_text", &docs)]));
    let first = format!("{}\n\n{}", plan_context(&task.query, &plan), step_instruction(1, &plan.steps[0], &[]));
    session.messages.push(ChatMessage::user(first));
    session.run_steps(&mut trace, plan_observer(plan.steps.clone()));
    let graph = graph_if_built(&trace, session.graph);
    AgentRun { trace, graph }
}

/// ReAct over the mixed tool set; when the run finishes without building
/// a graph, a follow-up phase asks for one using graph tools only.
pub fn run_enhanced_react(task: &Task, tools: &Registry, backend: &dyn ChatBackend, limits: SessionLimits) -> AgentRun {
    let mut trace = Trace::new(&task.id, Strategy::EnhancedReact.label(), &task.query);
    let system = fill(prompts::REACT_SYSTEM, &[("functions_text", &functions_text(tools))]);
    let mut session = Session::new(backend, tools, limits, system);
    session.messages.push(ChatMessage::user(task.query.clone()));
    session.run_steps(&mut trace, observation_message);
    if !trace.status.is_success() || trace.graph_calls() > 0 {
        let graph = graph_if_built(&trace, session.graph);
        return AgentRun { trace, graph };
    }
    let graph_tools = tools.restrict(&[Partition::GraphConstruction, Partition::Terminal]);
    let mut post = Trace::new(&task.id, "enhanced_react_posthoc", &task.query);
    let prompt = fill(
        prompts::ENHANCED_POSTHOC,
        &[("tools_prompt", &graph_tools.render_signatures(&[Partition::GraphConstruction, Partition::Terminal]))],
    );
    let mut follow = Session {
        backend,
        tools: &graph_tools,
        limits,
        messages: std::mem::take(&mut session.messages),
        graph: session.graph,
    };
    follow.messages.push(ChatMessage::user(prompt));
    follow.run_steps(&mut post, observation_message);
    let graph = graph_if_built(&post, follow.graph);
    trace.posthoc = Some(Box::new(post));
    AgentRun { trace, graph }
}
