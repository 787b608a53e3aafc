use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use crate::llm::Usage;
use crate::tools::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    StepLimit,
    FormatExhausted,
    ToolRetriesExhausted,
    TransportError,
    TranscriptExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceStatus {
    Success,
    Failed { reason: FailReason, detail: String },
}

impl TraceStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, TraceStatus::Success)
    }

    pub fn fail_reason(&self) -> Option<FailReason> {
        match self {
            TraceStatus::Success => None,
            TraceStatus::Failed { reason, .. } => Some(*reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: u32,
    pub reasoning: String,
    pub action: String,
    pub args: Map<String, Json>,
    /// Rendered argument list, `k=v` in parameter order.
    pub args_str: String,
    pub observation: String,
    pub ok: bool,
    /// `None` when the named tool was not available to the session.
    pub partition: Option<Partition>,
    pub usage: Usage,
    pub format_retries: u32,
    pub tool_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub analysis: String,
    pub steps: Vec<String>,
    pub usage: Usage,
    pub format_retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub task_id: String,
    pub strategy: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub plan: Option<PlanRecord>,
    pub steps: Vec<TraceStep>,
    pub final_answer: Option<String>,
    pub status: TraceStatus,
    /// Finished without a successful business call first.
    pub no_business_call: bool,
    /// Usage of calls that produced no step (failed decodes, aborts).
    pub trailing_usage: Usage,
    /// Follow-up graph-building phase of the enhanced strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posthoc: Option<Box<Trace>>,
}

impl Trace {
    pub fn new(task_id: &str, strategy: &str, query: &str) -> Self {
        Trace {
            task_id: task_id.into(),
            strategy: strategy.into(),
            query: query.into(),
            config_hash: None,
            plan: None,
            steps: Vec::new(),
            final_answer: None,
            status: TraceStatus::Success,
            no_business_call: false,
            trailing_usage: Usage::default(),
            posthoc: None,
        }
    }

    /// Plan, step and trailing usage of this phase only.
    pub fn own_usage(&self) -> Usage {
        self.plan.as_ref().map(|p| p.usage).unwrap_or_default()
            + self.steps.iter().map(|s| s.usage).sum::<Usage>()
            + self.trailing_usage
    }

    /// Usage including the follow-up phase.
    pub fn usage(&self) -> Usage {
        self.own_usage() + self.posthoc.as_ref().map(|p| p.usage()).unwrap_or_default()
    }

    /// Steps of this trace followed by follow-up steps.
    pub fn all_steps(&self) -> Vec<&TraceStep> {
        let mut v: Vec<&TraceStep> = self.steps.iter().collect();
        if let Some(p) = &self.posthoc {
            v.extend(p.all_steps());
        }
        v
    }

    pub fn business_calls(&self) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(|s| s.ok && s.partition == Some(Partition::Business))
    }

    pub fn has_business_call(&self) -> bool {
        self.business_calls().next().is_some()
    }

    pub fn graph_calls(&self) -> usize {
        self.all_steps()
            .iter()
            .filter(|s| s.ok && s.partition == Some(Partition::GraphConstruction))
            .count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![json!({
            "record": "header",
            "task_id": self.task_id,
            "strategy": self.strategy,
            "query": self.query,
            "config_hash": self.config_hash,
        })];
        self.push_phase(&mut lines, "main");
        lines.iter().map(|l| l.to_string() + "\n").collect()
    }

    fn push_phase(&self, lines: &mut Vec<Json>, phase: &str) {
        if let Some(p) = &self.plan {
            let mut v = serde_json::to_value(p).expect("plan serializes");
            v["record"] = json!("plan");
            v["phase"] = json!(phase);
            lines.push(v);
        }
        for s in &self.steps {
            let mut v = serde_json::to_value(s).expect("step serializes");
            v["record"] = json!("step");
            v["phase"] = json!(phase);
            lines.push(v);
        }
        lines.push(json!({
            "record": "end",
            "phase": phase,
            "strategy": self.strategy,
            "status": self.status,
            "final_answer": self.final_answer,
            "no_business_call": self.no_business_call,
            "trailing_usage": self.trailing_usage,
            "usage": self.own_usage(),
        }));
        if let Some(p) = &self.posthoc {
            p.push_phase(lines, "posthoc");
        }
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, String> {
        let mut header: Option<Json> = None;
        let mut phases: Vec<(String, Trace)> = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Json = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            let kind = v["record"].as_str().ok_or_else(|| format!("line {}: missing record kind", n + 1))?;
            if kind == "header" {
                header = Some(v);
                continue;
            }
            let h = header.as_ref().ok_or("trace has no header")?;
            let phase = v["phase"].as_str().unwrap_or("main").to_string();
            if phases.last().map(|(p, _)| p != &phase).unwrap_or(true) {
                let mut t = Trace::new(
                    h["task_id"].as_str().unwrap_or_default(),
                    h["strategy"].as_str().unwrap_or_default(),
                    h["query"].as_str().unwrap_or_default(),
                );
                t.config_hash = h["config_hash"].as_str().map(str::to_string);
                phases.push((phase.clone(), t));
            }
            let t = &mut phases.last_mut().expect("pushed above").1;
            let bad = |e: serde_json::Error| format!("line {}: {e}", n + 1);
            match kind {
                "plan" => t.plan = Some(serde_json::from_value(v).map_err(bad)?),
                "step" => t.steps.push(serde_json::from_value(v).map_err(bad)?),
                "end" => {
                    t.status = serde_json::from_value(v["status"].clone()).map_err(bad)?;
                    if let Some(s) = v["strategy"].as_str() {
                        t.strategy = s.to_string();
                    }
                    t.final_answer = v["final_answer"].as_str().map(str::to_string);
                    t.no_business_call = v["no_business_call"].as_bool().unwrap_or(false);
                    t.trailing_usage = serde_json::from_value(v["trailing_usage"].clone()).map_err(bad)?;
                }
                other => return Err(format!("line {}: unknown record kind `{other}`", n + 1)),
            }
        }
        let mut iter = phases.into_iter();
        let (_, mut main) = iter.next().ok_or("trace has no records")?;
        if let Some((_, post)) = iter.next() {
            main.posthoc = Some(Box::new(post));
        }
        Ok(main)
    }
}
