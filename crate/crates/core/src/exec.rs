//! Deterministic graph execution over a private data store.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::expr::{self, Expr};
use crate::graph::{validate, NodeBody, Violation, WorkflowGraph};
use crate::tools::{Args, Registry, ToolError};
use crate::value::{canonical_text, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    pub max_visits: u32,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits { max_visits: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("invalid graph: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
    #[error("node `{node}` reads unbound key `{key}`")]
    UnboundKey { key: String, node: String },
    #[error("node `{node}`: {error}")]
    Tool { node: String, error: ToolError },
    #[error("node `{node}`: {message}")]
    Expr { node: String, message: String },
    #[error("node `{node}` has no single successor: {detail}")]
    AmbiguousSuccessor { node: String, detail: String },
    #[error("node `{node}` has no successor to follow")]
    DeadEnd { node: String },
    #[error("visit limit of {max_visits} reached")]
    LoopCapExceeded { max_visits: u32 },
    #[error("node `{node}` is an LLM node, which cannot be executed")]
    LlmNodeUnsupported { node: String },
    #[error("end node has no result key and nothing was written")]
    NoResult,
    #[error("graph has no start node")]
    NoStart,
}

/// Key-value store with an ordered log of writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataStore {
    values: BTreeMap<String, Value>,
    writes: Vec<String>,
}

impl DataStore {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    pub fn seed(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    pub fn write(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
        self.writes.push(key.to_string());
    }

    pub fn write_log(&self) -> &[String] {
        &self.writes
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub node: String,
    pub tool: String,
    pub args: BTreeMap<String, Value>,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub node: String,
    pub expr: String,
    pub outcome: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub visited: Vec<String>,
    pub calls: Vec<CallRecord>,
    pub conditions: Vec<ConditionRecord>,
    pub writes: Vec<String>,
    /// Highest visit count of any single node; 1 for loop-free runs.
    pub iterations: u32,
}

impl RunLog {
    pub fn to_jsonl(&self, answer: Option<&str>) -> String {
        let mut lines = Vec::new();
        for c in &self.calls {
            lines.push(json!({"record": "call", "node": c.node, "tool": c.tool, "args": c.args, "result": c.result}));
        }
        for c in &self.conditions {
            lines.push(json!({"record": "condition", "node": c.node, "expr": c.expr, "outcome": c.outcome}));
        }
        lines.push(json!({
            "record": "end",
            "visited": self.visited,
            "writes": self.writes,
            "iterations": self.iterations,
            "answer": answer,
        }));
        lines.iter().map(|l| l.to_string() + "\n").collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub answer: String,
    pub log: RunLog,
}

/// Validates the graph against the registry, then runs it.
pub fn execute(
    graph: &WorkflowGraph,
    tools: &Registry,
    input: &BTreeMap<String, Value>,
    limits: ExecLimits,
) -> Result<Execution, ExecError> {
    let report = validate(graph, |name| tools.is_business(name));
    if !report.valid {
        return Err(ExecError::InvalidGraph(report.violations));
    }
    execute_unchecked(graph, tools, input, limits).map_err(|(e, _)| e)
}

/// Runs without validating first. On error the partial log is returned.
pub fn execute_unchecked(
    graph: &WorkflowGraph,
    tools: &Registry,
    input: &BTreeMap<String, Value>,
    limits: ExecLimits,
) -> Result<Execution, (ExecError, RunLog)> {
    let mut run = Runner {
        graph,
        tools,
        store: DataStore::default(),
        log: RunLog::default(),
        visits: HashMap::new(),
        parsed: HashMap::new(),
    };
    match run.go(input, limits) {
        Ok(answer) => {
            run.log.writes = run.store.writes.clone();
            Ok(Execution { answer, log: run.log })
        }
        Err(e) => {
            run.log.writes = run.store.writes.clone();
            Err((e, run.log))
        }
    }
}

struct Runner<'a> {
    graph: &'a WorkflowGraph,
    tools: &'a Registry,
    store: DataStore,
    log: RunLog,
    visits: HashMap<&'a str, u32>,
    parsed: HashMap<&'a str, Expr>,
}

impl<'a> Runner<'a> {
    fn go(&mut self, input: &BTreeMap<String, Value>, limits: ExecLimits) -> Result<String, ExecError> {
        let start = self.graph.start().ok_or(ExecError::NoStart)?;
        if let NodeBody::Start { initial_data } = &start.body {
            for (k, v) in initial_data.iter().chain(input) {
                self.store.seed(k, v.clone());
            }
        }
        // Work list in edge-insertion order; a node already queued is not
        // queued twice, and the end node waits until nothing else is pending.
        let mut queue: VecDeque<&'a str> = VecDeque::from([start.id.as_str()]);
        while let Some(id) = queue.pop_front() {
            let node = self.graph.node(id).expect("edges reference known nodes");
            if matches!(node.body, NodeBody::End { .. }) && !queue.is_empty() {
                queue.push_back(id);
                continue;
            }
            if self.log.visited.len() as u32 >= limits.max_visits {
                return Err(ExecError::LoopCapExceeded { max_visits: limits.max_visits });
            }
            self.log.visited.push(id.to_string());
            let count = self.visits.entry(id).or_insert(0);
            *count += 1;
            self.log.iterations = self.log.iterations.max(*count);
            let next: Vec<&'a str> = match &node.body {
                NodeBody::Start { .. } => self.unlabeled(id)?,
                NodeBody::FunctionCall { function, input_keys, output_key } => {
                    self.call(id, function, input_keys, output_key)?;
                    self.unlabeled(id)?
                }
                NodeBody::Condition { condition_expr } => vec![self.branch(id, condition_expr)?],
                NodeBody::Llm => return Err(ExecError::LlmNodeUnsupported { node: id.to_string() }),
                NodeBody::End { result_key } => return self.answer(id, result_key.as_deref()),
            };
            for n in next {
                if !queue.contains(&n) {
                    queue.push_back(n);
                }
            }
        }
        Err(ExecError::DeadEnd { node: self.log.visited.last().cloned().unwrap_or_default() })
    }

    fn read(&self, key: &str, node: &str) -> Result<Value, ExecError> {
        self.store.get(key).cloned().ok_or_else(|| ExecError::UnboundKey {
            key: key.to_string(),
            node: node.to_string(),
        })
    }

    fn call(
        &mut self,
        id: &str,
        function: &str,
        input_keys: &BTreeMap<String, String>,
        output_key: &str,
    ) -> Result<(), ExecError> {
        let mut args = Args::new();
        for (param, key) in input_keys {
            args.insert(param.clone(), self.read(key, id)?);
        }
        let result = self.tools.execute(function, &args).map_err(|error| ExecError::Tool {
            node: id.to_string(),
            error,
        })?;
        self.store.write(output_key, result.clone());
        self.log.calls.push(CallRecord {
            node: id.to_string(),
            tool: function.to_string(),
            args,
            result,
        });
        Ok(())
    }

    fn unlabeled(&self, id: &'a str) -> Result<Vec<&'a str>, ExecError> {
        let next: Vec<&'a str> = self.graph.out_edges(id).map(|e| e.to.as_str()).collect();
        if next.is_empty() {
            return Err(ExecError::DeadEnd { node: id.to_string() });
        }
        Ok(next)
    }

    fn branch(&mut self, id: &'a str, source: &str) -> Result<&'a str, ExecError> {
        let expr_err = |message: String| ExecError::Expr { node: id.to_string(), message };
        if !self.parsed.contains_key(id) {
            let parsed = expr::parse(source).map_err(|e| expr_err(e.to_string()))?;
            self.parsed.insert(id, parsed);
        }
        let outcome = expr::eval_condition(&self.parsed[id], self.store.values()).map_err(|e| expr_err(e.to_string()))?;
        self.log.conditions.push(ConditionRecord {
            node: id.to_string(),
            expr: source.to_string(),
            outcome,
        });
        let label = if outcome { "true" } else { "false" };
        let targets: Vec<&'a str> = self
            .graph
            .out_edges(id)
            .filter(|e| e.label.as_deref() == Some(label))
            .map(|e| e.to.as_str())
            .collect();
        match targets.as_slice() {
            [one] => Ok(one),
            [] => Err(ExecError::DeadEnd { node: id.to_string() }),
            _ => Err(ExecError::AmbiguousSuccessor {
                node: id.to_string(),
                detail: format!("{} edges labeled `{label}`", targets.len()),
            }),
        }
    }

    fn answer(&self, id: &str, result_key: Option<&str>) -> Result<String, ExecError> {
        let key = match result_key {
            Some(k) => k.to_string(),
            None => self.store.write_log().last().cloned().ok_or(ExecError::NoResult)?,
        };
        Ok(canonical_text(&self.read(&key, id)?))
    }
}
