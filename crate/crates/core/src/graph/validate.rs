use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NodeBody, NodeKind, WorkflowGraph};
use crate::expr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCode {
    MissingStart,
    MissingEnd,
    DisconnectedNode,
    DeadEndNode,
    UnboundInput,
    DuplicateId,
    BadBranchLabels,
    UnknownTool,
    BadConditionExpr,
    UnknownEndpoint,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Node id, or `from->to` for edges; empty for graph-level issues.
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn codes(&self) -> BTreeSet<ViolationCode> {
        self.violations.iter().map(|v| v.code).collect()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

/// Checks the structural rules. `known_tool` decides whether a
/// function name is a registered business tool.
pub fn validate(graph: &WorkflowGraph, known_tool: impl Fn(&str) -> bool) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |code, subject: &str, message: String| {
        out.push(Violation {
            code,
            subject: subject.to_string(),
            message,
        })
    };

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for n in graph.nodes() {
        *seen.entry(n.id.as_str()).or_default() += 1;
    }
    let mut reported = BTreeSet::new();
    for n in graph.nodes() {
        if seen[n.id.as_str()] > 1 && reported.insert(n.id.as_str()) {
            push(ViolationCode::DuplicateId, &n.id, format!("node id `{}` is used {} times", n.id, seen[n.id.as_str()]));
        }
    }

    let starts: Vec<&str> = graph.nodes().iter().filter(|n| n.kind() == NodeKind::Start).map(|n| n.id.as_str()).collect();
    let ends: Vec<&str> = graph.nodes().iter().filter(|n| n.kind() == NodeKind::End).map(|n| n.id.as_str()).collect();
    if starts.is_empty() {
        push(ViolationCode::MissingStart, "", "graph has no start node".into());
    } else if starts.len() > 1 {
        push(ViolationCode::DuplicateId, starts[1], format!("graph has {} start nodes", starts.len()));
    }
    if ends.is_empty() {
        push(ViolationCode::MissingEnd, "", "graph has no end node".into());
    } else if ends.len() > 1 {
        push(ViolationCode::DuplicateId, ends[1], format!("graph has {} end nodes", ends.len()));
    }

    for e in graph.edges() {
        for endpoint in [&e.from, &e.to] {
            if !seen.contains_key(endpoint.as_str()) {
                push(
                    ViolationCode::UnknownEndpoint,
                    &format!("{}->{}", e.from, e.to),
                    format!("edge endpoint `{endpoint}` is not a node"),
                );
            }
        }
    }

    if let Some(start) = starts.first() {
        let mut reach = BTreeSet::from([*start]);
        let mut queue = VecDeque::from([*start]);
        while let Some(id) = queue.pop_front() {
            for e in graph.out_edges(id) {
                if seen.contains_key(e.to.as_str()) && reach.insert(e.to.as_str()) {
                    queue.push_back(e.to.as_str());
                }
            }
        }
        for n in graph.nodes() {
            if !reach.contains(n.id.as_str()) {
                push(ViolationCode::DisconnectedNode, &n.id, format!("node `{}` is not reachable from the start node", n.id));
            }
        }
    }

    let mut available: BTreeSet<&str> = BTreeSet::new();
    for n in graph.nodes() {
        match &n.body {
            NodeBody::Start { initial_data } => available.extend(initial_data.keys().map(String::as_str)),
            NodeBody::FunctionCall { output_key, .. } => {
                available.insert(output_key);
            }
            _ => {}
        }
    }

    for n in graph.nodes() {
        let outs: Vec<_> = graph.out_edges(&n.id).collect();
        if n.kind() != NodeKind::End && outs.is_empty() {
            push(ViolationCode::DeadEndNode, &n.id, format!("node `{}` has no outgoing edge", n.id));
        }
        if n.kind() != NodeKind::Condition {
            if let Some(e) = outs.iter().find(|e| e.label.is_some()) {
                push(
                    ViolationCode::BadBranchLabels,
                    &n.id,
                    format!("only condition nodes may have labeled edges, found `{}` on {} -> {}", e.label.as_deref().unwrap_or(""), e.from, e.to),
                );
            }
        }
        match &n.body {
            NodeBody::FunctionCall { function, input_keys, .. } => {
                if !known_tool(function) {
                    push(ViolationCode::UnknownTool, &n.id, format!("function `{function}` is not a registered tool"));
                }
                for (param, key) in input_keys {
                    if !available.contains(key.as_str()) {
                        push(ViolationCode::UnboundInput, &n.id, format!("input `{param}` reads key `{key}` that nothing produces"));
                    }
                }
            }
            NodeBody::Condition { condition_expr } => {
                let labels: Vec<Option<&str>> = outs.iter().map(|e| e.label.as_deref()).collect();
                let t = labels.iter().filter(|l| **l == Some("true")).count();
                let f = labels.iter().filter(|l| **l == Some("false")).count();
                if t != 1 || f != 1 || labels.len() != 2 {
                    push(
                        ViolationCode::BadBranchLabels,
                        &n.id,
                        format!("condition `{}` needs exactly one `true` and one `false` outgoing edge, found {labels:?}", n.id),
                    );
                }
                match expr::parse(condition_expr) {
                    Ok(parsed) => {
                        for ident in parsed.identifiers() {
                            if !available.contains(ident) {
                                push(ViolationCode::UnboundInput, &n.id, format!("condition reads key `{ident}` that nothing produces"));
                            }
                        }
                    }
                    Err(e) => push(ViolationCode::BadConditionExpr, &n.id, e.to_string()),
                }
            }
            NodeBody::End { result_key: Some(key) } if !available.contains(key.as_str()) => {
                push(ViolationCode::UnboundInput, &n.id, format!("result key `{key}` is never produced"));
            }
            _ => {}
        }
    }

    ValidationReport {
        valid: out.is_empty(),
        violations: out,
    }
}
