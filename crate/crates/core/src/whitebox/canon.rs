use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use crate::expr;
use crate::graph::{Edge, Node, NodeBody, WorkflowGraph, END_ID, START_ID};

use super::{check_valid, WhiteboxError};

/// Condition text through the canonical printer; unparsable text is kept.
pub fn canonical_expr(source: &str) -> String {
    expr::parse(source).map(|e| e.to_string()).unwrap_or_else(|_| source.trim().to_string())
}

/// Id-free description of a node.
pub fn node_signature(node: &Node) -> String {
    match &node.body {
        NodeBody::Start { initial_data } => {
            let keys: Vec<&str> = initial_data.keys().map(String::as_str).collect();
            format!("start[{}]", keys.join(","))
        }
        NodeBody::End { result_key } => format!("end[{}]", result_key.as_deref().unwrap_or("")),
        NodeBody::FunctionCall { function, input_keys, output_key } => {
            let keys: Vec<String> = input_keys.iter().map(|(p, k)| format!("{p}={k}")).collect();
            format!("call {function}({}) -> {output_key}", keys.join(","))
        }
        NodeBody::Condition { condition_expr } => format!("if {}", canonical_expr(condition_expr)),
        NodeBody::Llm => "llm".into(),
    }
}

/// A graph with ids assigned in breadth-first order from the start node
/// (`n1`, `n2`, …), normalized expressions and sorted edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGraph {
    graph: WorkflowGraph,
}

impl CanonicalGraph {
    pub fn graph(&self) -> &WorkflowGraph {
        &self.graph
    }

    pub fn into_graph(self) -> WorkflowGraph {
        self.graph
    }
}

pub fn canonicalize(graph: &WorkflowGraph) -> Result<CanonicalGraph, WhiteboxError> {
    check_valid(graph)?;
    let sig: HashMap<&str, String> = graph.nodes().iter().map(|n| (n.id.as_str(), node_signature(n))).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    let mut queue = VecDeque::from([START_ID]);
    seen.insert(START_ID);
    while let Some(id) = queue.pop_front() {
        order.push(id);
        let mut next: Vec<(&str, &str, &str)> = graph
            .out_edges(id)
            .map(|e| (e.label.as_deref().unwrap_or(""), sig[e.to.as_str()].as_str(), e.to.as_str()))
            .collect();
        next.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (_, _, to) in next {
            if seen.insert(to) {
                queue.push_back(to);
            }
        }
    }
    let mut rename: BTreeMap<&str, String> = BTreeMap::new();
    let mut k = 0;
    for id in &order {
        let new = match *id {
            START_ID => START_ID.to_string(),
            END_ID => END_ID.to_string(),
            _ => {
                k += 1;
                format!("n{k}")
            }
        };
        rename.insert(id, new);
    }
    let mut nodes: Vec<Node> = order
        .iter()
        .map(|id| {
            let node = graph.node(id).expect("reachable ids exist");
            let body = match &node.body {
                NodeBody::Condition { condition_expr } => NodeBody::Condition {
                    condition_expr: canonical_expr(condition_expr),
                },
                other => other.clone(),
            };
            Node { id: rename[id].clone(), body }
        })
        .collect();
    // The end node always sits last.
    if let Some(pos) = nodes.iter().position(|n| n.id == END_ID) {
        let end = nodes.remove(pos);
        nodes.push(end);
    }
    let mut edges: Vec<Edge> = graph
        .edges()
        .iter()
        .map(|e| Edge {
            from: rename[e.from.as_str()].clone(),
            to: rename[e.to.as_str()].clone(),
            label: e.label.clone(),
        })
        .collect();
    edges.sort_by(|a, b| (id_rank(&a.from), id_rank(&a.to), &a.label).cmp(&(id_rank(&b.from), id_rank(&b.to), &b.label)));
    Ok(CanonicalGraph {
        graph: WorkflowGraph::from_parts(nodes, edges),
    })
}

/// Sort key that keeps `n2` before `n10`.
fn id_rank(id: &str) -> (u8, usize) {
    match id {
        START_ID => (0, 0),
        END_ID => (2, 0),
        _ => (1, id[1..].parse().unwrap_or(usize::MAX)),
    }
}
