#![allow(dead_code)]

use std::collections::BTreeMap;

use flowforge::graph::{Edge, Node, NodeBody, WorkflowGraph, END_ID, START_ID};
use flowforge::Value;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub const TOOLS: [&str; 5] = ["add", "sub", "mul", "abs_diff", "round_to"];

/// Random structurally valid graph: a spine from start to end whose
/// condition nodes branch forward or loop back.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> WorkflowGraph {
    let mut keys: Vec<String> = (0..3).map(|i| format!("k{i}")).collect();
    let data: BTreeMap<String, Value> = keys
        .iter()
        .map(|k| (k.clone(), Value::Number(rng.random_range(0..10) as f64)))
        .collect();
    let mut nodes = vec![Node { id: START_ID.into(), body: NodeBody::Start { initial_data: data } }];
    let n = rng.random_range(1..=max_nodes);
    let mut spine = Vec::new();
    for i in 0..n {
        if rng.random_bool(0.3) {
            let a = keys.choose(rng).unwrap().clone();
            let b = keys.choose(rng).unwrap().clone();
            let op = [">", "<=", "==", "!="].choose(rng).unwrap();
            let expr = if rng.random_bool(0.3) {
                format!("{a} {op} {} and {b} > 0", rng.random_range(0..10))
            } else {
                format!("{a} {op} {}", rng.random_range(0..10))
            };
            let id = format!("c{i}");
            nodes.push(Node { id: id.clone(), body: NodeBody::Condition { condition_expr: expr } });
            spine.push(id);
        } else {
            let function = TOOLS.choose(rng).unwrap().to_string();
            let (p1, p2) = if function == "round_to" { ("x", "digits") } else { ("a", "b") };
            let input_keys: BTreeMap<String, String> = [
                (p1.to_string(), keys.choose(rng).unwrap().clone()),
                (p2.to_string(), keys.choose(rng).unwrap().clone()),
            ]
            .into();
            let output_key = if rng.random_bool(0.3) { keys.choose(rng).unwrap().clone() } else { format!("o{i}") };
            if !keys.contains(&output_key) {
                keys.push(output_key.clone());
            }
            let id = format!("f{i}");
            nodes.push(Node { id: id.clone(), body: NodeBody::FunctionCall { function, input_keys, output_key } });
            spine.push(id);
        }
    }
    let result_key = keys.last().cloned();
    nodes.push(Node { id: END_ID.into(), body: NodeBody::End { result_key } });
    let mut edges = vec![Edge { from: START_ID.into(), to: spine[0].clone(), label: None }];
    for (i, id) in spine.iter().enumerate() {
        let next = spine.get(i + 1).cloned().unwrap_or_else(|| END_ID.to_string());
        if id.starts_with('c') {
            let mut targets: Vec<String> = spine.iter().filter(|s| *s != id).cloned().collect();
            targets.push(END_ID.into());
            let other = targets.choose(rng).unwrap().clone();
            let (t, f) = if rng.random_bool(0.5) { (next, other) } else { (other, next) };
            edges.push(Edge { from: id.clone(), to: t, label: Some("true".into()) });
            edges.push(Edge { from: id.clone(), to: f, label: Some("false".into()) });
        } else {
            edges.push(Edge { from: id.clone(), to: next, label: None });
        }
    }
    WorkflowGraph::from_parts(nodes, edges)
}

/// Same graph with fresh non-reserved ids and shuffled node and edge order.
pub fn renamed(g: &WorkflowGraph, rng: &mut impl Rng) -> WorkflowGraph {
    let mut fresh: Vec<usize> = (0..g.nodes().len()).collect();
    fresh.shuffle(rng);
    let names: BTreeMap<String, String> = g
        .nodes()
        .iter()
        .zip(fresh)
        .map(|(n, k)| {
            let new = if n.id == START_ID || n.id == END_ID { n.id.clone() } else { format!("step_{k}") };
            (n.id.clone(), new)
        })
        .collect();
    let mut nodes: Vec<Node> = g.nodes().iter().map(|n| Node { id: names[&n.id].clone(), body: n.body.clone() }).collect();
    let mut edges: Vec<Edge> = g
        .edges()
        .iter()
        .map(|e| Edge { from: names[&e.from].clone(), to: names[&e.to].clone(), label: e.label.clone() })
        .collect();
    nodes.shuffle(rng);
    edges.shuffle(rng);
    WorkflowGraph::from_parts(nodes, edges)
}

/// A valid variant that differs from `g` in one function name, one
/// condition, or an extra step before the end node.
pub fn mutated(g: &WorkflowGraph, rng: &mut impl Rng) -> WorkflowGraph {
    let mut nodes = g.nodes().to_vec();
    let mut edges = g.edges().to_vec();
    let funcs: Vec<usize> = (0..nodes.len()).filter(|&i| matches!(nodes[i].body, NodeBody::FunctionCall { .. })).collect();
    let conds: Vec<usize> = (0..nodes.len()).filter(|&i| matches!(nodes[i].body, NodeBody::Condition { .. })).collect();
    match rng.random_range(0..3) {
        0 if !funcs.is_empty() => {
            let i = *funcs.choose(rng).unwrap();
            if let NodeBody::FunctionCall { function, .. } = &mut nodes[i].body {
                *function = if function == "mul" { "sub".into() } else { "mul".into() };
            }
        }
        1 if !conds.is_empty() => {
            let i = *conds.choose(rng).unwrap();
            if let NodeBody::Condition { condition_expr } = &mut nodes[i].body {
                condition_expr.push_str(" or k0 == 99");
            }
        }
        _ => {
            let last = edges.iter().rposition(|e| e.to == END_ID).unwrap();
            let id = format!("{}_extra", edges[last].from);
            nodes.push(Node { id: id.clone(), body: NodeBody::FunctionCall {
                function: "abs_diff".into(),
                input_keys: [("a".to_string(), "k0".to_string()), ("b".to_string(), "k1".to_string())].into(),
                output_key: "k2".into(),
            } });
            edges[last].to = id.clone();
            edges.push(Edge { from: id, to: END_ID.into(), label: None });
        }
    }
    WorkflowGraph::from_parts(nodes, edges)
}
