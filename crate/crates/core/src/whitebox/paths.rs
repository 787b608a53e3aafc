use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{NodeBody, NodeKind, WorkflowGraph, START_ID};

use super::canon::canonical_expr;
use super::{check_valid, WhiteboxError};

const MAX_PATHS: usize = 10_000;

pub type Path = Vec<String>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub covered: BTreeSet<Path>,
    pub missing: BTreeSet<Path>,
    pub spurious: BTreeSet<Path>,
}

impl PathReport {
    /// Share of golden paths the candidate also has.
    pub fn recall(&self) -> f64 {
        let golden = self.covered.len() + self.missing.len();
        if golden == 0 {
            1.0
        } else {
            self.covered.len() as f64 / golden as f64
        }
    }
}

/// A cycle made only of non-condition nodes can never be left.
fn unconditional_cycle(graph: &WorkflowGraph) -> Option<String> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(g: &'a WorkflowGraph, id: &'a str, marks: &mut HashMap<&'a str, Mark>) -> Option<String> {
        marks.insert(id, Mark::Open);
        for e in g.out_edges(id) {
            if g.node(&e.to).map(|n| n.kind()) == Some(NodeKind::Condition) {
                continue;
            }
            match marks.get(e.to.as_str()) {
                Some(Mark::Open) => return Some(e.to.clone()),
                Some(Mark::Done) => {}
                None => {
                    if let Some(found) = visit(g, &e.to, marks) {
                        return Some(found);
                    }
                }
            }
        }
        marks.insert(id, Mark::Done);
        None
    }
    let mut marks = HashMap::new();
    for n in graph.nodes() {
        if n.kind() != NodeKind::Condition && !marks.contains_key(n.id.as_str()) {
            if let Some(found) = visit(graph, &n.id, &mut marks) {
                return Some(found);
            }
        }
    }
    None
}

/// Action-label paths from start to end, each node entered at most
/// `depth + 1` times.
pub fn enumerate_paths(graph: &WorkflowGraph, depth: u32) -> Result<BTreeSet<Path>, WhiteboxError> {
    check_valid(graph)?;
    if let Some(node) = unconditional_cycle(graph) {
        return Err(WhiteboxError::DepthExhausted { node });
    }
    let mut out = BTreeSet::new();
    let mut visits: HashMap<String, u32> = HashMap::new();
    let mut path = Vec::new();
    walk(graph, START_ID, depth + 1, &mut visits, &mut path, &mut out)?;
    Ok(out)
}

fn walk(
    g: &WorkflowGraph,
    id: &str,
    cap: u32,
    visits: &mut HashMap<String, u32>,
    path: &mut Path,
    out: &mut BTreeSet<Path>,
) -> Result<(), WhiteboxError> {
    let count = visits.entry(id.to_string()).or_insert(0);
    if *count >= cap {
        return Ok(());
    }
    *count += 1;
    let node = g.node(id).expect("validated");
    match &node.body {
        NodeBody::End { .. } => {
            out.insert(path.clone());
            if out.len() > MAX_PATHS {
                return Err(WhiteboxError::TooManyPaths);
            }
        }
        NodeBody::Condition { condition_expr } => {
            let text = canonical_expr(condition_expr);
            for e in g.out_edges(id) {
                path.push(format!("{text} = {}", e.label.as_deref().unwrap_or("")));
                walk(g, &e.to, cap, visits, path, out)?;
                path.pop();
            }
        }
        body => {
            let pushed = match body {
                NodeBody::FunctionCall { function, .. } => {
                    path.push(function.clone());
                    true
                }
                NodeBody::Llm => {
                    path.push("llm".into());
                    true
                }
                _ => false,
            };
            for e in g.out_edges(id) {
                walk(g, &e.to, cap, visits, path, out)?;
            }
            if pushed {
                path.pop();
            }
        }
    }
    *visits.get_mut(id).expect("inserted above") -= 1;
    Ok(())
}

pub fn path_sufficiency(golden: &WorkflowGraph, candidate: &WorkflowGraph, depth: u32) -> Result<PathReport, WhiteboxError> {
    let a = enumerate_paths(golden, depth)?;
    let b = enumerate_paths(candidate, depth)?;
    Ok(PathReport {
        covered: a.intersection(&b).cloned().collect(),
        missing: a.difference(&b).cloned().collect(),
        spurious: b.difference(&a).cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::END_ID;
    use crate::whitebox::tests::branchy;

    #[test]
    fn identical_graphs_match() {
        let r = path_sufficiency(&branchy(), &branchy(), 1).unwrap();
        assert!(r.missing.is_empty() && r.spurious.is_empty());
        assert_eq!(r.covered.len(), 2);
    }

    #[test]
    fn missing_false_branch() {
        let g = branchy();
        // Route the false branch to the upper node too.
        let edges = g
            .edges()
            .iter()
            .filter(|e| e.from != "low")
            .cloned()
            .map(|mut e| {
                if e.label.as_deref() == Some("false") {
                    e.to = "up".into();
                }
                e
            })
            .collect();
        let nodes = g.nodes().iter().filter(|n| n.id != "low").cloned().collect();
        let h = WorkflowGraph::from_parts(nodes, edges);
        let r = path_sufficiency(&g, &h, 1).unwrap();
        assert_eq!(r.missing.len(), 1);
        assert!(r.missing.iter().next().unwrap().contains(&"lower".to_string()));
        assert_eq!(r.spurious.len(), 1);
    }

    #[test]
    fn loops_unroll_zero_and_one_times() {
        let mut g = WorkflowGraph::new();
        g.add_start_node([("i".to_string(), crate::value::Value::Number(0.0))].into()).unwrap();
        g.add_function_node("inc", "add", [("a".to_string(), "i".to_string()), ("b".to_string(), "i".to_string())].into(), "i")
            .unwrap();
        g.add_condition_node("c", "i > 3").unwrap();
        g.add_end_node(Some("i")).unwrap();
        g.add_edge(START_ID, "inc", None).unwrap();
        g.add_edge("inc", "c", None).unwrap();
        g.add_edge("c", END_ID, Some("true")).unwrap();
        g.add_edge("c", "inc", Some("false")).unwrap();
        let paths = enumerate_paths(&g, 1).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.contains(&vec!["add".to_string(), "i > 3 = true".to_string()]));
    }

    #[test]
    fn cycle_without_condition() {
        let g = WorkflowGraph::from_parts(
            vec![
                crate::graph::Node { id: START_ID.into(), body: NodeBody::Start { initial_data: [("x".to_string(), crate::value::Value::Number(1.0))].into() } },
                crate::graph::Node { id: "a".into(), body: NodeBody::FunctionCall { function: "abs_diff".into(), input_keys: [("a".to_string(), "x".to_string()), ("b".to_string(), "x".to_string())].into(), output_key: "x".into() } },
                crate::graph::Node { id: "b".into(), body: NodeBody::FunctionCall { function: "abs_diff".into(), input_keys: [("a".to_string(), "x".to_string()), ("b".to_string(), "x".to_string())].into(), output_key: "x".into() } },
                crate::graph::Node { id: END_ID.into(), body: NodeBody::End { result_key: Some("x".into()) } },
            ],
            vec![
                crate::graph::Edge { from: START_ID.into(), to: "a".into(), label: None },
                crate::graph::Edge { from: "a".into(), to: "b".into(), label: None },
                crate::graph::Edge { from: "b".into(), to: "a".into(), label: None },
                crate::graph::Edge { from: "b".into(), to: END_ID.into(), label: None },
            ],
        );
        assert!(matches!(enumerate_paths(&g, 1), Err(WhiteboxError::DepthExhausted { .. })));
    }
}
