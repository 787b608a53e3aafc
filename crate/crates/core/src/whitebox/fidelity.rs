use std::collections::{HashSet, VecDeque};

use crate::agent::Trace;
use crate::graph::{NodeKind, WorkflowGraph};

use super::{check_valid, WhiteboxError};

/// Whether some node calling `to` follows a node calling `from` without
/// another call in between.
fn realizable(graph: &WorkflowGraph, from: &str, to: &str) -> bool {
    graph.nodes().iter().filter(|n| n.function() == Some(from)).any(|u| {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut queue: VecDeque<&str> = graph.out_edges(&u.id).map(|e| e.to.as_str()).collect();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let node = graph.node(id).expect("edges reference known nodes");
            if node.kind() == NodeKind::FunctionCall {
                if node.function() == Some(to) {
                    return true;
                }
                continue;
            }
            queue.extend(graph.out_edges(id).map(|e| e.to.as_str()));
        }
        false
    })
}

/// Share of adjacent business-call pairs in `calls` that the graph can
/// replay in order.
pub fn fidelity_of_calls(graph: &WorkflowGraph, calls: &[&str]) -> Result<f64, WhiteboxError> {
    check_valid(graph)?;
    match calls {
        [] => Err(WhiteboxError::NoBusinessCalls),
        [one] => Ok(if graph.nodes().iter().any(|n| n.function() == Some(one)) { 1.0 } else { 0.0 }),
        _ => {
            let pairs = calls.len() - 1;
            let ok = calls.windows(2).filter(|w| realizable(graph, w[0], w[1])).count();
            Ok(ok as f64 / pairs as f64)
        }
    }
}

pub fn fidelity(graph: &WorkflowGraph, trace: &Trace) -> Result<f64, WhiteboxError> {
    let calls: Vec<&str> = trace.business_calls().map(|s| s.action.as_str()).collect();
    fidelity_of_calls(graph, &calls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{END_ID, START_ID};
    use crate::value::Value;

    fn keys(pairs: &[(&str, &str)]) -> std::collections::BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn loop_graph() -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        g.add_start_node([("x".to_string(), Value::Number(16.0)), ("digits".to_string(), Value::Number(3.0))].into())
            .unwrap();
        g.add_function_node("s", "sqrt", keys(&[("x", "x")]), "r").unwrap();
        g.add_function_node("d", "abs_diff", keys(&[("a", "r"), ("b", "x")]), "abs_diff").unwrap();
        g.add_condition_node("c", "abs_diff < 0.001").unwrap();
        g.add_function_node("o", "round_to", keys(&[("x", "r"), ("digits", "digits")]), "out").unwrap();
        g.add_end_node(Some("out")).unwrap();
        for (f, t, l) in [(START_ID, "s", None), ("s", "d", None), ("d", "c", None), ("c", "o", Some("true")), ("c", "s", Some("false")), ("o", END_ID, None)] {
            g.add_edge(f, t, l).unwrap();
        }
        g
    }

    #[test]
    fn loop_replays_repeats() {
        let g = loop_graph();
        let calls = ["sqrt", "abs_diff", "sqrt", "abs_diff", "round_to"];
        assert_eq!(fidelity_of_calls(&g, &calls).unwrap(), 1.0);
    }

    #[test]
    fn absent_call_lowers_score() {
        let g = loop_graph();
        // pairs: sqrt→abs_diff ok, abs_diff→max_of no, max_of→round_to no
        assert_eq!(fidelity_of_calls(&g, &["sqrt", "abs_diff", "max_of", "round_to"]).unwrap(), 1.0 / 3.0);
        assert_eq!(fidelity_of_calls(&g, &["sqrt"]).unwrap(), 1.0);
        assert_eq!(fidelity_of_calls(&g, &["upper"]).unwrap(), 0.0);
        assert_eq!(fidelity_of_calls(&g, &[]), Err(WhiteboxError::NoBusinessCalls));
    }

    #[test]
    fn skipping_a_call_is_not_realizable() {
        let g = loop_graph();
        assert_eq!(fidelity_of_calls(&g, &["sqrt", "round_to"]).unwrap(), 0.0);
    }
}
