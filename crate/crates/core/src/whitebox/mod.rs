//! Golden-vs-candidate graph diagnostics and trace fidelity.

mod canon;
mod congruence;
mod fidelity;
mod fsm;
mod paths;

use serde::{Deserialize, Serialize};

use crate::agent::Trace;
use crate::graph::{validate, ViolationCode, WorkflowGraph};

pub use canon::{canonical_expr, canonicalize, node_signature, CanonicalGraph};
pub use congruence::{jaccard, structural_congruence, CongruenceScore};
pub use fidelity::{fidelity, fidelity_of_calls};
pub use fsm::{behavioral_equivalent, observation, replay, transitions, Equivalence, Witness};
pub use paths::{enumerate_paths, path_sufficiency, Path, PathReport};

pub const DEFAULT_FSM_BOUND: usize = 10_000;
pub const DEFAULT_PATH_DEPTH: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WhiteboxError {
    #[error("invalid graph: {0:?}")]
    InvalidGraph(Vec<ViolationCode>),
    #[error("cycle through `{node}` has no condition to leave it")]
    DepthExhausted { node: String },
    #[error("too many paths to enumerate")]
    TooManyPaths,
    #[error("trace has no business calls")]
    NoBusinessCalls,
}

/// Structural validity, ignoring whether tools exist.
pub(crate) fn check_valid(graph: &WorkflowGraph) -> Result<(), WhiteboxError> {
    let report = validate(graph, |_| true);
    if report.valid {
        Ok(())
    } else {
        Err(WhiteboxError::InvalidGraph(report.codes().into_iter().collect()))
    }
}

/// Per-case diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub congruence: CongruenceScore,
    pub equivalence: Equivalence,
    pub covered_paths: usize,
    pub missing_paths: Vec<Path>,
    pub spurious_paths: Vec<Path>,
    pub fidelity: Option<f64>,
    /// Unweighted mean of congruence, equivalence (1 or 0, skipped when
    /// undecided) and path recall.
    pub final_score: f64,
}

pub fn diagnose(golden: &WorkflowGraph, candidate: &WorkflowGraph, trace: Option<&Trace>) -> Result<Diagnostics, WhiteboxError> {
    let congruence = structural_congruence(golden, candidate)?;
    let equivalence = behavioral_equivalent(golden, candidate, DEFAULT_FSM_BOUND)?;
    let paths = path_sufficiency(golden, candidate, DEFAULT_PATH_DEPTH)?;
    let fidelity = trace.and_then(|t| fidelity(candidate, t).ok());
    let mut parts = vec![congruence.aggregate, paths.recall()];
    match equivalence {
        Equivalence::Equivalent => parts.push(1.0),
        Equivalence::Different(_) => parts.push(0.0),
        Equivalence::Undecided => {}
    }
    let final_score = parts.iter().sum::<f64>() / parts.len() as f64;
    Ok(Diagnostics {
        congruence,
        equivalence,
        covered_paths: paths.covered.len(),
        missing_paths: paths.missing.into_iter().collect(),
        spurious_paths: paths.spurious.into_iter().collect(),
        fidelity,
        final_score,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::{Edge, Node, END_ID, START_ID};
    use crate::value::Value;

    /// Start → condition `n > 0` → upper / lower → end.
    pub(crate) fn branchy() -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        g.add_start_node([("text".to_string(), Value::Text("Hi".into())), ("n".to_string(), Value::Number(1.0))].into())
            .unwrap();
        g.add_condition_node("c", "n > 0").unwrap();
        g.add_function_node("up", "upper", [("text".to_string(), "text".to_string())].into(), "out").unwrap();
        g.add_function_node("low", "lower", [("text".to_string(), "text".to_string())].into(), "out").unwrap();
        g.add_end_node(Some("out")).unwrap();
        g.add_edge(START_ID, "c", None).unwrap();
        g.add_edge("c", "up", Some("true")).unwrap();
        g.add_edge("c", "low", Some("false")).unwrap();
        g.add_edge("up", END_ID, None).unwrap();
        g.add_edge("low", END_ID, None).unwrap();
        g
    }

    /// Prefixes every non-reserved id and reverses node and edge order.
    pub(crate) fn rename(g: &WorkflowGraph, prefix: &str) -> WorkflowGraph {
        let map = |id: &str| if id == START_ID || id == END_ID { id.to_string() } else { format!("{prefix}{id}") };
        let nodes: Vec<Node> = g.nodes().iter().rev().map(|n| Node { id: map(&n.id), body: n.body.clone() }).collect();
        let edges: Vec<Edge> = g
            .edges()
            .iter()
            .rev()
            .map(|e| Edge { from: map(&e.from), to: map(&e.to), label: e.label.clone() })
            .collect();
        WorkflowGraph::from_parts(nodes, edges)
    }

    #[test]
    fn diagnose_self() {
        let g = branchy();
        let d = diagnose(&g, &rename(&g, "x"), None).unwrap();
        assert_eq!(d.final_score, 1.0);
        assert_eq!(d.equivalence, Equivalence::Equivalent);
        assert!(d.missing_paths.is_empty());
    }
}
