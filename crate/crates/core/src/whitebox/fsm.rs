use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::graph::{NodeBody, WorkflowGraph, START_ID};

use super::canon::canonical_expr;
use super::{check_valid, WhiteboxError};

/// What a node shows when entered.
pub fn observation(graph: &WorkflowGraph, id: &str) -> String {
    match graph.node(id).map(|n| &n.body) {
        Some(NodeBody::Start { .. }) => "start".into(),
        Some(NodeBody::End { .. }) => "end".into(),
        Some(NodeBody::FunctionCall { function, .. }) => format!("call {function}"),
        Some(NodeBody::Condition { condition_expr }) => format!("if {}", canonical_expr(condition_expr)),
        Some(NodeBody::Llm) => "llm".into(),
        None => "?".into(),
    }
}

/// Outgoing transitions keyed by action label: the edge label, ranked
/// by target observation when several edges share it.
pub fn transitions(graph: &WorkflowGraph, id: &str) -> BTreeMap<String, String> {
    let mut edges: Vec<(String, String, String)> = graph
        .out_edges(id)
        .map(|e| (e.label.clone().unwrap_or_else(|| "next".into()), observation(graph, &e.to), e.to.clone()))
        .collect();
    edges.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut out = BTreeMap::new();
    let mut rank: HashMap<String, usize> = HashMap::new();
    for (label, _, to) in edges {
        let r = rank.entry(label.clone()).or_insert(0);
        let key = if *r == 0 { label.clone() } else { format!("{label}#{r}") };
        *r += 1;
        out.insert(key, to);
    }
    out
}

/// Action labels leading from the start node to a point of divergence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Equivalence {
    Equivalent,
    Different(Witness),
    Undecided,
}

/// Observations seen while following `actions`; stops early when an
/// action is not available.
pub fn replay(graph: &WorkflowGraph, actions: &[String]) -> Vec<String> {
    let mut at = START_ID.to_string();
    let mut seen = vec![observation(graph, &at)];
    for a in actions {
        match transitions(graph, &at).get(a) {
            Some(to) => {
                at = to.clone();
                seen.push(observation(graph, &at));
            }
            None => {
                seen.push(format!("no action `{a}`"));
                break;
            }
        }
    }
    seen
}

/// Synchronized product search; `bound` caps the number of state pairs.
pub fn behavioral_equivalent(g1: &WorkflowGraph, g2: &WorkflowGraph, bound: usize) -> Result<Equivalence, WhiteboxError> {
    check_valid(g1)?;
    check_valid(g2)?;
    let mut seen: HashMap<(String, String), ()> = HashMap::new();
    let mut queue: VecDeque<(String, String, Vec<String>)> = VecDeque::new();
    queue.push_back((START_ID.into(), START_ID.into(), Vec::new()));
    seen.insert((START_ID.into(), START_ID.into()), ());
    while let Some((a, b, path)) = queue.pop_front() {
        if observation(g1, &a) != observation(g2, &b) {
            return Ok(Equivalence::Different(Witness { actions: path }));
        }
        let ta = transitions(g1, &a);
        let tb = transitions(g2, &b);
        let labels: Vec<&String> = {
            let mut v: Vec<&String> = ta.keys().chain(tb.keys()).collect();
            v.sort();
            v.dedup();
            v
        };
        for label in labels {
            let mut next = path.clone();
            next.push(label.clone());
            let (Some(na), Some(nb)) = (ta.get(label), tb.get(label)) else {
                return Ok(Equivalence::Different(Witness { actions: next }));
            };
            if seen.contains_key(&(na.clone(), nb.clone())) {
                continue;
            }
            if seen.len() >= bound {
                return Ok(Equivalence::Undecided);
            }
            seen.insert((na.clone(), nb.clone()), ());
            queue.push_back((na.clone(), nb.clone(), next));
        }
    }
    Ok(Equivalence::Equivalent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitebox::tests::{branchy, rename};

    #[test]
    fn reflexive_and_renaming() {
        let g = branchy();
        assert_eq!(behavioral_equivalent(&g, &g, 1000).unwrap(), Equivalence::Equivalent);
        assert_eq!(behavioral_equivalent(&g, &rename(&g, "q"), 1000).unwrap(), Equivalence::Equivalent);
    }

    #[test]
    fn swapped_tools_differ_with_witness() {
        let g = branchy();
        let nodes = g
            .nodes()
            .iter()
            .cloned()
            .map(|mut n| {
                if let NodeBody::FunctionCall { function, .. } = &mut n.body {
                    *function = match function.as_str() {
                        "upper" => "lower".into(),
                        "lower" => "upper".into(),
                        f => f.into(),
                    };
                }
                n
            })
            .collect();
        let h = WorkflowGraph::from_parts(nodes, g.edges().to_vec());
        let Equivalence::Different(w) = behavioral_equivalent(&g, &h, 1000).unwrap() else {
            panic!("expected a difference");
        };
        assert_ne!(replay(&g, &w.actions), replay(&h, &w.actions));
        assert!(w.actions.len() <= g.nodes().len());
    }

    #[test]
    fn tiny_bound_is_undecided() {
        let g = branchy();
        assert_eq!(behavioral_equivalent(&g, &g, 1).unwrap(), Equivalence::Undecided);
    }
}
