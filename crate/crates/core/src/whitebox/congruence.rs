use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{NodeKind, WorkflowGraph};

use super::canon::{canonicalize, node_signature};
use super::WhiteboxError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongruenceScore {
    pub node_overlap: f64,
    pub edge_overlap: f64,
    pub branch_topology_match: f64,
    pub aggregate: f64,
}

type Bag = BTreeMap<String, usize>;

fn bag(items: impl IntoIterator<Item = String>) -> Bag {
    let mut b = Bag::new();
    for i in items {
        *b.entry(i).or_insert(0) += 1;
    }
    b
}

/// Multiset Jaccard; two empty bags count as identical.
pub fn jaccard(a: &Bag, b: &Bag) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for k in a.keys().chain(b.keys().filter(|k| !a.contains_key(*k))) {
        let (x, y) = (a.get(k).copied().unwrap_or(0), b.get(k).copied().unwrap_or(0));
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

struct Bags {
    nodes: Bag,
    edges: Bag,
    branches: Bag,
}

fn bags(g: &WorkflowGraph) -> Bags {
    let sig: HashMap<&str, String> = g.nodes().iter().map(|n| (n.id.as_str(), node_signature(n))).collect();
    let nodes = bag(sig.values().cloned());
    let edges = bag(g.edges().iter().map(|e| {
        format!("{} -[{}]-> {}", sig[e.from.as_str()], e.label.as_deref().unwrap_or(""), sig[e.to.as_str()])
    }));
    let branches = bag(g.nodes().iter().filter(|n| n.kind() == NodeKind::Condition).map(|n| {
        let mut labels: Vec<&str> = g.out_edges(&n.id).map(|e| e.label.as_deref().unwrap_or("")).collect();
        labels.sort();
        format!("{} out={} [{}]", sig[n.id.as_str()], labels.len(), labels.join(","))
    }));
    Bags { nodes, edges, branches }
}

pub fn structural_congruence(g1: &WorkflowGraph, g2: &WorkflowGraph) -> Result<CongruenceScore, WhiteboxError> {
    let a = bags(canonicalize(g1)?.graph());
    let b = bags(canonicalize(g2)?.graph());
    let node_overlap = jaccard(&a.nodes, &b.nodes);
    let edge_overlap = jaccard(&a.edges, &b.edges);
    let branch_topology_match = jaccard(&a.branches, &b.branches);
    Ok(CongruenceScore {
        node_overlap,
        edge_overlap,
        branch_topology_match,
        aggregate: (node_overlap + edge_overlap + branch_topology_match) / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{END_ID, START_ID};
    use crate::value::Value;

    fn linear(extra: bool) -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        g.add_start_node([("xs".to_string(), Value::List(vec![]))].into()).unwrap();
        g.add_function_node("s", "sum_list", [("xs".to_string(), "xs".to_string())].into(), "total").unwrap();
        g.add_end_node(Some("total")).unwrap();
        g.add_edge(START_ID, "s", None).unwrap();
        if extra {
            g.add_function_node("m", "max_of", [("xs".to_string(), "xs".to_string())].into(), "top").unwrap();
            g.add_edge("s", "m", None).unwrap();
            g.add_edge("m", END_ID, None).unwrap();
        } else {
            g.add_edge("s", END_ID, None).unwrap();
        }
        g
    }

    #[test]
    fn self_congruence_is_one() {
        let s = structural_congruence(&linear(false), &linear(false)).unwrap();
        assert_eq!(s.aggregate, 1.0);
    }

    #[test]
    fn spurious_node() {
        let s = structural_congruence(&linear(false), &linear(true)).unwrap();
        assert_eq!(s.node_overlap, 0.75);
        assert_eq!(s.edge_overlap, 1.0 / 4.0);
        assert_eq!(s.branch_topology_match, 1.0);
    }

    #[test]
    fn jaccard_counts_multiplicity() {
        let a = bag(["x".to_string(), "x".to_string()]);
        let b = bag(["x".to_string(), "y".to_string()]);
        assert_eq!(jaccard(&a, &b), 1.0 / 3.0);
        assert_eq!(jaccard(&Bag::new(), &Bag::new()), 1.0);
    }
}
