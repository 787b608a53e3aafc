use super::{NodeBody, NodeKind, WorkflowGraph};

fn node_line(body: &NodeBody, id: &str, kind: NodeKind) -> String {
    match body {
        NodeBody::FunctionCall {
            function,
            input_keys,
            output_key,
        } => {
            let args: Vec<String> = input_keys.iter().map(|(p, k)| format!("{p}={k}")).collect();
            format!("  - {id} (BUSINESS): {function}({}) -> {output_key}", args.join(", "))
        }
        NodeBody::Condition { condition_expr } => format!("  - {id} (CONDITION): {condition_expr}"),
        _ => format!("  - {id} ({})", kind.display_label()),
    }
}

/// Structural gaps a builder still has to close.
pub fn missing_elements(graph: &WorkflowGraph) -> Vec<String> {
    let mut out = Vec::new();
    if graph.start().is_none() {
        out.push("MissingStart: no start node (use add_start_node)".to_string());
    }
    if graph.end().is_none() {
        out.push("MissingEnd: no end node (use add_end_node)".to_string());
    }
    for n in graph.nodes() {
        let kind = n.kind();
        if kind != NodeKind::End && graph.out_edges(&n.id).next().is_none() {
            out.push(format!("{} has no outgoing edges (Every node must have edges)", n.id));
        }
        if kind != NodeKind::Start && graph.in_edges(&n.id).next().is_none() {
            out.push(format!("{} has no incoming edges (Every node must have edges)", n.id));
        }
        if kind == NodeKind::Condition {
            for label in ["true", "false"] {
                if !graph.out_edges(&n.id).any(|e| e.label.as_deref() == Some(label)) {
                    out.push(format!("{} has no `{label}` branch edge", n.id));
                }
            }
        }
    }
    out
}

/// Current graph state as shown to the builder agent.
pub fn render_state(graph: &WorkflowGraph) -> String {
    let mut s = format!("Nodes ({}):\n", graph.nodes().len());
    for n in graph.nodes() {
        s.push_str(&node_line(&n.body, &n.id, n.kind()));
        s.push('\n');
    }
    s.push_str(&format!("\nEdges ({}):\n", graph.edges().len()));
    for e in graph.edges() {
        match &e.label {
            Some(l) => s.push_str(&format!("  - {} -> {} [{l}]\n", e.from, e.to)),
            None => s.push_str(&format!("  - {} -> {}\n", e.from, e.to)),
        }
    }
    let missing = missing_elements(graph);
    if missing.is_empty() {
        s.push_str("\nMissing Elements: None");
    } else {
        s.push_str("\nMissing Elements:");
        for m in missing {
            s.push_str(&format!("\n  - {m}"));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::{END_ID, START_ID};
    use super::*;
    use crate::value::Value;

    #[test]
    fn template_block() {
        let mut g = WorkflowGraph::new();
        g.add_start_node([("num1".to_string(), Value::Number(1.0)), ("num2".to_string(), Value::Number(2.0))].into())
            .unwrap();
        g.add_function_node(
            "step1_add",
            "add",
            [("a".to_string(), "num1".to_string()), ("b".to_string(), "num2".to_string())].into(),
            "sum_result",
        )
        .unwrap();
        g.add_end_node(None).unwrap();
        g.add_edge(START_ID, "step1_add", None).unwrap();
        g.add_edge("step1_add", END_ID, None).unwrap();
        assert_eq!(
            render_state(&g),
            "Nodes (3):\n  - __start__ (START)\n  - step1_add (BUSINESS): add(a=num1, b=num2) -> sum_result\n  - __end__ (END)\n\nEdges (2):\n  - __start__ -> step1_add\n  - step1_add -> __end__\n\nMissing Elements: None"
        );
    }

    #[test]
    fn empty_graph() {
        let s = render_state(&WorkflowGraph::new());
        assert!(s.starts_with("Nodes (0):"));
        assert!(s.contains("MissingStart"));
    }

    #[test]
    fn edgeless_node_is_named() {
        let mut g = WorkflowGraph::new();
        g.add_condition_node("lonely", "x > 1").unwrap();
        let s = render_state(&g);
        assert!(s.contains("lonely has no outgoing edges (Every node must have edges)"));
    }
}
