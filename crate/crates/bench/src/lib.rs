//! Fixtures shared by the benchmarks.

use flowforge::harness::{desk_path, load_dataset, Instance};
use flowforge::WorkflowGraph;

/// Desk instances that carry a golden graph.
pub fn desk() -> Vec<Instance> {
    load_dataset(&desk_path())
        .expect("desk dataset loads")
        .into_iter()
        .filter(|i| i.golden_graph.is_some())
        .collect()
}

pub fn golden(inst: &Instance) -> &WorkflowGraph {
    inst.golden_graph.as_ref().expect("golden graph")
}

pub const CONDITIONS: [&str; 4] = [
    "x > 3",
    "not (a == b) and d >= 1",
    "score >= 90 or (score > 80 and bonus == true) or name != 'x'",
    "((a + b) * 2 - c / 4) < -(d - 3) * 7 and flag",
];

pub const ACTION_REPLIES: [&str; 3] = [
    r#"{"reasoning": "Call sum_list.", "action": "sum_list", "action_input": {"xs": [1, 2, 3]}}"#,
    "Thought first.\n```json\n{\"reasoning\": \"Done.\", \"action\": \"finish\", \"action_input\": {\"answer\": \"6\"}}\n```\ntrailing",
    r#"{"reasoning": "Add a node.", "action": "add_function_node", "action_input": {"node_id": "n1", "function": "mul", "input_keys": {"a": "x", "b": "y"}, "output_key": "z"}}"#,
];
