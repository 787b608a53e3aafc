use std::collections::BTreeMap;

use serde_json::{Map, Value as Json};

use super::WorkflowGraph;
use crate::tools::{ParamSpec, Partition, ToolError, ToolErrorKind, ToolSpec, TypeTag};
use crate::value::{canonical_json_text, Value};

pub const GRAPH_TOOL_NAMES: [&str; 5] = [
    "add_start_node",
    "add_function_node",
    "add_condition_node",
    "add_edge",
    "add_end_node",
];

fn spec(name: &str, description: &str, params: Vec<ParamSpec>, returns: &str) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: description.into(),
        params,
        returns: returns.into(),
        partition: Partition::GraphConstruction,
    }
}

/// Specs of the five graph-construction tools.
pub fn graph_tool_specs() -> Vec<ToolSpec> {
    use TypeTag::{Object, Text};
    vec![
        spec(
            "add_start_node",
            "Create the start node holding the workflow's input data",
            vec![ParamSpec::new("initial_data", Object, "Map from data key to initial value")],
            "The start node id (__start__)",
        ),
        spec(
            "add_function_node",
            "Add a node that calls a business function",
            vec![
                ParamSpec::new("node_id", Text, "Unique id for the node"),
                ParamSpec::new("function", Text, "Name of the business function to call"),
                ParamSpec::new("input_keys", Object, "Map from function parameter name to data key"),
                ParamSpec::new("output_key", Text, "Data key that receives the result"),
            ],
            "The node id",
        ),
        spec(
            "add_condition_node",
            "Add a branching node that evaluates a boolean expression over data keys",
            vec![
                ParamSpec::new("node_id", Text, "Unique id for the node"),
                ParamSpec::new("condition_expr", Text, "Boolean expression, e.g. abs_diff < 0.001"),
            ],
            "The node id",
        ),
        spec(
            "add_edge",
            "Connect two nodes; edges leaving a condition node carry label true or false",
            vec![
                ParamSpec::new("from_node", Text, "Source node id"),
                ParamSpec::new("to_node", Text, "Target node id"),
                ParamSpec::new("label", Text, "Branch label (true or false), only for condition nodes").optional(),
            ],
            "Confirmation of the new edge",
        ),
        spec(
            "add_end_node",
            "Create the end node; the workflow answer is the value stored under result_key",
            vec![ParamSpec::new("result_key", Text, "Data key holding the final answer; defaults to the last written key").optional()],
            "The end node id (__end__)",
        ),
    ]
}

fn echo(args: &Map<String, Json>) -> String {
    args.iter()
        .map(|(k, v)| format!("{k}={}", canonical_json_text(v)))
        .collect::<Vec<_>>()
        .join(", ")
}

struct Call<'a> {
    spec: ToolSpec,
    args: &'a Map<String, Json>,
}

impl Call<'_> {
    fn fail(&self, kind: ToolErrorKind, message: String) -> ToolError {
        ToolError {
            tool: self.spec.name.clone(),
            kind,
            args: echo(self.args),
            message,
            signature_info: self.spec.signature_info(),
        }
    }

    fn check_names(&self) -> Result<(), ToolError> {
        let missing: Vec<&str> = self
            .spec
            .params
            .iter()
            .filter(|p| !p.optional && !self.args.contains_key(&p.name))
            .map(|p| p.name.as_str())
            .collect();
        let extra: Vec<&str> = self
            .args
            .keys()
            .filter(|k| self.spec.param(k).is_none())
            .map(String::as_str)
            .collect();
        let mut problems = Vec::new();
        if !missing.is_empty() {
            problems.push(format!("missing parameter(s): {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            problems.push(format!("unexpected parameter(s): {}", extra.join(", ")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(self.fail(ToolErrorKind::ArgumentMismatch, problems.join("; ")))
        }
    }

    fn text(&self, key: &str) -> Result<String, ToolError> {
        match self.args.get(key) {
            Some(Json::String(s)) => Ok(s.clone()),
            Some(other) => Err(self.fail(ToolErrorKind::ArgumentMismatch, format!("parameter `{key}` expects text, got {other}"))),
            None => Err(self.fail(ToolErrorKind::ArgumentMismatch, format!("missing parameter(s): {key}"))),
        }
    }

    fn optional_text(&self, key: &str) -> Result<Option<String>, ToolError> {
        match self.args.get(key) {
            None | Some(Json::Null) => Ok(None),
            Some(Json::Bool(b)) => Ok(Some(b.to_string())),
            Some(_) => self.text(key).map(Some),
        }
    }

    fn object(&self, key: &str) -> Result<&Map<String, Json>, ToolError> {
        match self.args.get(key) {
            Some(Json::Object(m)) => Ok(m),
            Some(other) => Err(self.fail(ToolErrorKind::ArgumentMismatch, format!("parameter `{key}` expects an object, got {other}"))),
            None => Err(self.fail(ToolErrorKind::ArgumentMismatch, format!("missing parameter(s): {key}"))),
        }
    }
}

/// Applies one graph-construction call to `graph`. Returns the
/// observation text on success.
pub fn apply_graph_tool(graph: &mut WorkflowGraph, name: &str, args: &Map<String, Json>) -> Result<String, ToolError> {
    let Some(spec) = graph_tool_specs().into_iter().find(|s| s.name == name) else {
        return Err(ToolError {
            tool: name.to_string(),
            kind: ToolErrorKind::UnknownTool,
            args: echo(args),
            message: format!("unknown graph tool `{name}`"),
            signature_info: format!("**Available functions**: {}", GRAPH_TOOL_NAMES.join(", ")),
        });
    };
    let call = Call { spec, args };
    call.check_names()?;
    let domain = |e: super::GraphError| call.fail(ToolErrorKind::Domain, e.to_string());
    match name {
        "add_start_node" => {
            let mut data = BTreeMap::new();
            for (k, v) in call.object("initial_data")? {
                let value = Value::from_json(v)
                    .map_err(|e| call.fail(ToolErrorKind::ArgumentMismatch, format!("initial_data.{k}: {e}")))?;
                data.insert(k.clone(), value);
            }
            let keys: Vec<String> = data.keys().cloned().collect();
            let id = graph.add_start_node(data).map_err(domain)?;
            Ok(format!("Added start node {id} with data keys [{}]", keys.join(", ")))
        }
        "add_function_node" => {
            let node_id = call.text("node_id")?;
            let function = call.text("function")?;
            let output_key = call.text("output_key")?;
            let mut input_keys = BTreeMap::new();
            for (p, k) in call.object("input_keys")? {
                let Json::String(k) = k else {
                    return Err(call.fail(ToolErrorKind::ArgumentMismatch, format!("input_keys.{p} must name a data key (text)")));
                };
                input_keys.insert(p.clone(), k.clone());
            }
            let id = graph.add_function_node(&node_id, &function, input_keys, &output_key).map_err(domain)?;
            Ok(format!("Added function node {id}"))
        }
        "add_condition_node" => {
            let node_id = call.text("node_id")?;
            let expr = call.text("condition_expr")?;
            let id = graph.add_condition_node(&node_id, &expr).map_err(domain)?;
            Ok(format!("Added condition node {id}"))
        }
        "add_edge" => {
            let from = call.text("from_node")?;
            let to = call.text("to_node")?;
            let label = call.optional_text("label")?;
            graph.add_edge(&from, &to, label.as_deref()).map_err(domain)?;
            Ok(match label {
                Some(l) => format!("Added edge {from} -> {to} [{l}]"),
                None => format!("Added edge {from} -> {to}"),
            })
        }
        "add_end_node" => {
            let key = call.optional_text("result_key")?;
            let id = graph.add_end_node(key.as_deref()).map_err(domain)?;
            Ok(format!("Added end node {id}"))
        }
        _ => unreachable!("spec lookup guards the name"),
    }
}
