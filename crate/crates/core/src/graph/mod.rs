//! Workflow graphs: model, builder operations, JSON document form.

mod builder_tools;
mod render;
mod validate;

use std::collections::BTreeMap;

use serde_json::{Map, Value as Json};

use crate::value::Value;

pub use builder_tools::{apply_graph_tool, graph_tool_specs, GRAPH_TOOL_NAMES};
pub use render::{missing_elements, render_state};
pub use validate::{validate, ValidationReport, Violation, ViolationCode};

pub const START_ID: &str = "__start__";
pub const END_ID: &str = "__end__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Start,
    End,
    FunctionCall,
    Condition,
    Llm,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::End => "end",
            NodeKind::FunctionCall => "function_call",
            NodeKind::Condition => "condition",
            NodeKind::Llm => "llm",
        }
    }

    fn parse(s: &str) -> Option<NodeKind> {
        Some(match s {
            "start" => NodeKind::Start,
            "end" => NodeKind::End,
            "function_call" => NodeKind::FunctionCall,
            "condition" => NodeKind::Condition,
            "llm" => NodeKind::Llm,
            _ => return None,
        })
    }

    /// Label used in the state text.
    pub fn display_label(self) -> &'static str {
        match self {
            NodeKind::Start => "START",
            NodeKind::End => "END",
            NodeKind::FunctionCall => "BUSINESS",
            NodeKind::Condition => "CONDITION",
            NodeKind::Llm => "LLM",
        }
    }
}

/// Kind-specific node content.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeBody {
    Start {
        initial_data: BTreeMap<String, Value>,
    },
    /// `result_key: None` answers with the last written output key.
    End {
        result_key: Option<String>,
    },
    FunctionCall {
        function: String,
        input_keys: BTreeMap<String, String>,
        output_key: String,
    },
    Condition {
        condition_expr: String,
    },
    Llm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub body: NodeBody,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        match self.body {
            NodeBody::Start { .. } => NodeKind::Start,
            NodeBody::End { .. } => NodeKind::End,
            NodeBody::FunctionCall { .. } => NodeKind::FunctionCall,
            NodeBody::Condition { .. } => NodeKind::Condition,
            NodeBody::Llm => NodeKind::Llm,
        }
    }

    pub fn function(&self) -> Option<&str> {
        match &self.body {
            NodeBody::FunctionCall { function, .. } => Some(function),
            _ => None,
        }
    }

    pub fn condition_expr(&self) -> Option<&str> {
        match &self.body {
            NodeBody::Condition { condition_expr } => Some(condition_expr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("a start node already exists")]
    DuplicateStart,
    #[error("an end node already exists")]
    DuplicateEnd,
    #[error("node id `{0}` is already used")]
    DuplicateId(String),
    #[error("node id `{0}` is reserved")]
    ReservedId(String),
    #[error("node id must not be empty")]
    EmptyId,
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge {from} -> {to} already exists")]
    DuplicateEdge { from: String, to: String, label: Option<String> },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("schema error at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

/// A workflow graph. Content only grows through the builder operations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkflowGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl serde::Serialize for WorkflowGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for WorkflowGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let json = Json::deserialize(d)?;
        WorkflowGraph::from_json(&json).map_err(serde::de::Error::custom)
    }
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn start(&self) -> Option<&Node> {
        self.nodes.iter().find(|n| n.kind() == NodeKind::Start)
    }

    pub fn end(&self) -> Option<&Node> {
        self.nodes.iter().find(|n| n.kind() == NodeKind::End)
    }

    pub fn out_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn in_edges<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    fn check_new_id(&self, id: &str) -> Result<(), GraphError> {
        if id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        if self.node(id).is_some() {
            return Err(GraphError::DuplicateId(id.to_string()));
        }
        if id == START_ID || id == END_ID {
            return Err(GraphError::ReservedId(id.to_string()));
        }
        Ok(())
    }

    pub fn add_start_node(&mut self, initial_data: BTreeMap<String, Value>) -> Result<String, GraphError> {
        if self.start().is_some() {
            return Err(GraphError::DuplicateStart);
        }
        if self.node(START_ID).is_some() {
            return Err(GraphError::DuplicateId(START_ID.into()));
        }
        self.nodes.push(Node {
            id: START_ID.into(),
            body: NodeBody::Start { initial_data },
        });
        Ok(START_ID.into())
    }

    pub fn add_function_node(
        &mut self,
        id: &str,
        function: &str,
        input_keys: BTreeMap<String, String>,
        output_key: &str,
    ) -> Result<String, GraphError> {
        self.check_new_id(id)?;
        self.nodes.push(Node {
            id: id.into(),
            body: NodeBody::FunctionCall {
                function: function.into(),
                input_keys,
                output_key: output_key.into(),
            },
        });
        Ok(id.into())
    }

    pub fn add_condition_node(&mut self, id: &str, condition_expr: &str) -> Result<String, GraphError> {
        self.check_new_id(id)?;
        self.nodes.push(Node {
            id: id.into(),
            body: NodeBody::Condition {
                condition_expr: condition_expr.into(),
            },
        });
        Ok(id.into())
    }

    pub fn add_llm_node(&mut self, id: &str) -> Result<String, GraphError> {
        self.check_new_id(id)?;
        self.nodes.push(Node {
            id: id.into(),
            body: NodeBody::Llm,
        });
        Ok(id.into())
    }

    pub fn add_end_node(&mut self, result_key: Option<&str>) -> Result<String, GraphError> {
        if self.end().is_some() {
            return Err(GraphError::DuplicateEnd);
        }
        if self.node(END_ID).is_some() {
            return Err(GraphError::DuplicateId(END_ID.into()));
        }
        self.nodes.push(Node {
            id: END_ID.into(),
            body: NodeBody::End {
                result_key: result_key.map(str::to_string),
            },
        });
        Ok(END_ID.into())
    }

    /// Appends an edge and returns its index.
    pub fn add_edge(&mut self, from: &str, to: &str, label: Option<&str>) -> Result<usize, GraphError> {
        for id in [from, to] {
            if self.node(id).is_none() {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
        }
        let edge = Edge {
            from: from.into(),
            to: to.into(),
            label: label.map(str::to_string),
        };
        if self.edges.contains(&edge) {
            return Err(GraphError::DuplicateEdge {
                from: edge.from,
                to: edge.to,
                label: edge.label,
            });
        }
        self.edges.push(edge);
        Ok(self.edges.len() - 1)
    }

    /// Builds a graph from raw parts without any checks; for diagnostics
    /// and fixtures that need structurally broken graphs.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        WorkflowGraph { nodes, edges }
    }

    pub fn to_json(&self) -> Json {
        let nodes: Vec<Json> = self.nodes.iter().map(node_to_json).collect();
        let edges: Vec<Json> = self
            .edges
            .iter()
            .map(|e| {
                let mut m = Map::new();
                m.insert("from".into(), Json::String(e.from.clone()));
                m.insert("to".into(), Json::String(e.to.clone()));
                if let Some(l) = &e.label {
                    m.insert("label".into(), Json::String(l.clone()));
                }
                Json::Object(m)
            })
            .collect();
        let mut top = Map::new();
        top.insert("nodes".into(), Json::Array(nodes));
        top.insert("edges".into(), Json::Array(edges));
        Json::Object(top)
    }

    /// Pretty JSON with sorted keys.
    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("graph documents always serialize")
    }

    pub fn deserialize(text: &str) -> Result<Self, SchemaError> {
        let json: Json = serde_json::from_str(text).map_err(|e| SchemaError {
            path: "$".into(),
            message: e.to_string(),
        })?;
        Self::from_json(&json)
    }

    pub fn from_json(json: &Json) -> Result<Self, SchemaError> {
        let top = json.as_object().ok_or_else(|| schema("$", "expected an object"))?;
        check_fields(top, "$", &["nodes", "edges"], &["nodes", "edges"])?;
        let nodes = top["nodes"]
            .as_array()
            .ok_or_else(|| schema("$.nodes", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, n)| node_from_json(n, &format!("$.nodes[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let edges = top["edges"]
            .as_array()
            .ok_or_else(|| schema("$.edges", "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let path = format!("$.edges[{i}]");
                let m = e.as_object().ok_or_else(|| schema(&path, "expected an object"))?;
                check_fields(m, &path, &["from", "to"], &["from", "to", "label"])?;
                Ok(Edge {
                    from: string_field(m, &path, "from")?,
                    to: string_field(m, &path, "to")?,
                    label: optional_string(m, &path, "label")?,
                })
            })
            .collect::<Result<Vec<_>, SchemaError>>()?;
        Ok(WorkflowGraph { nodes, edges })
    }
}

fn schema(path: &str, message: &str) -> SchemaError {
    SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

fn require(m: &Map<String, Json>, path: &str, required: &[&str]) -> Result<(), SchemaError> {
    for r in required {
        if !m.contains_key(*r) {
            return Err(schema(&format!("{path}.{r}"), "missing field"));
        }
    }
    Ok(())
}

fn check_fields(m: &Map<String, Json>, path: &str, required: &[&str], allowed: &[&str]) -> Result<(), SchemaError> {
    require(m, path, required)?;
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(schema(&format!("{path}.{k}"), "unexpected field"));
        }
    }
    Ok(())
}

fn string_field(m: &Map<String, Json>, path: &str, key: &str) -> Result<String, SchemaError> {
    m[key]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
}

fn optional_string(m: &Map<String, Json>, path: &str, key: &str) -> Result<Option<String>, SchemaError> {
    match m.get(key) {
        None => Ok(None),
        Some(_) => string_field(m, path, key).map(Some),
    }
}

fn node_to_json(n: &Node) -> Json {
    let mut m = Map::new();
    m.insert("id".into(), Json::String(n.id.clone()));
    m.insert("kind".into(), Json::String(n.kind().as_str().into()));
    match &n.body {
        NodeBody::Start { initial_data } => {
            let data: Map<String, Json> = initial_data.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
            m.insert("initial_data".into(), Json::Object(data));
        }
        NodeBody::End { result_key } => {
            if let Some(k) = result_key {
                m.insert("result_key".into(), Json::String(k.clone()));
            }
        }
        NodeBody::FunctionCall {
            function,
            input_keys,
            output_key,
        } => {
            m.insert("function".into(), Json::String(function.clone()));
            let keys: Map<String, Json> = input_keys.iter().map(|(k, v)| (k.clone(), Json::String(v.clone()))).collect();
            m.insert("input_keys".into(), Json::Object(keys));
            m.insert("output_key".into(), Json::String(output_key.clone()));
        }
        NodeBody::Condition { condition_expr } => {
            m.insert("condition_expr".into(), Json::String(condition_expr.clone()));
        }
        NodeBody::Llm => {}
    }
    Json::Object(m)
}

fn node_from_json(json: &Json, path: &str) -> Result<Node, SchemaError> {
    let m = json.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    check_fields(m, path, &["id", "kind"], &["id", "kind", "function", "input_keys", "output_key", "condition_expr", "initial_data", "result_key"])?;
    let id = string_field(m, path, "id")?;
    let kind_text = string_field(m, path, "kind")?;
    let kind = NodeKind::parse(&kind_text).ok_or_else(|| schema(&format!("{path}.kind"), &format!("unknown node kind `{kind_text}`")))?;
    let allowed: &[&str] = match kind {
        NodeKind::Start => &["initial_data"],
        NodeKind::End => &["result_key"],
        NodeKind::FunctionCall => &["function", "input_keys", "output_key"],
        NodeKind::Condition => &["condition_expr"],
        NodeKind::Llm => &[],
    };
    for k in m.keys() {
        if k != "id" && k != "kind" && !allowed.contains(&k.as_str()) {
            return Err(schema(&format!("{path}.{k}"), &format!("field not allowed on a {kind_text} node")));
        }
    }
    let body = match kind {
        NodeKind::Start => {
            let mut initial_data = BTreeMap::new();
            if let Some(d) = m.get("initial_data") {
                let obj = d.as_object().ok_or_else(|| schema(&format!("{path}.initial_data"), "expected an object"))?;
                for (k, v) in obj {
                    let value = Value::from_json(v).map_err(|e| schema(&format!("{path}.initial_data.{k}"), &e.to_string()))?;
                    initial_data.insert(k.clone(), value);
                }
            }
            NodeBody::Start { initial_data }
        }
        NodeKind::End => NodeBody::End {
            result_key: optional_string(m, path, "result_key")?,
        },
        NodeKind::FunctionCall => {
            require(m, path, &["function", "input_keys", "output_key"])?;
            let keys_path = format!("{path}.input_keys");
            let obj = m["input_keys"].as_object().ok_or_else(|| schema(&keys_path, "expected an object"))?;
            let mut input_keys = BTreeMap::new();
            for (k, v) in obj {
                let s = v.as_str().ok_or_else(|| schema(&format!("{keys_path}.{k}"), "expected a string"))?;
                input_keys.insert(k.clone(), s.to_string());
            }
            NodeBody::FunctionCall {
                function: string_field(m, path, "function")?,
                input_keys,
                output_key: string_field(m, path, "output_key")?,
            }
        }
        NodeKind::Condition => {
            require(m, path, &["condition_expr"])?;
            NodeBody::Condition {
                condition_expr: string_field(m, path, "condition_expr")?,
            }
        }
        NodeKind::Llm => NodeBody::Llm,
    };
    Ok(Node { id, body })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn linear_add() -> WorkflowGraph {
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
        g.add_end_node(Some("sum_result")).unwrap();
        g.add_edge(START_ID, "step1_add", None).unwrap();
        g.add_edge("step1_add", END_ID, None).unwrap();
        g
    }

    #[test]
    fn builder_errors() {
        let mut g = linear_add();
        assert_eq!(g.add_start_node(BTreeMap::new()), Err(GraphError::DuplicateStart));
        assert_eq!(g.add_end_node(None), Err(GraphError::DuplicateEnd));
        assert_eq!(
            g.add_function_node("step1_add", "add", BTreeMap::new(), "x"),
            Err(GraphError::DuplicateId("step1_add".into()))
        );
        assert_eq!(g.add_condition_node("c", "i >= 10"), Ok("c".into()));
        assert_eq!(g.add_condition_node("c", "i >= 10"), Err(GraphError::DuplicateId("c".into())));
        assert_eq!(g.add_edge("x", "y", None), Err(GraphError::UnknownNode("x".into())));
        assert!(matches!(g.add_edge(START_ID, "step1_add", None), Err(GraphError::DuplicateEdge { .. })));
        assert_eq!(g.add_edge("c", "step1_add", Some("true")), Ok(2));
    }

    #[test]
    fn empty_start_and_sentinel_end() {
        let mut g = WorkflowGraph::new();
        assert_eq!(g.add_start_node(BTreeMap::new()), Ok(START_ID.into()));
        assert_eq!(g.add_end_node(None), Ok(END_ID.into()));
        assert_eq!(g.end().unwrap().body, NodeBody::End { result_key: None });
    }

    #[test]
    fn round_trip() {
        let g = linear_add();
        let text = g.serialize();
        let back = WorkflowGraph::deserialize(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.serialize(), text);
        assert!(text.contains("\"kind\": \"function_call\""));
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = WorkflowGraph::deserialize(r#"{"edges": []}"#).unwrap_err();
        assert_eq!(err.path, "$.nodes");
        let err = WorkflowGraph::deserialize(r#"{"nodes": [{"id": "a", "kind": "warp"}], "edges": []}"#).unwrap_err();
        assert_eq!(err.path, "$.nodes[0].kind");
        let err = WorkflowGraph::deserialize(r#"{"nodes": [{"id": "a", "kind": "condition"}], "edges": []}"#).unwrap_err();
        assert_eq!(err.path, "$.nodes[0].condition_expr");
        let err = WorkflowGraph::deserialize(
            r#"{"nodes": [{"id": "a", "kind": "start", "initial_data": {"x": null}}], "edges": []}"#,
        )
        .unwrap_err();
        assert_eq!(err.path, "$.nodes[0].initial_data.x");
        let err = WorkflowGraph::deserialize(r#"{"nodes": [], "edges": [{"from": "a"}]}"#).unwrap_err();
        assert_eq!(err.path, "$.edges[0].to");
    }
}
