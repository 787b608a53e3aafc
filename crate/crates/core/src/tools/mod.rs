//! Tool specifications, the registry and the builtin business suites.

mod builtin;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::value::{canonical_text, Tag, Value};

pub use builtin::{builtin_suite, full_registry, Category, CATEGORIES};

/// Which side of the tool split a tool belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Business,
    GraphConstruction,
    Terminal,
}

impl Partition {
    pub fn short(self) -> &'static str {
        match self {
            Partition::Business => "B",
            Partition::GraphConstruction => "G",
            Partition::Terminal => "T",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeTag {
    Number,
    Text,
    Boolean,
    List,
    /// Flat key/value map; only graph-construction tools take these.
    Object,
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeTag::Number => "number",
            TypeTag::Text => "text",
            TypeTag::Boolean => "boolean",
            TypeTag::List => "list",
            TypeTag::Object => "object",
        })
    }
}

impl TypeTag {
    fn admits(self, tag: Tag) -> bool {
        matches!(
            (self, tag),
            (TypeTag::Number, Tag::Number)
                | (TypeTag::Text, Tag::Text)
                | (TypeTag::Boolean, Tag::Boolean)
                | (TypeTag::List, Tag::List)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeTag,
    pub description: String,
    #[serde(default)]
    pub optional: bool,
}

impl ParamSpec {
    pub fn new(name: &str, ty: TypeTag, description: &str) -> Self {
        ParamSpec {
            name: name.into(),
            ty,
            description: description.into(),
            optional: false,
        }
    }

    pub fn optional(mut self) -> Self {
        self.optional = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub returns: String,
    pub partition: Partition,
}

impl ToolSpec {
    /// Documentation block for prompts.
    pub fn doc_block(&self) -> String {
        let mut s = format!("Name: {}\nDescription: {}\n", self.name, self.description);
        if self.params.is_empty() {
            s.push_str("Parameters: none\n");
        } else {
            s.push_str("Parameters:\n");
            for p in &self.params {
                let opt = if p.optional { ", optional" } else { "" };
                s.push_str(&format!("- {} ({}{opt}): {}\n", p.name, p.ty, p.description));
            }
        }
        s.push_str(&format!("Returns: {}", self.returns));
        s
    }

    /// The "Correct function signature" block shown after a failed call.
    pub fn signature_info(&self) -> String {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        let mut s = format!(
            "**Correct function signature**:\n  {}({})\n  Parameters:\n",
            self.name,
            names.join(", ")
        );
        for p in &self.params {
            s.push_str(&format!("    - {}: {}\n", p.name, p.description));
        }
        s.push_str(&format!("  Description: {}", self.description));
        s
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub type Args = BTreeMap<String, Value>;

/// Deterministic executor. Errors are domain messages.
pub type Executor = Arc<dyn Fn(&Args) -> Result<Value, String> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolErrorKind {
    UnknownTool,
    ArgumentMismatch,
    Domain,
}

/// A failed tool call, carrying what the recovery prompt needs.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{tool}: {message}")]
pub struct ToolError {
    pub tool: String,
    pub kind: ToolErrorKind,
    pub args: String,
    pub message: String,
    pub signature_info: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("business tool `{0}` needs an executor")]
    MissingExecutor(String),
}

#[derive(Clone)]
struct Entry {
    spec: ToolSpec,
    executor: Option<Executor>,
}

/// Ordered tool registry. Cheap to clone; executors are shared.
#[derive(Clone, Default)]
pub struct Registry {
    entries: Vec<Entry>,
    index: BTreeMap<String, usize>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

/// Renders an argument map as `k=v, ...` in the given key order.
pub fn args_string<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    pairs
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ToolSpec, executor: Executor) -> Result<(), RegistryError> {
        self.insert(spec, Some(executor))
    }

    /// Registers a tool that is dispatched by the session rather than by
    /// the registry (graph-construction tools and `finish`).
    pub fn register_spec(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        if spec.partition == Partition::Business {
            return Err(RegistryError::MissingExecutor(spec.name));
        }
        self.insert(spec, None)
    }

    fn insert(&mut self, spec: ToolSpec, executor: Option<Executor>) -> Result<(), RegistryError> {
        if self.index.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateTool(spec.name));
        }
        self.index.insert(spec.name.clone(), self.entries.len());
        self.entries.push(Entry { spec, executor });
        Ok(())
    }

    /// Adds every tool of `other` not already present.
    pub fn merge(&mut self, other: &Registry) {
        for e in &other.entries {
            if !self.index.contains_key(&e.spec.name) {
                self.index.insert(e.spec.name.clone(), self.entries.len());
                self.entries.push(e.clone());
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.index.get(name).map(|&i| &self.entries[i].spec)
    }

    pub fn partition(&self, name: &str) -> Option<Partition> {
        self.spec(name).map(|s| s.partition)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.spec.name.as_str())
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.entries.iter().map(|e| &e.spec)
    }

    pub fn is_business(&self, name: &str) -> bool {
        self.partition(name) == Some(Partition::Business)
    }

    /// Tools whose partition is in `partitions`, registration order kept.
    pub fn restrict(&self, partitions: &[Partition]) -> Registry {
        self.filter(|s| partitions.contains(&s.partition))
    }

    /// Tools whose name is in `names` plus every non-business tool.
    pub fn select(&self, names: &[String]) -> Result<Registry, RegistryError> {
        for n in names {
            if !self.contains(n) {
                return Err(RegistryError::UnknownTool(n.clone()));
            }
        }
        Ok(self.filter(|s| s.partition != Partition::Business || names.contains(&s.name)))
    }

    fn filter(&self, keep: impl Fn(&ToolSpec) -> bool) -> Registry {
        let mut out = Registry::new();
        for e in self.entries.iter().filter(|e| keep(&e.spec)) {
            out.index.insert(e.spec.name.clone(), out.entries.len());
            out.entries.push(e.clone());
        }
        out
    }

    /// Documentation blocks for the tools in `partitions`, separated by
    /// blank lines.
    pub fn render_signatures(&self, partitions: &[Partition]) -> String {
        self.entries
            .iter()
            .filter(|e| partitions.contains(&e.spec.partition))
            .map(|e| e.spec.doc_block())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Runs a business tool. Arguments are checked against the spec first.
    pub fn execute(&self, name: &str, args: &Args) -> Result<Value, ToolError> {
        let echo = args_string(args.iter().map(|(k, v)| (k.as_str(), canonical_text(v))));
        let Some(&i) = self.index.get(name) else {
            return Err(self.unknown_tool(name, echo));
        };
        let entry = &self.entries[i];
        let Some(executor) = &entry.executor else {
            return Err(self.unknown_tool(name, echo));
        };
        let spec = &entry.spec;
        let fail = |kind, message: String| ToolError {
            tool: name.to_string(),
            kind,
            args: echo.clone(),
            message,
            signature_info: spec.signature_info(),
        };
        check_args(spec, args).map_err(|m| fail(ToolErrorKind::ArgumentMismatch, m))?;
        let value = executor(args).map_err(|m| fail(ToolErrorKind::Domain, m))?;
        if let Value::Number(n) = value {
            if !n.is_finite() {
                return Err(fail(ToolErrorKind::Domain, "result is not a finite number".into()));
            }
        }
        Ok(value)
    }

    /// Error for a name that is not callable here.
    pub fn unknown_tool(&self, name: &str, args: String) -> ToolError {
        let available: Vec<&str> = self.names().collect();
        ToolError {
            tool: name.to_string(),
            kind: ToolErrorKind::UnknownTool,
            args,
            message: format!("unknown function `{name}`"),
            signature_info: format!("**Available functions**: {}", available.join(", ")),
        }
    }
}

/// Checks names, arity and type tags of an argument map.
pub fn check_args(spec: &ToolSpec, args: &Args) -> Result<(), String> {
    let missing: Vec<&str> = spec
        .params
        .iter()
        .filter(|p| !p.optional && !args.contains_key(&p.name))
        .map(|p| p.name.as_str())
        .collect();
    let unexpected: Vec<&str> = args
        .keys()
        .filter(|k| spec.param(k).is_none())
        .map(String::as_str)
        .collect();
    let mut problems = Vec::new();
    if !missing.is_empty() {
        problems.push(format!("missing parameter(s): {}", missing.join(", ")));
    }
    if !unexpected.is_empty() {
        problems.push(format!("unexpected parameter(s): {}", unexpected.join(", ")));
    }
    for p in &spec.params {
        if let Some(v) = args.get(&p.name) {
            if !p.ty.admits(v.tag()) {
                problems.push(format!("parameter `{}` expects {}, got {}", p.name, p.ty, v.tag()));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        let expected: Vec<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
        Err(format!("{} (expected parameters: {})", problems.join("; "), expected.join(", ")))
    }
}

/// The terminal `finish` tool.
pub fn finish_spec() -> ToolSpec {
    ToolSpec {
        name: "finish".into(),
        description: "Finish the task and report the final answer".into(),
        params: vec![ParamSpec::new("answer", TypeTag::Text, "The final answer")],
        returns: "Nothing; ends the session".into(),
        partition: Partition::Terminal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adder() -> Registry {
        let mut r = Registry::new();
        r.register(
            ToolSpec {
                name: "add".into(),
                description: "Add two numbers together".into(),
                params: vec![
                    ParamSpec::new("a", TypeTag::Number, "First number to add"),
                    ParamSpec::new("b", TypeTag::Number, "Second number to add"),
                ],
                returns: "The sum".into(),
                partition: Partition::Business,
            },
            Arc::new(|a: &Args| Ok(Value::Number(a["a"].as_number().unwrap() + a["b"].as_number().unwrap()))),
        )
        .unwrap();
        r
    }

    fn args(pairs: &[(&str, Value)]) -> Args {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn execute_and_duplicate() {
        let mut r = adder();
        assert_eq!(r.execute("add", &args(&[("a", 1.0.into()), ("b", 2.0.into())])), Ok(Value::Number(3.0)));
        let spec = r.spec("add").unwrap().clone();
        assert_eq!(
            r.register(spec, Arc::new(|_: &Args| Ok(Value::Number(0.0)))),
            Err(RegistryError::DuplicateTool("add".into()))
        );
    }

    #[test]
    fn wrong_names_yield_signature() {
        let r = adder();
        let err = r.execute("add", &args(&[("x", 1.0.into()), ("y", 2.0.into())])).unwrap_err();
        assert_eq!(err.kind, ToolErrorKind::ArgumentMismatch);
        assert!(err.message.contains("missing parameter(s): a, b"));
        assert_eq!(
            err.signature_info,
            "**Correct function signature**:\n  add(a, b)\n  Parameters:\n    - a: First number to add\n    - b: Second number to add\n  Description: Add two numbers together"
        );
        assert_eq!(err.args, "x=1, y=2");
    }

    #[test]
    fn unknown_tool_lists_available() {
        let r = adder();
        let err = r.execute("mul", &Args::new()).unwrap_err();
        assert_eq!(err.kind, ToolErrorKind::UnknownTool);
        assert!(err.signature_info.contains("add"));
    }

    #[test]
    fn doc_block_layout() {
        let r = adder();
        assert_eq!(
            r.render_signatures(&[Partition::Business]),
            "Name: add\nDescription: Add two numbers together\nParameters:\n- a (number): First number to add\n- b (number): Second number to add\nReturns: The sum"
        );
        assert_eq!(r.render_signatures(&[Partition::GraphConstruction]), "");
        assert_eq!(Registry::new().render_signatures(&[Partition::Business]), "");
    }

    #[test]
    fn register_spec_rejects_business() {
        let mut r = Registry::new();
        let mut spec = finish_spec();
        spec.partition = Partition::Business;
        assert!(matches!(r.register_spec(spec), Err(RegistryError::MissingExecutor(_))));
        r.register_spec(finish_spec()).unwrap();
        assert_eq!(r.partition("finish"), Some(Partition::Terminal));
    }
}
