use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::agent::Task;
use crate::eval::TestCase;
use crate::graph::{validate, WorkflowGraph};
use crate::tools::{full_registry, Category, Registry};
use crate::value::Value;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// Allowed toolset sizes.
    pub fn band(self) -> (usize, usize) {
        match self {
            Difficulty::Easy => (7, 9),
            Difficulty::Medium => (18, 20),
            Difficulty::Hard => (28, 30),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub category: Category,
    pub difficulty: Difficulty,
    pub description: String,
    pub toolset: Vec<String>,
    pub examples: Vec<TestCase>,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_graph: Option<WorkflowGraph>,
}

impl Instance {
    /// Task text for one concrete input.
    pub fn query(&self, input: &BTreeMap<String, Value>) -> String {
        let data = serde_json::to_string(input).expect("values always serialize");
        format!("{}\n\nInput: {data}", self.description)
    }

    /// Task built from the `k`-th example (wrapping around).
    pub fn task(&self, k: usize) -> Task {
        let query = match self.examples.get(k % self.examples.len().max(1)) {
            Some(ex) => self.query(&ex.input),
            None => self.description.clone(),
        };
        Task { id: self.id.clone(), query }
    }

    /// The instance's business tools plus graph tools and `finish`.
    pub fn registry(&self) -> Registry {
        full_registry().select(&self.toolset).expect("toolsets are checked on load")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("schema error in {path} at `{field}`: {message}")]
    Schema { path: PathBuf, field: String, message: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateInstanceId(String),
}

fn schema(path: &Path, field: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn read_json(path: &Path) -> Result<Json, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| schema(path, "$", e.to_string()))
}

const REQUIRED: [&str; 7] = ["id", "category", "difficulty", "description", "toolset", "examples", "tests"];

/// Parses and checks one instance document.
pub fn parse_instance(path: &Path, json: &Json) -> Result<Instance, DatasetError> {
    let obj = json.as_object().ok_or_else(|| schema(path, "$", "expected an object"))?;
    for field in REQUIRED {
        if !obj.contains_key(field) {
            return Err(schema(path, field, "missing field"));
        }
    }
    for (field, value) in obj {
        if let Err(e) = check_field(field, value) {
            return Err(schema(path, field, e));
        }
    }
    let inst: Instance = serde_json::from_value(json.clone()).map_err(|e| schema(path, "$", e.to_string()))?;
    if inst.id.trim().is_empty() {
        return Err(schema(path, "id", "empty id"));
    }
    if inst.tests.is_empty() {
        return Err(schema(path, "tests", "no tests"));
    }
    let registry = full_registry();
    let mut seen = HashSet::new();
    for name in &inst.toolset {
        if !registry.is_business(name) {
            return Err(schema(path, "toolset", format!("unknown business tool `{name}`")));
        }
        if !seen.insert(name) {
            return Err(schema(path, "toolset", format!("`{name}` listed twice")));
        }
    }
    let (lo, hi) = inst.difficulty.band();
    if !(lo..=hi).contains(&inst.toolset.len()) {
        return Err(schema(
            path,
            "toolset",
            format!("{} tools is outside the {} band {lo}-{hi}", inst.toolset.len(), inst.difficulty),
        ));
    }
    if let Some(g) = &inst.golden_graph {
        let report = validate(g, |name| inst.toolset.iter().any(|t| t == name));
        if !report.valid {
            return Err(schema(path, "golden_graph", format!("invalid graph: {:?}", report.codes())));
        }
    }
    Ok(inst)
}

fn check_field(field: &str, value: &Json) -> Result<(), String> {
    let ok = match field {
        "id" | "description" => value.is_string(),
        "category" | "difficulty" => value.is_string(),
        "toolset" | "examples" | "tests" => value.is_array(),
        "golden_graph" => value.is_object() || value.is_null(),
        _ => return Err("unknown field".into()),
    };
    if ok {
        Ok(())
    } else {
        Err("wrong type".into())
    }
}

/// Loads every instance listed in the index of a dataset directory.
pub fn load_dataset(path: &Path) -> Result<Vec<Instance>, DatasetError> {
    let (dir, index_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(INDEX_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let index = read_json(&index_path)?;
    let files = index
        .get("instances")
        .and_then(Json::as_array)
        .ok_or_else(|| schema(&index_path, "instances", "expected a list of file names"))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for f in files {
        let name = f.as_str().ok_or_else(|| schema(&index_path, "instances", "file names must be strings"))?;
        let file = dir.join(name);
        let inst = parse_instance(&file, &read_json(&file)?)?;
        if !ids.insert(inst.id.clone()) {
            return Err(DatasetError::DuplicateInstanceId(inst.id));
        }
        out.push(inst);
    }
    Ok(out)
}

/// The bundled desk suite.
pub fn desk_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("datasets").join("desk")
}
