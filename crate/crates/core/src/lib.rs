//! Workflow synthesis engine: agent strategies, a two-stage
//! execute/summarize pipeline, a graph executor and evaluation tooling.

pub mod agent;
pub mod codec;
pub mod es;
pub mod eval;
pub mod exec;
pub mod expr;
pub mod graph;
pub mod harness;
pub mod llm;
pub mod prompts;
pub mod tools;
pub mod value;
pub mod whitebox;

pub use agent::{AgentRun, SessionLimits, Task, Trace, TraceStep};
pub use es::{BuildStrategy, ESConfig, ESResult, ExecStrategy, Selection};
pub use eval::{CaseResult, FailureClass, MetricsTable, MtiClass, TestCase};
pub use exec::{execute, ExecLimits, RunLog};
pub use graph::{validate, Edge, Node, NodeBody, NodeKind, WorkflowGraph};
pub use harness::{ExperimentConfig, Instance, Mode};
pub use llm::{BackendConfig, ChatBackend, HttpBackend, ScriptedBackend, Usage};
pub use tools::{Partition, Registry, ToolError, ToolSpec};
pub use value::{canonical_text, Value};
