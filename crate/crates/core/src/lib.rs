//! Process-level evaluation of multi-agent LLM systems from recorded
//! execution traces.
//!
//! A trace models one problem-solving episode as a directed acyclic graph:
//! agent nodes carrying (prompt, response) pairs, plus binary spatial and
//! temporal adjacency matrices describing who talked to whom and which
//! outputs depended on which. On top of that model this crate computes
//! structural metrics — an information diversity score over connected agent
//! pairs and an unnecessary-path ratio over spatial reasoning paths —
//! alongside accuracy and token-usage baselines, and renders comparison
//! and sensitivity-sweep reports.
//!
//! The `gemmas` binary wires the same operations into batch subcommands
//! (`validate`, `analyze`, `sweep`, `generate`, `compare`).

pub mod cli;
pub mod features;
pub mod gen;
pub mod io;
pub mod metrics;
pub mod report;
pub mod trace;

pub use trace::{AgentNode, Answer, AnswerKind, ProblemTrace, RunRecord, TraceGraph};
