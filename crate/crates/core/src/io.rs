//! Trace file parsing and serialization.
//!
//! One run per UTF-8 JSON document:
//!
//! ```json
//! { "method": str, "model": str, "benchmark": str, "answer_kind": "numeric"|"choice",
//!   "traces": [ { "problem_id": str, "question": str, "gold_answer": str,
//!     "nodes": [ { "id": int, "role": str, "prompt": str, "response": str,
//!                  "prompt_tokens": int, "completion_tokens": int, "is_final": bool } ],
//!     "spatial": [[0|1, ...], ...], "temporal": [[0|1, ...], ...] } ] }
//! ```
//!
//! `gold_answer` is parsed per `answer_kind`. Matrices are explicit nested
//! integer arrays, mirroring the S/T matrix formulation. Unknown fields are
//! ignored but reported as warnings. Decoding is done by hand over a
//! [`serde_json::Value`] so errors can name the exact offending field.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::trace::{
    AgentNode, Answer, AnswerKind, ProblemTrace, RunRecord, TraceGraph, Violation,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema violation at {field}: {message}")]
    Schema { field: String, message: String },
    #[error("invalid trace graph in problem {problem_id:?}: {}", format_violations(.violations))]
    GraphInvariant { problem_id: String, violations: Vec<Violation> },
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// A successfully parsed run plus warnings for fields the schema does not know.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRun {
    pub run: RunRecord,
    pub warnings: Vec<String>,
}

/// Parse one run document. Every returned graph passes
/// [`TraceGraph::validate`]; structural problems surface as typed errors.
pub fn parse_run(bytes: &[u8]) -> Result<ParsedRun, ParseError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let run = decode_run(&value, &mut warnings)?;
    Ok(ParsedRun { run, warnings })
}

const RUN_FIELDS: &[&str] = &["method", "model", "benchmark", "answer_kind", "traces"];
const TRACE_FIELDS: &[&str] =
    &["problem_id", "question", "gold_answer", "nodes", "spatial", "temporal"];
const NODE_FIELDS: &[&str] =
    &["id", "role", "prompt", "response", "prompt_tokens", "completion_tokens", "is_final"];

fn decode_run(value: &Value, warnings: &mut Vec<String>) -> Result<RunRecord, ParseError> {
    let obj = as_object(value, "(root)")?;
    note_unknown_fields(obj, RUN_FIELDS, "(root)", warnings);

    let method = get_str(obj, "method", "method")?;
    let model = get_str(obj, "model", "model")?;
    let benchmark = get_str(obj, "benchmark", "benchmark")?;
    let answer_kind: AnswerKind = get_str(obj, "answer_kind", "answer_kind")?
        .parse()
        .map_err(|e| schema("answer_kind", e))?;

    let traces_value = require(obj, "traces", "traces")?;
    let traces_array = as_array(traces_value, "traces")?;
    if traces_array.is_empty() {
        return Err(schema("traces", "run must contain at least one trace"));
    }

    let traces = traces_array
        .iter()
        .enumerate()
        .map(|(i, t)| decode_trace(t, answer_kind, &format!("traces[{i}]"), warnings))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(RunRecord { method, model, benchmark, answer_kind, traces })
}

fn decode_trace(
    value: &Value,
    answer_kind: AnswerKind,
    path: &str,
    warnings: &mut Vec<String>,
) -> Result<ProblemTrace, ParseError> {
    let obj = as_object(value, path)?;
    note_unknown_fields(obj, TRACE_FIELDS, path, warnings);

    let problem_id = get_str(obj, "problem_id", &field(path, "problem_id"))?;
    let question = get_str(obj, "question", &field(path, "question"))?;
    let gold_text = get_str(obj, "gold_answer", &field(path, "gold_answer"))?;
    let gold_answer = Answer::parse(answer_kind, &gold_text)
        .map_err(|e| schema(&field(path, "gold_answer"), e))?;

    let nodes_value = require(obj, "nodes", &field(path, "nodes"))?;
    let nodes_array = as_array(nodes_value, &field(path, "nodes"))?;
    let nodes = nodes_array
        .iter()
        .enumerate()
        .map(|(i, n)| decode_node(n, &format!("{path}.nodes[{i}]"), warnings))
        .collect::<Result<Vec<_>, _>>()?;

    let n = nodes.len();
    let spatial = decode_matrix(obj, "spatial", n, path)?;
    let temporal = decode_matrix(obj, "temporal", n, path)?;

    let graph = TraceGraph { nodes, spatial, temporal };
    let report = graph.validate();
    if !report.is_valid() {
        return Err(ParseError::GraphInvariant {
            problem_id,
            violations: report.into_violations(),
        });
    }

    Ok(ProblemTrace { problem_id, question, gold_answer, graph })
}

fn decode_node(
    value: &Value,
    path: &str,
    warnings: &mut Vec<String>,
) -> Result<AgentNode, ParseError> {
    let obj = as_object(value, path)?;
    note_unknown_fields(obj, NODE_FIELDS, path, warnings);
    Ok(AgentNode {
        node_id: get_u64(obj, "id", &field(path, "id"))? as usize,
        role: get_str(obj, "role", &field(path, "role"))?,
        prompt: get_str(obj, "prompt", &field(path, "prompt"))?,
        response: get_str(obj, "response", &field(path, "response"))?,
        prompt_tokens: get_u64(obj, "prompt_tokens", &field(path, "prompt_tokens"))?,
        completion_tokens: get_u64(obj, "completion_tokens", &field(path, "completion_tokens"))?,
        is_final: get_bool(obj, "is_final", &field(path, "is_final"))?,
    })
}

/// Decode an adjacency matrix, enforcing the NxN shape here so the error can
/// name the field; entry values are range-checked only into `u8`, leaving
/// non-binary entries to graph validation.
fn decode_matrix(
    obj: &Map<String, Value>,
    key: &str,
    n: usize,
    trace_path: &str,
) -> Result<Vec<Vec<u8>>, ParseError> {
    let path = field(trace_path, key);
    let rows = as_array(require(obj, key, &path)?, &path)?;
    if rows.len() != n {
        return Err(schema(&path, format!("expected {n} rows for {n} nodes, got {}", rows.len())));
    }
    let mut matrix = Vec::with_capacity(rows.len());
    for (i, row_value) in rows.iter().enumerate() {
        let row = as_array(row_value, &format!("{path}[{i}]"))?;
        if row.len() != n {
            return Err(schema(&path, format!("row {i} has {} entries, expected {n}", row.len())));
        }
        let mut out = Vec::with_capacity(row.len());
        for (j, entry) in row.iter().enumerate() {
            let cell = format!("{path}[{i}][{j}]");
            let raw = entry.as_i64().ok_or_else(|| schema(&cell, "expected an integer"))?;
            let byte = u8::try_from(raw)
                .map_err(|_| schema(&cell, format!("matrix entry {raw} out of range")))?;
            out.push(byte);
        }
        matrix.push(out);
    }
    Ok(matrix)
}

fn field(path: &str, key: &str) -> String {
    if path == "(root)" {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn schema(field: &str, message: impl ToString) -> ParseError {
    ParseError::Schema { field: field.to_string(), message: message.to_string() }
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ParseError> {
    value.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn as_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>, ParseError> {
    value.as_array().ok_or_else(|| schema(path, "expected an array"))
}

fn require<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, ParseError> {
    obj.get(key).ok_or_else(|| schema(path, "missing required field"))
}

fn get_str(obj: &Map<String, Value>, key: &str, path: &str) -> Result<String, ParseError> {
    require(obj, key, path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| schema(path, "expected a string"))
}

fn get_u64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<u64, ParseError> {
    require(obj, key, path)?
        .as_u64()
        .ok_or_else(|| schema(path, "expected a nonnegative integer"))
}

fn get_bool(obj: &Map<String, Value>, key: &str, path: &str) -> Result<bool, ParseError> {
    require(obj, key, path)?.as_bool().ok_or_else(|| schema(path, "expected a boolean"))
}

fn note_unknown_fields(
    obj: &Map<String, Value>,
    allowed: &[&str],
    path: &str,
    warnings: &mut Vec<String>,
) {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            warnings.push(format!("unknown field {key:?} in {path}"));
        }
    }
}

/// Serialize a run back to the trace schema. `parse_run(serialize_run(r))`
/// reconstructs a structurally equal run.
pub fn serialize_run(run: &RunRecord) -> String {
    let traces: Vec<Value> = run
        .traces
        .iter()
        .map(|t| {
            let nodes: Vec<Value> = t
                .graph
                .nodes
                .iter()
                .map(|n| {
                    serde_json::json!({
                        "id": n.node_id,
                        "role": n.role,
                        "prompt": n.prompt,
                        "response": n.response,
                        "prompt_tokens": n.prompt_tokens,
                        "completion_tokens": n.completion_tokens,
                        "is_final": n.is_final,
                    })
                })
                .collect();
            serde_json::json!({
                "problem_id": t.problem_id,
                "question": t.question,
                "gold_answer": t.gold_answer.to_string(),
                "nodes": nodes,
                "spatial": t.graph.spatial,
                "temporal": t.graph.temporal,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "method": run.method,
        "model": run.model,
        "benchmark": run.benchmark,
        "answer_kind": run.answer_kind.to_string(),
        "traces": traces,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("trace schema is always serializable");
    text.push('\n');
    text
}
