//! Shared test helpers: independent brute-force oracles, random DAG
//! builders, and a minimal scripted HTTP server for provider tests.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gemmas::trace::{AgentNode, Answer, AnswerKind, NodeId, ProblemTrace, TraceGraph};

// ---------------------------------------------------------------------------
// Brute-force oracles (kept independent of the library's traversal code).

/// Every simple directed path of >= 2 nodes, found by generating all
/// sequences of distinct nodes and filtering on the edge condition.
pub fn brute_force_paths(graph: &TraceGraph) -> Vec<Vec<NodeId>> {
    let n = graph.node_count();
    let mut sequences = Vec::new();
    let mut current = Vec::new();
    let mut used = vec![false; n];
    all_distinct_sequences(n, &mut current, &mut used, &mut sequences);
    sequences
        .into_iter()
        .filter(|seq| seq.windows(2).all(|w| graph.spatial[w[0]][w[1]] == 1))
        .collect()
}

fn all_distinct_sequences(
    n: usize,
    current: &mut Vec<NodeId>,
    used: &mut [bool],
    out: &mut Vec<Vec<NodeId>>,
) {
    if current.len() >= 2 {
        out.push(current.clone());
    }
    if current.len() == n {
        return;
    }
    for v in 0..n {
        if !used[v] {
            used[v] = true;
            current.push(v);
            all_distinct_sequences(n, current, used, out);
            current.pop();
            used[v] = false;
        }
    }
}

/// Recompute the unnecessary path ratio from the brute-force path set with
/// integer threshold arithmetic (`2c >= t` is the inclusive 0.5 rule).
pub fn brute_force_upr(graph: &TraceGraph, gold: &Answer, kind: AnswerKind) -> Option<f64> {
    let correct: Vec<bool> = (0..graph.node_count())
        .map(|id| {
            graph
                .node(id)
                .and_then(|node| gemmas::metrics::extract_answer(&node.response, kind))
                .is_some_and(|a| a.matches(gold))
        })
        .collect();
    let paths = brute_force_paths(graph);
    if paths.is_empty() {
        return None;
    }
    let necessary = paths
        .iter()
        .filter(|path| {
            let hits = path.iter().filter(|&&v| correct[v]).count();
            2 * hits >= path.len()
        })
        .count();
    Some(1.0 - necessary as f64 / paths.len() as f64)
}

/// Direct evaluation of the diversity formula over all unordered pairs,
/// reading the adjacency matrices raw.
pub fn brute_force_ids(
    graph: &TraceGraph,
    ss_total: &gemmas::features::SimilarityMatrix,
) -> Option<f64> {
    let n = graph.node_count();
    let mut weighted = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = graph.spatial[i][j].max(graph.spatial[j][i]) as f64;
            let t = graph.temporal[i][j].max(graph.temporal[j][i]) as f64;
            let w = s + t;
            if w > 0.0 {
                weighted += w * (1.0 - ss_total.get(i, j));
                total += w;
            }
        }
    }
    (total > 0.0).then(|| weighted / total)
}

// ---------------------------------------------------------------------------
// Random structures. Seed-driven so property tests shrink over plain ints.

/// A random DAG whose edges follow a random topological permutation, so edge
/// directions are not biased toward ascending ids.
pub fn random_dag(n: usize, density: f64, seed: u64) -> TraceGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut rank = vec![0usize; n];
    for (position, &node) in order.iter().enumerate() {
        rank[node] = position;
    }

    let mut spatial = vec![vec![0u8; n]; n];
    let mut temporal = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && rank[i] < rank[j] {
                if rng.random_bool(density) {
                    spatial[i][j] = 1;
                }
                if rng.random_bool(density) {
                    temporal[i][j] = 1;
                }
            }
        }
    }

    let gold = 7u32;
    let nodes = (0..n)
        .map(|id| {
            let response = match rng.random_range(0..3u8) {
                0 => format!("after checking twice the answer is {gold}"),
                1 => format!("i would guess {}", gold + 1 + u32::from(rng.random_range(0..5u8))),
                _ => "there is nothing conclusive to report".to_string(),
            };
            AgentNode {
                node_id: id,
                role: format!("Agent{id}"),
                prompt: "prompt".to_string(),
                response,
                prompt_tokens: rng.random_range(0..500),
                completion_tokens: rng.random_range(0..200),
                is_final: id == n - 1,
            }
        })
        .collect();

    TraceGraph { nodes, spatial, temporal }
}

pub fn trace_around(graph: TraceGraph) -> ProblemTrace {
    ProblemTrace {
        problem_id: "t0".to_string(),
        question: "q".to_string(),
        gold_answer: Answer::Numeric(7.0),
        graph,
    }
}

// ---------------------------------------------------------------------------
// Scripted single-thread HTTP server for remote-provider tests.

pub struct CapturedRequest {
    pub head: String,
    pub body: String,
}

/// Serve the given raw HTTP responses one connection at a time, capturing
/// each request. Returns the URL to hit and the capture channel; the thread
/// exits after the last scripted response.
pub fn scripted_http_server(
    responses: Vec<String>,
) -> (String, mpsc::Receiver<CapturedRequest>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
    let addr = listener.local_addr().expect("local addr");
    let (sender, receiver) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        for response in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let (head, body) = loop {
                let read = match stream.read(&mut chunk) {
                    Ok(0) => break split_request(&buffer),
                    Ok(k) => k,
                    Err(_) => return,
                };
                buffer.extend_from_slice(&chunk[..read]);
                if let Some((head, body)) = try_complete(&buffer) {
                    break (head, body);
                }
            };
            let _ = sender.send(CapturedRequest { head, body });
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}/embed"), receiver, handle)
}

fn split_request(buffer: &[u8]) -> (String, String) {
    let text = String::from_utf8_lossy(buffer).to_string();
    match text.find("\r\n\r\n") {
        Some(split) => (text[..split].to_string(), text[split + 4..].to_string()),
        None => (text, String::new()),
    }
}

fn try_complete(buffer: &[u8]) -> Option<(String, String)> {
    let text = String::from_utf8_lossy(buffer);
    let split = text.find("\r\n\r\n")?;
    let head = &text[..split];
    let body = &text[split + 4..];
    let expected: usize = head
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length").then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    (body.len() >= expected).then(|| (head.to_string(), body[..expected].to_string()))
}

/// Raw HTTP response with a JSON body.
pub fn http_json(status: u16, body: &str) -> String {
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Status",
    };
    format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}
