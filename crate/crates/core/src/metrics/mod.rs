//! The metric suite: information diversity score over connected agent pairs,
//! unnecessary path ratio over spatial reasoning paths, answer extraction,
//! accuracy, and token accounting.

mod extract;

pub use extract::{
    extract_answer, last_choice_answer, last_numeric_answer, ExtractorFn, ExtractorRegistry,
};

use serde::Serialize;
use thiserror::Error;

use crate::features::{
    build_provider, combine_similarity, pairwise_similarity, tfidf_vectors, EmbedError,
    EmbeddingProvider, FeatureError, LambdaWeights, ProviderKind, SimilarityMatrix,
};
use crate::trace::{AgentNode, Answer, AnswerKind, GraphError, NodeId, ProblemTrace, RunRecord, TraceGraph};

/// Inclusive contribution-score threshold separating necessary from
/// unnecessary paths.
pub const DEFAULT_CONTRIBUTION_THRESHOLD: f64 = 0.5;

/// Default divisor turning token sums into kilotokens.
pub const DEFAULT_TOKEN_SCALE: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("similarity matrix is {matrix}x{matrix} but the graph has {graph} nodes")]
    SimilarityDimension { graph: usize, matrix: usize },
}

/// Weighted mean dissimilarity over connected pairs:
/// sum of `w_ij * (1 - ss_total[i,j])` over unordered pairs with `w_ij > 0`,
/// divided by the total weight. `None` when no pair is connected.
pub fn information_diversity_score(
    graph: &TraceGraph,
    ss_total: &SimilarityMatrix,
) -> Result<Option<f64>, MetricsError> {
    let n = graph.node_count();
    if ss_total.dim() != n {
        return Err(MetricsError::SimilarityDimension { graph: n, matrix: ss_total.dim() });
    }
    let mut weighted_diversity = 0.0;
    let mut total_weight = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let weight = f64::from(graph.connection_weight(i, j)?);
            if weight > 0.0 {
                weighted_diversity += weight * (1.0 - ss_total.get(i, j));
                total_weight += weight;
            }
        }
    }
    if total_weight == 0.0 {
        Ok(None)
    } else {
        Ok(Some(weighted_diversity / total_weight))
    }
}

/// A simple directed path in the spatial graph, at least two nodes long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Contribution assessment of one path: `correct_count / total_count`
/// compared against the necessity threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAssessment {
    pub path: Path,
    pub correct_count: usize,
    pub total_count: usize,
    pub score: f64,
    pub necessary: bool,
}

/// All simple directed paths of two or more nodes in the spatial graph.
///
/// Enumeration is a depth-first traversal from every node in ascending id
/// order, visiting neighbors in ascending id order, so the output order is
/// deterministic and every prefix of a longer path appears as its own
/// element before its extensions.
pub fn enumerate_paths(graph: &TraceGraph) -> Result<Vec<Path>, MetricsError> {
    let mut paths = Vec::new();
    for_each_spatial_path(graph, |nodes| paths.push(Path { nodes: nodes.to_vec() }))?;
    Ok(paths)
}

/// Shared traversal behind path enumeration and the path-ratio computation.
/// Checks spatial acyclicity up front; unreachable for validated graphs but
/// keeps enumeration total on bad input.
fn for_each_spatial_path<F: FnMut(&[NodeId])>(
    graph: &TraceGraph,
    mut visit: F,
) -> Result<(), MetricsError> {
    if let Some(cycle) = spatial_cycle(graph) {
        return Err(MetricsError::Graph(GraphError::Cycle { cycle }));
    }
    let n = graph.node_count();
    let mut stack = Vec::with_capacity(n);
    let mut on_path = vec![false; n];
    for start in 0..n {
        stack.push(start);
        on_path[start] = true;
        extend_path(graph, &mut stack, &mut on_path, &mut visit);
        on_path[start] = false;
        stack.pop();
    }
    Ok(())
}

fn extend_path<F: FnMut(&[NodeId])>(
    graph: &TraceGraph,
    stack: &mut Vec<NodeId>,
    on_path: &mut [bool],
    visit: &mut F,
) {
    let last = *stack.last().expect("stack holds at least the start node");
    for next in 0..graph.node_count() {
        if graph.spatial_edge(last, next) && !on_path[next] {
            stack.push(next);
            on_path[next] = true;
            visit(stack);
            extend_path(graph, stack, on_path, visit);
            on_path[next] = false;
            stack.pop();
        }
    }
}

/// Kahn's algorithm over spatial edges only; `Some(cycle)` when cyclic.
fn spatial_cycle(graph: &TraceGraph) -> Option<Vec<NodeId>> {
    let n = graph.node_count();
    let mut indegree = vec![0usize; n];
    for i in 0..n {
        for (j, degree) in indegree.iter_mut().enumerate() {
            if i != j && graph.spatial_edge(i, j) {
                *degree += 1;
            }
        }
    }
    let mut ready: Vec<NodeId> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut done = 0usize;
    while let Some(v) = ready.pop() {
        done += 1;
        for (j, degree) in indegree.iter_mut().enumerate() {
            if j != v && graph.spatial_edge(v, j) {
                *degree -= 1;
                if *degree == 0 {
                    ready.push(j);
                }
            }
        }
    }
    if done == n {
        return None;
    }
    // Wherever indegree never reached zero, a cycle remains; recover one by
    // walking spatial edges among the leftover nodes.
    let remaining: Vec<NodeId> = (0..n).filter(|&v| indegree[v] > 0).collect();
    let start = *remaining.first()?;
    let mut seen = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut current = start;
    loop {
        if seen[current] != usize::MAX {
            return Some(order[seen[current]..].to_vec());
        }
        seen[current] = order.len();
        order.push(current);
        current = (0..n).find(|&j| j != current && graph.spatial_edge(current, j) && indegree[j] > 0)?;
    }
}

/// Per-node answer correctness, indexed by node id.
fn correctness_by_id(graph: &TraceGraph, gold: &Answer, kind: AnswerKind) -> Vec<bool> {
    (0..graph.node_count())
        .map(|id| {
            graph
                .node(id)
                .and_then(|n| extract_answer(&n.response, kind))
                .is_some_and(|a| a.matches(gold))
        })
        .collect()
}

fn assess(path: Path, correct: &[bool], threshold: f64) -> PathAssessment {
    let total_count = path.nodes().len();
    let correct_count = path.nodes().iter().filter(|&&v| correct[v]).count();
    let score = correct_count as f64 / total_count as f64;
    PathAssessment { path, correct_count, total_count, score, necessary: score >= threshold }
}

/// Assess one path: count nodes whose extracted answer matches gold, score
/// by path length, compare against the inclusive 0.5 threshold.
pub fn path_contribution(
    path: &Path,
    graph: &TraceGraph,
    gold: &Answer,
    kind: AnswerKind,
) -> PathAssessment {
    let correct = correctness_by_id(graph, gold, kind);
    assess(path.clone(), &correct, DEFAULT_CONTRIBUTION_THRESHOLD)
}

/// Fraction of spatial paths that are unnecessary:
/// `1 - |necessary| / |all|`, or `None` when the graph has no paths.
pub fn unnecessary_path_ratio(
    graph: &TraceGraph,
    gold: &Answer,
    kind: AnswerKind,
    threshold: f64,
) -> Result<Option<f64>, MetricsError> {
    let correct = correctness_by_id(graph, gold, kind);
    let mut all = 0u64;
    let mut necessary = 0u64;
    for_each_spatial_path(graph, |nodes| {
        all += 1;
        let hits = nodes.iter().filter(|&&v| correct[v]).count();
        if hits as f64 / nodes.len() as f64 >= threshold {
            necessary += 1;
        }
    })?;
    if all == 0 {
        Ok(None)
    } else {
        Ok(Some(1.0 - necessary as f64 / all as f64))
    }
}

/// The node whose answer decides run accuracy: the `is_final` node when
/// marked, otherwise the union-graph sink with the highest node id.
pub fn final_node(graph: &TraceGraph) -> Option<&AgentNode> {
    if let Some(node) = graph.nodes.iter().find(|n| n.is_final) {
        return Some(node);
    }
    let n = graph.node_count();
    (0..n)
        .rev()
        .find(|&v| (0..n).all(|j| j == v || !graph.union_edge(v, j)))
        .and_then(|v| graph.node(v))
}

/// Fraction of traces whose final node's extracted answer matches gold.
pub fn accuracy(run: &RunRecord) -> f64 {
    if run.traces.is_empty() {
        return 0.0;
    }
    let correct = run.traces.iter().filter(|t| trace_final_correct(t, run.answer_kind)).count();
    correct as f64 / run.traces.len() as f64
}

fn trace_final_correct(trace: &ProblemTrace, kind: AnswerKind) -> bool {
    final_node(&trace.graph)
        .and_then(|n| extract_answer(&n.response, kind))
        .is_some_and(|a| a.matches(&trace.gold_answer))
}

/// Mean prompt/completion kilotokens per problem.
pub fn token_usage(run: &RunRecord) -> (f64, f64) {
    token_usage_scaled(run, DEFAULT_TOKEN_SCALE)
}

/// Token usage with a configurable display divisor.
pub fn token_usage_scaled(run: &RunRecord, scale: f64) -> (f64, f64) {
    if run.traces.is_empty() {
        return (0.0, 0.0);
    }
    let mut prompt = 0u64;
    let mut completion = 0u64;
    for trace in &run.traces {
        for node in &trace.graph.nodes {
            prompt += node.prompt_tokens;
            completion += node.completion_tokens;
        }
    }
    let divisor = scale * run.traces.len() as f64;
    (prompt as f64 / divisor, completion as f64 / divisor)
}

/// Both similarity channels of one trace, computed once so weight sweeps can
/// recombine them without re-embedding.
pub struct TraceChannels {
    pub syntactic: SimilarityMatrix,
    pub semantic: SimilarityMatrix,
}

/// Build the TF-IDF and embedding similarity channels from the trace's
/// responses (responses only; prompts never feed similarity).
pub fn trace_channels(
    trace: &ProblemTrace,
    provider: &dyn EmbeddingProvider,
) -> Result<TraceChannels, MetricsError> {
    let responses = trace.graph.responses_by_id();
    let syntactic = pairwise_similarity(&tfidf_vectors(&responses));
    let semantic = pairwise_similarity(&provider.embed(&responses)?);
    Ok(TraceChannels { syntactic, semantic })
}

/// Combine a trace's channels under the given weights and score diversity in
/// one step. Weight sweeps call this per grid point over precomputed
/// channels.
pub fn combine_and_score(
    graph: &TraceGraph,
    channels: &TraceChannels,
    weights: LambdaWeights,
) -> Result<Option<f64>, MetricsError> {
    let total = combine_similarity(&channels.syntactic, &channels.semantic, weights)?;
    information_diversity_score(graph, &total)
}

/// Analysis knobs shared by the library entry points and the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Weight of the syntactic channel; the semantic channel gets `1 - lambda1`.
    pub lambda1: f64,
    /// Necessity threshold for the path ratio.
    pub upr_threshold: f64,
    pub provider: ProviderKind,
    pub remote_url: Option<String>,
    /// Token display divisor (1000 shows kilotokens).
    pub token_scale: f64,
    /// Worker cap for per-trace parallelism.
    pub workers: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            lambda1: 0.5,
            upr_threshold: DEFAULT_CONTRIBUTION_THRESHOLD,
            provider: ProviderKind::Local,
            remote_url: None,
            token_scale: DEFAULT_TOKEN_SCALE,
            workers: 4,
        }
    }
}

impl AnalysisConfig {
    pub fn lambda_weights(&self) -> Result<LambdaWeights, MetricsError> {
        Ok(LambdaWeights::from_syntactic(self.lambda1)?)
    }
}

/// Per-trace metric values; `None` marks the distinguished undefined outcome
/// (no connected pairs, or no paths), which aggregation skips rather than
/// coercing to zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemMetrics {
    pub problem_id: String,
    pub ids: Option<f64>,
    pub upr: Option<f64>,
    pub final_correct: bool,
}

/// Per-run aggregate: the five comparison-table columns plus per-problem
/// detail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub ptok: f64,
    pub ctok: f64,
    pub ids: Option<f64>,
    pub upr: Option<f64>,
    pub per_problem: Vec<ProblemMetrics>,
}

/// Analyze one trace against an already-built provider.
pub fn analyze_trace(
    trace: &ProblemTrace,
    kind: AnswerKind,
    weights: LambdaWeights,
    threshold: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<ProblemMetrics, MetricsError> {
    let channels = trace_channels(trace, provider)?;
    let total = combine_similarity(&channels.syntactic, &channels.semantic, weights)?;
    Ok(ProblemMetrics {
        problem_id: trace.problem_id.clone(),
        ids: information_diversity_score(&trace.graph, &total)?,
        upr: unnecessary_path_ratio(&trace.graph, &trace.gold_answer, kind, threshold)?,
        final_correct: trace_final_correct(trace, kind),
    })
}

/// Analyze every trace, possibly in parallel, returning per-trace outcomes in
/// trace order. Failed traces stay individual so callers can keep partial
/// results.
pub fn analyze_traces_with_provider(
    run: &RunRecord,
    config: &AnalysisConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Result<ProblemMetrics, MetricsError>>, MetricsError> {
    let weights = config.lambda_weights()?;
    Ok(par_map_indexed(run.traces.len(), config.workers, |i| {
        analyze_trace(&run.traces[i], run.answer_kind, weights, config.upr_threshold, provider)
    }))
}

/// Assemble the aggregate report from per-problem values; means cover only
/// defined values.
pub fn build_report(
    run: &RunRecord,
    config: &AnalysisConfig,
    per_problem: Vec<ProblemMetrics>,
) -> MetricsReport {
    let (ptok, ctok) = token_usage_scaled(run, config.token_scale);
    MetricsReport {
        accuracy: accuracy(run),
        ptok,
        ctok,
        ids: mean_defined(per_problem.iter().map(|p| p.ids)),
        upr: mean_defined(per_problem.iter().map(|p| p.upr)),
        per_problem,
    }
}

/// Full per-run analysis with an explicit provider; fails on the first
/// trace-level error.
pub fn analyze_run_with_provider(
    run: &RunRecord,
    config: &AnalysisConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<MetricsReport, MetricsError> {
    let per_problem = analyze_traces_with_provider(run, config, provider)?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build_report(run, config, per_problem))
}

/// Full per-run analysis, building the provider from the config.
pub fn analyze_run(run: &RunRecord, config: &AnalysisConfig) -> Result<MetricsReport, MetricsError> {
    let provider = build_provider(config.provider, config.remote_url.as_deref())?;
    analyze_run_with_provider(run, config, provider.as_ref())
}

/// Mean over the defined values, `None` when every value is undefined.
pub(crate) fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for value in values.flatten() {
        sum += value;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Run `f(0..n)` across up to `workers` threads, collecting results in index
/// order so the outcome is deterministic regardless of scheduling.
pub(crate) fn par_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    use std::sync::atomic::{AtomicUsize, Ordering};
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut produced = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        produced.push((i, f(i)));
                    }
                    produced
                })
            })
            .collect();
        for handle in handles {
            for (i, value) in handle.join().expect("worker thread panicked") {
                slots[i] = Some(value);
            }
        }
    });
    slots.into_iter().map(|slot| slot.expect("every index filled")).collect()
}
