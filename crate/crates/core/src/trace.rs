//! DAG trace data model: agent nodes, spatial/temporal adjacency matrices,
//! and structural validation.
//!
//! All types are immutable after construction and every operation here is a
//! pure function, so graphs can be evaluated concurrently without
//! synchronization.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Index of an agent node within one [`TraceGraph`]; valid ids are `0..N`.
pub type NodeId = usize;

/// Tolerance for numeric answer equality ("8" and "8.0" must compare equal,
/// tiny formatting drift must not matter).
pub const NUMERIC_ANSWER_TOLERANCE: f64 = 1e-9;

/// One agent's recorded turn: role, prompt/response pair, token counts, and
/// whether this node is the final aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNode {
    pub node_id: NodeId,
    pub role: String,
    pub prompt: String,
    pub response: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub is_final: bool,
}

/// A recorded communication graph: N agent nodes plus binary spatial (S) and
/// temporal (T) adjacency matrices.
///
/// The matrices are stored exactly as read (nested rows), so a structurally
/// broken graph can be represented and then reported by [`TraceGraph::validate`].
/// Every other operation assumes a graph that validates cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGraph {
    pub nodes: Vec<AgentNode>,
    pub spatial: Vec<Vec<u8>>,
    pub temporal: Vec<Vec<u8>>,
}

/// Which adjacency matrix a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Spatial,
    Temporal,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixKind::Spatial => write!(f, "spatial"),
            MatrixKind::Temporal => write!(f, "temporal"),
        }
    }
}

/// A single violated structural invariant, with coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NodeIdOutOfRange { node_id: NodeId, node_count: usize },
    DuplicateNodeId { node_id: NodeId },
    MultipleFinalNodes { node_ids: Vec<NodeId> },
    WrongRowCount { matrix: MatrixKind, rows: usize, expected: usize },
    WrongRowLength { matrix: MatrixKind, row: usize, len: usize, expected: usize },
    NonBinaryEntry { matrix: MatrixKind, row: usize, col: usize, value: u8 },
    NonZeroDiagonal { matrix: MatrixKind, index: usize },
    UnionCycle { cycle: Vec<NodeId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeIdOutOfRange { node_id, node_count } => {
                write!(f, "node id {node_id} out of range for {node_count} nodes")
            }
            Violation::DuplicateNodeId { node_id } => write!(f, "duplicate node id {node_id}"),
            Violation::MultipleFinalNodes { node_ids } => {
                write!(f, "multiple final nodes: {node_ids:?}")
            }
            Violation::WrongRowCount { matrix, rows, expected } => {
                write!(f, "{matrix} matrix has {rows} rows, expected {expected}")
            }
            Violation::WrongRowLength { matrix, row, len, expected } => {
                write!(f, "{matrix} matrix row {row} has {len} entries, expected {expected}")
            }
            Violation::NonBinaryEntry { matrix, row, col, value } => {
                write!(f, "non-binary entry at ({row},{col}) in {matrix} matrix: {value}")
            }
            Violation::NonZeroDiagonal { matrix, index } => {
                write!(f, "nonzero diagonal at ({index},{index}) in {matrix} matrix")
            }
            Violation::UnionCycle { cycle } => {
                write!(f, "cycle in union graph: ")?;
                for id in cycle {
                    write!(f, "{id} -> ")?;
                }
                match cycle.first() {
                    Some(first) => write!(f, "{first}"),
                    None => write!(f, "?"),
                }
            }
        }
    }
}

/// Result of [`TraceGraph::validate`]. Violations are data, not failures;
/// an empty report means the graph is valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn into_violations(self) -> Vec<Violation> {
        self.violations
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node id {id} out of range for graph of {count} nodes")]
    IndexOutOfRange { id: NodeId, count: usize },
    #[error("cycle in union graph: {cycle:?}")]
    Cycle { cycle: Vec<NodeId> },
}

impl TraceGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Look up a node by its id (node list order is preserved from the
    /// source file and need not match id order).
    pub fn node(&self, id: NodeId) -> Option<&AgentNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Responses ordered by node id, for feature extraction. Requires a
    /// validated graph (ids exactly `0..N`).
    pub fn responses_by_id(&self) -> Vec<&str> {
        (0..self.node_count())
            .map(|id| {
                self.node(id)
                    .map(|n| n.response.as_str())
                    .expect("validated graph has ids 0..N")
            })
            .collect()
    }

    /// True when a directed spatial edge i -> j exists. Assumes well-formed
    /// matrices (validated graph).
    pub fn spatial_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.spatial[i][j] == 1
    }

    /// True when i -> j exists in either matrix. Assumes well-formed matrices.
    pub fn union_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.spatial[i][j] == 1 || self.temporal[i][j] == 1
    }

    /// Check every structural invariant and return the violations found.
    pub fn validate(&self) -> ValidationReport {
        let n = self.nodes.len();
        let mut violations = Vec::new();

        let mut seen = vec![false; n];
        for node in &self.nodes {
            if node.node_id >= n {
                violations.push(Violation::NodeIdOutOfRange { node_id: node.node_id, node_count: n });
            } else if seen[node.node_id] {
                violations.push(Violation::DuplicateNodeId { node_id: node.node_id });
            } else {
                seen[node.node_id] = true;
            }
        }

        let finals: Vec<NodeId> = self.nodes.iter().filter(|n| n.is_final).map(|n| n.node_id).collect();
        if finals.len() > 1 {
            violations.push(Violation::MultipleFinalNodes { node_ids: finals });
        }

        let spatial_ok = check_matrix(MatrixKind::Spatial, &self.spatial, n, &mut violations);
        let temporal_ok = check_matrix(MatrixKind::Temporal, &self.temporal, n, &mut violations);

        // The cycle check only makes sense once both matrices have the right shape.
        if spatial_ok && temporal_ok && self.kahn_union_order().is_none() {
            violations.push(Violation::UnionCycle { cycle: self.find_union_cycle() });
        }

        ValidationReport { violations }
    }

    /// Deterministic topological order of the union graph: every edge (i,j)
    /// has i before j, ties broken by ascending node id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        self.kahn_union_order()
            .ok_or_else(|| GraphError::Cycle { cycle: self.find_union_cycle() })
    }

    /// Connection weight of the unordered pair (i,j):
    /// `max(S_ij, S_ji) + max(T_ij, T_ji)`, in {0,1,2} for binary matrices.
    pub fn connection_weight(&self, i: NodeId, j: NodeId) -> Result<u32, GraphError> {
        let n = self.node_count();
        for id in [i, j] {
            if id >= n {
                return Err(GraphError::IndexOutOfRange { id, count: n });
            }
        }
        let s = self.spatial[i][j].max(self.spatial[j][i]);
        let t = self.temporal[i][j].max(self.temporal[j][i]);
        Ok(u32::from(s) + u32::from(t))
    }

    /// Kahn's algorithm over the union graph with a min-heap for the id
    /// tie-break. `None` when a cycle blocks completion.
    fn kahn_union_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for i in 0..n {
            for (j, degree) in indegree.iter_mut().enumerate() {
                if i != j && self.union_edge(i, j) {
                    *degree += 1;
                }
            }
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> =
            (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for (j, degree) in indegree.iter_mut().enumerate() {
                if j != v && self.union_edge(v, j) {
                    *degree -= 1;
                    if *degree == 0 {
                        ready.push(Reverse(j));
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Locate one concrete cycle in the union graph for error reporting.
    fn find_union_cycle(&self) -> Vec<NodeId> {
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        let n = self.nodes.len();
        let mut color = vec![Color::White; n];
        let mut parent = vec![usize::MAX; n];

        for start in 0..n {
            if color[start] != Color::White {
                continue;
            }
            // Iterative DFS; a gray->gray edge closes a cycle.
            let mut stack = vec![(start, 0usize)];
            color[start] = Color::Gray;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                let mut advanced = false;
                while *next < n {
                    let j = *next;
                    *next += 1;
                    if j == v || !self.union_edge(v, j) {
                        continue;
                    }
                    match color[j] {
                        Color::Gray => {
                            let mut cycle = vec![j];
                            let mut cur = v;
                            while cur != j {
                                cycle.push(cur);
                                cur = parent[cur];
                            }
                            cycle.reverse();
                            // Rotate so the smallest id leads, keeping output stable.
                            let min_pos = cycle
                                .iter()
                                .enumerate()
                                .min_by_key(|(_, id)| **id)
                                .map(|(p, _)| p)
                                .unwrap_or(0);
                            cycle.rotate_left(min_pos);
                            return cycle;
                        }
                        Color::White => {
                            parent[j] = v;
                            color[j] = Color::Gray;
                            stack.push((j, 0));
                            advanced = true;
                            break;
                        }
                        Color::Black => {}
                    }
                }
                if !advanced && stack.last().map(|&(top, _)| top) == Some(v) {
                    color[v] = Color::Black;
                    stack.pop();
                }
            }
        }
        Vec::new()
    }
}

fn check_matrix(
    kind: MatrixKind,
    matrix: &[Vec<u8>],
    n: usize,
    violations: &mut Vec<Violation>,
) -> bool {
    let mut ok = true;
    if matrix.len() != n {
        violations.push(Violation::WrongRowCount { matrix: kind, rows: matrix.len(), expected: n });
        ok = false;
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            violations.push(Violation::WrongRowLength { matrix: kind, row: i, len: row.len(), expected: n });
            ok = false;
        }
        for (j, &value) in row.iter().enumerate() {
            if value > 1 {
                violations.push(Violation::NonBinaryEntry { matrix: kind, row: i, col: j, value });
            }
            if i == j && value != 0 {
                violations.push(Violation::NonZeroDiagonal { matrix: kind, index: i });
            }
        }
    }
    ok
}

/// Kind of answer a benchmark expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnswerKind {
    Numeric,
    Choice,
}

impl fmt::Display for AnswerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerKind::Numeric => write!(f, "numeric"),
            AnswerKind::Choice => write!(f, "choice"),
        }
    }
}

impl std::str::FromStr for AnswerKind {
    type Err = AnswerParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numeric" => Ok(AnswerKind::Numeric),
            "choice" => Ok(AnswerKind::Choice),
            other => Err(AnswerParseError::UnknownKind(other.to_string())),
        }
    }
}

/// A tagged answer value, so equality is well-defined across formats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Answer {
    Numeric(f64),
    Choice(char),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnswerParseError {
    #[error("unknown answer kind {0:?} (expected \"numeric\" or \"choice\")")]
    UnknownKind(String),
    #[error("invalid numeric answer {0:?}")]
    InvalidNumeric(String),
    #[error("invalid choice answer {0:?} (expected a single letter A-E)")]
    InvalidChoice(String),
}

impl Answer {
    pub fn kind(&self) -> AnswerKind {
        match self {
            Answer::Numeric(_) => AnswerKind::Numeric,
            Answer::Choice(_) => AnswerKind::Choice,
        }
    }

    /// Parse a gold-answer literal for the given kind: a decimal literal for
    /// numeric answers, a single letter A-E for choice answers.
    pub fn parse(kind: AnswerKind, text: &str) -> Result<Answer, AnswerParseError> {
        let trimmed = text.trim();
        match kind {
            AnswerKind::Numeric => {
                let value: f64 = trimmed
                    .parse()
                    .map_err(|_| AnswerParseError::InvalidNumeric(text.to_string()))?;
                if !value.is_finite() {
                    return Err(AnswerParseError::InvalidNumeric(text.to_string()));
                }
                Ok(Answer::Numeric(value))
            }
            AnswerKind::Choice => {
                let mut chars = trimmed.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if ('A'..='E').contains(&c) => Ok(Answer::Choice(c)),
                    _ => Err(AnswerParseError::InvalidChoice(text.to_string())),
                }
            }
        }
    }

    /// Answer equality: numeric values compare within relative tolerance
    /// [`NUMERIC_ANSWER_TOLERANCE`], choice labels compare exactly, and
    /// answers of different kinds never match.
    pub fn matches(&self, other: &Answer) -> bool {
        match (self, other) {
            (Answer::Numeric(a), Answer::Numeric(b)) => {
                a == b || (a - b).abs() <= NUMERIC_ANSWER_TOLERANCE * a.abs().max(b.abs())
            }
            (Answer::Choice(a), Answer::Choice(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Numeric(v) => write!(f, "{v}"),
            Answer::Choice(c) => write!(f, "{c}"),
        }
    }
}

/// One problem's trace with its gold answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemTrace {
    pub problem_id: String,
    pub question: String,
    pub gold_answer: Answer,
    pub graph: TraceGraph,
}

/// One benchmark run: metadata plus the per-problem traces (one row of a
/// comparison table).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: String,
    pub model: String,
    pub benchmark: String,
    pub answer_kind: AnswerKind,
    pub traces: Vec<ProblemTrace>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(id: NodeId) -> AgentNode {
        AgentNode {
            node_id: id,
            role: format!("Agent{id}"),
            prompt: String::new(),
            response: String::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
            is_final: false,
        }
    }

    pub(crate) fn graph(n: usize, spatial: &[(usize, usize)], temporal: &[(usize, usize)]) -> TraceGraph {
        let mut s = vec![vec![0u8; n]; n];
        let mut t = vec![vec![0u8; n]; n];
        for &(i, j) in spatial {
            s[i][j] = 1;
        }
        for &(i, j) in temporal {
            t[i][j] = 1;
        }
        TraceGraph { nodes: (0..n).map(node).collect(), spatial: s, temporal: t }
    }

    #[test]
    fn validate_accepts_single_edge_graph() {
        let g = graph(2, &[(0, 1)], &[]);
        assert!(g.validate().is_valid());
    }

    #[test]
    fn validate_reports_two_cycle() {
        let g = graph(2, &[(0, 1), (1, 0)], &[]);
        let report = g.validate();
        assert_eq!(report.violations().len(), 1);
        let text = report.to_string();
        assert!(text.contains("cycle in union graph"), "got: {text}");
        assert!(matches!(report.violations()[0], Violation::UnionCycle { ref cycle } if cycle == &[0, 1]));
    }

    #[test]
    fn validate_reports_non_binary_entry() {
        let mut g = graph(3, &[], &[]);
        g.spatial[0][2] = 2;
        let report = g.validate();
        assert_eq!(
            report.violations(),
            &[Violation::NonBinaryEntry { matrix: MatrixKind::Spatial, row: 0, col: 2, value: 2 }]
        );
        assert!(report.to_string().contains("non-binary entry at (0,2)"));
    }

    #[test]
    fn validate_reports_bad_node_ids_and_finals() {
        let mut g = graph(3, &[], &[]);
        g.nodes[2].node_id = 1;
        let report = g.validate();
        assert!(report.violations().contains(&Violation::DuplicateNodeId { node_id: 1 }));

        let mut g = graph(2, &[], &[]);
        g.nodes[0].is_final = true;
        g.nodes[1].is_final = true;
        let report = g.validate();
        assert!(matches!(report.violations()[0], Violation::MultipleFinalNodes { .. }));

        let mut g = graph(2, &[], &[]);
        g.nodes[1].node_id = 5;
        assert!(g
            .validate()
            .violations()
            .contains(&Violation::NodeIdOutOfRange { node_id: 5, node_count: 2 }));
    }

    #[test]
    fn validate_reports_matrix_shape_and_diagonal() {
        let mut g = graph(2, &[], &[]);
        g.spatial = vec![vec![0, 0]];
        let report = g.validate();
        assert!(report
            .violations()
            .contains(&Violation::WrongRowCount { matrix: MatrixKind::Spatial, rows: 1, expected: 2 }));

        let mut g = graph(2, &[], &[]);
        g.temporal[1] = vec![0, 0, 0];
        assert!(g.validate().violations().contains(&Violation::WrongRowLength {
            matrix: MatrixKind::Temporal,
            row: 1,
            len: 3,
            expected: 2
        }));

        let mut g = graph(2, &[], &[]);
        g.spatial[0][0] = 1;
        let report = g.validate();
        assert!(report
            .violations()
            .contains(&Violation::NonZeroDiagonal { matrix: MatrixKind::Spatial, index: 0 }));
    }

    #[test]
    fn topological_order_chain() {
        let g = graph(3, &[(0, 1), (1, 2)], &[]);
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn topological_order_ties_break_by_id() {
        let g = graph(3, &[], &[]);
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn topological_order_mixed_matrices() {
        // S: 2->0, T: 2->1; Kahn by hand gives [2, 0, 1].
        let g = graph(3, &[(2, 0)], &[(2, 1)]);
        assert_eq!(g.topological_order().unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn topological_order_detects_cycle() {
        let g = graph(3, &[(0, 1), (1, 2)], &[(2, 0)]);
        match g.topological_order() {
            Err(GraphError::Cycle { cycle }) => assert_eq!(cycle, vec![0, 1, 2]),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn connection_weight_single_channel() {
        let g = graph(2, &[(0, 1)], &[]);
        assert_eq!(g.connection_weight(0, 1).unwrap(), 1);
    }

    #[test]
    fn connection_weight_both_channels() {
        let g = graph(2, &[(0, 1)], &[(1, 0)]);
        assert_eq!(g.connection_weight(0, 1).unwrap(), 2);
    }

    #[test]
    fn connection_weight_unconnected_pair() {
        let g = graph(2, &[], &[]);
        assert_eq!(g.connection_weight(0, 1).unwrap(), 0);
    }

    #[test]
    fn connection_weight_is_symmetric() {
        let g = graph(4, &[(0, 1), (2, 3)], &[(1, 2), (0, 3)]);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(g.connection_weight(i, j).unwrap(), g.connection_weight(j, i).unwrap());
                }
            }
        }
    }

    #[test]
    fn connection_weight_rejects_bad_index() {
        let g = graph(2, &[], &[]);
        assert_eq!(
            g.connection_weight(0, 2),
            Err(GraphError::IndexOutOfRange { id: 2, count: 2 })
        );
    }

    #[test]
    fn answer_equality_rules() {
        assert!(Answer::Numeric(8.0).matches(&Answer::Numeric(8.0)));
        assert!(Answer::Numeric(0.0).matches(&Answer::Numeric(0.0)));
        assert!(!Answer::Numeric(8.0).matches(&Answer::Numeric(9.0)));
        assert!(Answer::Choice('B').matches(&Answer::Choice('B')));
        assert!(!Answer::Choice('B').matches(&Answer::Choice('C')));
        assert!(!Answer::Numeric(2.0).matches(&Answer::Choice('B')));
    }

    #[test]
    fn answer_parse_rules() {
        assert_eq!(Answer::parse(AnswerKind::Numeric, " 42 ").unwrap(), Answer::Numeric(42.0));
        assert_eq!(Answer::parse(AnswerKind::Numeric, "-3.5").unwrap(), Answer::Numeric(-3.5));
        assert_eq!(Answer::parse(AnswerKind::Choice, "C").unwrap(), Answer::Choice('C'));
        assert!(Answer::parse(AnswerKind::Numeric, "").is_err());
        assert!(Answer::parse(AnswerKind::Numeric, "NaN").is_err());
        assert!(Answer::parse(AnswerKind::Choice, "F").is_err());
        assert!(Answer::parse(AnswerKind::Choice, "BB").is_err());
    }
}
