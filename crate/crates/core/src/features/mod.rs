//! Syntactic (TF-IDF) and semantic (embedding) feature channels, and the
//! pairwise similarity matrices built from them.
//!
//! Both channels reduce to pairwise cosine similarity; the total similarity
//! is the convex combination `lambda1 * syntactic + lambda2 * semantic`.
//! Raw cosines are clamped to [0, 1] so the diversity score stays in range
//! under any embedding provider, and any similarity involving an all-zero
//! vector is 0 (an empty response counts as fully dissimilar rather than
//! failing).

mod provider;

pub use provider::{
    build_provider, EmbedError, EmbeddingProvider, LocalHashProvider, ProviderKind, RemoteConfig,
    RemoteHttpProvider, EMBED_API_KEY_ENV, EMBED_URL_ENV, LOCAL_EMBEDDING_DIM,
};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("similarity matrices have different dimensions: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid lambda weights: {0}")]
    InvalidLambda(String),
}

/// Lowercased maximal runs of Unicode letters and digits, in text order.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// A sparse L2-normalized TF-IDF vector; the norm is 1 unless the document
/// produced no tokens, in which case the vector is empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermVector {
    weights: BTreeMap<String, f64>,
}

impl TermVector {
    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TermVector) -> f64 {
        // Iterate the smaller map.
        let (a, b) = if self.weights.len() <= other.weights.len() {
            (&self.weights, &other.weights)
        } else {
            (&other.weights, &self.weights)
        };
        a.iter().filter_map(|(term, w)| b.get(term).map(|v| w * v)).sum()
    }
}

/// TF-IDF vectors for one graph's responses. The corpus is exactly the given
/// documents: tf is the raw term count, idf is `ln((1+N)/(1+df)) + 1`, and
/// each vector is L2-normalized. Documents with no tokens stay all-zero.
pub fn tfidf_vectors<S: AsRef<str>>(documents: &[S]) -> Vec<TermVector> {
    let n = documents.len();
    let token_lists: Vec<Vec<String>> = documents.iter().map(|d| tokenize(d.as_ref())).collect();

    let mut document_frequency: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &token_lists {
        let unique: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for term in unique {
            *document_frequency.entry(term).or_insert(0) += 1;
        }
    }

    token_lists
        .iter()
        .map(|tokens| {
            let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
            for term in tokens {
                *counts.entry(term).or_insert(0.0) += 1.0;
            }
            let mut weights: BTreeMap<String, f64> = counts
                .into_iter()
                .map(|(term, tf)| {
                    let df = document_frequency[term] as f64;
                    let idf = ((1.0 + n as f64) / (1.0 + df)).ln() + 1.0;
                    (term.to_string(), tf * idf)
                })
                .collect();
            let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for w in weights.values_mut() {
                    *w /= norm;
                }
            }
            TermVector { weights }
        })
        .collect()
}

/// A dense embedding of provider-declared dimension. Entries are finite by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Wrap raw provider output, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { index });
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "embedding dimensions must agree");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Anything cosine similarity can be computed over.
pub trait CosineVector {
    fn dot(&self, other: &Self) -> f64;
    fn norm(&self) -> f64;
}

impl CosineVector for TermVector {
    fn dot(&self, other: &Self) -> f64 {
        TermVector::dot(self, other)
    }

    fn norm(&self) -> f64 {
        self.l2_norm()
    }
}

impl CosineVector for EmbeddingVector {
    fn dot(&self, other: &Self) -> f64 {
        EmbeddingVector::dot(self, other)
    }

    fn norm(&self) -> f64 {
        self.l2_norm()
    }
}

/// Symmetric N x N matrix of pairwise similarities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn zeros(dim: usize) -> Self {
        SimilarityMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
    }

    /// Set (i,j) and (j,i) at once.
    pub fn set_symmetric(&mut self, i: usize, j: usize, value: f64) {
        self.set(i, j, value);
        self.set(j, i, value);
    }
}

/// Pairwise clamped cosine similarity. Entry (i,j) is
/// `clamp(cos(v_i, v_j), 0, 1)`; any pair involving an all-zero vector is 0,
/// including that vector's diagonal entry.
pub fn pairwise_similarity<V: CosineVector>(vectors: &[V]) -> SimilarityMatrix {
    let n = vectors.len();
    let norms: Vec<f64> = vectors.iter().map(CosineVector::norm).collect();
    let mut matrix = SimilarityMatrix::zeros(n);
    for i in 0..n {
        if norms[i] > 0.0 {
            matrix.set(i, i, 1.0);
        }
        for j in (i + 1)..n {
            let value = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                (vectors[i].dot(&vectors[j]) / (norms[i] * norms[j])).clamp(0.0, 1.0)
            };
            matrix.set_symmetric(i, j, value);
        }
    }
    matrix
}

/// Convex weights blending the syntactic and semantic channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaWeights {
    syntactic: f64,
    semantic: f64,
}

impl LambdaWeights {
    const SUM_TOLERANCE: f64 = 1e-12;

    /// Build from the syntactic weight; the semantic weight is `1 - lambda1`.
    pub fn from_syntactic(lambda1: f64) -> Result<Self, FeatureError> {
        if !(0.0..=1.0).contains(&lambda1) {
            return Err(FeatureError::InvalidLambda(format!("lambda1 {lambda1} outside [0, 1]")));
        }
        Ok(LambdaWeights { syntactic: lambda1, semantic: 1.0 - lambda1 })
    }

    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, FeatureError> {
        if !(0.0..=1.0).contains(&lambda1) || !(0.0..=1.0).contains(&lambda2) {
            return Err(FeatureError::InvalidLambda(format!(
                "weights ({lambda1}, {lambda2}) outside [0, 1]"
            )));
        }
        if (lambda1 + lambda2 - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(FeatureError::InvalidLambda(format!(
                "weights ({lambda1}, {lambda2}) do not sum to 1"
            )));
        }
        Ok(LambdaWeights { syntactic: lambda1, semantic: lambda2 })
    }

    pub fn syntactic(&self) -> f64 {
        self.syntactic
    }

    pub fn semantic(&self) -> f64 {
        self.semantic
    }
}

impl Default for LambdaWeights {
    /// Equal weighting of both channels.
    fn default() -> Self {
        LambdaWeights { syntactic: 0.5, semantic: 0.5 }
    }
}

/// Entrywise `lambda1 * syntactic + lambda2 * semantic`. The result of the
/// convex combination is clamped only to absorb float round-off at the
/// boundaries.
pub fn combine_similarity(
    syntactic: &SimilarityMatrix,
    semantic: &SimilarityMatrix,
    weights: LambdaWeights,
) -> Result<SimilarityMatrix, FeatureError> {
    if syntactic.dim() != semantic.dim() {
        return Err(FeatureError::DimensionMismatch {
            left: syntactic.dim(),
            right: semantic.dim(),
        });
    }
    let dim = syntactic.dim();
    let mut out = SimilarityMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let value = weights.syntactic * syntactic.get(i, j)
                + weights.semantic * semantic.get(i, j);
            out.set(i, j, value.clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
