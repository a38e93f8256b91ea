//! Synthetic run generation for tests and offline experimentation.
//!
//! Edges are sampled only from lower to higher node id, so every generated
//! graph is acyclic by construction. Generation is fully determined by the
//! seed: the same [`GenSpec`] yields byte-identical serialized output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::trace::{AgentNode, Answer, AnswerKind, ProblemTrace, RunRecord, TraceGraph};

/// Parameters for one synthetic run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    /// Agents per trace, at least 2.
    pub num_agents: usize,
    /// Problems in the run, at least 1.
    pub num_problems: usize,
    /// Independent probability of each lower-to-higher edge, per matrix.
    pub edge_density: f64,
    /// Probability that a node's response contains the gold answer.
    pub correctness_rate: f64,
    /// Distinct filler words available to responses, at least 10.
    pub vocabulary_size: usize,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            num_agents: 4,
            num_problems: 10,
            edge_density: 0.5,
            correctness_rate: 0.8,
            vocabulary_size: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid generator spec: {field} {message}")]
pub struct GenError {
    pub field: &'static str,
    pub message: String,
}

fn gen_error(field: &'static str, message: impl ToString) -> GenError {
    GenError { field, message: message.to_string() }
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.num_agents < 2 {
            return Err(gen_error("num_agents", "must be at least 2"));
        }
        if self.num_problems < 1 {
            return Err(gen_error("num_problems", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(gen_error("edge_density", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.correctness_rate) {
            return Err(gen_error("correctness_rate", "must lie in [0, 1]"));
        }
        if self.vocabulary_size < 10 {
            return Err(gen_error("vocabulary_size", "must be at least 10"));
        }
        Ok(())
    }
}

const ROLES: &[&str] = &["AnalyzeAgent", "CodeWritingAgent", "MathSolverAgent", "AdversarialAgent"];

/// Filler word `i` as a bijective base-26 string ("a".."z", "aa", ...).
/// Letters only, so filler text never interferes with numeric answer
/// extraction.
fn vocab_word(mut i: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (i % 26) as u8);
        i /= 26;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii letters")
}

/// Generate a deterministic synthetic run. Every trace graph validates
/// cleanly; the fraction of correct nodes approaches `correctness_rate` as
/// the run grows.
pub fn generate_synthetic_run(spec: &GenSpec) -> Result<RunRecord, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_agents;

    let traces = (0..spec.num_problems)
        .map(|p| {
            let gold: u32 = rng.random_range(1..=999);

            let mut spatial = vec![vec![0u8; n]; n];
            let mut temporal = vec![vec![0u8; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(spec.edge_density) {
                        spatial[i][j] = 1;
                    }
                    if rng.random_bool(spec.edge_density) {
                        temporal[i][j] = 1;
                    }
                }
            }

            let question = format!("problem {p}: what value remains?");
            let nodes = (0..n)
                .map(|id| {
                    let filler_len = rng.random_range(3..=8);
                    let mut words: Vec<String> = (0..filler_len)
                        .map(|_| vocab_word(rng.random_range(0..spec.vocabulary_size)))
                        .collect();
                    let correct = rng.random_bool(spec.correctness_rate);
                    if correct {
                        words.push(format!("the answer is {gold}"));
                    } else if rng.random_bool(0.5) {
                        // A wrong numeral, never equal to gold.
                        words.push(format!("the answer is {}", gold + 1 + rng.random_range(0..9)));
                    }
                    AgentNode {
                        node_id: id,
                        role: ROLES[id % ROLES.len()].to_string(),
                        prompt: question.clone(),
                        response: words.join(" "),
                        prompt_tokens: rng.random_range(50..=500),
                        completion_tokens: rng.random_range(10..=200),
                        is_final: id == n - 1,
                    }
                })
                .collect();

            ProblemTrace {
                problem_id: format!("p{p:04}"),
                question,
                gold_answer: Answer::Numeric(f64::from(gold)),
                graph: TraceGraph { nodes, spatial, temporal },
            }
        })
        .collect();

    Ok(RunRecord {
        method: "synthetic".to_string(),
        model: "none".to_string(),
        benchmark: "synthetic".to_string(),
        answer_kind: AnswerKind::Numeric,
        traces,
    })
}
