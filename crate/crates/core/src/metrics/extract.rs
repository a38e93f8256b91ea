//! Answer extraction from free-form agent responses.
//!
//! Numeric answers follow the last-numeral convention common to grade-school
//! math benchmarks; choice answers take the last standalone letter A-E,
//! whether parenthesized like "(B)" or a solitary capital token. Extractors
//! are registered per answer kind so callers can swap in their own rules.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use crate::trace::{Answer, AnswerKind};

/// An extraction rule: text in, answer (or absence) out.
pub type ExtractorFn = fn(&str) -> Option<Answer>;

/// Extraction rules keyed by answer kind.
#[derive(Debug, Clone)]
pub struct ExtractorRegistry {
    extractors: BTreeMap<AnswerKind, ExtractorFn>,
}

impl Default for ExtractorRegistry {
    fn default() -> Self {
        let mut extractors: BTreeMap<AnswerKind, ExtractorFn> = BTreeMap::new();
        extractors.insert(AnswerKind::Numeric, last_numeric_answer);
        extractors.insert(AnswerKind::Choice, last_choice_answer);
        ExtractorRegistry { extractors }
    }
}

impl ExtractorRegistry {
    /// Replace the rule for one kind.
    pub fn with_extractor(mut self, kind: AnswerKind, extractor: ExtractorFn) -> Self {
        self.extractors.insert(kind, extractor);
        self
    }

    pub fn extract(&self, kind: AnswerKind, text: &str) -> Option<Answer> {
        self.extractors.get(&kind).and_then(|f| f(text))
    }
}

/// Extract with the default registry. Absence is a value, not an error.
pub fn extract_answer(text: &str, kind: AnswerKind) -> Option<Answer> {
    match kind {
        AnswerKind::Numeric => last_numeric_answer(text),
        AnswerKind::Choice => last_choice_answer(text),
    }
}

/// The last decimal numeral in the text: optional sign, optional decimal
/// point, commas stripped from digit groups.
pub fn last_numeric_answer(text: &str) -> Option<Answer> {
    static NUMERAL: OnceLock<Regex> = OnceLock::new();
    let re = NUMERAL.get_or_init(|| {
        Regex::new(r"[+-]?\d[\d,]*(?:\.\d+)?").expect("numeral pattern compiles")
    });
    let raw = re.find_iter(text).last()?.as_str().replace(',', "");
    let value: f64 = raw.parse().ok()?;
    value.is_finite().then_some(Answer::Numeric(value))
}

/// The last standalone letter A-E: a maximal alphanumeric run that is exactly
/// one uppercase letter in that range (which covers both "(B)" and a bare
/// "B" token).
pub fn last_choice_answer(text: &str) -> Option<Answer> {
    let mut last = None;
    let mut run_start: Option<usize> = None;
    let mut run_len = 0usize;
    let mut run_char = ' ';
    for (offset, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(offset);
                run_len = 0;
                run_char = ch;
            }
            run_len += 1;
        } else if run_start.take().is_some() && run_len == 1 && ('A'..='E').contains(&run_char) {
            last = Some(run_char);
        }
    }
    if run_start.is_some() && run_len == 1 && ('A'..='E').contains(&run_char) {
        last = Some(run_char);
    }
    last.map(Answer::Choice)
}
