use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::error::{Error, Result};
use crate::verbalizer::QuestionForm;

/// Lowercases, trims, strips terminal punctuation and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | '!' | '?' | ';' | ':') || c.is_whitespace())
        .to_string()
}

/// A finite answer world for one question: the universe `U`, the valid
/// answers `V ⊆ U`, and the correct standard answers `A ⊆ V`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedWorldOracle {
    pub question_id: String,
    #[serde(rename = "U")]
    pub universe: BTreeSet<String>,
    #[serde(rename = "V")]
    pub valid: BTreeSet<String>,
    #[serde(rename = "A")]
    pub standard: BTreeSet<String>,
}

impl ClosedWorldOracle {
    /// Normalizes every member and checks `A ⊆ V ⊆ U` with `U`, `V` non-empty.
    pub fn new<I, S>(question_id: impl Into<String>, universe: I, valid: I, standard: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let norm = |it: I| it.into_iter().map(|s| normalize_answer(s.as_ref())).collect();
        let oracle = Self {
            question_id: question_id.into(),
            universe: norm(universe),
            valid: norm(valid),
            standard: norm(standard),
        };
        oracle.validate()?;
        Ok(oracle)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::OracleInvariant {
                id: self.question_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.universe.is_empty() {
            return fail("U is empty");
        }
        if self.valid.is_empty() {
            return fail("V is empty");
        }
        if !self.valid.is_subset(&self.universe) {
            return fail("V is not a subset of U");
        }
        if !self.standard.is_subset(&self.valid) {
            return fail("A is not a subset of V");
        }
        Ok(())
    }

    /// `A'`, the complement of `A` within `U`.
    pub fn standard_complement(&self) -> BTreeSet<String> {
        self.universe.difference(&self.standard).cloned().collect()
    }

    fn normalized(&self) -> Self {
        let norm = |s: &BTreeSet<String>| s.iter().map(|x| normalize_answer(x)).collect();
        Self {
            question_id: self.question_id.clone(),
            universe: norm(&self.universe),
            valid: norm(&self.valid),
            standard: norm(&self.standard),
        }
    }
}

/// Correct answers to the negated complementary question: `V ∩ A'`.
pub fn nc_answer_set(oracle: &ClosedWorldOracle) -> Result<BTreeSet<String>> {
    oracle.validate()?;
    let complement = oracle.standard_complement();
    Ok(oracle.valid.intersection(&complement).cloned().collect())
}

/// Judges `answer` by set membership after normalization. Standard questions
/// need a member of `A`; negated ones a member of `V ∩ A'`. Non-specific
/// answers of the form "not <member of A>" are wrong for both forms.
pub fn judge_against_oracle(answer: &str, form: QuestionForm, oracle: &ClosedWorldOracle) -> Verdict {
    let answer = normalize_answer(answer);
    if let Some(rest) = answer.strip_prefix("not ") {
        if oracle.standard.contains(rest.trim()) {
            return Verdict::Incorrect;
        }
    }
    let hit = match form {
        QuestionForm::Standard => oracle.standard.contains(&answer),
        QuestionForm::NegatedComplementary => {
            oracle.valid.contains(&answer) && !oracle.standard.contains(&answer)
        }
    };
    if hit {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}

/// Reads oracle worlds from JSON lines `{"question_id","U","V","A"}`.
pub fn load_oracles(path: &Path) -> Result<Vec<ClosedWorldOracle>> {
    let raw: Vec<ClosedWorldOracle> = crate::jsonl::read_all(path)?;
    raw.iter()
        .map(|o| {
            let o = o.normalized();
            o.validate().map(|_| o)
        })
        .collect()
}
