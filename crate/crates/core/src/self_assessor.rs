//! Self-assessment filter: the model judges each question/answer pair and
//! only pairs it calls correct are kept.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm_gateway::{CompletionRequest, Gateway};

pub const ASSESSMENT_EXEMPLARS: usize = 5;
/// Judgments are sampled greedily.
pub const ASSESSMENT_TEMPERATURE: f64 = 0.0;
pub const ASSESSMENT_MAX_TOKENS: u32 = 10;

const DEFAULT_INSTRUCTIONS: &str = include_str!("../assets/assessment/instructions.txt");
const DEFAULT_EXEMPLARS: &str = include_str!("../assets/assessment/exemplars.txt");

const QUESTION_LABEL: &str = "Question:";
const ANSWER_LABEL: &str = "Answer:";
const VERDICT_LABEL: &str = "Verdict:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentExemplar {
    pub question: String,
    pub answer: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessmentAssets {
    pub instructions: String,
    pub exemplars: Vec<AssessmentExemplar>,
}

fn parse_exemplars(text: &str) -> Result<Vec<AssessmentExemplar>> {
    let mut out = Vec::new();
    for block in text.split("\n\n").map(str::trim).filter(|b| !b.is_empty()) {
        let mut question = None;
        let mut answer = None;
        let mut verdict = None;
        for line in block.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix(QUESTION_LABEL) {
                question = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix(ANSWER_LABEL) {
                answer = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix(VERDICT_LABEL) {
                verdict = parse_verdict_token(rest);
            }
        }
        match (question, answer, verdict) {
            (Some(question), Some(answer), Some(correct)) => out.push(AssessmentExemplar {
                question,
                answer,
                correct,
            }),
            _ => {
                return Err(Error::Assets(format!(
                    "assessment exemplar needs Question/Answer/Verdict lines: {block:?}"
                )))
            }
        }
    }
    Ok(out)
}

impl Default for AssessmentAssets {
    fn default() -> Self {
        Self {
            instructions: DEFAULT_INSTRUCTIONS.trim().to_string(),
            exemplars: parse_exemplars(DEFAULT_EXEMPLARS).expect("bundled assessment exemplars parse"),
        }
    }
}

impl AssessmentAssets {
    /// Loads `instructions.txt` and `exemplars.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(Self {
            instructions: read(&dir.join("instructions.txt"))?.trim().to_string(),
            exemplars: parse_exemplars(&read(&dir.join("exemplars.txt"))?)?,
        })
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(format!("{}\n\u{1e}\n{}", self.instructions, self.render_exemplars()))
    }

    fn render_exemplars(&self) -> String {
        self.exemplars
            .iter()
            .map(|e| {
                render_pair(&e.question, &e.answer, Some(if e.correct { "Correct" } else { "Incorrect" }))
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn render_pair(question: &str, answer: &str, verdict: Option<&str>) -> String {
    let verdict = match verdict {
        Some(v) => format!("{VERDICT_LABEL} {v}"),
        None => VERDICT_LABEL.to_string(),
    };
    format!("{QUESTION_LABEL} {question}\n{ANSWER_LABEL} {answer}\n{verdict}")
}

/// Instructions, the five judged exemplars, then the target pair with an
/// empty verdict slot.
pub fn build_assessment_prompt(question: &str, answer: &str, assets: &AssessmentAssets) -> Result<String> {
    if assets.exemplars.len() != ASSESSMENT_EXEMPLARS {
        return Err(Error::Assets(format!(
            "assessment bundle needs exactly {ASSESSMENT_EXEMPLARS} exemplars, has {}",
            assets.exemplars.len()
        )));
    }
    Ok(format!(
        "{}\n\n{}\n\n{}",
        assets.instructions,
        assets.render_exemplars(),
        render_pair(question, answer, None)
    ))
}

fn parse_verdict_token(text: &str) -> Option<bool> {
    let word = text
        .split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty())?
        .to_lowercase();
    match word.as_str() {
        "correct" => Some(true),
        "incorrect" => Some(false),
        _ => None,
    }
}

/// Reads the first verdict token of a judgment. Anything that is not
/// "Correct" or "Incorrect" keeps the answer.
pub fn parse_judgment(raw: &str) -> bool {
    let body = raw.trim_start();
    let body = body.strip_prefix(VERDICT_LABEL).unwrap_or(body);
    parse_verdict_token(body).unwrap_or(true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentVerdict {
    pub keep: bool,
    pub raw_judgment: String,
}

impl AssessmentVerdict {
    pub fn from_judgment(raw: impl Into<String>) -> Self {
        let raw_judgment = raw.into();
        Self {
            keep: parse_judgment(&raw_judgment),
            raw_judgment,
        }
    }
}

/// Anything that can be gated by an assessment.
pub trait Assessable {
    fn question(&self) -> &str;
    fn answer(&self) -> &str;
    fn set_verdict(&mut self, verdict: AssessmentVerdict);
}

pub struct Assessor {
    gateway: Arc<Gateway>,
    assets: AssessmentAssets,
}

impl Assessor {
    pub fn new(gateway: Arc<Gateway>, assets: AssessmentAssets) -> Result<Self> {
        if assets.exemplars.len() != ASSESSMENT_EXEMPLARS {
            return Err(Error::Assets(format!(
                "assessment bundle needs exactly {ASSESSMENT_EXEMPLARS} exemplars, has {}",
                assets.exemplars.len()
            )));
        }
        Ok(Self { gateway, assets })
    }

    pub fn assets(&self) -> &AssessmentAssets {
        &self.assets
    }

    pub fn assess(&self, question: &str, answer: &str) -> Result<AssessmentVerdict> {
        let prompt = build_assessment_prompt(question, answer, &self.assets)?;
        let result = self.gateway.complete(
            &CompletionRequest::new(prompt)
                .temperature(ASSESSMENT_TEMPERATURE)
                .max_tokens(ASSESSMENT_MAX_TOKENS)
                .n(1),
        )?;
        Ok(AssessmentVerdict::from_judgment(
            result.texts.into_iter().next().unwrap_or_default(),
        ))
    }

    /// Annotates every item with its verdict and returns the indices of the
    /// kept ones, in input order.
    pub fn annotate<T: Assessable>(&self, items: &mut [T]) -> Result<Vec<usize>> {
        let mut kept = Vec::new();
        for (i, item) in items.iter_mut().enumerate() {
            let verdict = self.assess(item.question(), item.answer())?;
            if verdict.keep {
                kept.push(i);
            }
            item.set_verdict(verdict);
        }
        Ok(kept)
    }

    /// Keeps the items the model judges correct. Every input item is
    /// annotated; the output preserves input order.
    pub fn filter_answers<T: Assessable + Clone>(&self, items: &mut [T]) -> Result<Vec<T>> {
        let kept = self.annotate(items)?;
        Ok(kept.into_iter().map(|i| items[i].clone()).collect())
    }
}
