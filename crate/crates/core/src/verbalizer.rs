//! Rendering triples as standard or negated complementary questions.
//!
//! Templates are data: a tab-separated asset with one
//! `relation <TAB> form <TAB> pattern` record per line. The bundled default
//! covers both forms of the ten canonical relations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::triple_store::{Relation, Triple};

pub const HEAD_PLACEHOLDER: &str = "[head]";
pub const ANSWER_PLACEHOLDER: &str = "[answer]";

const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.tsv");
const DEFAULT_SENTENCES: &str = include_str!("../assets/sentences.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionForm {
    Standard,
    NegatedComplementary,
}

impl QuestionForm {
    pub const BOTH: [QuestionForm; 2] = [QuestionForm::Standard, QuestionForm::NegatedComplementary];

    pub fn slug(self) -> &'static str {
        match self {
            QuestionForm::Standard => "standard",
            QuestionForm::NegatedComplementary => "negated_complementary",
        }
    }
}

impl fmt::Display for QuestionForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for QuestionForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standard" | "std" => Ok(QuestionForm::Standard),
            "negated_complementary" | "negated" | "nc" => Ok(QuestionForm::NegatedComplementary),
            other => Err(Error::InvalidTemplate(format!("unknown question form {other:?}"))),
        }
    }
}

/// True if `text` contains the word "not" or "cannot" (case-insensitive).
pub fn has_negation_token(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .any(|w| w.eq_ignore_ascii_case("not") || w.eq_ignore_ascii_case("cannot"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    pub relation: Relation,
    pub form: QuestionForm,
    pub pattern: String,
}

impl QuestionTemplate {
    pub fn new(relation: Relation, form: QuestionForm, pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        if !pattern.contains(HEAD_PLACEHOLDER) {
            return Err(Error::InvalidTemplate(format!(
                "({relation}, {form}) pattern {pattern:?} has no {HEAD_PLACEHOLDER} placeholder"
            )));
        }
        let negated = has_negation_token(&pattern.replace(HEAD_PLACEHOLDER, " "));
        match form {
            QuestionForm::NegatedComplementary if !negated => {
                return Err(Error::InvalidTemplate(format!(
                    "({relation}, {form}) pattern {pattern:?} has no negation token"
                )))
            }
            QuestionForm::Standard if negated => {
                return Err(Error::InvalidTemplate(format!(
                    "({relation}, {form}) pattern {pattern:?} must not contain a negation token"
                )))
            }
            _ => {}
        }
        Ok(Self { relation, form, pattern })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizedQuestion {
    pub triple_id: String,
    pub form: QuestionForm,
    pub text: String,
    pub relation: Relation,
}

/// Parses `relation <TAB> form <TAB> pattern` lines; `#` starts a comment line.
fn parse_table(text: &str) -> Result<Vec<(Relation, QuestionForm, String)>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(rel), Some(form), Some(pattern)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::InvalidTemplate(format!("line {}: expected 3 tab-separated columns", idx + 1)));
        };
        let relation: Relation = rel.parse().unwrap_or_else(|never| match never {});
        rows.push((relation, form.parse()?, pattern.to_string()));
    }
    Ok(rows)
}

/// Question templates keyed by (relation, form).
#[derive(Debug, Clone, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(String, QuestionForm), QuestionTemplate>,
    normalize_punctuation: bool,
}

impl TemplateRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled table for the ten canonical relations.
    pub fn default_templates() -> Self {
        Self::from_asset_text(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn from_asset_text(text: &str) -> Result<Self> {
        let mut reg = Self::empty();
        for (relation, form, pattern) in parse_table(text)? {
            reg.register(QuestionTemplate::new(relation, form, pattern)?);
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_asset_text(&text)
    }

    /// Appends a `?` to rendered questions that lack terminal punctuation.
    pub fn with_normalized_punctuation(mut self, on: bool) -> Self {
        self.normalize_punctuation = on;
        self
    }

    pub fn register(&mut self, template: QuestionTemplate) {
        self.templates
            .insert((template.relation.name().to_string(), template.form), template);
    }

    pub fn register_pair(&mut self, relation: Relation, standard: &str, negated: &str) -> Result<()> {
        self.register(QuestionTemplate::new(relation.clone(), QuestionForm::Standard, standard)?);
        self.register(QuestionTemplate::new(relation, QuestionForm::NegatedComplementary, negated)?);
        Ok(())
    }

    pub fn has_relation(&self, relation: &Relation) -> bool {
        QuestionForm::BOTH
            .iter()
            .any(|form| self.templates.contains_key(&(relation.name().to_string(), *form)))
    }

    pub fn relations(&self) -> Vec<String> {
        let mut names: Vec<String> = self.templates.keys().map(|(r, _)| r.clone()).collect();
        names.dedup();
        names
    }

    pub fn template_for(&self, relation: &Relation, form: QuestionForm) -> Result<&QuestionTemplate> {
        self.templates
            .get(&(relation.name().to_string(), form))
            .ok_or_else(|| Error::UnregisteredTemplate {
                relation: relation.to_string(),
                form: form.to_string(),
                registered: self.relations().join(", "),
            })
    }

    /// Canonical text form of the registry, used for hashing.
    pub fn to_asset_text(&self) -> String {
        let mut out = String::new();
        for t in self.templates.values() {
            out.push_str(&format!("{}\t{}\t{}\n", t.relation, t.form, t.pattern));
        }
        if self.normalize_punctuation {
            out.push_str("# normalize_punctuation\n");
        }
        out
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(self.to_asset_text())
    }

    pub fn verbalize(&self, triple: &Triple, form: QuestionForm) -> Result<VerbalizedQuestion> {
        let template = self.template_for(&triple.relation, form)?;
        let mut text = template.pattern.replace(HEAD_PLACEHOLDER, &triple.head);
        if self.normalize_punctuation && !text.trim_end().ends_with(['?', '.', '!']) {
            text = format!("{}?", text.trim_end());
        }
        Ok(VerbalizedQuestion {
            triple_id: triple.id.clone(),
            form,
            text,
            relation: triple.relation.clone(),
        })
    }
}

/// Renders `triple` as a question of the given form using `registry`.
pub fn verbalize(registry: &TemplateRegistry, triple: &Triple, form: QuestionForm) -> Result<VerbalizedQuestion> {
    registry.verbalize(triple, form)
}

/// Statement templates that turn a (head, answer) pair into one sentence for
/// human annotators, e.g. "PersonX sends PersonY away. PersonX does not feel amused."
#[derive(Debug, Clone)]
pub struct SentenceTemplates {
    patterns: BTreeMap<(String, QuestionForm), String>,
}

impl Default for SentenceTemplates {
    fn default() -> Self {
        Self::from_asset_text(DEFAULT_SENTENCES).expect("bundled sentence templates are valid")
    }
}

impl SentenceTemplates {
    pub fn from_asset_text(text: &str) -> Result<Self> {
        let mut patterns = BTreeMap::new();
        for (relation, form, pattern) in parse_table(text)? {
            if !pattern.contains(ANSWER_PLACEHOLDER) {
                return Err(Error::InvalidTemplate(format!(
                    "sentence pattern for ({relation}, {form}) has no {ANSWER_PLACEHOLDER} placeholder"
                )));
            }
            patterns.insert((relation.name().to_string(), form), pattern);
        }
        Ok(Self { patterns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_asset_text(&text)
    }

    /// Falls back to "<question> <answer>." for relations without a sentence pattern.
    pub fn render(&self, head: &str, relation: &Relation, form: QuestionForm, question: &str, answer: &str) -> String {
        match self.patterns.get(&(relation.name().to_string(), form)) {
            Some(p) => p.replace(HEAD_PLACEHOLDER, head).replace(ANSWER_PLACEHOLDER, answer),
            None => format!("{} {}.", question.trim_end(), answer),
        }
    }
}
