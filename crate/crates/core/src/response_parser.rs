//! The labeled-section text format shared by prompts and completions.
//!
//! One section per line, `<Label>: <text>`, with labels drawn from
//! [`Section`] in canonical order. Prompts group sections into blocks that
//! start with a `Q: <question>` line.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt_builder::PromptStrategy;

const DEFAULT_REFUSAL_MARKERS: &str = include_str!("../assets/refusal_markers.txt");

/// Prefix of the line that opens an exemplar or target block in a prompt.
pub const QUESTION_PREFIX: &str = "Q:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    StandardQuestion,
    Reasoning,
    StandardAnswer,
    NegationLogic,
    Answer,
}

impl Section {
    /// All sections in canonical order.
    pub const ALL: [Section; 5] = [
        Section::StandardQuestion,
        Section::Reasoning,
        Section::StandardAnswer,
        Section::NegationLogic,
        Section::Answer,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Section::StandardQuestion => "Standard question:",
            Section::Reasoning => "Reasoning:",
            Section::StandardAnswer => "Standard answer:",
            Section::NegationLogic => "Negation logic:",
            Section::Answer => "Answer:",
        }
    }

    pub fn from_label(label: &str) -> Option<Section> {
        let label = label.trim();
        let label = label.strip_suffix(':').unwrap_or(label);
        Section::ALL
            .into_iter()
            .find(|s| s.label().trim_end_matches(':') == label)
    }

    /// Splits a line into (section, rest) if it starts with a canonical label.
    fn split_line(line: &str) -> Option<(Section, &str)> {
        let trimmed = line.trim_start();
        Section::ALL
            .into_iter()
            .find_map(|s| trimmed.strip_prefix(s.label()).map(|rest| (s, rest)))
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label().trim_end_matches(':'))
    }
}

pub type SectionList = Vec<(Section, String)>;

/// Renders sections as `<Label> <text>` lines joined by newlines.
///
/// Sections must appear in strictly canonical order and carry non-empty,
/// single-line, trimmed text.
pub fn render_exemplar(sections: &[(Section, String)]) -> Result<String> {
    let mut prev: Option<Section> = None;
    let mut lines = Vec::with_capacity(sections.len());
    for (section, text) in sections {
        if let Some(p) = prev {
            if *section <= p {
                return Err(Error::Sections(format!("{section} after {p} breaks canonical order")));
            }
        }
        if text.is_empty() || text.trim() != text || text.contains('\n') {
            return Err(Error::Sections(format!(
                "{section} text must be non-empty, trimmed, single-line: {text:?}"
            )));
        }
        lines.push(format!("{} {}", section.label(), text));
        prev = Some(*section);
    }
    Ok(lines.join("\n"))
}

/// Same as [`render_exemplar`] but with string labels, rejecting unknown ones.
pub fn render_labeled(sections: &[(&str, &str)]) -> Result<String> {
    let typed = sections
        .iter()
        .map(|(label, text)| {
            Section::from_label(label)
                .map(|s| (s, text.to_string()))
                .ok_or_else(|| Error::Sections(format!("unknown label {label:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    render_exemplar(&typed)
}

/// Groups lines into sections. Lines before the first label are returned
/// separately; unlabeled lines after a label continue that section.
fn split_sections<'a>(lines: impl IntoIterator<Item = &'a str>) -> (Vec<&'a str>, SectionList) {
    let mut leading = Vec::new();
    let mut sections: Vec<(Section, Vec<&str>)> = Vec::new();
    for line in lines {
        if let Some((section, rest)) = Section::split_line(line) {
            sections.push((section, vec![rest]));
        } else if let Some((_, body)) = sections.last_mut() {
            if !line.trim().is_empty() {
                body.push(line);
            }
        } else {
            leading.push(line);
        }
    }
    let sections = sections
        .into_iter()
        .map(|(s, body)| {
            let text = body.iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n");
            (s, text.trim().to_string())
        })
        .collect();
    (leading, sections)
}

/// Trims whitespace and terminal periods. Idempotent.
pub fn strip_answer(text: &str) -> String {
    text.trim_start()
        .trim_end_matches(|c: char| c == '.' || c.is_whitespace())
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub sections: SectionList,
    pub final_answer: String,
    pub no_answer: bool,
    pub raw: String,
}

impl ParsedAnswer {
    /// Whether every section the strategy expects was present. An answer
    /// extracted from a completion that fails this was salvaged.
    pub fn has_full_structure(&self, strategy: PromptStrategy) -> bool {
        strategy
            .required_sections()
            .iter()
            .all(|req| self.sections.iter().any(|(s, _)| s == req))
    }
}

/// Refusal phrases that count as "no answer", matched case-insensitively
/// against the whole final answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalMarkers {
    markers: Vec<String>,
}

fn normalize_marker(text: &str) -> String {
    let lowered = text.replace('\u{2019}', "'").to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', '!', '?']).trim().to_string()
}

impl Default for RefusalMarkers {
    fn default() -> Self {
        Self::from_text(DEFAULT_REFUSAL_MARKERS)
    }
}

impl RefusalMarkers {
    pub fn from_text(text: &str) -> Self {
        let markers = text
            .lines()
            .map(normalize_marker)
            .filter(|m| !m.is_empty() && !m.starts_with('#'))
            .collect();
        Self { markers }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    pub fn matches(&self, answer: &str) -> bool {
        let norm = normalize_marker(answer);
        self.markers.contains(&norm)
    }

    pub fn markers(&self) -> &[String] {
        &self.markers
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(self.markers.join("\n"))
    }
}

/// Extracts the final answer from a completion. Never fails; unusable
/// completions come back with `no_answer = true`.
///
/// Few-shot completions answer on their first non-blank line. Chain-of-thought
/// completions are split on section labels and the last `Answer:` wins; text
/// after a line opening a new `Q:` block is ignored.
pub fn parse_completion(text: &str, strategy: PromptStrategy, markers: &RefusalMarkers) -> ParsedAnswer {
    let (sections, final_answer) = match strategy {
        PromptStrategy::FewShot => {
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            match Section::split_line(first) {
                Some((Section::Answer, rest)) => {
                    let rest = rest.trim().to_string();
                    (vec![(Section::Answer, rest.clone())], rest)
                }
                _ => (Vec::new(), first.to_string()),
            }
        }
        _ => {
            let body = text
                .lines()
                .enumerate()
                .take_while(|(i, l)| *i == 0 || !l.trim_start().starts_with(QUESTION_PREFIX))
                .map(|(_, l)| l);
            let (_, sections) = split_sections(body);
            let last = sections
                .iter()
                .rev()
                .find(|(s, _)| *s == Section::Answer)
                .map(|(_, t)| t.lines().next().unwrap_or("").to_string())
                .unwrap_or_default();
            (sections, last)
        }
    };
    let final_answer = strip_answer(&final_answer);
    let mut parsed = ParsedAnswer {
        sections,
        final_answer,
        no_answer: false,
        raw: text.to_string(),
    };
    parsed.no_answer = is_no_answer(&parsed, markers);
    parsed
}

/// True iff the final answer is empty or is one of the refusal markers.
pub fn is_no_answer(parsed: &ParsedAnswer, markers: &RefusalMarkers) -> bool {
    parsed.final_answer.trim().is_empty() || markers.matches(&parsed.final_answer)
}

/// One `Q:` block of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBlock {
    pub question: String,
    pub sections: SectionList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub preamble: String,
    pub blocks: Vec<PromptBlock>,
}

impl ParsedPrompt {
    /// All blocks except the trailing target block.
    pub fn exemplars(&self) -> &[PromptBlock] {
        match self.blocks.split_last() {
            Some((_, rest)) => rest,
            None => &[],
        }
    }

    pub fn target(&self) -> Option<&PromptBlock> {
        self.blocks.last()
    }
}

/// Splits rendered prompt text back into preamble and `Q:` blocks.
pub fn parse_prompt(text: &str) -> ParsedPrompt {
    let mut preamble = Vec::new();
    let mut raw_blocks: Vec<(String, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        if let Some(q) = line.strip_prefix(QUESTION_PREFIX) {
            raw_blocks.push((q.trim().to_string(), Vec::new()));
        } else if let Some((_, body)) = raw_blocks.last_mut() {
            body.push(line);
        } else {
            preamble.push(line);
        }
    }
    let blocks = raw_blocks
        .into_iter()
        .map(|(question, body)| PromptBlock {
            question,
            sections: split_sections(body).1,
        })
        .collect();
    ParsedPrompt {
        preamble: preamble.join("\n").trim().to_string(),
        blocks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(section: Section, text: &str) -> (Section, String) {
        (section, text.to_string())
    }

    fn full() -> SectionList {
        vec![
            s(Section::StandardQuestion, "What can be a curved yellow fruit?"),
            s(Section::Reasoning, "Bananas are curved and yellow."),
            s(Section::StandardAnswer, "banana"),
            s(Section::NegationLogic, "Anything but a banana that is still a fruit."),
            s(Section::Answer, "apple"),
        ]
    }

    #[test]
    fn renders_five_lines_in_order() {
        let text = render_exemplar(&full()).unwrap();
        let labels: Vec<&str> = text.lines().map(|l| l.split(':').next().unwrap()).collect();
        assert_eq!(
            labels,
            ["Standard question", "Reasoning", "Standard answer", "Negation logic", "Answer"]
        );
    }

    #[test]
    fn renders_single_answer() {
        assert_eq!(render_exemplar(&[s(Section::Answer, "apple")]).unwrap(), "Answer: apple");
    }

    #[test]
    fn rejects_out_of_order_and_unknown() {
        assert!(render_exemplar(&[s(Section::Answer, "a"), s(Section::Reasoning, "b")]).is_err());
        assert!(render_exemplar(&[s(Section::Answer, "a"), s(Section::Answer, "b")]).is_err());
        assert!(render_labeled(&[("Conclusion", "x")]).is_err());
        assert_eq!(render_labeled(&[("Answer:", "x")]).unwrap(), "Answer: x");
    }

    #[test]
    fn round_trip_full() {
        let m = RefusalMarkers::default();
        let parsed = parse_completion(&render_exemplar(&full()).unwrap(), PromptStrategy::CoTFull, &m);
        assert_eq!(parsed.sections, full());
        assert_eq!(parsed.final_answer, "apple");
        assert!(!parsed.no_answer);
        assert!(parsed.has_full_structure(PromptStrategy::CoTFull));
    }

    #[test]
    fn refusal_is_no_answer() {
        let m = RefusalMarkers::default();
        let parsed = parse_completion("Answer: I don't know.", PromptStrategy::CoTFull, &m);
        assert_eq!(parsed.final_answer, "I don't know");
        assert!(parsed.no_answer);
        assert!(parse_completion("Answer: I DON’T KNOW", PromptStrategy::CoTFull, &m).no_answer);
        assert!(parse_completion(" unknown", PromptStrategy::FewShot, &m).no_answer);
        assert!(!parse_completion(" unknown territory", PromptStrategy::FewShot, &m).no_answer);
    }

    #[test]
    fn missing_answer_label_keeps_sections() {
        let m = RefusalMarkers::default();
        let parsed = parse_completion(
            "Standard question: Where is a fridge located?\nReasoning: It keeps food cold.",
            PromptStrategy::CoTFull,
            &m,
        );
        assert!(parsed.no_answer);
        assert_eq!(parsed.sections.len(), 2);
        assert_eq!(parsed.final_answer, "");
    }

    #[test]
    fn last_answer_wins_and_next_question_is_ignored() {
        let m = RefusalMarkers::default();
        let text = "Reasoning: hmm\nAnswer: pear\nAnswer: apple.\nMore about apples.\nQ: What else?\nAnswer: kiwi";
        let parsed = parse_completion(text, PromptStrategy::CoTNoNegationLogic, &m);
        assert_eq!(parsed.final_answer, "apple");
        assert!(parsed.has_full_structure(PromptStrategy::CoTNoNegationLogic));
        assert!(!parsed.has_full_structure(PromptStrategy::CoTFull));
    }

    #[test]
    fn few_shot_takes_first_line() {
        let m = RefusalMarkers::default();
        let parsed = parse_completion(" swimming pool.\n\nQ: next", PromptStrategy::FewShot, &m);
        assert_eq!(parsed.final_answer, "swimming pool");
        assert!(parse_completion("", PromptStrategy::FewShot, &m).no_answer);
        assert_eq!(
            parse_completion("Answer: apple\n", PromptStrategy::FewShot, &m).final_answer,
            "apple"
        );
    }

    #[test]
    fn custom_marker_list() {
        let m = RefusalMarkers::from_text("unknown\n");
        assert!(parse_completion("Answer: Unknown", PromptStrategy::CoTFull, &m).no_answer);
        assert!(!parse_completion("Answer: N/A", PromptStrategy::CoTFull, &m).no_answer);
    }

    #[test]
    fn prompt_blocks_split() {
        let text = "Intro line.\n\nQ: one?\nAnswer: a\n\nQ: two?\nReasoning: r\nAnswer: b\n\nQ: target?\nAnswer:";
        let p = parse_prompt(text);
        assert_eq!(p.preamble, "Intro line.");
        assert_eq!(p.exemplars().len(), 2);
        assert_eq!(p.exemplars()[1].sections, vec![s(Section::Reasoning, "r"), s(Section::Answer, "b")]);
        let target = p.target().unwrap();
        assert_eq!(target.question, "target?");
        assert_eq!(target.sections, vec![s(Section::Answer, "")]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub(crate) fn section_text() -> impl Strategy<Value = String> {
            "[A-Za-z0-9][A-Za-z0-9 ,.'?!:-]{0,40}"
                .prop_map(|s| s.trim().to_string())
                .prop_filter("non-empty", |s| !s.is_empty())
        }

        fn section_map() -> impl Strategy<Value = SectionList> {
            (proptest::collection::vec(any::<bool>(), 5), proptest::collection::vec(section_text(), 5))
                .prop_map(|(mask, texts)| {
                    Section::ALL
                        .into_iter()
                        .zip(texts)
                        .zip(mask)
                        .filter(|(_, keep)| *keep)
                        .map(|(pair, _)| pair)
                        .collect::<SectionList>()
                })
                .prop_filter("at least one section", |v| !v.is_empty())
        }

        proptest! {
            #[test]
            fn parse_inverts_render(map in section_map()) {
                let text = render_exemplar(&map).unwrap();
                let parsed = parse_completion(&text, PromptStrategy::CoTFull, &RefusalMarkers::default());
                prop_assert_eq!(parsed.sections, map);
            }

            #[test]
            fn parse_is_total(text in "\\PC{0,200}") {
                for strategy in PromptStrategy::ALL {
                    let p = parse_completion(&text, strategy, &RefusalMarkers::default());
                    prop_assert_eq!(p.raw, text.clone());
                }
            }

            #[test]
            fn stripping_is_idempotent(text in "\\PC{0,60}") {
                let once = strip_answer(&text);
                prop_assert_eq!(strip_answer(&once), once.clone());
                let m = RefusalMarkers::default();
                let again = parse_completion(&format!("Answer: {once}"), PromptStrategy::CoTFull, &m);
                if !once.contains('\n') {
                    prop_assert_eq!(again.final_answer, once);
                }
            }
        }
    }
}
