//! Few-shot and chain-of-thought prompt assembly.
//!
//! An asset bundle holds two preambles and a list of fully worked exemplars
//! (question plus all five sections). Each strategy shows a projection of the
//! same exemplars, so every strategy asks the same exemplar questions.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response_parser::{parse_prompt, render_exemplar, Section, SectionList, QUESTION_PREFIX};
use crate::verbalizer::{QuestionForm, VerbalizedQuestion};

/// Exemplars shown in every prompt.
pub const EXEMPLARS_PER_PROMPT: usize = 5;

const DEFAULT_PREAMBLE: &str = include_str!("../assets/prompts/preamble.txt");
const DEFAULT_PREAMBLE_STANDARD: &str = include_str!("../assets/prompts/preamble_standard.txt");
const DEFAULT_EXEMPLARS: [&str; 5] = [
    include_str!("../assets/prompts/exemplars/01.txt"),
    include_str!("../assets/prompts/exemplars/02.txt"),
    include_str!("../assets/prompts/exemplars/03.txt"),
    include_str!("../assets/prompts/exemplars/04.txt"),
    include_str!("../assets/prompts/exemplars/05.txt"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    FewShot,
    CoTFull,
    CoTNoNegationLogic,
    CoTStandard,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::FewShot,
        PromptStrategy::CoTFull,
        PromptStrategy::CoTNoNegationLogic,
        PromptStrategy::CoTStandard,
    ];

    pub fn required_sections(self) -> &'static [Section] {
        match self {
            PromptStrategy::FewShot => &[Section::Answer],
            PromptStrategy::CoTFull => &Section::ALL,
            PromptStrategy::CoTNoNegationLogic | PromptStrategy::CoTStandard => {
                &[Section::Reasoning, Section::Answer]
            }
        }
    }

    /// Whether the strategy can target questions of `form`.
    pub fn accepts(self, form: QuestionForm) -> bool {
        match self {
            PromptStrategy::FewShot => true,
            PromptStrategy::CoTFull | PromptStrategy::CoTNoNegationLogic => {
                form == QuestionForm::NegatedComplementary
            }
            PromptStrategy::CoTStandard => form == QuestionForm::Standard,
        }
    }

    pub fn is_chain_of_thought(self) -> bool {
        self != PromptStrategy::FewShot
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStrategy::FewShot => "few_shot",
            PromptStrategy::CoTFull => "cot_full",
            PromptStrategy::CoTNoNegationLogic => "cot_no_negation_logic",
            PromptStrategy::CoTStandard => "cot_standard",
        })
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptStrategy::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown prompt strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub sections: SectionList,
}

impl Exemplar {
    fn section(&self, wanted: Section) -> Option<&String> {
        self.sections.iter().find(|(s, _)| *s == wanted).map(|(_, t)| t)
    }

    /// Projects a fully worked exemplar onto what `strategy` shows for a
    /// target of `form`. Sections missing from `self` stay missing.
    pub fn project(&self, strategy: PromptStrategy, form: QuestionForm) -> Exemplar {
        let standard = form == QuestionForm::Standard || strategy == PromptStrategy::CoTStandard;
        let question = if standard {
            self.section(Section::StandardQuestion).cloned().unwrap_or_default()
        } else {
            self.question.clone()
        };
        let pick = |pairs: &[(Section, Section)]| -> SectionList {
            pairs
                .iter()
                .filter_map(|(shown_as, from)| self.section(*from).map(|t| (*shown_as, t.clone())))
                .collect()
        };
        let sections = match (strategy, standard) {
            (PromptStrategy::CoTFull, _) => self.sections.clone(),
            (PromptStrategy::CoTNoNegationLogic, _) => {
                pick(&[(Section::Reasoning, Section::Reasoning), (Section::Answer, Section::Answer)])
            }
            (PromptStrategy::CoTStandard, _) => pick(&[
                (Section::Reasoning, Section::Reasoning),
                (Section::Answer, Section::StandardAnswer),
            ]),
            (PromptStrategy::FewShot, true) => pick(&[(Section::Answer, Section::StandardAnswer)]),
            (PromptStrategy::FewShot, false) => pick(&[(Section::Answer, Section::Answer)]),
        };
        Exemplar { question, sections }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "section", rename_all = "snake_case")]
pub enum Finding {
    EmptyQuestion,
    Missing(Section),
    Extra(Section),
    Empty(Section),
    Duplicate(Section),
    OutOfOrder(Section),
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::EmptyQuestion => write!(f, "empty question"),
            Finding::Missing(s) => write!(f, "missing section {s}"),
            Finding::Extra(s) => write!(f, "unexpected section {s}"),
            Finding::Empty(s) => write!(f, "empty section {s}"),
            Finding::Duplicate(s) => write!(f, "duplicate section {s}"),
            Finding::OutOfOrder(s) => write!(f, "section {s} out of order"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.findings.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks that `exemplar` carries exactly the sections `strategy` needs,
/// in order, with no empty text. An empty report means valid.
pub fn validate_exemplar(exemplar: &Exemplar, strategy: PromptStrategy) -> ValidationReport {
    let mut findings = Vec::new();
    if exemplar.question.trim().is_empty() {
        findings.push(Finding::EmptyQuestion);
    }
    let required = strategy.required_sections();
    let mut seen: Vec<Section> = Vec::new();
    for (section, text) in &exemplar.sections {
        if seen.contains(section) {
            findings.push(Finding::Duplicate(*section));
            continue;
        }
        if seen.last().is_some_and(|prev| prev > section) {
            findings.push(Finding::OutOfOrder(*section));
        }
        seen.push(*section);
        if !required.contains(section) {
            findings.push(Finding::Extra(*section));
        } else if text.trim().is_empty() {
            findings.push(Finding::Empty(*section));
        }
    }
    for req in required {
        if !seen.contains(req) {
            findings.push(Finding::Missing(*req));
        }
    }
    ValidationReport { findings }
}

/// Preambles plus fully worked exemplars, with a content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssets {
    pub preamble: String,
    pub preamble_standard: String,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    version: String,
    hash: String,
}

fn parse_exemplar_file(name: &str, text: &str) -> Result<Exemplar> {
    let parsed = parse_prompt(text);
    match parsed.blocks.as_slice() {
        [block] => Ok(Exemplar {
            question: block.question.clone(),
            sections: block.sections.clone(),
        }),
        other => Err(Error::Assets(format!(
            "{name}: expected exactly one `{QUESTION_PREFIX}` block, found {}",
            other.len()
        ))),
    }
}

impl Default for PromptAssets {
    fn default() -> Self {
        let exemplars = DEFAULT_EXEMPLARS
            .iter()
            .enumerate()
            .map(|(i, text)| parse_exemplar_file(&format!("{:02}.txt", i + 1), text))
            .collect::<Result<Vec<_>>>()
            .expect("bundled exemplars parse");
        Self {
            preamble: DEFAULT_PREAMBLE.trim().to_string(),
            preamble_standard: DEFAULT_PREAMBLE_STANDARD.trim().to_string(),
            exemplars,
        }
    }
}

impl PromptAssets {
    /// Loads `preamble.txt`, `preamble_standard.txt` and `exemplars/*.txt`
    /// (file-name order). A `manifest.json` with a `hash` must match.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let preamble = read(&dir.join("preamble.txt"))?.trim().to_string();
        let preamble_standard = read(&dir.join("preamble_standard.txt"))?.trim().to_string();
        let ex_dir = dir.join("exemplars");
        let mut files: Vec<_> = fs::read_dir(&ex_dir)
            .map_err(|e| Error::io(&ex_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        let exemplars = files
            .iter()
            .map(|p| parse_exemplar_file(&p.display().to_string(), &read(p)?))
            .collect::<Result<Vec<_>>>()?;
        let assets = Self {
            preamble,
            preamble_standard,
            exemplars,
        };
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            let manifest: BundleManifest = serde_json::from_str(&read(&manifest_path)?)
                .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;
            if manifest.hash != assets.hash() {
                return Err(Error::Assets(format!(
                    "{} declares hash {} but contents hash to {}",
                    manifest_path.display(),
                    manifest.hash,
                    assets.hash()
                )));
            }
        }
        Ok(assets)
    }

    /// Writes the bundle in the layout [`PromptAssets::load_dir`] reads.
    pub fn write_dir(&self, dir: &Path, version: &str) -> Result<()> {
        let ex_dir = dir.join("exemplars");
        fs::create_dir_all(&ex_dir).map_err(|e| Error::io(&ex_dir, e))?;
        let write = |p: &Path, s: &str| fs::write(p, s).map_err(|e| Error::io(p, e));
        write(&dir.join("preamble.txt"), &format!("{}\n", self.preamble))?;
        write(&dir.join("preamble_standard.txt"), &format!("{}\n", self.preamble_standard))?;
        for (i, ex) in self.exemplars.iter().enumerate() {
            write(&ex_dir.join(format!("{:02}.txt", i + 1)), &format!("{}\n", render_block(ex)?))?;
        }
        let manifest = BundleManifest {
            version: version.to_string(),
            hash: self.hash(),
        };
        write(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
    }

    pub fn hash(&self) -> String {
        let mut canon = format!("{}\n\u{1e}\n{}\n", self.preamble, self.preamble_standard);
        for ex in &self.exemplars {
            canon.push('\u{1e}');
            canon.push_str(&ex.question);
            for (s, t) in &ex.sections {
                canon.push_str(&format!("\n{}{}", s.label(), t));
            }
        }
        crate::sha256_hex(canon)
    }
}

fn render_block(exemplar: &Exemplar) -> Result<String> {
    let body = render_exemplar(&exemplar.sections)?;
    Ok(format!("{QUESTION_PREFIX} {}\n{body}", exemplar.question))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub strategy: PromptStrategy,
    pub preamble: String,
    pub exemplars: Vec<Exemplar>,
    pub target: VerbalizedQuestion,
    pub rendered: String,
}

impl Prompt {
    pub fn hash(&self) -> String {
        crate::sha256_hex(&self.rendered)
    }
}

/// Builds the prompt for `question` under `strategy`.
///
/// Negated complementary targets get the negation preamble; standard targets
/// get the plain one. The first [`EXEMPLARS_PER_PROMPT`] exemplars of the
/// bundle are used in bundle order.
pub fn build_prompt(strategy: PromptStrategy, question: &VerbalizedQuestion, assets: &PromptAssets) -> Result<Prompt> {
    if !strategy.accepts(question.form) {
        return Err(Error::Request(format!(
            "strategy {strategy} cannot target {} questions",
            question.form
        )));
    }
    if assets.exemplars.len() < EXEMPLARS_PER_PROMPT {
        return Err(Error::Assets(format!(
            "need {EXEMPLARS_PER_PROMPT} exemplars, bundle has {}",
            assets.exemplars.len()
        )));
    }
    let exemplars: Vec<Exemplar> = assets.exemplars[..EXEMPLARS_PER_PROMPT]
        .iter()
        .map(|e| e.project(strategy, question.form))
        .collect();
    for (i, ex) in exemplars.iter().enumerate() {
        let report = validate_exemplar(ex, strategy);
        if !report.is_valid() {
            return Err(Error::Assets(format!("exemplar {} invalid for {strategy}: {report}", i + 1)));
        }
    }

    let preamble = match question.form {
        QuestionForm::NegatedComplementary => &assets.preamble,
        QuestionForm::Standard => &assets.preamble_standard,
    };
    let mut rendered = String::new();
    rendered.push_str(preamble);
    rendered.push_str("\n\n");
    for ex in &exemplars {
        rendered.push_str(&render_block(ex)?);
        rendered.push_str("\n\n");
    }
    rendered.push_str(&format!("{QUESTION_PREFIX} {}\n", question.text));
    if strategy == PromptStrategy::FewShot {
        rendered.push_str(Section::Answer.label());
    }

    Ok(Prompt {
        strategy,
        preamble: preamble.clone(),
        exemplars,
        target: question.clone(),
        rendered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triple_store::Relation;

    fn question(form: QuestionForm) -> VerbalizedQuestion {
        VerbalizedQuestion {
            triple_id: "t".into(),
            form,
            text: match form {
                QuestionForm::Standard => "Where is the sofa located?".into(),
                QuestionForm::NegatedComplementary => "Where is the sofa not located?".into(),
            },
            relation: Relation::AtLocation,
        }
    }

    #[test]
    fn default_bundle_has_five_full_exemplars() {
        let assets = PromptAssets::default();
        assert_eq!(assets.exemplars.len(), 5);
        for ex in &assets.exemplars {
            assert!(validate_exemplar(ex, PromptStrategy::CoTFull).is_valid());
        }
    }

    #[test]
    fn cot_full_shows_five_sections_in_order() {
        let p = build_prompt(
            PromptStrategy::CoTFull,
            &question(QuestionForm::NegatedComplementary),
            &PromptAssets::default(),
        )
        .unwrap();
        let parsed = parse_prompt(&p.rendered);
        assert_eq!(parsed.exemplars().len(), 5);
        for ex in parsed.exemplars() {
            let order: Vec<Section> = ex.sections.iter().map(|(s, _)| *s).collect();
            assert_eq!(order, Section::ALL);
        }
        assert_eq!(parsed.target().unwrap().question, "Where is the sofa not located?");
        assert!(parsed.target().unwrap().sections.is_empty());
        assert!(p.rendered.contains("pay special attention to the word Not"));
    }

    #[test]
    fn few_shot_has_answers_only() {
        let p = build_prompt(
            PromptStrategy::FewShot,
            &question(QuestionForm::NegatedComplementary),
            &PromptAssets::default(),
        )
        .unwrap();
        let parsed = parse_prompt(&p.rendered);
        assert_eq!(parsed.exemplars().len(), 5);
        for ex in parsed.exemplars() {
            assert_eq!(ex.sections.len(), 1);
            assert_eq!(ex.sections[0].0, Section::Answer);
        }
        assert!(p.rendered.ends_with("Answer:"));
        assert!(!p.rendered.contains("Reasoning:"));
    }

    #[test]
    fn standard_prompts_use_standard_questions_and_plain_preamble() {
        let assets = PromptAssets::default();
        let p = build_prompt(PromptStrategy::CoTStandard, &question(QuestionForm::Standard), &assets).unwrap();
        assert!(!p.rendered.contains("Negation logic:"));
        assert!(p.rendered.starts_with(&assets.preamble_standard));
        assert_eq!(p.exemplars[1].question, "What is a fish capable of?");
        assert_eq!(p.exemplars[1].sections[1], (Section::Answer, "swimming".to_string()));
    }

    #[test]
    fn strategy_form_mismatch_is_rejected() {
        let assets = PromptAssets::default();
        assert!(build_prompt(PromptStrategy::CoTStandard, &question(QuestionForm::NegatedComplementary), &assets).is_err());
        assert!(build_prompt(PromptStrategy::CoTFull, &question(QuestionForm::Standard), &assets).is_err());
    }

    #[test]
    fn deterministic() {
        let assets = PromptAssets::default();
        for strategy in PromptStrategy::ALL {
            let form = if strategy == PromptStrategy::CoTStandard {
                QuestionForm::Standard
            } else {
                QuestionForm::NegatedComplementary
            };
            let a = build_prompt(strategy, &question(form), &assets).unwrap();
            let b = build_prompt(strategy, &question(form), &assets).unwrap();
            assert_eq!(a.rendered, b.rendered);
        }
    }

    #[test]
    fn validation_findings() {
        let full = PromptAssets::default().exemplars[0].clone();
        assert!(validate_exemplar(&full, PromptStrategy::CoTFull).is_valid());

        let mut missing = full.clone();
        missing.sections.retain(|(s, _)| *s != Section::NegationLogic);
        assert_eq!(
            validate_exemplar(&missing, PromptStrategy::CoTFull).findings,
            vec![Finding::Missing(Section::NegationLogic)]
        );

        let few = Exemplar {
            question: "q".into(),
            sections: vec![(Section::Reasoning, "r".into()), (Section::Answer, "a".into())],
        };
        assert_eq!(
            validate_exemplar(&few, PromptStrategy::FewShot).findings,
            vec![Finding::Extra(Section::Reasoning)]
        );

        let empty = Exemplar {
            question: " ".into(),
            sections: vec![(Section::Answer, "".into())],
        };
        assert_eq!(
            validate_exemplar(&empty, PromptStrategy::FewShot).findings,
            vec![Finding::EmptyQuestion, Finding::Empty(Section::Answer)]
        );
    }

    #[test]
    fn too_few_or_broken_exemplars_fail() {
        let mut assets = PromptAssets::default();
        assets.exemplars.pop();
        let q = question(QuestionForm::NegatedComplementary);
        assert!(matches!(build_prompt(PromptStrategy::CoTFull, &q, &assets), Err(Error::Assets(_))));

        let mut assets = PromptAssets::default();
        assets.exemplars[2].sections.retain(|(s, _)| *s != Section::Reasoning);
        assert!(build_prompt(PromptStrategy::CoTFull, &q, &assets).is_err());
        // few-shot does not need reasoning
        assert!(build_prompt(PromptStrategy::FewShot, &q, &assets).is_ok());
    }

    #[test]
    fn bundle_dir_round_trip_and_hash_check() {
        let dir = tempfile::tempdir().unwrap();
        let assets = PromptAssets::default();
        assets.write_dir(dir.path(), "test").unwrap();
        let back = PromptAssets::load_dir(dir.path()).unwrap();
        assert_eq!(back, assets);
        assert_eq!(back.hash(), assets.hash());

        fs::write(dir.path().join("preamble.txt"), "tampered").unwrap();
        assert!(matches!(PromptAssets::load_dir(dir.path()), Err(Error::Assets(_))));
    }
}
