use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm_gateway::{BackendKind, BackendSpec};
use crate::prompt_builder::{PromptAssets, PromptStrategy};
use crate::response_parser::RefusalMarkers;
use crate::self_assessor::AssessmentAssets;
use crate::triple_store::SampleSpec;
use crate::verbalizer::{QuestionForm, TemplateRegistry};

/// One experimental configuration: a prompting strategy plus whether the
/// self-assessment filter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "ours")]
    Ours,
    #[serde(rename = "ours-wo-pp")]
    OursWoPp,
    #[serde(rename = "ours-wo-nl-pp")]
    OursWoNlPp,
    #[serde(rename = "few-shot")]
    FewShot,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Ours, Arm::OursWoPp, Arm::OursWoNlPp, Arm::FewShot];

    /// Strategy used for a question of `form`. Chain-of-thought arms fall
    /// back to the standard chain-of-thought prompt for standard questions.
    pub fn strategy(self, form: QuestionForm) -> PromptStrategy {
        match (self, form) {
            (Arm::FewShot, _) => PromptStrategy::FewShot,
            (_, QuestionForm::Standard) => PromptStrategy::CoTStandard,
            (Arm::Ours | Arm::OursWoPp, QuestionForm::NegatedComplementary) => PromptStrategy::CoTFull,
            (Arm::OursWoNlPp, QuestionForm::NegatedComplementary) => PromptStrategy::CoTNoNegationLogic,
        }
    }

    pub fn filtered(self) -> bool {
        self == Arm::Ours
    }

    pub fn slug(self) -> &'static str {
        match self {
            Arm::Ours => "ours",
            Arm::OursWoPp => "ours-wo-pp",
            Arm::OursWoNlPp => "ours-wo-nl-pp",
            Arm::FewShot => "few-shot",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Arm::Ours => "Ours",
            Arm::OursWoPp => "Ours-wo-pp",
            Arm::OursWoNlPp => "Ours-wo-nl-pp",
            Arm::FewShot => "Few-shot",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let key = if key == "fewshot" { "few-shot".to_string() } else { key };
        Arm::ALL
            .into_iter()
            .find(|a| a.slug() == key)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}; expected one of ours, ours-wo-pp, ours-wo-nl-pp, few-shot")))
    }
}

/// Parses a comma-separated arm list such as `ours,few-shot`.
pub fn parse_arms(list: &str) -> Result<Vec<Arm>> {
    let mut arms: Vec<Arm> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    arms.sort();
    arms.dedup();
    Ok(arms)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    /// Wall-clock timestamps, except under a scripted backend.
    #[default]
    Auto,
    Wall,
    Omit,
}

/// Optional overrides for the bundled asset files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssetPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assessment: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refusal_markers: Option<PathBuf>,
    /// Append a missing "?" to questions that lack one.
    pub normalize_punctuation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Triple store, TSV or JSON lines.
    pub triples: PathBuf,
    /// Run directory. Excluded from the run id.
    #[serde(default)]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub sample: SampleSpec,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default = "default_responses")]
    pub responses_per_question: u32,
    pub backend: BackendSpec,
    #[serde(default)]
    pub assets: AssetPaths,
    #[serde(default)]
    pub timestamps: TimestampMode,
}

fn default_arms() -> Vec<Arm> {
    Arm::ALL.to_vec()
}

fn default_responses() -> u32 {
    3
}

impl RunConfig {
    pub fn new(triples: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, backend: BackendSpec) -> Self {
        Self {
            triples: triples.into(),
            out_dir: out_dir.into(),
            sample: SampleSpec::default(),
            arms: default_arms(),
            responses_per_question: default_responses(),
            backend,
            assets: AssetPaths::default(),
            timestamps: TimestampMode::Auto,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Reads a TOML config. Relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_relative_to(base);
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.triples);
        fix(&mut self.out_dir);
        for p in [
            &mut self.assets.templates,
            &mut self.assets.prompts,
            &mut self.assets.assessment,
            &mut self.assets.refusal_markers,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let BackendKind::ScriptedMock { script } = &mut self.backend.kind {
            fix(script);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm is required".into()));
        }
        if self.responses_per_question == 0 {
            return Err(Error::Config("responses_per_question must be at least 1".into()));
        }
        if self.sample.per_relation_count == 0 {
            return Err(Error::Config("sample.per_relation_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn wall_timestamps(&self) -> bool {
        match self.timestamps {
            TimestampMode::Auto => !self.backend.is_mock(),
            TimestampMode::Wall => true,
            TimestampMode::Omit => false,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetHashes {
    pub templates: String,
    pub prompts: String,
    pub assessment: String,
    pub refusal_markers: String,
}

/// Every data file a run depends on, loaded.
#[derive(Debug, Clone)]
pub struct RunAssets {
    pub templates: TemplateRegistry,
    pub prompts: PromptAssets,
    pub assessment: AssessmentAssets,
    pub markers: RefusalMarkers,
}

impl RunAssets {
    pub fn load(paths: &AssetPaths) -> Result<Self> {
        let templates = match &paths.templates {
            Some(p) => TemplateRegistry::load(p)?,
            None => TemplateRegistry::default_templates(),
        }
        .with_normalized_punctuation(paths.normalize_punctuation);
        let prompts = match &paths.prompts {
            Some(p) => PromptAssets::load_dir(p)?,
            None => PromptAssets::default(),
        };
        let assessment = match &paths.assessment {
            Some(p) => AssessmentAssets::load_dir(p)?,
            None => AssessmentAssets::default(),
        };
        let markers = match &paths.refusal_markers {
            Some(p) => RefusalMarkers::load(p)?,
            None => RefusalMarkers::default(),
        };
        Ok(Self {
            templates,
            prompts,
            assessment,
            markers,
        })
    }

    pub fn hashes(&self) -> AssetHashes {
        AssetHashes {
            templates: self.templates.hash(),
            prompts: self.prompts.hash(),
            assessment: self.assessment.hash(),
            refusal_markers: self.markers.hash(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_mapping() {
        use PromptStrategy::*;
        let nc = QuestionForm::NegatedComplementary;
        assert_eq!(Arm::Ours.strategy(nc), CoTFull);
        assert!(Arm::Ours.filtered());
        assert_eq!(Arm::OursWoPp.strategy(nc), CoTFull);
        assert!(!Arm::OursWoPp.filtered());
        assert_eq!(Arm::OursWoNlPp.strategy(nc), CoTNoNegationLogic);
        assert!(!Arm::OursWoNlPp.filtered());
        assert_eq!(Arm::FewShot.strategy(nc), FewShot);
        assert!(!Arm::FewShot.filtered());
        for arm in Arm::ALL {
            let s = arm.strategy(QuestionForm::Standard);
            assert!(s.accepts(QuestionForm::Standard));
            assert!(arm.strategy(nc).accepts(nc));
        }
    }

    #[test]
    fn arm_names_round_trip() {
        for arm in Arm::ALL {
            assert_eq!(arm.slug().parse::<Arm>().unwrap(), arm);
            assert_eq!(arm.display_name().parse::<Arm>().unwrap(), arm);
            let json = serde_json::to_string(&arm).unwrap();
            assert_eq!(json, format!("\"{}\"", arm.slug()));
        }
        assert_eq!(parse_arms("few-shot, ours,ours").unwrap(), [Arm::Ours, Arm::FewShot]);
        assert!(parse_arms("ours,bogus").is_err());
    }

    #[test]
    fn toml_config_with_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
triples = "data/triples.tsv"
out_dir = "runs/a"

[sample]
per_relation_count = 5
seed = 7

[backend]
type = "scripted_mock"
script = "mock.jsonl"
"#,
        )
        .unwrap();
        assert_eq!(cfg.arms, Arm::ALL);
        assert_eq!(cfg.responses_per_question, 3);
        assert_eq!(cfg.sample.seed, 7);
        assert!(cfg.backend.is_mock());
        assert!(!cfg.wall_timestamps());
        let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "triples = \"t.tsv\"\n[backend]\ntype = \"scripted_mock\"\nscript = \"m.jsonl\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.triples, dir.path().join("t.tsv"));
        match cfg.backend.kind {
            BackendKind::ScriptedMock { script } => assert_eq!(script, dir.path().join("m.jsonl")),
            _ => unreachable!(),
        }
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::new("t", "o", BackendSpec::scripted("m"));
        assert!(cfg.validate().is_ok());
        cfg.responses_per_question = 0;
        assert!(cfg.validate().is_err());
        cfg.responses_per_question = 3;
        cfg.arms.clear();
        assert!(cfg.validate().is_err());
    }
}
