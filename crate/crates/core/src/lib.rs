//! Experiment harness for negated complementary commonsense questions.
//!
//! The pipeline runs from knowledge triples to accuracy tables:
//!
//! - [`triple_store`] loads and samples `<head, relation, tail>` triples.
//! - [`verbalizer`] renders standard and negated complementary questions.
//! - [`prompt_builder`] assembles few-shot and chain-of-thought prompts.
//! - [`llm_gateway`] talks to a completion backend (remote or scripted).
//! - [`response_parser`] extracts answers from labeled-section completions.
//! - [`self_assessor`] asks the model to judge its own answers.
//! - [`experiment`] orchestrates resumable runs and exports reports.
//! - [`evaluation`] judges answers against closed-world oracles or human
//!   labels and measures inter-rater reliability.

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod jsonl;
pub mod llm_gateway;
pub mod prompt_builder;
pub mod response_parser;
pub mod self_assessor;
pub mod triple_store;
pub mod verbalizer;

pub use error::{Error, Result};
pub use evaluation::{
    aggregate_accuracy, judge_against_oracle, krippendorff_alpha, map_label, nc_answer_set,
    AnnotationRecord, ClosedWorldOracle, Label, ReliabilityReport, Verdict,
};
pub use experiment::{
    export_report, resume_run, run_experiment, Arm, LabelSource, Report, RunConfig, RunManifest,
    RunRecord,
};
pub use llm_gateway::{BackendSpec, CompletionRequest, CompletionResult, Gateway};
pub use prompt_builder::{build_prompt, Exemplar, Prompt, PromptAssets, PromptStrategy};
pub use response_parser::{parse_completion, render_exemplar, ParsedAnswer, RefusalMarkers, Section};
pub use self_assessor::{AssessmentAssets, AssessmentVerdict, Assessor};
pub use triple_store::{load_triples, sample_triples, Relation, SampleSpec, Triple};
pub use verbalizer::{verbalize, QuestionForm, TemplateRegistry, VerbalizedQuestion};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes.as_ref()))
}
