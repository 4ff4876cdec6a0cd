use std::path::Path;

use negcomp_core::experiment::{load_run, RunRecord};
use negcomp_core::verbalizer::SentenceTemplates;
use negcomp_core::{Error, QuestionForm, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BATCH_FILE: &str = "annotation_batch.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub answer_id: String,
    pub sentence: String,
    pub question: String,
    pub answer: String,
    pub form: QuestionForm,
}

/// The answers of one run that need human labels, in serving order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: String,
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn from_records(id: impl Into<String>, records: &[RunRecord], sentences: &SentenceTemplates, seed: u64) -> Self {
        let mut items: Vec<BatchItem> = records
            .iter()
            .filter(|r| r.is_retained() && !r.no_answer)
            .map(|r| BatchItem {
                answer_id: r.answer_id(),
                sentence: sentences.render(&r.head, &r.relation, r.form, &r.question, &r.final_answer),
                question: r.question.clone(),
                answer: r.final_answer.clone(),
                form: r.form,
            })
            .collect();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { id: id.into(), items }
    }
}

/// Builds the batch for the run in `dir`: its retained answers that are not
/// refusals, shuffled with `seed` so arms are interleaved.
pub fn build_batch(dir: &Path, seed: u64) -> Result<Batch> {
    let (manifest, records) = load_run(dir)?;
    Ok(Batch::from_records(manifest.run_id, &records, &SentenceTemplates::default(), seed))
}

/// Reuses `annotation_batch.json` when present so restarts keep the same
/// task order; otherwise builds and saves it.
pub fn load_or_build_batch(dir: &Path, seed: u64) -> Result<Batch> {
    let path = dir.join(BATCH_FILE);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        return serde_json::from_str(&text).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        });
    }
    let batch = build_batch(dir, seed)?;
    let body = serde_json::to_vec_pretty(&batch).map_err(|e| Error::Json {
        context: "annotation batch".into(),
        source: e,
    })?;
    negcomp_core::jsonl::write_atomic(&path, &body)?;
    Ok(batch)
}
