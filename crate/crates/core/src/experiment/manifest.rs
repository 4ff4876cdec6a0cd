use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Arm, AssetHashes, RunConfig};
use super::records::RunRecord;
use crate::error::{Error, Result};
use crate::triple_store::{Reject, Triple};
use crate::verbalizer::QuestionForm;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const ASSESSMENTS_FILE: &str = "assessments.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";

/// Choices the harness makes where the method description is silent.
/// Every manifest carries this list.
pub const ASSUMPTIONS: &[&str] = &[
    "sampling draws per_relation_count triples from each relation separately",
    "the responses for one question come from a single n-completion call",
    "each no-answer completion gets exactly one retry at temperature 1.0",
    "standard and negated questions for a triple use independent prompts",
    "standard-question prompts omit the negation preamble",
    "exemplars appear in asset-file order",
    "self-assessment is greedy and keeps answers whose judgment cannot be parsed",
    "answers removed by the filter leave the denominator; an all-answers denominator is reported too",
    "retained no-answer responses count as incorrect",
    "oWant questions are verbalized as-is even when the head has no PersonY",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Complete,
    Failed,
}

/// One (arm, triple, form) unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub arm: Arm,
    pub triple_id: String,
    pub form: QuestionForm,
    pub status: ItemStatus,
    /// Lines this item contributed to the records file.
    pub records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WorkItem {
    pub fn key(&self) -> (Arm, &str, QuestionForm) {
        (self.arm, &self.triple_id, self.form)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmFormCounts {
    pub arm: Option<Arm>,
    pub form: Option<QuestionForm>,
    /// Triples × responses per question.
    pub expected: usize,
    /// Samples with a final attempt on disk.
    pub answers: usize,
    pub retained: usize,
    pub dropped: usize,
    pub no_answer: usize,
    pub temperature_retries: usize,
    pub salvaged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub harness_version: String,
    pub config: RunConfig,
    pub asset_hashes: AssetHashes,
    pub backend_id: String,
    pub assumptions: Vec<String>,
    pub sampled_triples: Vec<Triple>,
    pub rejects: Vec<Reject>,
    /// |triples| × 2 forms × responses per question.
    pub expected_answers_per_arm: usize,
    pub items: Vec<WorkItem>,
    pub counts: Vec<ArmFormCounts>,
    pub complete: bool,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::CorruptRun {
            path: path.clone(),
            reason: format!("cannot read manifest: {e}"),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::CorruptRun {
            path,
            reason: format!("manifest does not parse: {e}"),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        crate::jsonl::write_atomic(&dir.join(MANIFEST_FILE), format!("{body}\n").as_bytes())
    }

    pub fn counts_for(&self, arm: Arm, form: QuestionForm) -> Option<&ArmFormCounts> {
        self.counts
            .iter()
            .find(|c| c.arm == Some(arm) && c.form == Some(form))
    }

    /// Answers per arm summed over both forms: retained plus dropped.
    pub fn answers_per_arm(&self, arm: Arm) -> usize {
        self.counts
            .iter()
            .filter(|c| c.arm == Some(arm))
            .map(|c| c.retained + c.dropped)
            .sum()
    }

    pub fn incomplete_items(&self) -> usize {
        self.items.iter().filter(|i| i.status != ItemStatus::Complete).count()
    }

    pub fn refresh(&mut self, records: &[RunRecord]) {
        self.counts = tally(
            &self.config.arms,
            self.sampled_triples.len(),
            self.config.responses_per_question as usize,
            records,
        );
        self.complete = self.items.iter().all(|i| i.status == ItemStatus::Complete);
    }

    /// Checks the records file against the per-item line counts.
    pub fn verify_records(&self, dir: &Path, records: &[RunRecord]) -> Result<()> {
        let corrupt = |reason: String| Error::CorruptRun {
            path: dir.to_path_buf(),
            reason,
        };
        let mut seen: BTreeMap<(Arm, &str, QuestionForm), usize> = BTreeMap::new();
        for r in records {
            if r.run_id != self.run_id {
                return Err(corrupt(format!("record from another run: {}", r.run_id)));
            }
            *seen.entry((r.arm, r.triple_id.as_str(), r.form)).or_default() += 1;
        }
        let mut expected_total = 0;
        for item in &self.items {
            let expected = if item.status == ItemStatus::Complete { item.records } else { 0 };
            expected_total += expected;
            let found = seen.remove(&item.key()).unwrap_or(0);
            if found != expected {
                return Err(corrupt(format!(
                    "manifest lists {expected} records for {} / {} / {} but {RECORDS_FILE} has {found}",
                    item.arm, item.triple_id, item.form
                )));
            }
        }
        if let Some(((arm, triple, form), n)) = seen.into_iter().next() {
            return Err(corrupt(format!(
                "{RECORDS_FILE} has {n} records for {arm} / {triple} / {form}, which the manifest does not list"
            )));
        }
        if records.len() != expected_total {
            return Err(corrupt(format!(
                "manifest expects {expected_total} records, found {}",
                records.len()
            )));
        }
        Ok(())
    }
}

/// Per-(arm, form) bookkeeping derived from records.
pub fn tally(arms: &[Arm], n_triples: usize, responses: usize, records: &[RunRecord]) -> Vec<ArmFormCounts> {
    let mut out = Vec::new();
    for &arm in arms {
        for form in QuestionForm::BOTH {
            let mut c = ArmFormCounts {
                arm: Some(arm),
                form: Some(form),
                expected: n_triples * responses,
                ..Default::default()
            };
            for r in records.iter().filter(|r| r.arm == arm && r.form == form) {
                if r.attempt == 1 {
                    c.temperature_retries += 1;
                }
                if !r.is_final() {
                    continue;
                }
                c.answers += 1;
                c.no_answer += r.no_answer as usize;
                c.salvaged += r.salvaged as usize;
                if r.is_retained() {
                    c.retained += 1;
                } else {
                    c.dropped += 1;
                }
            }
            out.push(c);
        }
    }
    out
}
