use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use negcomp_core::{AnnotationRecord, Label};
use serde::{Deserialize, Serialize};

use crate::batch::Batch;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("annotator id must not be empty")]
    EmptyAnnotator,
    #[error("unknown answer {0}")]
    UnknownAnswer(String),
    #[error("unknown batch {0}")]
    UnknownBatch(String),
    #[error("{annotator} already labeled {answer_id}")]
    Duplicate { annotator: String, answer_id: String },
    #[error("{answer_id} was not served to {annotator}")]
    NotServed { annotator: String, answer_id: String },
    #[error("{0} already has all the labels it needs")]
    AnswerComplete(String),
    #[error(transparent)]
    Storage(#[from] negcomp_core::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOption {
    pub code: u8,
    pub name: String,
    pub caption: String,
}

fn label_options() -> Vec<LabelOption> {
    Label::ALL
        .into_iter()
        .map(|l| LabelOption {
            code: l.code(),
            name: l.name().to_string(),
            caption: l.caption().to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub batch: String,
    pub answer_id: String,
    pub sentence: String,
    pub options: Vec<LabelOption>,
    pub instructions: String,
    pub assigned_annotator: String,
    pub distinct_annotators: usize,
    pub required_annotators: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub annotator: String,
    pub answer_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub answer_id: String,
    pub distinct_annotators: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub batch: String,
    pub required_annotators: usize,
    pub answers: usize,
    pub complete: usize,
    pub incomplete: usize,
    pub labels: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

struct Reservation {
    answer: usize,
    at: Instant,
}

struct State {
    labeled_by: Vec<HashSet<String>>,
    reservations: HashMap<String, Reservation>,
    records: Vec<AnnotationRecord>,
}

/// Task assignment and the append-only label log for one batch.
///
/// All mutation happens under one lock, which makes reserve-then-label
/// atomic and serializes appends to the log.
pub struct AnnotationStore {
    batch: Batch,
    index: HashMap<String, usize>,
    required: usize,
    ttl: Duration,
    instructions: String,
    log: PathBuf,
    state: Mutex<State>,
}

impl AnnotationStore {
    /// Opens the store, replaying any labels already in `log`.
    pub fn open(batch: Batch, log: &Path, required: usize, ttl: Duration, instructions: &str) -> Result<Self, StoreError> {
        let index: HashMap<String, usize> = batch
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.answer_id.clone(), i))
            .collect();
        let records: Vec<AnnotationRecord> = negcomp_core::jsonl::read_all(log)?;
        let mut labeled_by = vec![HashSet::new(); batch.items.len()];
        for r in &records {
            match index.get(&r.answer_id) {
                Some(&i) => {
                    labeled_by[i].insert(r.annotator_id.clone());
                }
                None => tracing::warn!(answer = %r.answer_id, "label log refers to an answer outside the batch"),
            }
        }
        Ok(Self {
            batch,
            index,
            required: required.max(1),
            ttl,
            instructions: instructions.to_string(),
            log: log.to_path_buf(),
            state: Mutex::new(State {
                labeled_by,
                reservations: HashMap::new(),
                records,
            }),
        })
    }

    pub fn batch_id(&self) -> &str {
        &self.batch.id
    }

    pub fn instructions(&self) -> &str {
        &self.instructions
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn task(&self, i: usize, annotator: &str, state: &State) -> AnnotationTask {
        let item = &self.batch.items[i];
        AnnotationTask {
            batch: self.batch.id.clone(),
            answer_id: item.answer_id.clone(),
            sentence: item.sentence.clone(),
            options: label_options(),
            instructions: self.instructions.clone(),
            assigned_annotator: annotator.to_string(),
            distinct_annotators: state.labeled_by[i].len(),
            required_annotators: self.required,
        }
    }

    /// Reserves and returns the least-labeled answer this annotator has not
    /// labeled yet. Asking again before submitting returns the same task.
    pub fn next_task(&self, annotator: &str) -> Result<Option<AnnotationTask>, StoreError> {
        let annotator = annotator.trim();
        if annotator.is_empty() {
            return Err(StoreError::EmptyAnnotator);
        }
        let mut state = self.lock();
        let now = Instant::now();
        if let Some(r) = state.reservations.get(annotator) {
            let i = r.answer;
            if now.duration_since(r.at) < self.ttl
                && !state.labeled_by[i].contains(annotator)
                && state.labeled_by[i].len() < self.required
            {
                return Ok(Some(self.task(i, annotator, &state)));
            }
        }
        let mut held = vec![0usize; self.batch.items.len()];
        for (who, r) in &state.reservations {
            if who != annotator && now.duration_since(r.at) < self.ttl {
                held[r.answer] += 1;
            }
        }
        let pick = (0..self.batch.items.len())
            .filter(|&i| !state.labeled_by[i].contains(annotator))
            .map(|i| (state.labeled_by[i].len() + held[i], i))
            .filter(|&(load, _)| load < self.required)
            .min();
        match pick {
            Some((_, i)) => {
                state.reservations.insert(annotator.to_string(), Reservation { answer: i, at: now });
                Ok(Some(self.task(i, annotator, &state)))
            }
            None => {
                state.reservations.remove(annotator);
                Ok(None)
            }
        }
    }

    /// Records a label for a task previously served to the annotator.
    pub fn submit(&self, submission: &Submission) -> Result<SubmitAck, StoreError> {
        let annotator = submission.annotator.trim();
        if annotator.is_empty() {
            return Err(StoreError::EmptyAnnotator);
        }
        let &i = self
            .index
            .get(&submission.answer_id)
            .ok_or_else(|| StoreError::UnknownAnswer(submission.answer_id.clone()))?;
        let mut state = self.lock();
        if state.labeled_by[i].contains(annotator) {
            return Err(StoreError::Duplicate {
                annotator: annotator.to_string(),
                answer_id: submission.answer_id.clone(),
            });
        }
        if state.reservations.get(annotator).map(|r| r.answer) != Some(i) {
            return Err(StoreError::NotServed {
                annotator: annotator.to_string(),
                answer_id: submission.answer_id.clone(),
            });
        }
        if state.labeled_by[i].len() >= self.required {
            state.reservations.remove(annotator);
            return Err(StoreError::AnswerComplete(submission.answer_id.clone()));
        }
        let record = AnnotationRecord {
            answer_id: submission.answer_id.clone(),
            annotator_id: annotator.to_string(),
            label: submission.label,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        negcomp_core::jsonl::append(&self.log, std::slice::from_ref(&record))?;
        state.records.push(record);
        state.labeled_by[i].insert(annotator.to_string());
        state.reservations.remove(annotator);
        let distinct = state.labeled_by[i].len();
        Ok(SubmitAck {
            answer_id: submission.answer_id.clone(),
            distinct_annotators: distinct,
            complete: distinct >= self.required,
        })
    }

    fn check_batch(&self, batch: Option<&str>) -> Result<(), StoreError> {
        match batch {
            Some(b) if b != self.batch.id => Err(StoreError::UnknownBatch(b.to_string())),
            _ => Ok(()),
        }
    }

    /// Every stored label in append order.
    pub fn export(&self, batch: Option<&str>) -> Result<Vec<AnnotationRecord>, StoreError> {
        self.check_batch(batch)?;
        Ok(self.lock().records.clone())
    }

    pub fn progress(&self, batch: Option<&str>) -> Result<Progress, StoreError> {
        self.check_batch(batch)?;
        let state = self.lock();
        let complete = state.labeled_by.iter().filter(|s| s.len() >= self.required).count();
        let mut per_annotator = BTreeMap::new();
        for r in &state.records {
            *per_annotator.entry(r.annotator_id.clone()).or_insert(0) += 1;
        }
        Ok(Progress {
            batch: self.batch.id.clone(),
            required_annotators: self.required,
            answers: self.batch.items.len(),
            complete,
            incomplete: self.batch.items.len() - complete,
            labels: state.records.len(),
            per_annotator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::BatchItem;
    use negcomp_core::QuestionForm;

    fn batch(n: usize) -> Batch {
        Batch {
            id: "b1".into(),
            items: (0..n)
                .map(|i| BatchItem {
                    answer_id: format!("a{i}"),
                    sentence: format!("PersonX does {i}. PersonX does not want x."),
                    question: "q".into(),
                    answer: "x".into(),
                    form: QuestionForm::NegatedComplementary,
                })
                .collect(),
        }
    }

    fn store(dir: &Path, n: usize, required: usize) -> AnnotationStore {
        AnnotationStore::open(batch(n), &dir.join("labels.jsonl"), required, Duration::from_secs(600), crate::INSTRUCTIONS)
            .unwrap()
    }

    fn label(store: &AnnotationStore, who: &str) -> Option<SubmitAck> {
        let task = store.next_task(who).unwrap()?;
        Some(
            store
                .submit(&Submission {
                    annotator: who.into(),
                    answer_id: task.answer_id,
                    label: Label::MakesSense,
                })
                .unwrap(),
        )
    }

    #[test]
    fn fresh_batch_serves_unlabeled_task() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 3, 2);
        let task = s.next_task("ann").unwrap().unwrap();
        assert_eq!(task.distinct_annotators, 0);
        assert_eq!(task.options.len(), 5);
        assert_eq!(task.instructions, crate::INSTRUCTIONS);
        assert_eq!(s.next_task("ann").unwrap().unwrap().answer_id, task.answer_id);
        assert!(matches!(s.next_task("  "), Err(StoreError::EmptyAnnotator)));
    }

    #[test]
    fn annotator_runs_out_of_tasks() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 3, 2);
        for _ in 0..3 {
            assert!(label(&s, "ann").is_some());
        }
        assert!(s.next_task("ann").unwrap().is_none());
        let p = s.progress(None).unwrap();
        assert_eq!((p.labels, p.complete, p.incomplete), (3, 0, 3));
    }

    #[test]
    fn duplicates_and_unserved_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 2, 2);
        let task = s.next_task("ann").unwrap().unwrap();
        let sub = Submission {
            annotator: "ann".into(),
            answer_id: task.answer_id.clone(),
            label: Label::Nonsense,
        };
        assert_eq!(s.submit(&sub).unwrap().distinct_annotators, 1);
        assert!(matches!(s.submit(&sub), Err(StoreError::Duplicate { .. })));
        assert_eq!(s.export(None).unwrap().len(), 1);
        let other = Submission {
            annotator: "bob".into(),
            answer_id: task.answer_id.clone(),
            label: Label::Nonsense,
        };
        assert!(matches!(s.submit(&other), Err(StoreError::NotServed { .. })));
        let unknown = Submission {
            answer_id: "nope".into(),
            ..other
        };
        assert!(matches!(s.submit(&unknown), Err(StoreError::UnknownAnswer(_))));
        assert!(matches!(s.export(Some("zzz")), Err(StoreError::UnknownBatch(_))));
    }

    #[test]
    fn nine_annotators_complete_an_answer() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 1, 9);
        let mut last = None;
        for k in 0..9 {
            last = label(&s, &format!("w{k}"));
        }
        let ack = last.unwrap();
        assert_eq!(ack.distinct_annotators, 9);
        assert!(ack.complete);
        assert!(s.next_task("w9").unwrap().is_none());
        assert_eq!(s.progress(Some("b1")).unwrap().complete, 1);
    }

    #[test]
    fn least_labeled_first_and_reservations_hold_slots() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 2, 1);
        let a = s.next_task("x").unwrap().unwrap();
        let b = s.next_task("y").unwrap().unwrap();
        assert_ne!(a.answer_id, b.answer_id);
        assert!(s.next_task("z").unwrap().is_none());
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = store(dir.path(), 2, 3);
            label(&s, "ann");
            label(&s, "ann");
        }
        let s = store(dir.path(), 2, 3);
        assert_eq!(s.export(None).unwrap().len(), 2);
        assert!(s.next_task("ann").unwrap().is_none());
        assert_eq!(s.next_task("bob").unwrap().unwrap().distinct_annotators, 1);
    }

    #[test]
    fn concurrent_annotators_never_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), 10, 3);
        std::thread::scope(|scope| {
            for k in 0..6 {
                let s = &s;
                scope.spawn(move || while label(s, &format!("w{k}")).is_some() {});
            }
        });
        let records = s.export(None).unwrap();
        assert_eq!(records.len(), 30);
        let pairs: HashSet<(String, String)> = records
            .iter()
            .map(|r| (r.answer_id.clone(), r.annotator_id.clone()))
            .collect();
        assert_eq!(pairs.len(), 30);
        assert_eq!(s.progress(None).unwrap().complete, 10);
    }
}
