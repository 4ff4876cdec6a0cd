use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::error::{Error, Result};
use crate::verbalizer::QuestionForm;

/// Identity of one retained answer within an accuracy table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub answer_id: String,
    pub arm: String,
    pub form: QuestionForm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub denominator: usize,
    /// Items left out of the denominator (all-Unfamiliar answers, or
    /// Unfamiliar votes for the pooled table).
    pub excluded: usize,
    /// Percentage rounded to one decimal; `None` for an empty denominator.
    pub percent: Option<f64>,
}

impl Cell {
    fn finish(mut self) -> Self {
        self.percent = percent(self.correct, self.denominator);
        self
    }
}

/// `100 * correct / denominator` rounded to one decimal place.
pub fn percent(correct: usize, denominator: usize) -> Option<f64> {
    (denominator > 0).then(|| (1000.0 * correct as f64 / denominator as f64).round() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub arm: String,
    pub form: QuestionForm,
    #[serde(flatten)]
    pub cell: Cell,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub cells: Vec<CellEntry>,
}

impl AccuracyTable {
    pub fn get(&self, arm: &str, form: QuestionForm) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|e| e.arm == arm && e.form == form)
            .map(|e| &e.cell)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTables {
    /// One vote per answer: plurality of non-Unfamiliar verdicts, ties Incorrect.
    pub per_answer: AccuracyTable,
    /// Every non-Unfamiliar verdict counted individually.
    pub pooled: AccuracyTable,
}

/// Plurality verdict ignoring Unfamiliar. Ties go to Incorrect; `None` when
/// nothing but Unfamiliar (or nothing at all) was recorded.
pub fn plurality(verdicts: &[Verdict]) -> Option<Verdict> {
    let correct = verdicts.iter().filter(|v| **v == Verdict::Correct).count();
    let incorrect = verdicts.iter().filter(|v| **v == Verdict::Incorrect).count();
    match (correct, incorrect) {
        (0, 0) => None,
        (c, i) if c > i => Some(Verdict::Correct),
        _ => Some(Verdict::Incorrect),
    }
}

/// Builds per-(arm, form) accuracy over `answers`. Every answer must have
/// at least one verdict in `verdicts`.
pub fn aggregate_accuracy(
    answers: &[AnswerKey],
    verdicts: &HashMap<String, Vec<Verdict>>,
) -> Result<AccuracyTables> {
    let mut per_answer: BTreeMap<(String, QuestionForm), Cell> = BTreeMap::new();
    let mut pooled: BTreeMap<(String, QuestionForm), Cell> = BTreeMap::new();
    let mut missing = Vec::new();

    for key in answers {
        let votes = match verdicts.get(&key.answer_id) {
            Some(v) if !v.is_empty() => v,
            _ => {
                missing.push(key.answer_id.clone());
                continue;
            }
        };
        let slot = (key.arm.clone(), key.form);

        let cell = per_answer.entry(slot.clone()).or_default();
        match plurality(votes) {
            Some(v) => {
                cell.denominator += 1;
                cell.correct += (v == Verdict::Correct) as usize;
            }
            None => cell.excluded += 1,
        }

        let cell = pooled.entry(slot).or_default();
        for v in votes {
            match v {
                Verdict::Correct => {
                    cell.correct += 1;
                    cell.denominator += 1;
                }
                Verdict::Incorrect => cell.denominator += 1,
                Verdict::Unfamiliar => cell.excluded += 1,
            }
        }
    }

    if !missing.is_empty() {
        return Err(Error::MissingVerdicts(missing));
    }

    let table = |m: BTreeMap<(String, QuestionForm), Cell>| AccuracyTable {
        cells: m
            .into_iter()
            .map(|((arm, form), cell)| CellEntry {
                arm,
                form,
                cell: cell.finish(),
            })
            .collect(),
    };
    Ok(AccuracyTables {
        per_answer: table(per_answer),
        pooled: table(pooled),
    })
}
