use serde::{Deserialize, Serialize};

use super::config::Arm;
use crate::prompt_builder::PromptStrategy;
use crate::self_assessor::{Assessable, AssessmentVerdict};
use crate::triple_store::Relation;
use crate::verbalizer::QuestionForm;

/// One line of `records.jsonl`: a single completion attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub triple_id: String,
    pub relation: Relation,
    pub head: String,
    pub form: QuestionForm,
    pub arm: Arm,
    pub strategy: PromptStrategy,
    pub sample_index: u32,
    /// 0 for the first pass, 1 for the temperature retry.
    pub attempt: u32,
    pub temperature: f64,
    pub question: String,
    pub prompt_hash: String,
    pub backend_id: String,
    pub raw_completion: String,
    pub final_answer: String,
    pub no_answer: bool,
    /// The completion lacked the sections its strategy asks for and the
    /// answer was recovered heuristically.
    pub salvaged: bool,
    pub transport_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<AssessmentVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub triple_id: String,
    pub form: QuestionForm,
    pub arm: Arm,
    pub sample_index: u32,
    pub attempt: u32,
}

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            triple_id: self.triple_id.clone(),
            form: self.form,
            arm: self.arm,
            sample_index: self.sample_index,
            attempt: self.attempt,
        }
    }

    /// Stable identifier of the answer this record contributes, shared by
    /// both attempts of one sample.
    pub fn answer_id(&self) -> String {
        answer_id(&self.run_id, self.arm, &self.triple_id, self.form, self.sample_index)
    }

    /// Whether this attempt is the one that counts for its sample: the retry
    /// if there was one, otherwise the first pass.
    pub fn is_final(&self) -> bool {
        self.attempt == 1 || !self.no_answer
    }

    /// Final, and either unfiltered or kept by the filter. Answers with no
    /// verdict are kept.
    pub fn is_retained(&self) -> bool {
        self.is_final() && (!self.arm.filtered() || self.verdict.as_ref().is_none_or(|v| v.keep))
    }
}

pub fn answer_id(run_id: &str, arm: Arm, triple_id: &str, form: QuestionForm, sample_index: u32) -> String {
    format!("{run_id}/{}/{triple_id}/{}/{sample_index}", arm.slug(), form.slug())
}

impl Assessable for RunRecord {
    fn question(&self) -> &str {
        &self.question
    }

    fn answer(&self) -> &str {
        &self.final_answer
    }

    fn set_verdict(&mut self, verdict: AssessmentVerdict) {
        self.verdict = Some(verdict);
    }
}

/// A later verdict for a record, appended by a re-assessment pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentEntry {
    pub answer_id: String,
    #[serde(flatten)]
    pub verdict: AssessmentVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessed_at: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(arm: Arm, attempt: u32, no_answer: bool) -> RunRecord {
        RunRecord {
            run_id: "r".into(),
            triple_id: "xWant:0".into(),
            relation: Relation::XWant,
            head: "PersonX goes to the gym".into(),
            form: QuestionForm::NegatedComplementary,
            arm,
            strategy: arm.strategy(QuestionForm::NegatedComplementary),
            sample_index: 2,
            attempt,
            temperature: 0.7,
            question: "q".into(),
            prompt_hash: "h".into(),
            backend_id: "b".into(),
            raw_completion: "Answer: x".into(),
            final_answer: "x".into(),
            no_answer,
            salvaged: false,
            transport_retries: 0,
            verdict: None,
            started_at: None,
            finished_at: None,
        }
    }

    #[test]
    fn finality_and_retention() {
        assert!(record(Arm::FewShot, 0, false).is_final());
        assert!(!record(Arm::FewShot, 0, true).is_final());
        assert!(record(Arm::FewShot, 1, true).is_final());

        let mut r = record(Arm::Ours, 0, false);
        assert!(r.is_retained());
        r.set_verdict(AssessmentVerdict::from_judgment("Incorrect"));
        assert!(!r.is_retained());
        let mut unfiltered = record(Arm::OursWoPp, 0, false);
        unfiltered.set_verdict(AssessmentVerdict::from_judgment("Incorrect"));
        assert!(unfiltered.is_retained());
    }

    #[test]
    fn answer_id_shape() {
        assert_eq!(
            record(Arm::OursWoNlPp, 1, false).answer_id(),
            "r/ours-wo-nl-pp/xWant:0/negated_complementary/2"
        );
    }

    #[test]
    fn json_omits_empty_optionals() {
        let line = serde_json::to_string(&record(Arm::FewShot, 0, false)).unwrap();
        assert!(!line.contains("verdict"));
        assert!(!line.contains("started_at"));
        let back: RunRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record(Arm::FewShot, 0, false));
    }
}
