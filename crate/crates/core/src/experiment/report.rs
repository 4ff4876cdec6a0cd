use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Arm;
use super::manifest::LABELS_FILE;
use super::records::RunRecord;
use super::runner::load_run;
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_accuracy, judge_against_oracle, krippendorff_alpha, load_oracles, map_label, AccuracyTables,
    AnnotationRecord, AnswerKey, ClosedWorldOracle, ReliabilityReport, Verdict, ALPHA_THRESHOLD,
};
use crate::verbalizer::QuestionForm;

/// Published reference accuracies for the method comparison: (arm, standard, negated).
pub const REFERENCE_METHOD: [(Arm, f64, f64); 2] = [(Arm::FewShot, 88.7, 78.7), (Arm::Ours, 88.1, 89.8)];

/// Published reference accuracies for the ablation, negated questions only.
pub const REFERENCE_ABLATION: [(Arm, f64); 4] = [
    (Arm::Ours, 89.8),
    (Arm::OursWoPp, 89.0),
    (Arm::OursWoNlPp, 86.0),
    (Arm::FewShot, 78.7),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "path", rename_all = "snake_case")]
pub enum LabelSource {
    /// JSON lines of closed-world answer sets keyed by triple id.
    Oracle(PathBuf),
    /// JSON lines of annotation records; `None` means the run's `labels.jsonl`.
    Annotations(Option<PathBuf>),
}

impl LabelSource {
    fn name(&self) -> &'static str {
        match self {
            LabelSource::Oracle(_) => "oracle",
            LabelSource::Annotations(_) => "annotations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub arm: Arm,
    pub method: String,
    pub standard: Option<f64>,
    pub negated_complementary: Option<f64>,
    pub reference_standard: Option<f64>,
    pub reference_negated_complementary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: Arm,
    pub method: String,
    pub negated_complementary: Option<f64>,
    /// Same cell with filtered-out answers counted as incorrect.
    pub negated_complementary_all_answers: Option<f64>,
    pub reference_negated_complementary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub label_source: String,
    pub run_complete: bool,
    pub method_table: Vec<MethodRow>,
    pub ablation_table: Vec<AblationRow>,
    /// Denominator: retained answers.
    pub accuracy: AccuracyTables,
    /// Denominator: every final answer; filtered-out ones count as incorrect.
    pub accuracy_all_answers: AccuracyTables,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<ReliabilityReport>,
    /// `Some(false)` when alpha falls below the threshold; `None` without
    /// human labels or when alpha is undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliable: Option<bool>,
    pub assumptions: Vec<String>,
    pub warnings: Vec<String>,
}

/// Computes accuracy tables for a run from its raw records.
pub fn export_report(dir: &Path, source: &LabelSource) -> Result<Report> {
    let (manifest, records) = load_run(dir)?;
    let finals: Vec<&RunRecord> = records.iter().filter(|r| r.is_final()).collect();
    let mut warnings = Vec::new();
    if !manifest.complete {
        warnings.push(format!(
            "run is incomplete: {} work item(s) not finished",
            manifest.incomplete_items()
        ));
    }

    let (verdicts, reliability) = match source {
        LabelSource::Oracle(path) => (oracle_verdicts(&finals, &load_oracles(path)?)?, None),
        LabelSource::Annotations(path) => {
            let path = path.clone().unwrap_or_else(|| dir.join(LABELS_FILE));
            let labels: Vec<AnnotationRecord> = crate::jsonl::read_all(&path)?;
            annotation_verdicts(&finals, &labels, &mut warnings)?
        }
    };
    let reliable = reliability.as_ref().map(|r| r.pass);
    if reliable == Some(false) {
        warnings.push(format!(
            "krippendorff's alpha {:.3} is below {ALPHA_THRESHOLD}; results are not marked reliable",
            reliability.as_ref().map(|r| r.alpha).unwrap_or_default()
        ));
    }

    let key = |r: &RunRecord| AnswerKey {
        answer_id: r.answer_id(),
        arm: r.arm.display_name().to_string(),
        form: r.form,
    };
    let retained: Vec<AnswerKey> = finals.iter().filter(|r| r.is_retained()).map(|r| key(r)).collect();
    let accuracy = aggregate_accuracy(&retained, &verdicts)?;

    let mut all_verdicts = verdicts;
    for r in finals.iter().filter(|r| !r.is_retained()) {
        all_verdicts.insert(r.answer_id(), vec![Verdict::Incorrect]);
    }
    let everything: Vec<AnswerKey> = finals.iter().map(|r| key(r)).collect();
    let accuracy_all_answers = aggregate_accuracy(&everything, &all_verdicts)?;

    let arms: Vec<Arm> = Arm::ALL
        .into_iter()
        .filter(|a| manifest.config.arms.contains(a))
        .collect();
    let pct = |t: &AccuracyTables, arm: Arm, form| t.per_answer.get(arm.display_name(), form).and_then(|c| c.percent);
    let nc = QuestionForm::NegatedComplementary;
    let method_table = arms
        .iter()
        .map(|&arm| {
            let reference = REFERENCE_METHOD.iter().find(|(a, _, _)| *a == arm);
            MethodRow {
                arm,
                method: arm.display_name().to_string(),
                standard: pct(&accuracy, arm, QuestionForm::Standard),
                negated_complementary: pct(&accuracy, arm, nc),
                reference_standard: reference.map(|r| r.1),
                reference_negated_complementary: reference.map(|r| r.2),
            }
        })
        .collect();
    let ablation_table = arms
        .iter()
        .map(|&arm| AblationRow {
            arm,
            method: arm.display_name().to_string(),
            negated_complementary: pct(&accuracy, arm, nc),
            negated_complementary_all_answers: pct(&accuracy_all_answers, arm, nc),
            reference_negated_complementary: REFERENCE_ABLATION.iter().find(|(a, _)| *a == arm).map(|r| r.1),
        })
        .collect();

    Ok(Report {
        run_id: manifest.run_id,
        label_source: source.name().to_string(),
        run_complete: manifest.complete,
        method_table,
        ablation_table,
        accuracy,
        accuracy_all_answers,
        reliability,
        reliable,
        assumptions: manifest.assumptions,
        warnings,
    })
}

fn oracle_verdicts(finals: &[&RunRecord], worlds: &[ClosedWorldOracle]) -> Result<HashMap<String, Vec<Verdict>>> {
    let by_id: HashMap<&str, &ClosedWorldOracle> = worlds.iter().map(|w| (w.question_id.as_str(), w)).collect();
    let mut out = HashMap::new();
    let mut missing = Vec::new();
    for r in finals {
        let verdict = if r.no_answer {
            Verdict::Incorrect
        } else if let Some(world) = by_id.get(r.triple_id.as_str()) {
            judge_against_oracle(&r.final_answer, r.form, world)
        } else {
            if r.is_retained() {
                missing.push(r.answer_id());
            }
            continue;
        };
        out.insert(r.answer_id(), vec![verdict]);
    }
    if !missing.is_empty() {
        return Err(Error::MissingVerdicts(missing));
    }
    Ok(out)
}

type Verdicts = HashMap<String, Vec<Verdict>>;

fn annotation_verdicts(
    finals: &[&RunRecord],
    labels: &[AnnotationRecord],
    warnings: &mut Vec<String>,
) -> Result<(Verdicts, Option<ReliabilityReport>)> {
    let ids: HashSet<String> = finals.iter().map(|r| r.answer_id()).collect();
    let relevant: Vec<AnnotationRecord> = labels.iter().filter(|l| ids.contains(&l.answer_id)).cloned().collect();
    let foreign = labels.len() - relevant.len();
    if foreign > 0 {
        warnings.push(format!("{foreign} label(s) refer to answers outside this run and were ignored"));
    }
    let reliability = match krippendorff_alpha(&relevant) {
        Ok(r) => {
            if r.degenerate {
                warnings.push("every paired label falls in one category; alpha reported as 1".into());
            }
            Some(r)
        }
        Err(Error::UndefinedAlpha) => {
            warnings.push("krippendorff's alpha is undefined: no answer has two or more labels".into());
            None
        }
        Err(e) => return Err(e),
    };

    let mut per_pair: BTreeMap<(&str, &str), Verdict> = BTreeMap::new();
    for l in &relevant {
        per_pair.insert((&l.answer_id, &l.annotator_id), map_label(l.label));
    }
    let mut out: Verdicts = HashMap::new();
    for ((answer, _), verdict) in per_pair {
        out.entry(answer.to_string()).or_default().push(verdict);
    }
    for r in finals.iter().filter(|r| r.no_answer) {
        out.insert(r.answer_id(), vec![Verdict::Incorrect]);
    }
    Ok((out, reliability))
}

fn cell(v: Option<f64>) -> String {
    v.map(|p| format!("{p:.1}")).unwrap_or_else(|| "n/a".into())
}

impl Report {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Run {} (labels: {})", self.run_id, self.label_source);
        if !self.run_complete {
            let _ = writeln!(out, "Run status: INCOMPLETE");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Method comparison, accuracy % over retained answers");
        let _ = writeln!(
            out,
            "{:<15} {:>9} {:>11}   {:>13} {:>15}",
            "Method", "Standard", "Neg. Comp.", "Ref Standard", "Ref Neg. Comp."
        );
        for row in &self.method_table {
            let _ = writeln!(
                out,
                "{:<15} {:>9} {:>11}   {:>13} {:>15}",
                row.method,
                cell(row.standard),
                cell(row.negated_complementary),
                cell(row.reference_standard),
                cell(row.reference_negated_complementary)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Ablation, negated complementary accuracy %");
        let _ = writeln!(
            out,
            "{:<15} {:>11} {:>12}   {:>15}",
            "Method", "Neg. Comp.", "All answers", "Ref Neg. Comp."
        );
        for row in &self.ablation_table {
            let _ = writeln!(
                out,
                "{:<15} {:>11} {:>12}   {:>15}",
                row.method,
                cell(row.negated_complementary),
                cell(row.negated_complementary_all_answers),
                cell(row.reference_negated_complementary)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Pooled-vote accuracy % (retained answers)");
        for e in &self.accuracy.pooled.cells {
            let _ = writeln!(out, "  {:<15} {:<22} {}", e.arm, e.form.slug(), cell(e.cell.percent));
        }
        if let Some(r) = &self.reliability {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Krippendorff's alpha (nominal): {:.3} over {} answers, {} labels: {}",
                r.alpha,
                r.n_units,
                r.n_pairable_values,
                if r.pass { "reliable" } else { "NOT reliable" }
            );
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out);
            for w in &self.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Assumptions:");
        for a in &self.assumptions {
            let _ = writeln!(out, "  - {a}");
        }
        let _ = writeln!(out, "  - answers whose labels are all Unfamiliar are left out of the denominator");
        out
    }
}
