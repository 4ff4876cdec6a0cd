//! Answer judging: closed-world oracles, human labels, inter-rater
//! reliability, and accuracy tables.

mod accuracy;
mod alpha;
mod labels;
mod oracle;

pub use accuracy::{aggregate_accuracy, plurality, AccuracyTable, AccuracyTables, AnswerKey, Cell, CellEntry};
pub use alpha::{alpha_from_units, krippendorff_alpha, krippendorff_alpha_mapped, ReliabilityReport, ALPHA_THRESHOLD};
pub use labels::{map_label, AnnotationRecord, Label};
pub use oracle::{
    judge_against_oracle, load_oracles, nc_answer_set, normalize_answer, ClosedWorldOracle,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unfamiliar,
}
