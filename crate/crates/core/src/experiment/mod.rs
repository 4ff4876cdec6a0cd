//! Experiment orchestration: sampling, prompting every arm, parsing,
//! filtering, resumable persistence and reporting.

mod config;
mod manifest;
mod records;
mod report;
mod runner;

pub use config::{parse_arms, Arm, AssetHashes, AssetPaths, RunAssets, RunConfig, TimestampMode};
pub use manifest::{
    tally, ArmFormCounts, ItemStatus, RunManifest, WorkItem, ASSESSMENTS_FILE, ASSUMPTIONS, LABELS_FILE,
    MANIFEST_FILE, RECORDS_FILE, REJECTS_FILE,
};
pub use records::{answer_id, AssessmentEntry, RecordKey, RunRecord};
pub use report::{
    export_report, AblationRow, LabelSource, MethodRow, Report, REFERENCE_ABLATION, REFERENCE_METHOD,
};
pub use runner::{
    load_records, load_run, reassess, resume_run, resume_with_gateway, run_experiment, run_with_gateway,
    ReassessSummary, RunSummary,
};
