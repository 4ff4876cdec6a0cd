//! Self-hosted labeling service. Answers from a run are rendered as
//! sentences, served one at a time to annotators, and the five-way labels
//! are appended to `labels.jsonl` in the run directory.

pub mod batch;
pub mod server;
pub mod store;

pub use batch::{build_batch, load_or_build_batch, Batch, BatchItem, BATCH_FILE};
pub use server::{router, serve, ServiceConfig};
pub use store::{AnnotationStore, AnnotationTask, LabelOption, Progress, StoreError, Submission, SubmitAck};

/// Instructions shown to every annotator.
pub const INSTRUCTIONS: &str = include_str!("../assets/instructions.txt");
