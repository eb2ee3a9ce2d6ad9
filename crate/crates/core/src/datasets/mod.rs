//! Source ingestion and construction of preference and instruction-tuning
//! datasets.

mod age;
mod ift;
mod jsonl;
mod preference;
mod split;

use thiserror::Error;

pub use age::{extract_age_cues, groups_in, AgeCue};
pub use ift::{
    build_ift_dataset, derive_tag, group_phrase, grouped_scenario, rewrite_question_for_group, HttpRewriter, IftBuild,
    IftRecord, RewriterClient, RewriterError, SkippedRecord, SourceRecord, Tag, TemplateRewriter, REWRITER_KEY_ENV,
};
pub use jsonl::{parse_jsonl, read_jsonl, to_jsonl, write_jsonl, JsonlError};
pub use preference::{
    aggregate_annotations, build_preference_pairs, AnnotatedResponse, AnnotationInput, PreferenceRecord, ANNOTATORS,
};
pub use split::{split_dataset, DatasetSplit, DEFAULT_TRAIN_RATIO};

use crate::fairness::FairnessError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("expected 5 annotations, got {0}")]
    BadAnnotationCount(usize),
    #[error(transparent)]
    Score(#[from] FairnessError),
    #[error("no classifiable age found in record {0}")]
    NoAgeFound(String),
    #[error(transparent)]
    Rewriter(#[from] RewriterError),
    #[error("split ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("invalid source record {record_id}: {reason}")]
    InvalidSource { record_id: String, reason: String },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}
