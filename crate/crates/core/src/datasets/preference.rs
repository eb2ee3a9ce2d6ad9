use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::fairness::QualityAnnotation;

pub const ANNOTATORS: usize = 5;

/// Annotator votes as supplied on disk, before aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationInput {
    pub query: String,
    pub response: String,
    pub annotations: Vec<QualityAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedResponse {
    pub query: String,
    pub response: String,
    pub annotations: Vec<QualityAnnotation>,
    #[serde(rename = "final")]
    pub final_score: QualityAnnotation,
}

impl AnnotatedResponse {
    pub fn from_input(input: AnnotationInput) -> Result<Self, DatasetError> {
        let final_score = aggregate_annotations(&input.annotations)?;
        Ok(Self { query: input.query, response: input.response, annotations: input.annotations, final_score })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub query: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_total: u8,
    pub rejected_total: u8,
}

/// Most common vote; a tie between modes resolves to the lowest score.
fn mode(votes: impl Iterator<Item = u8>) -> u8 {
    let mut counts = [0usize; 4];
    for v in votes {
        counts[v as usize] += 1;
    }
    // strict `>` keeps the first (lowest) score among equal counts
    let mut best = 1;
    for s in 2..=3 {
        if counts[s] > counts[best] {
            best = s;
        }
    }
    best as u8
}

/// Per-dimension mode over exactly five annotators.
pub fn aggregate_annotations(votes: &[QualityAnnotation]) -> Result<QualityAnnotation, DatasetError> {
    if votes.len() != ANNOTATORS {
        return Err(DatasetError::BadAnnotationCount(votes.len()));
    }
    let ce = mode(votes.iter().map(|a| a.ce()));
    let ls = mode(votes.iter().map(|a| a.ls()));
    let ab = mode(votes.iter().map(|a| a.ab()));
    Ok(QualityAnnotation::new(ce, ls, ab)?)
}

/// Every unordered pair of responses to the same query with distinct
/// totals, higher total as `chosen`. Queries keep first-appearance order.
pub fn build_preference_pairs(responses: &[AnnotatedResponse]) -> Vec<PreferenceRecord> {
    let mut queries: Vec<&str> = Vec::new();
    for r in responses {
        if !queries.contains(&r.query.as_str()) {
            queries.push(&r.query);
        }
    }
    let mut out = Vec::new();
    for q in queries {
        let group: Vec<&AnnotatedResponse> = responses.iter().filter(|r| r.query == q).collect();
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                let (ta, tb) = (a.final_score.total(), b.final_score.total());
                if ta == tb {
                    continue;
                }
                let (hi, lo) = if ta > tb { (a, b) } else { (b, a) };
                out.push(PreferenceRecord {
                    query: q.to_string(),
                    chosen: hi.response.clone(),
                    rejected: lo.response.clone(),
                    chosen_total: hi.final_score.total(),
                    rejected_total: lo.final_score.total(),
                });
            }
        }
    }
    out
}
