//! Instruction-tuning records: per-cohort question rewriting, Yes/No tags
//! derived from the labeled answer, and reference explanations.

use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::age::{extract_age_cues, groups_in, sentence_around};
use super::DatasetError;
use crate::fairness::{classify_age, AgeGroup, GroupedScenario, PerGroup};

pub const REWRITER_KEY_ENV: &str = "AGR_REWRITER_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRecord {
    pub record_id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<String>,
    pub label_index: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ages_mentioned: Vec<i64>,
}

impl SourceRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.answers.is_empty() {
            return Err(DatasetError::InvalidSource {
                record_id: self.record_id.clone(),
                reason: "no candidate answers".into(),
            });
        }
        if self.label_index >= self.answers.len() {
            return Err(DatasetError::InvalidSource {
                record_id: self.record_id.clone(),
                reason: format!("label_index {} out of {} answers", self.label_index, self.answers.len()),
            });
        }
        Ok(())
    }

    /// Cohorts present in the record: supplied ages when given, otherwise
    /// cues found in the context and candidate answers.
    pub fn age_groups(&self) -> Vec<AgeGroup> {
        if !self.ages_mentioned.is_empty() {
            let mut gs: Vec<AgeGroup> = self.ages_mentioned.iter().filter_map(|&a| classify_age(a).ok()).collect();
            gs.sort();
            gs.dedup();
            return gs;
        }
        let mut text = self.context.clone();
        for a in &self.answers {
            text.push('\n');
            text.push_str(a);
        }
        groups_in(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Yes,
    No,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Yes => "Yes",
            Tag::No => "No",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IftRecord {
    pub scenario_id: String,
    pub group: AgeGroup,
    pub question: String,
    pub tag: Tag,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriterError {
    #[error("rewriter transport failure: {0}")]
    Transport(String),
    #[error("rewriter returned an empty completion")]
    EmptyOutput,
    #[error("malformed rewriter response: {0}")]
    BadResponse(String),
    #[error("environment variable {REWRITER_KEY_ENV} is not set")]
    MissingApiKey,
}

/// Rewrites questions for a target cohort and writes reference
/// explanations. Implementations must tolerate concurrent calls.
pub trait RewriterClient: Send + Sync {
    fn rewrite_question(&self, question: &str, context: &str, group: AgeGroup) -> Result<String, RewriterError>;

    fn explain(&self, tag: Tag, question: &str, context: &str, group: AgeGroup) -> Result<String, RewriterError>;
}

/// How a rewritten question names each cohort.
pub fn group_phrase(group: AgeGroup) -> &'static str {
    match group {
        AgeGroup::Young => "young adult (10-29)",
        AgeGroup::MiddleAged => "middle-aged person (30-59)",
        AgeGroup::Old => "elderly person (60+)",
    }
}

static WHO_QUESTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*who\s+(.+?)\s*\??\s*$").unwrap());

/// Deterministic offline rewriter based on fixed templates.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateRewriter;

impl RewriterClient for TemplateRewriter {
    fn rewrite_question(&self, question: &str, _context: &str, group: AgeGroup) -> Result<String, RewriterError> {
        let phrase = group_phrase(group);
        let out = match WHO_QUESTION.captures(question) {
            Some(c) => format!("Was the {phrase} the one who {}?", &c[1]),
            None => format!("Regarding the {phrase}: {}", question.trim()),
        };
        Ok(out)
    }

    fn explain(&self, tag: Tag, _question: &str, context: &str, group: AgeGroup) -> Result<String, RewriterError> {
        let span = supporting_span(context, group);
        Ok(format!("{}, because the context states: '{}'.", tag.as_str(), span))
    }
}

/// Sentence of the context carrying the first cue for `group`, falling back
/// to the first sentence.
fn supporting_span(context: &str, group: AgeGroup) -> &str {
    let pos = extract_age_cues(context).into_iter().find(|c| c.group == group).map_or(0, |c| c.start);
    sentence_around(context, pos)
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// Remote completion endpoint: `POST {"prompt"}` returning `{"text"}`.
#[derive(Debug, Clone)]
pub struct HttpRewriter {
    url: String,
    api_key: String,
    retries: u32,
    agent: ureq::Agent,
}

impl HttpRewriter {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, timeout: Duration, retries: u32) -> Self {
        Self {
            url: url.into(),
            api_key: api_key.into(),
            retries,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    /// Reads the API key from `AGR_REWRITER_KEY`.
    pub fn from_env(url: impl Into<String>, timeout: Duration, retries: u32) -> Result<Self, RewriterError> {
        let key = std::env::var(REWRITER_KEY_ENV).map_err(|_| RewriterError::MissingApiKey)?;
        if key.trim().is_empty() {
            return Err(RewriterError::MissingApiKey);
        }
        Ok(Self::new(url, key, timeout, retries))
    }

    fn complete(&self, prompt: &str) -> Result<String, RewriterError> {
        let mut last = RewriterError::Transport("no attempt made".into());
        for _ in 0..=self.retries {
            let resp = self
                .agent
                .post(&self.url)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(CompletionRequest { prompt });
            match resp {
                Ok(r) => {
                    let body: CompletionResponse =
                        r.into_json().map_err(|e| RewriterError::BadResponse(e.to_string()))?;
                    let text = body.text.trim().to_string();
                    if text.is_empty() {
                        return Err(RewriterError::EmptyOutput);
                    }
                    return Ok(text);
                }
                Err(e) => last = RewriterError::Transport(e.to_string()),
            }
        }
        Err(last)
    }
}

impl RewriterClient for HttpRewriter {
    fn rewrite_question(&self, question: &str, context: &str, group: AgeGroup) -> Result<String, RewriterError> {
        let prompt = format!(
            "Context: {context}\nQuestion: {question}\n\
             Rewrite the question as a yes/no question asking specifically about the {}. \
             Reply with the rewritten question only.",
            group_phrase(group)
        );
        self.complete(&prompt)
    }

    fn explain(&self, tag: Tag, question: &str, context: &str, group: AgeGroup) -> Result<String, RewriterError> {
        let prompt = format!(
            "Context: {context}\nQuestion: {question}\nCorrect answer: {}\n\
             Expand the answer into one sentence starting with \"{}\" that explains it from the context \
             without assumptions about the {}.",
            tag.as_str(),
            tag.as_str(),
            group_phrase(group)
        );
        self.complete(&prompt)
    }
}

/// Rewrites `src.question` to ask about `group`.
pub fn rewrite_question_for_group(
    src: &SourceRecord,
    group: AgeGroup,
    rewriter: &dyn RewriterClient,
) -> Result<String, DatasetError> {
    if src.age_groups().is_empty() {
        return Err(DatasetError::NoAgeFound(src.record_id.clone()));
    }
    let q = rewriter.rewrite_question(&src.question, &src.context, group)?;
    if q.trim().is_empty() {
        return Err(RewriterError::EmptyOutput.into());
    }
    Ok(q)
}

/// `Yes` iff the labeled answer's subject falls in `group`.
pub fn derive_tag(src: &SourceRecord, group: AgeGroup) -> Result<Tag, DatasetError> {
    src.validate()?;
    let answer = &src.answers[src.label_index];
    let labeled = extract_age_cues(answer)
        .first()
        .map(|c| c.group)
        .ok_or_else(|| DatasetError::NoAgeFound(src.record_id.clone()))?;
    Ok(if labeled == group { Tag::Yes } else { Tag::No })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IftBuild {
    pub records: Vec<IftRecord>,
    pub skipped: Vec<SkippedRecord>,
}

fn ift_records_for(src: &SourceRecord, rewriter: &dyn RewriterClient) -> Result<Vec<IftRecord>, DatasetError> {
    src.validate()?;
    let groups = src.age_groups();
    if groups.is_empty() {
        return Err(DatasetError::NoAgeFound(src.record_id.clone()));
    }
    groups
        .into_iter()
        .map(|group| {
            let question = rewrite_question_for_group(src, group, rewriter)?;
            let tag = derive_tag(src, group)?;
            let explanation = rewriter.explain(tag, &question, &src.context, group)?;
            if explanation.trim().is_empty() {
                return Err(RewriterError::EmptyOutput.into());
            }
            Ok(IftRecord { scenario_id: src.record_id.clone(), group, question, tag, explanation })
        })
        .collect()
}

/// One record per cohort found in each source. A failing source
/// contributes no records and one skip entry.
pub fn build_ift_dataset(sources: &[SourceRecord], rewriter: &dyn RewriterClient) -> IftBuild {
    let mut out = IftBuild::default();
    for src in sources {
        match ift_records_for(src, rewriter) {
            Ok(recs) => out.records.extend(recs),
            Err(e) => out.skipped.push(SkippedRecord { record_id: src.record_id.clone(), reason: e.to_string() }),
        }
    }
    out
}

/// The source question rewritten once per cohort.
pub fn grouped_scenario(src: &SourceRecord, rewriter: &dyn RewriterClient) -> Result<GroupedScenario, DatasetError> {
    src.validate()?;
    let prompts = PerGroup::try_from_fn(|g| rewrite_question_for_group(src, g, rewriter))?;
    Ok(GroupedScenario { scenario_id: src.record_id.clone(), prompts, context: src.context.clone() })
}
