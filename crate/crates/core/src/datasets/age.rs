//! Age cue extraction from free text.
//!
//! Explicit numeric mentions ("72-year-old", "aged 25", "40 years old") are
//! classified by age; a small lexicon covers common descriptive phrases.

use std::sync::LazyLock;

use regex::Regex;

use crate::fairness::{classify_age, AgeGroup};

static NUMERIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:(\d{1,3})[- ]years?[- ]old|aged\s+(\d{1,3}))\b").unwrap());

static LEXICON: LazyLock<Vec<(Regex, AgeGroup)>> = LazyLock::new(|| {
    let table: [(&str, AgeGroup); 3] = [
        (
            r"teenagers?|teens?|young adults?|young (?:man|woman|men|women|person|people)|college students?|high schoolers?",
            AgeGroup::Young,
        ),
        (r"middle[- ]aged", AgeGroup::MiddleAged),
        (
            r"elderly|retirees?|pensioners?|senior citizens?|grand(?:mother|father|ma|pa|parents?)|old (?:man|woman|men|women|person|people)",
            AgeGroup::Old,
        ),
    ];
    table.into_iter().map(|(p, g)| (Regex::new(&format!(r"(?i)\b(?:{p})\b")).unwrap(), g)).collect()
});

/// A located age mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeCue {
    pub group: AgeGroup,
    pub start: usize,
    pub end: usize,
}

/// All age cues in `text`, ordered by position. Numeric ages below 10 are
/// ignored.
pub fn extract_age_cues(text: &str) -> Vec<AgeCue> {
    let mut cues = Vec::new();
    for caps in NUMERIC.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let digits = caps.get(1).or_else(|| caps.get(2)).unwrap();
        let age: i64 = digits.as_str().parse().unwrap();
        if let Ok(group) = classify_age(age) {
            cues.push(AgeCue { group, start: whole.start(), end: whole.end() });
        }
    }
    for (re, group) in LEXICON.iter() {
        for m in re.find_iter(text) {
            // "young adults" inside a numeric phrase etc. cannot overlap a
            // numeric cue, but lexicon phrases may overlap each other.
            if cues.iter().any(|c| m.start() < c.end && c.start < m.end()) {
                continue;
            }
            cues.push(AgeCue { group: *group, start: m.start(), end: m.end() });
        }
    }
    cues.sort_by_key(|c| (c.start, c.end));
    cues
}

/// Distinct cohorts mentioned in `text`, in cohort order.
pub fn groups_in(text: &str) -> Vec<AgeGroup> {
    let mut gs: Vec<AgeGroup> = extract_age_cues(text).into_iter().map(|c| c.group).collect();
    gs.sort();
    gs.dedup();
    gs
}

/// The sentence of `text` containing byte offset `pos`.
pub(crate) fn sentence_around(text: &str, pos: usize) -> &str {
    let is_end = |c: char| matches!(c, '.' | '!' | '?');
    let start = text[..pos].rfind(is_end).map_or(0, |i| i + 1);
    let end = text[pos..].find(is_end).map_or(text.len(), |i| pos + i + 1);
    text[start..end].trim()
}
