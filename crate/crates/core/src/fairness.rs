//! Age cohorts, annotation scores and the group-fairness reward.
//!
//! Everything here is a pure function over small immutable values. The
//! reward combines per-group quality scores and subtracts a penalty
//! proportional to the summed pairwise disparity between cohorts:
//!
//! ```text
//! D_total = |Q_y - Q_m| + |Q_y - Q_o| + |Q_m - Q_o|
//! R       = Q_y + Q_m + Q_o - lambda * D_total
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FairnessError {
    #[error("age {0} is below the youngest cohort (10)")]
    AgeOutOfRange(i64),
    #[error("pairwise disparity needs two distinct groups, got {0} twice")]
    SameGroup(AgeGroup),
    #[error("group vector is missing {0}")]
    IncompleteVector(AgeGroup),
    #[error("score for {group} is not finite: {value}")]
    NonFinite { group: AgeGroup, value: f64 },
    #[error("annotation score {0} outside 1..=3")]
    ScoreOutOfRange(u8),
    #[error("lambda must be finite and >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("epsilon must be finite and >= 0, got {0}")]
    NegativeEpsilon(f64),
}

/// One of the three age cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    /// 10-29 years.
    Young,
    /// 30-59 years.
    #[serde(rename = "middle")]
    MiddleAged,
    /// 60 and older.
    Old,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Young, AgeGroup::MiddleAged, AgeGroup::Old];

    /// The three unordered pairs, in a fixed order.
    pub const PAIRS: [(AgeGroup, AgeGroup); 3] = [
        (AgeGroup::Young, AgeGroup::MiddleAged),
        (AgeGroup::Young, AgeGroup::Old),
        (AgeGroup::MiddleAged, AgeGroup::Old),
    ];

    pub fn index(self) -> usize {
        match self {
            AgeGroup::Young => 0,
            AgeGroup::MiddleAged => 1,
            AgeGroup::Old => 2,
        }
    }

    /// Inclusive age range in years; `None` as upper bound means open-ended.
    pub fn age_range(self) -> (u32, Option<u32>) {
        match self {
            AgeGroup::Young => (10, Some(29)),
            AgeGroup::MiddleAged => (30, Some(59)),
            AgeGroup::Old => (60, None),
        }
    }

    /// Wire name used in JSONL files.
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Young => "young",
            AgeGroup::MiddleAged => "middle",
            AgeGroup::Old => "old",
        }
    }

    /// Column header used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            AgeGroup::Young => "Young",
            AgeGroup::MiddleAged => "Middle-age",
            AgeGroup::Old => "Old",
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps an age in years to its cohort. Ages below 10 have no cohort.
pub fn classify_age(age: i64) -> Result<AgeGroup, FairnessError> {
    match age {
        a if a < 10 => Err(FairnessError::AgeOutOfRange(a)),
        10..=29 => Ok(AgeGroup::Young),
        30..=59 => Ok(AgeGroup::MiddleAged),
        _ => Ok(AgeGroup::Old),
    }
}

/// A value for each of the three cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerGroup<T> {
    pub young: T,
    #[serde(rename = "middle")]
    pub middle_aged: T,
    pub old: T,
}

impl<T> PerGroup<T> {
    pub fn new(young: T, middle_aged: T, old: T) -> Self {
        Self { young, middle_aged, old }
    }

    pub fn from_fn(mut f: impl FnMut(AgeGroup) -> T) -> Self {
        Self { young: f(AgeGroup::Young), middle_aged: f(AgeGroup::MiddleAged), old: f(AgeGroup::Old) }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(AgeGroup) -> Result<T, E>) -> Result<Self, E> {
        Ok(Self { young: f(AgeGroup::Young)?, middle_aged: f(AgeGroup::MiddleAged)?, old: f(AgeGroup::Old)? })
    }

    /// Builds a complete vector from a map; any missing cohort is an error.
    pub fn try_from_map(mut map: BTreeMap<AgeGroup, T>) -> Result<Self, FairnessError> {
        Self::try_from_fn(|g| map.remove(&g).ok_or(FairnessError::IncompleteVector(g)))
    }

    pub fn map<U>(&self, mut f: impl FnMut(AgeGroup, &T) -> U) -> PerGroup<U> {
        PerGroup::from_fn(|g| f(g, &self[g]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgeGroup, &T)> {
        AgeGroup::ALL.into_iter().map(move |g| (g, &self[g]))
    }
}

impl<T> Index<AgeGroup> for PerGroup<T> {
    type Output = T;

    fn index(&self, g: AgeGroup) -> &T {
        match g {
            AgeGroup::Young => &self.young,
            AgeGroup::MiddleAged => &self.middle_aged,
            AgeGroup::Old => &self.old,
        }
    }
}

impl<T> IndexMut<AgeGroup> for PerGroup<T> {
    fn index_mut(&mut self, g: AgeGroup) -> &mut T {
        match g {
            AgeGroup::Young => &mut self.young,
            AgeGroup::MiddleAged => &mut self.middle_aged,
            AgeGroup::Old => &mut self.old,
        }
    }
}

/// Per-dimension annotation: communication effectiveness, logical
/// soundness and age-related bias, each scored 1..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAnnotation")]
pub struct QualityAnnotation {
    ce: u8,
    ls: u8,
    ab: u8,
}

#[derive(Deserialize)]
struct RawAnnotation {
    ce: u8,
    ls: u8,
    ab: u8,
}

impl TryFrom<RawAnnotation> for QualityAnnotation {
    type Error = FairnessError;

    fn try_from(raw: RawAnnotation) -> Result<Self, Self::Error> {
        QualityAnnotation::new(raw.ce, raw.ls, raw.ab)
    }
}

impl QualityAnnotation {
    pub fn new(ce: u8, ls: u8, ab: u8) -> Result<Self, FairnessError> {
        for s in [ce, ls, ab] {
            if !(1..=3).contains(&s) {
                return Err(FairnessError::ScoreOutOfRange(s));
            }
        }
        Ok(Self { ce, ls, ab })
    }

    pub fn ce(&self) -> u8 {
        self.ce
    }

    pub fn ls(&self) -> u8 {
        self.ls
    }

    pub fn ab(&self) -> u8 {
        self.ab
    }

    /// Total quality score in 3..=9.
    pub fn total(&self) -> u8 {
        self.ce + self.ls + self.ab
    }
}

/// One prompt instantiated once per cohort from a shared context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedScenario {
    pub scenario_id: String,
    pub prompts: PerGroup<String>,
    pub context: String,
}

/// Real-valued quality score for each cohort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerGroup<f64>", into = "PerGroup<f64>")]
pub struct GroupQualityVector(PerGroup<f64>);

impl GroupQualityVector {
    pub fn new(young: f64, middle_aged: f64, old: f64) -> Result<Self, FairnessError> {
        Self::try_from(PerGroup::new(young, middle_aged, old))
    }

    pub fn try_from_map(map: BTreeMap<AgeGroup, f64>) -> Result<Self, FairnessError> {
        Self::try_from(PerGroup::try_from_map(map)?)
    }

    pub fn get(&self, g: AgeGroup) -> f64 {
        self.0[g]
    }

    pub fn scores(&self) -> &PerGroup<f64> {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.young + self.0.middle_aged + self.0.old
    }
}

impl TryFrom<PerGroup<f64>> for GroupQualityVector {
    type Error = FairnessError;

    fn try_from(scores: PerGroup<f64>) -> Result<Self, Self::Error> {
        for (group, &value) in scores.iter() {
            if !value.is_finite() {
                return Err(FairnessError::NonFinite { group, value });
            }
        }
        Ok(Self(scores))
    }
}

impl From<GroupQualityVector> for PerGroup<f64> {
    fn from(v: GroupQualityVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    lambda: f64,
}

impl RewardConfig {
    /// Fairness coefficient used for the attribute-focused data profile.
    pub const ABMA_LAMBDA: f64 = 0.5;
    /// Fairness coefficient used for the behavior-focused data profile.
    pub const ABMB_LAMBDA: f64 = 0.7;

    pub fn new(lambda: f64) -> Result<Self, FairnessError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(FairnessError::NegativeLambda(lambda));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda: Self::ABMA_LAMBDA }
    }
}

pub fn pairwise_disparity(q: &GroupQualityVector, a: AgeGroup, b: AgeGroup) -> Result<f64, FairnessError> {
    if a == b {
        return Err(FairnessError::SameGroup(a));
    }
    Ok((q.get(a) - q.get(b)).abs())
}

/// Sum of absolute differences over the three unordered cohort pairs.
pub fn total_disparity(q: &GroupQualityVector) -> f64 {
    AgeGroup::PAIRS.iter().map(|&(a, b)| (q.get(a) - q.get(b)).abs()).sum()
}

pub fn agr_reward(q: &GroupQualityVector, cfg: &RewardConfig) -> f64 {
    q.sum() - cfg.lambda * total_disparity(q)
}

/// Largest absolute difference of a metric between any two cohorts.
pub fn fairness_gap(metrics: &PerGroup<f64>) -> f64 {
    AgeGroup::PAIRS.iter().map(|&(a, b)| (metrics[a] - metrics[b]).abs()).fold(0.0, f64::max)
}

/// `fairness_gap` over a possibly incomplete map.
pub fn fairness_gap_map(metrics: &BTreeMap<AgeGroup, f64>) -> Result<f64, FairnessError> {
    Ok(fairness_gap(&PerGroup::try_from_map(metrics.clone())?))
}

/// True iff every pair of cohorts differs by at most `epsilon`.
pub fn fairness_gate(metrics: &PerGroup<f64>, epsilon: f64) -> Result<bool, FairnessError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(FairnessError::NegativeEpsilon(epsilon));
    }
    Ok(fairness_gap(metrics) <= epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(y: f64, m: f64, o: f64) -> GroupQualityVector {
        GroupQualityVector::new(y, m, o).unwrap()
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify_age(10), Ok(AgeGroup::Young));
        assert_eq!(classify_age(29), Ok(AgeGroup::Young));
        assert_eq!(classify_age(30), Ok(AgeGroup::MiddleAged));
        assert_eq!(classify_age(59), Ok(AgeGroup::MiddleAged));
        assert_eq!(classify_age(60), Ok(AgeGroup::Old));
        assert_eq!(classify_age(104), Ok(AgeGroup::Old));
        assert_eq!(classify_age(7), Err(FairnessError::AgeOutOfRange(7)));
    }

    #[test]
    fn ranges_are_disjoint_and_ordered() {
        let ranges: Vec<_> = AgeGroup::ALL.iter().map(|g| g.age_range()).collect();
        for w in ranges.windows(2) {
            assert_eq!(w[0].1.unwrap() + 1, w[1].0);
        }
        for age in 10..130 {
            let g = classify_age(age).unwrap();
            let (lo, hi) = g.age_range();
            assert!(age as u32 >= lo && hi.is_none_or(|h| age as u32 <= h));
        }
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_disparity(&q(3., 3., 3.), AgeGroup::Young, AgeGroup::MiddleAged), Ok(0.0));
        assert_eq!(pairwise_disparity(&q(9., 6., 3.), AgeGroup::Young, AgeGroup::Old), Ok(6.0));
        let v = q(2., 5., 3.);
        assert_eq!(pairwise_disparity(&v, AgeGroup::MiddleAged, AgeGroup::Old), Ok(2.0));
        assert_eq!(pairwise_disparity(&v, AgeGroup::Old, AgeGroup::MiddleAged), Ok(2.0));
        assert_eq!(pairwise_disparity(&v, AgeGroup::Old, AgeGroup::Old), Err(FairnessError::SameGroup(AgeGroup::Old)));
    }

    #[test]
    fn total_disparity_examples() {
        assert_eq!(total_disparity(&q(3., 3., 3.)), 0.0);
        assert_eq!(total_disparity(&q(9., 6., 3.)), 12.0);
        assert_eq!(total_disparity(&q(2., 2., 3.)), 2.0);
    }

    #[test]
    fn incomplete_vector_rejected() {
        let mut m = BTreeMap::new();
        m.insert(AgeGroup::Young, 1.0);
        m.insert(AgeGroup::Old, 1.0);
        assert_eq!(
            GroupQualityVector::try_from_map(m.clone()),
            Err(FairnessError::IncompleteVector(AgeGroup::MiddleAged))
        );
        assert_eq!(fairness_gap_map(&m), Err(FairnessError::IncompleteVector(AgeGroup::MiddleAged)));
        assert!(GroupQualityVector::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn reward_examples() {
        let half = RewardConfig::new(0.5).unwrap();
        assert_eq!(agr_reward(&q(3., 3., 3.), &half), 9.0);
        let r = agr_reward(&q(9., 6., 3.), &RewardConfig::new(0.7).unwrap());
        assert!((r - 9.6).abs() < 1e-12);
        assert_eq!(agr_reward(&q(9., 3., 3.), &RewardConfig::new(0.0).unwrap()), 15.0);
        assert!(RewardConfig::new(-0.1).is_err());
        assert_eq!(RewardConfig::default().lambda(), 0.5);
    }

    #[test]
    fn gap_and_gate_examples() {
        let flat = PerGroup::new(0.8, 0.8, 0.8);
        assert_eq!(fairness_gap(&flat), 0.0);
        let skew = PerGroup::new(0.85, 0.80, 0.74);
        assert!((fairness_gap(&skew) - 0.11).abs() < 1e-12);
        // T&C per cohort reported for the strongest fairness-rewarded run
        let reported = PerGroup::new(0.862, 0.857, 0.837);
        assert!((fairness_gap(&reported) - 0.025).abs() < 1e-12);

        assert_eq!(fairness_gate(&flat, 0.05), Ok(true));
        assert_eq!(fairness_gate(&skew, 0.05), Ok(false));
        assert_eq!(fairness_gate(&skew, fairness_gap(&skew)), Ok(true));
        assert!(fairness_gate(&skew, -1.0).is_err());
    }

    #[test]
    fn annotation_bounds() {
        let a = QualityAnnotation::new(3, 2, 1).unwrap();
        assert_eq!(a.total(), 6);
        assert_eq!(QualityAnnotation::new(0, 2, 2), Err(FairnessError::ScoreOutOfRange(0)));
        assert_eq!(QualityAnnotation::new(1, 4, 2), Err(FairnessError::ScoreOutOfRange(4)));
        let parsed: Result<QualityAnnotation, _> = serde_json::from_str(r#"{"ce":1,"ls":9,"ab":1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn group_wire_names() {
        assert_eq!(serde_json::to_string(&AgeGroup::MiddleAged).unwrap(), "\"middle\"");
        let g: AgeGroup = serde_json::from_str("\"old\"").unwrap();
        assert_eq!(g, AgeGroup::Old);
    }

    fn explicit_pairs(v: &GroupQualityVector) -> f64 {
        let mut total = 0.0;
        for (i, a) in AgeGroup::ALL.iter().enumerate() {
            for b in &AgeGroup::ALL[i + 1..] {
                total += (v.get(*a) - v.get(*b)).abs();
            }
        }
        total
    }

    proptest! {
        #[test]
        fn disparity_permutation_invariant(y in -50.0..50.0f64, m in -50.0..50.0f64, o in -50.0..50.0f64) {
            let base = total_disparity(&q(y, m, o));
            for (a, b, c) in [(y, o, m), (m, y, o), (m, o, y), (o, y, m), (o, m, y)] {
                prop_assert!((total_disparity(&q(a, b, c)) - base).abs() < 1e-12);
            }
            prop_assert!((base - explicit_pairs(&q(y, m, o))).abs() < 1e-12);
        }

        #[test]
        fn reward_monotone_in_lambda(y in -5.0..5.0f64, m in -5.0..5.0f64, o in -5.0..5.0f64,
                                      l1 in 0.0..2.0f64, dl in 0.001..2.0f64) {
            let v = q(y, m, o);
            let lo = agr_reward(&v, &RewardConfig::new(l1).unwrap());
            let hi = agr_reward(&v, &RewardConfig::new(l1 + dl).unwrap());
            if total_disparity(&v) > 0.0 {
                prop_assert!(hi < lo);
            } else {
                prop_assert_eq!(hi, lo);
            }
            prop_assert_eq!(agr_reward(&v, &RewardConfig::new(0.0).unwrap()), v.sum());
        }

        #[test]
        fn zero_disparity_iff_equal(y in 0u8..4, m in 0u8..4, o in 0u8..4) {
            let v = q(y as f64, m as f64, o as f64);
            prop_assert_eq!(total_disparity(&v) == 0.0, y == m && m == o);
        }

        #[test]
        fn gate_monotone_in_epsilon(y in 0.0..1.0f64, m in 0.0..1.0f64, o in 0.0..1.0f64,
                                    eps in 0.0..1.0f64, extra in 0.0..1.0f64) {
            let metrics = PerGroup::new(y, m, o);
            if fairness_gate(&metrics, eps).unwrap() {
                prop_assert!(fairness_gate(&metrics, eps + extra).unwrap());
            }
        }
    }
}
