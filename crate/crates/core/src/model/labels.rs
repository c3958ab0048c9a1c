//! QC label algebra: grades, tiers, rater annotations and their consensus.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("grade must be 0, 1 or 2, got {0}")]
    GradeOutOfRange(u8),
    #[error("annotation for image {image_id} by {rater_id}: {reason}")]
    InvalidAnnotation { image_id: String, rater_id: String, reason: &'static str },
    #[error("annotations refer to different images ({0} vs {1})")]
    IdMismatch(String, String),
    #[error("both annotations come from rater {0}")]
    SameRater(String),
    #[error("raters disagree on straight reject for image {0}; manual adjudication required")]
    MissingAdjudication(String),
}

/// A three-level ordinal grade (0 = none, 1 = some, 2 = severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const NONE: Grade = Grade(0);
    pub const MILD: Grade = Grade(1);
    pub const SEVERE: Grade = Grade(2);

    pub fn new(value: u8) -> Result<Self, LabelError> {
        if value <= 2 {
            Ok(Grade(value))
        } else {
            Err(LabelError::GradeOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Grade {
    type Error = LabelError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Grade::new(value)
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grades {
    pub motion: Grade,
    pub contrast: Grade,
    pub noise: Grade,
}

impl Grades {
    pub fn new(motion: u8, contrast: u8, noise: u8) -> Result<Self, LabelError> {
        Ok(Self { motion: Grade::new(motion)?, contrast: Grade::new(contrast)?, noise: Grade::new(noise)? })
    }

    pub fn as_array(&self) -> [Grade; 3] {
        [self.motion, self.contrast, self.noise]
    }

    /// Elementwise maximum.
    pub fn max(&self, other: &Grades) -> Grades {
        Grades {
            motion: self.motion.max(other.motion),
            contrast: self.contrast.max(other.contrast),
            noise: self.noise.max(other.noise),
        }
    }

    pub fn tier(&self) -> Tier {
        tier_from_grades(self)
    }
}

/// Overall quality class; the derived ordering puts the worst quality last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Tier {
    Tier1,
    Tier2,
    Tier3,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Tier1, Tier::Tier2, Tier::Tier3];

    pub fn number(self) -> u8 {
        match self {
            Tier::Tier1 => 1,
            Tier::Tier2 => 2,
            Tier::Tier3 => 3,
        }
    }
}

impl TryFrom<u8> for Tier {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(Tier::Tier1),
            2 => Ok(Tier::Tier2),
            3 => Ok(Tier::Tier3),
            other => Err(format!("tier must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Tier> for u8 {
    fn from(t: Tier) -> u8 {
        t.number()
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tier {}", self.number())
    }
}

/// Tier 1 when every grade is 0, tier 3 when any grade is 2, tier 2 otherwise.
pub fn tier_from_grades(grades: &Grades) -> Tier {
    let worst = grades.as_array().into_iter().max().unwrap_or(Grade::NONE);
    match worst.value() {
        0 => Tier::Tier1,
        1 => Tier::Tier2,
        _ => Tier::Tier3,
    }
}

/// One rater's judgement of one image.
///
/// A straight-reject annotation carries neither a gadolinium flag nor grades;
/// every other annotation carries both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub rater_id: String,
    pub straight_reject: bool,
    #[serde(default)]
    pub gadolinium: Option<bool>,
    #[serde(default)]
    pub grades: Option<Grades>,
    /// Milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
}

impl Annotation {
    pub fn straight_reject(image_id: impl Into<String>, rater_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            rater_id: rater_id.into(),
            straight_reject: true,
            gadolinium: None,
            grades: None,
            timestamp: 0,
        }
    }

    pub fn graded(image_id: impl Into<String>, rater_id: impl Into<String>, gadolinium: bool, grades: Grades) -> Self {
        Self {
            image_id: image_id.into(),
            rater_id: rater_id.into(),
            straight_reject: false,
            gadolinium: Some(gadolinium),
            grades: Some(grades),
            timestamp: 0,
        }
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        let invalid = |reason| LabelError::InvalidAnnotation {
            image_id: self.image_id.clone(),
            rater_id: self.rater_id.clone(),
            reason,
        };
        if self.image_id.is_empty() {
            return Err(invalid("empty image id"));
        }
        if self.rater_id.is_empty() {
            return Err(invalid("empty rater id"));
        }
        match (self.straight_reject, self.gadolinium.is_some(), self.grades.is_some()) {
            (true, false, false) | (false, true, true) => Ok(()),
            (true, _, _) => Err(invalid("straight reject must not carry gadolinium or grades")),
            (false, _, _) => Err(invalid("non-rejected image requires gadolinium flag and grades")),
        }
    }

    pub fn tier(&self) -> Option<Tier> {
        self.grades.as_ref().map(tier_from_grades)
    }
}

/// Merged label of two raters for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusLabel {
    pub image_id: String,
    pub straight_reject: bool,
    /// Set when the raters disagreed on straight reject and it was settled manually.
    #[serde(default)]
    pub sr_adjudicated: bool,
    #[serde(default)]
    pub gadolinium: Option<bool>,
    #[serde(default)]
    pub grades: Option<Grades>,
    #[serde(default)]
    pub tier: Option<Tier>,
}

impl ConsensusLabel {
    pub fn straight_reject(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            straight_reject: true,
            sr_adjudicated: false,
            gadolinium: None,
            grades: None,
            tier: None,
        }
    }

    pub fn graded(image_id: impl Into<String>, gadolinium: bool, grades: Grades) -> Self {
        Self {
            image_id: image_id.into(),
            straight_reject: false,
            sr_adjudicated: false,
            gadolinium: Some(gadolinium),
            grades: Some(grades),
            tier: Some(tier_from_grades(&grades)),
        }
    }

    /// Checks the SR-excludes-grades rule and that the stored tier matches the grades.
    pub fn validate(&self) -> Result<(), LabelError> {
        let invalid = |reason| LabelError::InvalidAnnotation {
            image_id: self.image_id.clone(),
            rater_id: "consensus".into(),
            reason,
        };
        match (self.straight_reject, self.gadolinium.is_some(), self.grades, self.tier) {
            (true, false, None, None) => Ok(()),
            (true, ..) => Err(invalid("straight reject must not carry gadolinium, grades or tier")),
            (false, true, Some(g), Some(t)) if tier_from_grades(&g) == t => Ok(()),
            (false, true, Some(_), Some(_)) => Err(invalid("tier does not match grades")),
            (false, ..) => Err(invalid("non-rejected consensus requires gadolinium, grades and tier")),
        }
    }
}

/// Merges two raters' annotations of the same image.
///
/// Grades take the elementwise maximum and the gadolinium flag the logical OR,
/// so any imperfection seen by either rater is kept. A straight-reject
/// disagreement needs `sr_resolution`, the decision the raters reached
/// together after reviewing the image.
pub fn consensus_merge(
    a: &Annotation,
    b: &Annotation,
    sr_resolution: Option<bool>,
) -> Result<ConsensusLabel, LabelError> {
    if a.image_id != b.image_id {
        return Err(LabelError::IdMismatch(a.image_id.clone(), b.image_id.clone()));
    }
    if a.rater_id == b.rater_id {
        return Err(LabelError::SameRater(a.rater_id.clone()));
    }
    a.validate()?;
    b.validate()?;

    let image_id = a.image_id.clone();
    if a.straight_reject != b.straight_reject {
        let keep_sr = sr_resolution.ok_or_else(|| LabelError::MissingAdjudication(image_id.clone()))?;
        let mut label = if keep_sr {
            ConsensusLabel::straight_reject(image_id)
        } else {
            // Only the non-SR rater graded the image.
            let graded = if a.straight_reject { b } else { a };
            ConsensusLabel::graded(image_id, graded.gadolinium.unwrap_or(false), graded.grades.expect("validated"))
        };
        label.sr_adjudicated = true;
        return Ok(label);
    }

    if a.straight_reject {
        return Ok(ConsensusLabel::straight_reject(image_id));
    }
    let (ga, gb) = (a.grades.expect("validated"), b.grades.expect("validated"));
    let gadolinium = a.gadolinium.unwrap_or(false) || b.gadolinium.unwrap_or(false);
    Ok(ConsensusLabel::graded(image_id, gadolinium, ga.max(&gb)))
}

/// The four binary classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Straight reject (positive) vs usable image.
    Sr,
    /// Gadolinium (positive) vs none, non-SR images only.
    Gadolinium,
    /// Tier 3 (positive) vs tiers 1-2, non-SR images only.
    #[serde(rename = "t3-vs-t21")]
    T3VsT21,
    /// Tier 2 (positive) vs tier 1; SR and tier 3 images excluded.
    #[serde(rename = "t2-vs-t1")]
    T2VsT1,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Sr, Task::Gadolinium, Task::T3VsT21, Task::T2VsT1];

    pub fn name(self) -> &'static str {
        match self {
            Task::Sr => "sr",
            Task::Gadolinium => "gadolinium",
            Task::T3VsT21 => "t3-vs-t21",
            Task::T2VsT1 => "t2-vs-t1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::Sr => "SR (yes vs no)",
            Task::Gadolinium => "Gadolinium (yes vs no)",
            Task::T3VsT21 => "Tier 3 vs tiers 2-1",
            Task::T2VsT1 => "Tier 2 vs tier 1",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task {s:?}; expected one of sr, gadolinium, t3-vs-t21, t2-vs-t1"))
    }
}

/// Binary label of `label` for `task`, `None` when the image is outside the task's population.
pub fn task_label(label: &ConsensusLabel, task: Task) -> Option<bool> {
    match task {
        Task::Sr => Some(label.straight_reject),
        _ if label.straight_reject => None,
        Task::Gadolinium => label.gadolinium,
        Task::T3VsT21 => label.tier.map(|t| t == Tier::Tier3),
        Task::T2VsT1 => match label.tier {
            Some(Tier::Tier1) => Some(false),
            Some(Tier::Tier2) => Some(true),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(m: u8, c: u8, n: u8) -> Grades {
        Grades::new(m, c, n).unwrap()
    }

    #[test]
    fn tier_rule_examples() {
        assert_eq!(tier_from_grades(&g(0, 0, 0)), Tier::Tier1);
        assert_eq!(tier_from_grades(&g(1, 0, 0)), Tier::Tier2);
        assert_eq!(tier_from_grades(&g(0, 1, 2)), Tier::Tier3);
    }

    #[test]
    fn grade_range_enforced() {
        assert_eq!(Grade::new(3), Err(LabelError::GradeOutOfRange(3)));
        assert!(serde_json::from_str::<Grades>(r#"{"motion":0,"contrast":5,"noise":0}"#).is_err());
    }

    #[test]
    fn merge_takes_max_of_grades() {
        let a = Annotation::graded("img", "r1", false, g(1, 0, 0));
        let b = Annotation::graded("img", "r2", false, g(0, 1, 0));
        let c = consensus_merge(&a, &b, None).unwrap();
        assert_eq!(c.grades, Some(g(1, 1, 0)));
        assert_eq!(c.tier, Some(Tier::Tier2));
        assert!(!c.sr_adjudicated);
    }

    #[test]
    fn merge_identical_is_plain() {
        let a = Annotation::graded("img", "r1", true, g(2, 1, 0));
        let mut b = a.clone();
        b.rater_id = "r2".into();
        let c = consensus_merge(&a, &b, None).unwrap();
        assert_eq!(c, ConsensusLabel::graded("img", true, g(2, 1, 0)));
    }

    #[test]
    fn sr_disagreement_needs_resolution() {
        let a = Annotation::straight_reject("img", "r1");
        let b = Annotation::graded("img", "r2", true, g(0, 2, 0));
        assert_eq!(consensus_merge(&a, &b, None), Err(LabelError::MissingAdjudication("img".into())));

        let kept = consensus_merge(&a, &b, Some(true)).unwrap();
        assert!(kept.straight_reject && kept.sr_adjudicated);
        assert_eq!(kept.grades, None);

        let overturned = consensus_merge(&a, &b, Some(false)).unwrap();
        assert!(!overturned.straight_reject && overturned.sr_adjudicated);
        assert_eq!(overturned.tier, Some(Tier::Tier3));
        assert_eq!(overturned.gadolinium, Some(true));
    }

    #[test]
    fn merge_rejects_bad_pairs() {
        let a = Annotation::straight_reject("img1", "r1");
        let b = Annotation::straight_reject("img2", "r2");
        assert!(matches!(consensus_merge(&a, &b, None), Err(LabelError::IdMismatch(..))));
        let c = Annotation::straight_reject("img1", "r1");
        assert!(matches!(consensus_merge(&a, &c, None), Err(LabelError::SameRater(_))));
        let mut bad = Annotation::straight_reject("img1", "r2");
        bad.grades = Some(g(0, 0, 0));
        assert!(matches!(consensus_merge(&a, &bad, None), Err(LabelError::InvalidAnnotation { .. })));
    }

    #[test]
    fn task_labels() {
        let sr = ConsensusLabel::straight_reject("a");
        assert_eq!(task_label(&sr, Task::Sr), Some(true));
        assert_eq!(task_label(&sr, Task::T3VsT21), None);
        assert_eq!(task_label(&sr, Task::Gadolinium), None);
        let t3 = ConsensusLabel::graded("b", true, g(2, 0, 0));
        assert_eq!(task_label(&t3, Task::Gadolinium), Some(true));
        assert_eq!(task_label(&t3, Task::T3VsT21), Some(true));
        assert_eq!(task_label(&t3, Task::T2VsT1), None);
        let t2 = ConsensusLabel::graded("c", false, g(0, 1, 0));
        assert_eq!(task_label(&t2, Task::T2VsT1), Some(true));
        assert_eq!(task_label(&t2, Task::Sr), Some(false));
        let t1 = ConsensusLabel::graded("d", false, g(0, 0, 0));
        assert_eq!(task_label(&t1, Task::T2VsT1), Some(false));
    }

    #[test]
    fn json_lines_shape() {
        let c = ConsensusLabel::graded("img-7", true, g(0, 2, 1));
        let line = serde_json::to_string(&c).unwrap();
        assert_eq!(
            line,
            r#"{"image_id":"img-7","straight_reject":false,"sr_adjudicated":false,"gadolinium":true,"grades":{"motion":0,"contrast":2,"noise":1},"tier":3}"#
        );
        let back: ConsensusLabel = serde_json::from_str(&line).unwrap();
        assert_eq!(back, c);
        assert_eq!("t3-vs-t21".parse::<Task>().unwrap(), Task::T3VsT21);
        assert_eq!(serde_json::to_string(&Task::T2VsT1).unwrap(), "\"t2-vs-t1\"");
    }

    fn grades() -> impl Strategy<Value = Grades> {
        (0u8..3, 0u8..3, 0u8..3).prop_map(|(m, c, n)| g(m, c, n))
    }

    proptest! {
        #[test]
        fn tier_is_monotone(gr in grades(), axis in 0usize..3) {
            let mut raised = gr.as_array().map(|x| x.value());
            raised[axis] = (raised[axis] + 1).min(2);
            let up = g(raised[0], raised[1], raised[2]);
            prop_assert!(tier_from_grades(&up) >= tier_from_grades(&gr));
        }

        #[test]
        fn consensus_tier_dominates(ga in grades(), gb in grades(), da: bool, db: bool) {
            let a = Annotation::graded("x", "r1", da, ga);
            let b = Annotation::graded("x", "r2", db, gb);
            let ab = consensus_merge(&a, &b, None).unwrap();
            let ba = consensus_merge(&b, &a, None).unwrap();
            prop_assert_eq!(&ab, &ba);
            let t = ab.tier.unwrap();
            prop_assert!(t >= ga.tier() && t >= gb.tier());
            prop_assert!(ab.validate().is_ok());
        }
    }
}
