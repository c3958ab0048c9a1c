use serde::{Deserialize, Serialize};

use super::{Catalog, CohortError};
use crate::model::ImageRecord;

pub const DEFAULT_MIN_SLICES: u32 = 40;

/// Case-insensitive substring patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRules {
    pub t1w_patterns: Vec<String>,
    pub gadolinium_markers: Vec<String>,
}

impl Default for KeywordRules {
    fn default() -> Self {
        Self::new(
            ["t1 eg 3d mpr", "sag 3d bravo", "3d t1 eg mprage", "irm cranio", "brain t1w/ffegado"],
            ["gado", "inj", "iv"],
        )
        .expect("default rules are valid")
    }
}

impl KeywordRules {
    pub fn new<S: AsRef<str>>(
        t1w: impl IntoIterator<Item = S>,
        markers: impl IntoIterator<Item = S>,
    ) -> Result<Self, CohortError> {
        let clean = |it: Vec<S>, what: &str| -> Result<Vec<String>, CohortError> {
            let v: Vec<String> =
                it.iter().map(|s| s.as_ref().trim().to_lowercase()).filter(|s| !s.is_empty()).collect();
            if v.is_empty() {
                return Err(CohortError::InvalidRules(format!("{what} list is empty")));
            }
            Ok(v)
        };
        Ok(Self {
            t1w_patterns: clean(t1w.into_iter().collect(), "t1w pattern")?,
            gadolinium_markers: clean(markers.into_iter().collect(), "gadolinium marker")?,
        })
    }

    /// Lower-cases patterns of rules loaded from untrusted config and rejects empty lists.
    pub fn normalized(self) -> Result<Self, CohortError> {
        Self::new(self.t1w_patterns, self.gadolinium_markers)
    }

    pub fn is_t1w(&self, r: &ImageRecord) -> bool {
        [&r.series_description, &r.study_description, &r.body_part_examined]
            .iter()
            .any(|field| first_match(field, &self.t1w_patterns).is_some())
    }

    /// The first gadolinium marker found in the series or study description.
    pub fn gadolinium_marker<'a>(&'a self, r: &ImageRecord) -> Option<&'a str> {
        first_match(&r.series_description, &self.gadolinium_markers)
            .or_else(|| first_match(&r.study_description, &self.gadolinium_markers))
    }
}

fn first_match<'a>(text: &str, patterns: &'a [String]) -> Option<&'a str> {
    let lower = text.to_lowercase();
    patterns.iter().find(|p| lower.contains(p.as_str())).map(String::as_str)
}

pub fn select_t1w(c: &Catalog, rules: &KeywordRules) -> Catalog {
    c.retain(|r| rules.is_t1w(r))
}

pub fn filter_min_slices(c: &Catalog, min_slices: u32) -> Catalog {
    c.retain(|r| r.n_slices >= min_slices)
}
