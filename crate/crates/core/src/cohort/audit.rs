use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Catalog, CohortError, KeywordRules};
use crate::model::ConsensusLabel;

/// Manual gadolinium annotation (rows) against the metadata keyword flag (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub manual_yes_flag_yes: usize,
    pub manual_yes_flag_no: usize,
    pub manual_no_flag_yes: usize,
    pub manual_no_flag_no: usize,
}

impl ContingencyTable {
    pub fn total(&self) -> usize {
        self.manual_yes_flag_yes + self.manual_yes_flag_no + self.manual_no_flag_yes + self.manual_no_flag_no
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFlag {
    pub image_id: String,
    pub manual_gadolinium: bool,
    pub keyword_flag: bool,
    pub matched_marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadoliniumAudit {
    pub table: ContingencyTable,
    pub flags: Vec<AuditFlag>,
    pub markers: Vec<String>,
    /// Labels skipped because the image was a straight reject.
    pub skipped_straight_reject: usize,
    pub note: String,
}

/// Cross-tabulates manual gadolinium labels of non-SR images with keyword
/// flags from the series and study descriptions.
pub fn audit_gadolinium_keywords(
    c: &Catalog,
    labels: &[ConsensusLabel],
    rules: &KeywordRules,
) -> Result<GadoliniumAudit, CohortError> {
    let by_id: HashMap<&str, usize> = c.records.iter().enumerate().map(|(i, r)| (r.image_id.as_str(), i)).collect();
    let mut table = ContingencyTable::default();
    let mut flags = Vec::new();
    let mut skipped = 0;
    for label in labels {
        let rec = by_id
            .get(label.image_id.as_str())
            .map(|&i| &c.records[i])
            .ok_or_else(|| CohortError::UnknownImageId(label.image_id.clone()))?;
        let Some(manual) = label.gadolinium.filter(|_| !label.straight_reject) else {
            skipped += 1;
            continue;
        };
        let marker = rules.gadolinium_marker(rec);
        let cell = match (manual, marker.is_some()) {
            (true, true) => &mut table.manual_yes_flag_yes,
            (true, false) => &mut table.manual_yes_flag_no,
            (false, true) => &mut table.manual_no_flag_yes,
            (false, false) => &mut table.manual_no_flag_no,
        };
        *cell += 1;
        flags.push(AuditFlag {
            image_id: label.image_id.clone(),
            manual_gadolinium: manual,
            keyword_flag: marker.is_some(),
            matched_marker: marker.map(str::to_string),
        });
    }
    Ok(GadoliniumAudit {
        table,
        flags,
        markers: rules.gadolinium_markers.clone(),
        skipped_straight_reject: skipped,
        note: "markers match as case-insensitive substrings, so short markers such as \"iv\" also match inside unrelated words"
            .into(),
    })
}
