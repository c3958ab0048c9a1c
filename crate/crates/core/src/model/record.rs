use serde::{Deserialize, Serialize};

/// Magnetic field strength of the acquiring scanner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FieldStrength {
    #[serde(rename = "1.5")]
    T1_5,
    #[serde(rename = "3.0")]
    T3_0,
    #[default]
    Unknown,
}

impl FieldStrength {
    /// Parses `1.5`, `3`, `3.0` (with optional trailing `T`); empty or `unknown` map to `Unknown`.
    pub fn parse(raw: &str) -> Option<FieldStrength> {
        let s = raw.trim().trim_end_matches(['T', 't']).trim();
        if s.is_empty() || s.eq_ignore_ascii_case("unknown") || s.eq_ignore_ascii_case("na") {
            return Some(FieldStrength::Unknown);
        }
        let v: f64 = s.parse().ok()?;
        if (v - 1.5).abs() < 1e-6 {
            Some(FieldStrength::T1_5)
        } else if (v - 3.0).abs() < 1e-6 {
            Some(FieldStrength::T3_0)
        } else {
            None
        }
    }

    pub fn tesla(self) -> Option<f64> {
        match self {
            FieldStrength::T1_5 => Some(1.5),
            FieldStrength::T3_0 => Some(3.0),
            FieldStrength::Unknown => None,
        }
    }
}

/// One row of an exported scanner-metadata catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub patient_id: String,
    pub series_description: String,
    pub study_description: String,
    pub body_part_examined: String,
    pub n_slices: u32,
    pub manufacturer: String,
    pub model_name: String,
    pub field_strength_tesla: FieldStrength,
}
