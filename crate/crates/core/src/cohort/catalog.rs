use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CohortError;
use crate::model::{FieldStrength, ImageRecord};

const FIELDS: [&str; 9] = [
    "image_id",
    "patient_id",
    "series_description",
    "study_description",
    "body_part_examined",
    "n_slices",
    "manufacturer",
    "model_name",
    "field_strength_tesla",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogFormat {
    Csv,
    Jsonl,
}

impl CatalogFormat {
    /// Guesses from a file extension; `.jsonl`/`.ndjson`/`.json` are JSON lines, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl" | "ndjson" | "json") => CatalogFormat::Jsonl,
            _ => CatalogFormat::Csv,
        }
    }
}

/// A row that could not be turned into an [`ImageRecord`]; `line` is 1-based in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub records: Vec<ImageRecord>,
    pub source: String,
    pub rows_read: usize,
    pub malformed: Vec<MalformedRow>,
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Same provenance, filtered records.
    pub fn retain(&self, keep: impl Fn(&ImageRecord) -> bool) -> Catalog {
        Catalog { records: self.records.iter().filter(|r| keep(r)).cloned().collect(), ..self.clone() }
    }
}

fn record_from_fields(mut f: HashMap<String, String>) -> Result<ImageRecord, String> {
    let mut take = |k: &str| f.remove(k).unwrap_or_default();
    let image_id = take("image_id").trim().to_string();
    if image_id.is_empty() {
        return Err("empty image_id".into());
    }
    let raw_slices = take("n_slices");
    let n_slices: u32 = raw_slices
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("n_slices {raw_slices:?} is not a positive integer"))?;
    let raw_field = take("field_strength_tesla");
    let field_strength_tesla = FieldStrength::parse(&raw_field)
        .ok_or_else(|| format!("field_strength_tesla {raw_field:?} is not 1.5 or 3.0"))?;
    Ok(ImageRecord {
        image_id,
        patient_id: take("patient_id"),
        series_description: take("series_description"),
        study_description: take("study_description"),
        body_part_examined: take("body_part_examined"),
        n_slices,
        manufacturer: take("manufacturer"),
        model_name: take("model_name"),
        field_strength_tesla,
    })
}

fn csv_rows(text: &str) -> Result<Vec<(usize, Result<HashMap<String, String>, String>)>, CohortError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers: Vec<String> =
        reader.headers().map_err(|e| CohortError::Read(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
    for required in ["image_id", "n_slices"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CohortError::MissingColumn(required.into()));
        }
    }
    let mut rows = Vec::new();
    for result in reader.records() {
        match result {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let row = if rec.len() != headers.len() {
                    Err(format!("{} fields, header has {}", rec.len(), headers.len()))
                } else {
                    Ok(headers.iter().cloned().zip(rec.iter().map(str::to_string)).collect())
                };
                rows.push((line, row));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rows.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(rows)
}

fn jsonl_rows(text: &str) -> Vec<(usize, Result<HashMap<String, String>, String>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let row = match serde_json::from_str::<serde_json::Value>(l) {
                Ok(serde_json::Value::Object(map)) => Ok(map
                    .into_iter()
                    .filter(|(k, _)| FIELDS.contains(&k.as_str()))
                    .map(|(k, v)| {
                        let s = match v {
                            serde_json::Value::String(s) => s,
                            serde_json::Value::Null => String::new(),
                            other => other.to_string(),
                        };
                        (k, s)
                    })
                    .collect()),
                Ok(_) => Err("line is not a JSON object".into()),
                Err(e) => Err(e.to_string()),
            };
            (i + 1, row)
        })
        .collect()
}

/// Parses a CSV (with header) or JSON-lines catalog.
///
/// Rows that fail coercion are reported in `malformed` with their line
/// number; parsing fails only when no row survives or an image id repeats.
pub fn parse_catalog(text: &str, format: CatalogFormat, source: &str) -> Result<Catalog, CohortError> {
    let rows = match format {
        CatalogFormat::Csv => csv_rows(text)?,
        CatalogFormat::Jsonl => jsonl_rows(text),
    };
    let rows_read = rows.len();
    let mut records = Vec::new();
    let mut malformed = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, row) in rows {
        match row.and_then(record_from_fields) {
            Ok(rec) => {
                if let Some(&first) = seen.get(&rec.image_id) {
                    return Err(CohortError::DuplicateImageId { id: rec.image_id, first, second: line });
                }
                seen.insert(rec.image_id.clone(), line);
                records.push(rec);
            }
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    if records.is_empty() {
        return Err(CohortError::EmptyCatalog(malformed));
    }
    Ok(Catalog { records, source: source.to_string(), rows_read, malformed })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "image_id,patient_id,series_description,study_description,body_part_examined,n_slices,manufacturer,model_name,field_strength_tesla\n";

    #[test]
    fn two_rows() {
        let text = format!("{HEADER}a,p1,\"T1 EG 3D MPR, post\",IRM cranio,HEAD,176,Siemens,Avanto,1.5\nb,p2,T2,x,BRAIN,40,GE,Signa,3\n");
        let c = parse_catalog(&text, CatalogFormat::Csv, "t.csv").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.records[0].series_description, "T1 EG 3D MPR, post");
        assert_eq!(c.records[1].field_strength_tesla, FieldStrength::T3_0);
    }

    #[test]
    fn duplicate_ids_fail() {
        let text = format!("{HEADER}a,p1,s,s,b,10,m,m,1.5\na,p2,s,s,b,10,m,m,1.5\n");
        assert!(matches!(
            parse_catalog(&text, CatalogFormat::Csv, "t"),
            Err(CohortError::DuplicateImageId { first: 2, second: 3, .. })
        ));
    }

    #[test]
    fn malformed_rows_are_reported() {
        let text = format!("{HEADER}a,p1,s,s,b,abc,m,m,1.5\nb,p1,s,s,b,12,m,m,1.5\nc,p1,s,s,b,12,m,m,7\n");
        let c = parse_catalog(&text, CatalogFormat::Csv, "t").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.rows_read, 3);
        let lines: Vec<usize> = c.malformed.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![2, 4]);
        assert!(c.malformed[0].reason.contains("abc"));
    }

    #[test]
    fn all_rows_bad_is_empty() {
        let text = format!("{HEADER}a,p1,s,s,b,abc,m,m,1.5\n");
        assert!(
            matches!(parse_catalog(&text, CatalogFormat::Csv, "t"), Err(CohortError::EmptyCatalog(m)) if m.len() == 1)
        );
        assert!(matches!(parse_catalog(HEADER, CatalogFormat::Csv, "t"), Err(CohortError::EmptyCatalog(_))));
    }

    #[test]
    fn json_lines_accept_numbers() {
        let text = "{\"image_id\":\"a\",\"patient_id\":\"p\",\"series_description\":\"SAG 3D BRAVO\",\"n_slices\":120,\"field_strength_tesla\":3.0}\n\n[1]\n";
        let c = parse_catalog(text, CatalogFormat::Jsonl, "t").unwrap();
        assert_eq!(c.records[0].n_slices, 120);
        assert_eq!(c.malformed, vec![MalformedRow { line: 3, reason: "line is not a JSON object".into() }]);
    }
}
