use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// A held-out test set plus `n_folds` train/validation partitions of the remaining pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DatasetSplit {
    pub train: Vec<Vec<String>>,
    pub validation: Vec<Vec<String>>,
    pub test: Vec<String>,
    pub n_folds: usize,
}

/// A violation of split integrity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitViolation {
    ImageInTestAndFold { image_id: String, fold: usize },
    ImageInTrainAndValidation { image_id: String, fold: usize },
    PatientAcrossBoundary { patient_id: String, fold: Option<usize> },
    UnknownImage(String),
}

impl DatasetSplit {
    /// Exhaustively checks disjointness at image and patient level.
    ///
    /// `patient_of` maps image ids to patient ids. A `fold` of `None` in a
    /// patient violation refers to the test boundary.
    pub fn violations(&self, patient_of: &HashMap<String, String>) -> Vec<SplitViolation> {
        let mut out = Vec::new();
        let patients = |ids: &[String], out: &mut Vec<SplitViolation>| -> HashSet<String> {
            ids.iter()
                .filter_map(|id| match patient_of.get(id) {
                    Some(p) => Some(p.clone()),
                    None => {
                        out.push(SplitViolation::UnknownImage(id.clone()));
                        None
                    }
                })
                .collect()
        };
        let test_ids: HashSet<&String> = self.test.iter().collect();
        let test_patients = patients(&self.test, &mut out);

        for fold in 0..self.n_folds {
            let train = self.train.get(fold).map(Vec::as_slice).unwrap_or(&[]);
            let val = self.validation.get(fold).map(Vec::as_slice).unwrap_or(&[]);
            let train_ids: HashSet<&String> = train.iter().collect();
            for id in train.iter().chain(val) {
                if test_ids.contains(id) {
                    out.push(SplitViolation::ImageInTestAndFold { image_id: id.clone(), fold });
                }
            }
            for id in val {
                if train_ids.contains(id) {
                    out.push(SplitViolation::ImageInTrainAndValidation { image_id: id.clone(), fold });
                }
            }
            let tp = patients(train, &mut out);
            let vp = patients(val, &mut out);
            for p in tp.intersection(&vp) {
                out.push(SplitViolation::PatientAcrossBoundary { patient_id: p.clone(), fold: Some(fold) });
            }
            for p in tp.union(&vp).filter(|p| test_patients.contains(*p)) {
                out.push(SplitViolation::PatientAcrossBoundary { patient_id: p.clone(), fold: None });
            }
        }
        out
    }
}

impl DatasetSplit {
    /// Keeps only the images accepted by `keep`, preserving order.
    pub fn restricted(&self, keep: impl Fn(&str) -> bool) -> DatasetSplit {
        let f = |ids: &Vec<String>| ids.iter().filter(|id| keep(id)).cloned().collect::<Vec<_>>();
        DatasetSplit {
            train: self.train.iter().map(f).collect(),
            validation: self.validation.iter().map(f).collect(),
            test: f(&self.test),
            n_folds: self.n_folds,
        }
    }
}
