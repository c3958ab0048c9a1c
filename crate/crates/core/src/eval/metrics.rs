use serde::{Deserialize, Serialize};

use super::EvalError;

/// Binary confusion counts with the positive class declared by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Tallies `(prediction, truth)` pairs where `true` is the positive class.
    pub fn from_labels(predicted: &[bool], truth: &[bool]) -> Result<Self, EvalError> {
        if predicted.len() != truth.len() {
            return Err(EvalError::LengthMismatch(predicted.len(), truth.len()));
        }
        let mut cm = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Threshold metrics of one confusion matrix, as fractions in [0, 1] (MCC in
/// [-1, 1]). A metric whose denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub ba: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> Result<ClassificationMetrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let specificity = ratio(cm.tn, cm.tn + cm.fp);
    let ppv = ratio(cm.tp, cm.tp + cm.fp);
    let npv = ratio(cm.tn, cm.tn + cm.fn_);
    let ba = balanced_accuracy(sensitivity, specificity);
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = (den > 0.0).then(|| ((tp * tn - fp * fn_) / den.sqrt()).clamp(-1.0, 1.0));
    Ok(ClassificationMetrics { sensitivity, specificity, ppv, npv, ba, f1, mcc })
}

/// Mean of sensitivity and specificity.
pub fn balanced_accuracy(sensitivity: Option<f64>, specificity: Option<f64>) -> Option<f64> {
    Some((sensitivity? + specificity?) / 2.0)
}

/// Mean over both raters of the balanced accuracy of their decisions against the consensus.
pub fn annotator_ba(rater1: &[bool], rater2: &[bool], consensus: &[bool]) -> Result<f64, EvalError> {
    if rater1.len() != consensus.len() {
        return Err(EvalError::LengthMismatch(rater1.len(), consensus.len()));
    }
    if rater2.len() != consensus.len() {
        return Err(EvalError::LengthMismatch(rater2.len(), consensus.len()));
    }
    let ba = |r: &[bool]| -> Result<f64, EvalError> {
        let m = classification_metrics(&ConfusionMatrix::from_labels(r, consensus)?)?;
        m.ba.ok_or(EvalError::OneClassOnly)
    };
    Ok((ba(rater1)? + ba(rater2)?) / 2.0)
}
