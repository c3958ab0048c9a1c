use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use super::metrics::{classification_metrics, ClassificationMetrics, ConfusionMatrix};
use super::EvalError;
use crate::model::Task;

/// Test-set metrics of one classifier on one task.
///
/// `auc_hard` is computed from the thresholded decisions and therefore equals
/// `ba`; `auc_rank` is the score-based area under the ROC curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub ba: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub auc_hard: Option<f64>,
    pub auc_rank: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

impl EvalReport {
    /// `scores` are positive-class probabilities; decisions threshold at 0.5.
    pub fn from_scores(task: Task, scores: &[f64], truth: &[bool]) -> Result<Self, EvalError> {
        let predicted: Vec<bool> = scores.iter().map(|&s| s > 0.5).collect();
        Self::from_predictions(task, &predicted, Some(scores), truth)
    }

    pub fn from_predictions(
        task: Task,
        predicted: &[bool],
        scores: Option<&[f64]>,
        truth: &[bool],
    ) -> Result<Self, EvalError> {
        let cm = ConfusionMatrix::from_labels(predicted, truth)?;
        let m = classification_metrics(&cm)?;
        let auc_rank = match scores {
            Some(s) => match roc_auc(s, truth) {
                Ok(v) => Some(v),
                Err(EvalError::OneClassOnly) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(Self::assemble(task, cm, m, auc_rank))
    }

    fn assemble(task: Task, cm: ConfusionMatrix, m: ClassificationMetrics, auc_rank: Option<f64>) -> Self {
        Self {
            task,
            n: cm.total() as usize,
            confusion: cm,
            ba: m.ba,
            f1: m.f1,
            mcc: m.mcc,
            auc_hard: m.ba,
            auc_rank,
            sensitivity: m.sensitivity,
            specificity: m.specificity,
            ppv: m.ppv,
            npv: m.npv,
        }
    }

    fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Ba => self.ba,
            Metric::F1 => self.f1,
            Metric::Mcc => self.mcc,
            Metric::AucHard => self.auc_hard,
            Metric::AucRank => self.auc_rank,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Ppv => self.ppv,
            Metric::Npv => self.npv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ba,
    F1,
    Mcc,
    AucHard,
    AucRank,
    Sensitivity,
    Specificity,
    Ppv,
    Npv,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Ba,
        Metric::F1,
        Metric::Mcc,
        Metric::AucHard,
        Metric::AucRank,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Ppv,
        Metric::Npv,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Ba => "BA classifiers",
            Metric::F1 => "F1 score",
            Metric::Mcc => "MCC",
            Metric::AucHard => "AUC (hard labels)",
            Metric::AucRank => "AUC (scores)",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Ppv => "PPV",
            Metric::Npv => "NPV",
        }
    }
}

/// Mean and sample standard deviation of a metric over folds that defined it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std =
        if n > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Some(MeanStd { mean, std, n })
}

/// Per-fold reports of one task plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: Task,
    pub folds: Vec<EvalReport>,
    pub aggregate: Vec<(Metric, Option<MeanStd>)>,
    /// Mean BA of the two raters against consensus, when known.
    pub annotator_ba: Option<f64>,
}

impl TaskSummary {
    pub fn new(task: Task, folds: Vec<EvalReport>, annotator_ba: Option<f64>) -> Self {
        let aggregate = Metric::ALL
            .iter()
            .map(|&m| {
                let vals: Vec<f64> = folds.iter().filter_map(|r| r.metric(m)).collect();
                (m, mean_std(&vals))
            })
            .collect();
        Self { task, folds, aggregate, annotator_ba }
    }

    pub fn get(&self, m: Metric) -> Option<MeanStd> {
        self.aggregate.iter().find(|(k, _)| *k == m).and_then(|(_, v)| *v)
    }
}

/// Plain-text table with one column per task and metrics as percentages, `mean ± std`.
pub fn render_table(summaries: &[TaskSummary]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Metric".to_string()];
    header.extend(summaries.iter().map(|s| s.task.title().to_string()));
    rows.push(header);
    let mut annot = vec!["BA annotators".to_string()];
    annot.extend(summaries.iter().map(|s| s.annotator_ba.map_or("-".into(), |v| format!("{:.2}", v * 100.0))));
    rows.push(annot);
    for m in Metric::ALL {
        let mut row = vec![m.label().to_string()];
        row.extend(summaries.iter().map(|s| match s.get(m) {
            Some(ms) => format!("{:.2} ± {:.2}", ms.mean * 100.0, ms.std * 100.0),
            None => "-".into(),
        }));
        rows.push(row);
    }
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                let _ = write!(out, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(out, "  {}{cell}", " ".repeat(pad));
            }
        }
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1)));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_keeps_ba_identity() {
        let truth = [true, true, true, false, false, false, true, false];
        let scores = [0.9, 0.8, 0.3, 0.2, 0.6, 0.1, 0.7, 0.4];
        let r = EvalReport::from_scores(Task::Sr, &scores, &truth).unwrap();
        assert_eq!(r.ba, Some((r.sensitivity.unwrap() + r.specificity.unwrap()) / 2.0));
        assert_eq!(r.auc_hard, r.ba);
        assert!(r.auc_rank.unwrap() > r.ba.unwrap());
    }

    #[test]
    fn sample_std_across_folds() {
        let ms = mean_std(&[0.9, 0.92, 0.94]).unwrap();
        assert!((ms.mean - 0.92).abs() < 1e-12);
        assert!((ms.std - 0.02).abs() < 1e-12);
    }

    #[test]
    fn table_has_a_row_per_metric() {
        let truth = [true, false, true, false];
        let folds = vec![
            EvalReport::from_scores(Task::Gadolinium, &[0.9, 0.1, 0.8, 0.3], &truth).unwrap(),
            EvalReport::from_scores(Task::Gadolinium, &[0.9, 0.6, 0.4, 0.3], &truth).unwrap(),
        ];
        let table = render_table(&[TaskSummary::new(Task::Gadolinium, folds, Some(0.961))]);
        assert_eq!(table.lines().count(), 2 + 1 + Metric::ALL.len());
        assert!(table.contains("96.10"));
        assert!(table.contains("75.00 ± 35.36"));
    }
}
