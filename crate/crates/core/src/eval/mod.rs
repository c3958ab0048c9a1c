//! Classification metrics, agreement statistics, significance tests and dataset splitting.

mod auc;
mod kappa;
mod mcnemar;
mod metrics;
mod report;
mod split;

pub use auc::{hard_label_auc, roc_auc};
pub use kappa::{weighted_cohens_kappa, RatingPair, Weighting};
pub use mcnemar::{mcnemar_from_counts, mcnemar_test, McNemarMethod, McNemarResult, EXACT_BELOW};
pub use metrics::{annotator_ba, balanced_accuracy, classification_metrics, ClassificationMetrics, ConfusionMatrix};
pub use report::{mean_std, render_table, EvalReport, MeanStd, Metric, TaskSummary};
pub use split::{
    build_split, largest_remainder, patient_kfold, stratified_test_split, stratum_key, strict_stratified_test_split,
    SplitItem, StratificationReport, StratifiedSplit, StratumAllocation,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("both classes must be present")]
    OneClassOnly,
    #[error("non-finite score")]
    NonFinite,
    #[error("chance disagreement is zero while observed disagreement is not")]
    DegenerateMarginals,
    #[error("{patients} patients cannot fill {folds} folds")]
    TooFewPatients { patients: usize, folds: usize },
    #[error("patient grouping prevents proportional stratification ({} strata off target)", .0.deviations().len())]
    InfeasibleStrata(Box<StratificationReport>),
    #[error("{0}")]
    InvalidInput(String),
}
