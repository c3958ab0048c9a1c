use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use super::tensor::Tensor4;
use super::train::{predict, train_fold, TaskDataset, TrainConfig, TrainedModel};
use super::CnnError;
use crate::eval::{mean_std, EvalReport, MeanStd, TaskSummary};
use crate::model::DatasetSplit;

/// Scores `model` on the images of `ids` that belong to the task population.
pub fn evaluate_model(model: &TrainedModel, data: &TaskDataset, ids: &[String]) -> Result<EvalReport, CnnError> {
    let members: Vec<&String> = ids.iter().filter(|id| data.contains(id)).collect();
    let inputs: Vec<&Tensor4<f32>> = members.iter().filter_map(|id| data.input_of(id)).collect();
    let truth: Vec<bool> = members.iter().map(|id| data.class_of(id) == Some(1)).collect();
    let preds = predict(model, &inputs)?;
    let predicted: Vec<bool> = preds.iter().map(|p| p.class == 1).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.score()).collect();
    Ok(EvalReport::from_predictions(data.task, &predicted, Some(&scores), &truth)?)
}

#[derive(Debug, Clone)]
pub struct CrossValidationResult {
    pub models: Vec<TrainedModel>,
    pub summary: TaskSummary,
}

/// Trains every fold of `split` and evaluates each model on the shared test set.
///
/// The split is first restricted to images labelled for the dataset's task.
pub fn run_cross_validation(
    data: &TaskDataset,
    split: &DatasetSplit,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<CrossValidationResult, CnnError> {
    let split = split.restricted(|id| data.contains(id));
    let mut models = Vec::with_capacity(split.n_folds);
    let mut reports = Vec::with_capacity(split.n_folds);
    for fold in 0..split.n_folds {
        let model = train_fold(data, &split, fold, spec, cfg)?;
        reports.push(evaluate_model(&model, data, &split.test)?);
        models.push(model);
    }
    Ok(CrossValidationResult { models, summary: TaskSummary::new(data.task, reports, None) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveConfig {
    pub sizes: Vec<usize>,
    /// Number of folds retrained per size; all folds when absent.
    pub folds_to_run: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub folds: Vec<EvalReport>,
    pub ba: Option<MeanStd>,
}

/// Draws whole patients from `ids` in seeded order until exactly `size` images
/// are taken, skipping patients that would overshoot.
pub fn subsample_patients(ids: &[String], data: &TaskDataset, size: usize, seed: u64) -> Result<Vec<String>, CnnError> {
    if size > ids.len() {
        return Err(CnnError::SizeTooLarge { requested: size, available: ids.len() });
    }
    if size == ids.len() {
        return Ok(ids.to_vec());
    }
    let mut groups: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    for id in ids {
        groups.entry(data.patient_of(id).unwrap_or(id)).or_default().push(id);
    }
    let mut patients: Vec<Vec<&String>> = groups.into_values().collect();
    patients.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: HashMap<&String, ()> = HashMap::new();
    for group in patients {
        if keep.len() + group.len() <= size {
            keep.extend(group.into_iter().map(|id| (id, ())));
        }
        if keep.len() == size {
            break;
        }
    }
    Ok(ids.iter().filter(|id| keep.contains_key(id)).cloned().collect())
}

/// Retrains on patient-level subsamples of each training fold and evaluates on the fixed test set.
pub fn learning_curve(
    data: &TaskDataset,
    split: &DatasetSplit,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    curve: &LearningCurveConfig,
) -> Result<Vec<CurvePoint>, CnnError> {
    let split = split.restricted(|id| data.contains(id));
    let folds = curve.folds_to_run.unwrap_or(split.n_folds).min(split.n_folds);
    let mut points = Vec::with_capacity(curve.sizes.len());
    for &size in &curve.sizes {
        let mut reports = Vec::with_capacity(folds);
        for fold in 0..folds {
            let seed = curve.seed ^ ((size as u64) << 20) ^ fold as u64;
            let mut sub = split.clone();
            sub.train[fold] = subsample_patients(&split.train[fold], data, size, seed)?;
            let model = train_fold(data, &sub, fold, spec, cfg)?;
            reports.push(evaluate_model(&model, data, &split.test)?);
        }
        let bas: Vec<f64> = reports.iter().filter_map(|r| r.ba).collect();
        points.push(CurvePoint { size, ba: mean_std(&bas), folds: reports });
    }
    Ok(points)
}
