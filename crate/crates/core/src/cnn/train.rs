use std::collections::HashMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{batch_loss_and_grad, inverse_frequency_weights};
use super::network::{Mode, Network};
use super::spec::NetworkSpec;
use super::tensor::Tensor4;
use super::CnnError;
use crate::model::{task_label, ConsensusLabel, DatasetSplit, Task, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub early_stop_patience: usize,
    /// Per-class loss weights; derived from the training fold when absent.
    pub class_weights: Option<Vec<f64>>,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 2,
            max_epochs: 50,
            early_stop_patience: 10,
            class_weights: None,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if !(self.learning_rate > 0.0) {
            return Err(CnnError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(CnnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(CnnError::InvalidConfig("early_stop_patience must not exceed max_epochs".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }
}

/// A volume with its consensus label and owning patient.
#[derive(Debug, Clone)]
pub struct LabeledVolume {
    pub image_id: String,
    pub patient_id: String,
    pub volume: Volume,
    pub label: ConsensusLabel,
}

/// The images of one task's population as network inputs with class indices
/// (1 = positive class of the task).
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: Task,
    ids: Vec<String>,
    patients: Vec<String>,
    inputs: Vec<Tensor4<f32>>,
    classes: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TaskDataset {
    /// Keeps the items whose label is defined for `task`.
    pub fn build(items: &[LabeledVolume], task: Task) -> Self {
        let mut ds = TaskDataset {
            task,
            ids: Vec::new(),
            patients: Vec::new(),
            inputs: Vec::new(),
            classes: Vec::new(),
            index: HashMap::new(),
        };
        for item in items {
            if let Some(positive) = task_label(&item.label, task) {
                ds.index.insert(item.image_id.clone(), ds.ids.len());
                ds.ids.push(item.image_id.clone());
                ds.patients.push(item.patient_id.clone());
                ds.inputs.push(Tensor4::from_volume(&item.volume));
                ds.classes.push(positive as usize);
            }
        }
        ds
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.index.contains_key(image_id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn patient_of(&self, image_id: &str) -> Option<&str> {
        self.index.get(image_id).map(|&i| self.patients[i].as_str())
    }

    pub fn class_of(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).map(|&i| self.classes[i])
    }

    pub fn input_of(&self, image_id: &str) -> Option<&Tensor4<f32>> {
        self.index.get(image_id).map(|&i| &self.inputs[i])
    }

    fn resolve(&self, ids: &[String]) -> Result<Vec<usize>, CnnError> {
        ids.iter().map(|id| self.index.get(id).copied().ok_or_else(|| CnnError::MissingLabel(id.clone()))).collect()
    }

    fn class_counts(&self, members: &[usize]) -> [usize; 2] {
        let mut counts = [0; 2];
        for &i in members {
            counts[self.classes[i]] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Parameters of the lowest-validation-loss epoch plus training provenance.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network<f32>,
    pub task: Option<Task>,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub fold_index: usize,
    pub class_weights: Vec<f64>,
    pub config: TrainConfig,
    pub trace: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

impl Prediction {
    /// Probability of the positive class (index 1).
    pub fn score(&self) -> f64 {
        self.probs.get(1).copied().unwrap_or(0.0)
    }
}

/// Trains one fold: seeded per-epoch shuffling, Adam updates, validation loss
/// after every epoch, keeps the best epoch's parameters and stops once more
/// than `early_stop_patience` consecutive epochs fail to improve it.
pub fn train_fold(
    data: &TaskDataset,
    split: &DatasetSplit,
    fold: usize,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
) -> Result<TrainedModel, CnnError> {
    cfg.validate()?;
    if cfg.batch_size < 2 {
        return Err(CnnError::InvalidConfig("batch norm training needs batch_size >= 2".into()));
    }
    let train_ids = split.train.get(fold).ok_or(CnnError::EmptyFold(fold))?;
    let val_ids = split.validation.get(fold).ok_or(CnnError::EmptyFold(fold))?;
    let train = data.resolve(train_ids)?;
    let val = data.resolve(val_ids)?;
    if train.is_empty() || val.is_empty() {
        return Err(CnnError::EmptyFold(fold));
    }
    let counts = data.class_counts(&train);
    if counts.contains(&0) {
        return Err(CnnError::DegenerateLabels(fold));
    }
    let weights = cfg.class_weights.clone().unwrap_or_else(|| inverse_frequency_weights(&counts));
    if weights.len() != spec.n_classes() {
        return Err(CnnError::InvalidConfig(format!(
            "{} class weights for a {}-class network",
            weights.len(),
            spec.n_classes()
        )));
    }
    let weights_f32: Vec<f32> = weights.iter().map(|&w| w as f32).collect();

    let mut net = Network::<f32>::new(spec.clone(), cfg.seed)?;
    let mut adam = AdamState::new(net.n_params());
    let adam_cfg = cfg.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let mut order = train.clone();
    let mut best: Option<(f64, usize, Network<f32>)> = None;
    let mut trace = Vec::new();
    let mut streak = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                debug!("fold {fold} epoch {epoch}: dropping trailing batch of size {}", chunk.len());
                continue;
            }
            let inputs: Vec<&Tensor4<f32>> = chunk.iter().map(|&i| &data.inputs[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.classes[i]).collect();
            let pass = net.forward(&inputs, Mode::Train { dropout_seed: rng.next_u64() })?;
            let (loss, grads) = net.loss_and_gradient(&pass, &labels, &weights_f32)?;
            if !loss.is_finite() {
                return Err(CnnError::NonFinite("training loss"));
            }
            net.update_running_stats(&pass);
            adam_step(net.params_mut(), &grads, &mut adam, &adam_cfg);
            total += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = if seen > 0 { total / seen as f64 } else { f64::NAN };
        let validation_loss = mean_loss(&net, data, &val, &weights_f32)?;
        trace.push(EpochRecord { epoch, train_loss, validation_loss });
        info!("fold {fold} epoch {epoch}: train loss {train_loss:.4}, validation loss {validation_loss:.4}");

        if best.as_ref().is_none_or(|(b, _, _)| validation_loss < *b) {
            best = Some((validation_loss, epoch, net.clone()));
            streak = 0;
        } else {
            streak += 1;
            if streak > cfg.early_stop_patience {
                break;
            }
        }
    }
    let (best_validation_loss, best_epoch, network) = best.expect("max_epochs >= 1 guarantees one epoch");
    Ok(TrainedModel {
        network,
        task: Some(data.task),
        best_validation_loss,
        best_epoch,
        epochs_run: trace.len(),
        fold_index: fold,
        class_weights: weights,
        config: cfg.clone(),
        trace,
    })
}

fn mean_loss(net: &Network<f32>, data: &TaskDataset, members: &[usize], weights: &[f32]) -> Result<f64, CnnError> {
    let mut total = 0.0;
    for chunk in members.chunks(8) {
        let inputs: Vec<&Tensor4<f32>> = chunk.iter().map(|&i| &data.inputs[i]).collect();
        let labels: Vec<usize> = chunk.iter().map(|&i| data.classes[i]).collect();
        let pass = net.forward(&inputs, Mode::Infer)?;
        let (loss, _) = batch_loss_and_grad(&pass.logits, &labels, weights);
        total += loss as f64 * chunk.len() as f64;
    }
    Ok(total / members.len() as f64)
}

/// Inference-mode class decisions (argmax) and probabilities, in input order.
pub fn predict(model: &TrainedModel, inputs: &[&Tensor4<f32>]) -> Result<Vec<Prediction>, CnnError> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(8) {
        let pass = model.network.forward(chunk, Mode::Infer)?;
        for probs in pass.probs {
            let probs: Vec<f64> = probs.iter().map(|&p| p as f64).collect();
            let class = probs
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc })
                .0;
            out.push(Prediction { class, probs });
        }
    }
    Ok(out)
}
