use std::collections::HashMap;
use std::path::{Path, PathBuf};

use brainqc::cnn::{
    checkpoint, evaluate_model, learning_curve as run_curve, train_fold, LabeledVolume, LearningCurveConfig,
    NetworkSpec, TaskDataset, TrainConfig,
};
use brainqc::eval::{build_split, render_table, stratum_key, SplitItem, TaskSummary};
use brainqc::model::{ConsensusLabel, DatasetSplit, Task};
use brainqc::nifti::read_nifti_file;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::load_catalog;
use crate::config::{self, read_jsonl, required, resolve, write_json, write_text};
use crate::error::CliError;
use crate::Common;

/// Where the labelled volumes live and how to split them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory of `<image_id>.nii` files.
    pub volumes_dir: Option<PathBuf>,
    /// Consensus labels; defaults to `labels.jsonl` in `volumes_dir`.
    pub labels: Option<PathBuf>,
    /// Catalog with patient ids and manufacturers; defaults to `catalog.csv` in `volumes_dir`.
    pub catalog: Option<PathBuf>,
    /// Reuse a split written by an earlier `train` run instead of drawing one.
    pub split: Option<PathBuf>,
    pub n_test: usize,
    pub n_folds: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { volumes_dir: None, labels: None, catalog: None, split: None, n_test: 100, n_folds: 5 }
    }
}

pub struct LoadedData {
    pub volumes: Vec<LabeledVolume>,
    pub split: DatasetSplit,
    pub input_spatial: [usize; 3],
}

fn load_data(base: Option<&Path>, cfg: &DataConfig, seed: u64) -> Result<LoadedData, CliError> {
    let dir = resolve(base, required(&cfg.volumes_dir, "volumes_dir")?);
    let labels_path = cfg.labels.as_ref().map_or_else(|| dir.join("labels.jsonl"), |p| resolve(base, p));
    let catalog_path = cfg.catalog.as_ref().map_or_else(|| dir.join("catalog.csv"), |p| resolve(base, p));
    let labels: Vec<ConsensusLabel> = read_jsonl(&labels_path)?;
    let catalog = load_catalog(&catalog_path)?;
    let mut volumes = Vec::with_capacity(labels.len());
    let mut items = Vec::with_capacity(labels.len());
    let mut input_spatial = None;
    for label in labels {
        label.validate()?;
        let record = catalog
            .get(&label.image_id)
            .ok_or_else(|| CliError::new("data", format!("{} is not in {}", label.image_id, catalog_path.display())))?;
        let volume = read_nifti_file(&dir.join(format!("{}.nii", label.image_id)))?;
        match input_spatial {
            None => input_spatial = Some(volume.dims()),
            Some(d) if d != volume.dims() => {
                return Err(CliError::new(
                    "data",
                    format!("{} has shape {:?}, expected {d:?}; preprocess first", label.image_id, volume.dims()),
                ))
            }
            _ => {}
        }
        let tier = match label.tier {
            _ if label.straight_reject => "sr".to_string(),
            Some(t) => t.to_string(),
            None => "none".to_string(),
        };
        items.push(SplitItem {
            image_id: label.image_id.clone(),
            patient_id: record.patient_id.clone(),
            stratum: stratum_key(tier, &record.manufacturer),
        });
        volumes.push(LabeledVolume {
            image_id: label.image_id.clone(),
            patient_id: record.patient_id.clone(),
            volume,
            label,
        });
    }
    let input_spatial = input_spatial.ok_or_else(|| CliError::new("data", "no labelled volumes"))?;
    let split = match &cfg.split {
        Some(p) => serde_json::from_str(&config::read_text(&resolve(base, p))?)?,
        None => {
            let (split, report) = build_split(&items, cfg.n_test, cfg.n_folds, seed)?;
            if !report.is_within_one() {
                log::warn!("test set deviates from stratum targets by more than one image: {:?}", report.deviations());
            }
            split
        }
    };
    Ok(LoadedData { volumes, split, input_spatial })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCommandConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub task: Task,
    pub fc_hidden: usize,
    pub train: TrainConfig,
    /// Folds to train; all when absent.
    pub folds: Option<Vec<usize>>,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            task: Task::Sr,
            fc_hidden: 1300,
            train: TrainConfig::default(),
            folds: None,
        }
    }
}

/// Trains the selected folds, saves one checkpoint per fold and scores each on the test set.
pub fn train(common: &Common) -> Result<Value, CliError> {
    let base = common.config.as_deref();
    let mut cfg: TrainCommandConfig = config::load(base)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let data = load_data(base, &cfg.data, cfg.train.seed)?;
    let task_data = TaskDataset::build(&data.volumes, cfg.task);
    let split = data.split.restricted(|id| task_data.contains(id));
    let spec = NetworkSpec::conv5_fc3(data.input_spatial, cfg.fc_hidden);
    let out = common.out_or("model");
    write_json(&out.join("split.json"), &data.split)?;
    let folds = cfg.folds.clone().unwrap_or_else(|| (0..split.n_folds).collect());
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for fold in folds {
        if fold >= split.n_folds {
            return Err(CliError::config(format!("fold {fold} out of range 0..{}", split.n_folds)));
        }
        log::info!("training {} fold {fold}", cfg.task);
        let model = train_fold(&task_data, &split, fold, &spec, &cfg.train)?;
        let path = out.join(format!("fold{fold}.ckpt.json"));
        checkpoint::save(&model, &path)?;
        reports.push(evaluate_model(&model, &task_data, &split.test)?);
        checkpoints.push(json!({
            "fold": fold,
            "path": path,
            "best_epoch": model.best_epoch,
            "epochs_run": model.epochs_run,
            "best_validation_loss": model.best_validation_loss,
        }));
    }
    let summary = TaskSummary::new(cfg.task, reports, None);
    write_json(&out.join("report.json"), &summary)?;
    write_text(&out.join("table.txt"), &render_table(std::slice::from_ref(&summary)))?;
    Ok(json!({ "task": cfg.task, "checkpoints": checkpoints, "summary": summary, "out": out }))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub checkpoints: Vec<PathBuf>,
    /// Annotator balanced accuracy per task, shown in the table when given.
    pub annotator_ba: HashMap<Task, f64>,
}

/// Scores saved checkpoints on the test set, grouped by task into a table.
pub fn evaluate(common: &Common) -> Result<Value, CliError> {
    let base = common.config.as_deref();
    let cfg: EvaluateConfig = config::load(base)?;
    if cfg.checkpoints.is_empty() {
        return Err(CliError::config("`checkpoints` is empty"));
    }
    if cfg.data.split.is_none() {
        return Err(CliError::config("`split` is required so the test set matches training"));
    }
    let data = load_data(base, &cfg.data, common.seed.unwrap_or(0))?;
    let mut by_task: Vec<(Task, Vec<_>)> = Vec::new();
    for p in &cfg.checkpoints {
        let model = checkpoint::load(&resolve(base, p))?;
        let task = model.task.ok_or_else(|| CliError::new("cnn", format!("{} has no task", p.display())))?;
        let task_data = TaskDataset::build(&data.volumes, task);
        let report = evaluate_model(&model, &task_data, &data.split.test)?;
        match by_task.iter_mut().find(|(t, _)| *t == task) {
            Some((_, reports)) => reports.push(report),
            None => by_task.push((task, vec![report])),
        }
    }
    let summaries: Vec<TaskSummary> = by_task
        .into_iter()
        .map(|(task, reports)| TaskSummary::new(task, reports, cfg.annotator_ba.get(&task).copied()))
        .collect();
    let table = render_table(&summaries);
    if let Some(out) = &common.out {
        write_json(&out.join("evaluation.json"), &summaries)?;
        write_text(&out.join("table.txt"), &table)?;
    }
    Ok(json!({ "summaries": summaries, "table": table }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveCommandConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub task: Task,
    pub fc_hidden: usize,
    pub train: TrainConfig,
    pub sizes: Vec<usize>,
    pub folds_to_run: Option<usize>,
}

impl Default for CurveCommandConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            task: Task::Sr,
            fc_hidden: 1300,
            train: TrainConfig::default(),
            sizes: vec![50, 100, 200, 400],
            folds_to_run: None,
        }
    }
}

/// Balanced accuracy on the test set as a function of training-set size.
pub fn learning_curve(common: &Common) -> Result<Value, CliError> {
    let base = common.config.as_deref();
    let mut cfg: CurveCommandConfig = config::load(base)?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let data = load_data(base, &cfg.data, cfg.train.seed)?;
    let task_data = TaskDataset::build(&data.volumes, cfg.task);
    let spec = NetworkSpec::conv5_fc3(data.input_spatial, cfg.fc_hidden);
    let curve = LearningCurveConfig { sizes: cfg.sizes.clone(), folds_to_run: cfg.folds_to_run, seed: cfg.train.seed };
    let points = run_curve(&task_data, &data.split, &spec, &cfg.train, &curve)?;
    let report = json!({ "task": cfg.task, "points": points });
    if let Some(out) = &common.out {
        write_json(out, &report)?;
    }
    Ok(report)
}
