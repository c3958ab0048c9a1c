use std::path::{Path, PathBuf};

use brainqc::annotation::{AnnotationStore, ConsensusOutcome, LogEvent};
use brainqc::cohort::{
    audit_gadolinium_keywords, filter_min_slices, parse_catalog, select_t1w, Catalog, CatalogFormat, KeywordRules,
    DEFAULT_MIN_SLICES,
};
use brainqc::eval::{weighted_cohens_kappa, RatingPair, Weighting};
use brainqc::model::{Annotation, ConsensusLabel};
use brainqc::nifti::{export_central_slices, read_nifti_file, write_nifti_file, write_slice_pngs};
use brainqc::phantom::{generate_labeled_dataset, write_dataset, DatasetConfig};
use brainqc::preprocess::{preprocess_pipeline, PreprocessConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{self, read_jsonl, required, resolve, write_json, write_jsonl};
use crate::error::CliError;
use crate::Common;

pub fn load_catalog(path: &Path) -> Result<Catalog, CliError> {
    let text = config::read_text(path)?;
    Ok(parse_catalog(&text, CatalogFormat::from_path(path), &path.display().to_string())?)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub catalog: Option<PathBuf>,
    pub rules: Option<KeywordRules>,
    pub min_slices: Option<u32>,
}

/// Keeps T1w records with enough slices; writes them as JSON lines.
pub fn select(common: &Common) -> Result<Value, CliError> {
    let cfg: SelectConfig = config::load(common.config.as_deref())?;
    let catalog_path = resolve(common.config.as_deref(), required(&cfg.catalog, "catalog")?);
    let catalog = load_catalog(&catalog_path)?;
    let rules = cfg.rules.unwrap_or_default().normalized()?;
    let t1w = select_t1w(&catalog, &rules);
    let kept = filter_min_slices(&t1w, cfg.min_slices.unwrap_or(DEFAULT_MIN_SLICES));
    let out = common.out_or("selected.jsonl");
    write_jsonl(&out, &kept.records)?;
    Ok(json!({
        "rows_read": catalog.rows_read,
        "malformed": catalog.malformed,
        "after_t1w": t1w.len(),
        "selected": kept.len(),
        "out": out,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessCommandConfig {
    pub inputs: Vec<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Also write the three central slices of each output as PNGs.
    pub slices: bool,
    #[serde(flatten)]
    pub pipeline: PreprocessConfig,
}

impl Default for PreprocessCommandConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            input_dir: None,
            reference: None,
            slices: true,
            pipeline: PreprocessConfig::default(),
        }
    }
}

pub fn nii_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "nii"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn image_id_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Resamples, optionally registers, rescales and crops every input volume.
pub fn preprocess(common: &Common) -> Result<Value, CliError> {
    let base = common.config.as_deref();
    let mut cfg: PreprocessCommandConfig = config::load(base)?;
    let mut inputs: Vec<PathBuf> = cfg.inputs.iter().map(|p| resolve(base, p)).collect();
    if let Some(dir) = &cfg.input_dir {
        inputs.extend(nii_files(&resolve(base, dir))?);
    }
    if inputs.is_empty() {
        return Err(CliError::config("no inputs: set `inputs` or `input_dir`"));
    }
    if let Some(r) = &cfg.reference {
        cfg.pipeline.reference = Some(read_nifti_file(&resolve(base, r))?);
    }
    cfg.pipeline.validate()?;
    let out = common.out_or("preprocessed");
    let mut report = Vec::new();
    for path in &inputs {
        let id = image_id_of(path);
        let v = read_nifti_file(path)?;
        let p = preprocess_pipeline(&v, &cfg.pipeline)?;
        write_nifti_file(&p.volume, &out.join(format!("{id}.nii")))?;
        if cfg.slices {
            write_slice_pngs(&out.join("slices"), &id, &export_central_slices(&p.volume))?;
        }
        if p.non_convergence {
            log::warn!("{id}: registration did not converge");
        }
        report.push(json!({
            "image_id": id,
            "input": path,
            "registration": p.registration,
            "non_convergence": p.non_convergence,
        }));
    }
    write_jsonl(&out.join("report.jsonl"), &report)?;
    let failed = report.iter().filter(|r| r["non_convergence"] == true).count();
    Ok(json!({ "processed": report.len(), "non_convergence": failed, "out": out }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub dataset: DatasetConfig,
    pub slices: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { dataset: DatasetConfig::default(), slices: true }
    }
}

/// Writes a labelled phantom dataset.
pub fn synth(common: &Common) -> Result<Value, CliError> {
    let mut cfg: SynthConfig = config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.dataset.seed = seed;
    }
    let samples = generate_labeled_dataset(&cfg.dataset)?;
    let out = common.out_or("phantoms");
    write_dataset(&out, &samples, cfg.dataset.seed)?;
    if cfg.slices {
        for s in &samples {
            write_slice_pngs(&out.join("slices"), &s.image_id, &export_central_slices(&s.volume))?;
        }
    }
    let sr = samples.iter().filter(|s| s.label.straight_reject).count();
    Ok(json!({ "images": samples.len(), "straight_reject": sr, "seed": cfg.dataset.seed, "out": out }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreConfig {
    pub log: Option<PathBuf>,
    /// Image order; when absent, images appear in the order the log first mentions them.
    pub images: Option<Vec<String>>,
    pub raters: [String; 2],
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { log: None, images: None, raters: ["rater1".into(), "rater2".into()] }
    }
}

/// Image ids in order of first appearance in an annotation log.
pub fn images_in_log(path: &Path) -> Result<Vec<String>, CliError> {
    let mut seen = Vec::new();
    let text = config::read_text(path)?;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let Ok(LogEvent::Annotation(s)) = serde_json::from_str::<LogEvent>(line) else {
            continue;
        };
        if !seen.contains(&s.annotation.image_id) {
            seen.push(s.annotation.image_id);
        }
    }
    Ok(seen)
}

fn open_store(common: &Common, cfg: &StoreConfig) -> Result<AnnotationStore, CliError> {
    let log = resolve(common.config.as_deref(), required(&cfg.log, "log")?);
    if !log.exists() {
        return Err(CliError::io(&log, "annotation log not found"));
    }
    let images = match &cfg.images {
        Some(images) => images.clone(),
        None => images_in_log(&log)?,
    };
    Ok(AnnotationStore::open(&log, images, cfg.raters.clone())?)
}

/// Writes consensus labels for every doubly-annotated image; reports those awaiting adjudication.
pub fn consensus(common: &Common) -> Result<Value, CliError> {
    let cfg: StoreConfig = config::load(common.config.as_deref())?;
    let store = open_store(common, &cfg)?;
    let labels = store.consensus_labels();
    let out = common.out_or("labels.jsonl");
    write_jsonl(&out, &labels)?;
    write_jsonl(&out.with_extension("export.jsonl"), &store.export_labels())?;
    Ok(json!({
        "consensus": labels.len(),
        "pending_adjudication": store.adjudication_queue(),
        "progress": store.progress(),
        "out": out,
    }))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct KappaConfig {
    #[serde(flatten)]
    pub store: StoreConfig,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KappaRow {
    pub characteristic: &'static str,
    pub n: usize,
    pub kappa: Option<f64>,
    pub error: Option<String>,
}

fn kappa_row(name: &'static str, levels: usize, pairs: Vec<(usize, usize)>, w: Weighting) -> KappaRow {
    let n = pairs.len();
    let (a, b) = pairs.into_iter().unzip();
    match RatingPair::new(levels, a, b).and_then(|p| weighted_cohens_kappa(&p, w)) {
        Ok(k) => KappaRow { characteristic: name, n, kappa: Some(k), error: None },
        Err(e) => KappaRow { characteristic: name, n, kappa: None, error: Some(e.to_string()) },
    }
}

/// Inter-rater agreement per characteristic; grades and gadolinium only over
/// images neither rater rejected.
pub fn kappa_rows(pairs: &[(Annotation, Annotation)], w: Weighting) -> Vec<KappaRow> {
    let sr = pairs.iter().map(|(a, b)| (a.straight_reject as usize, b.straight_reject as usize)).collect();
    let both: Vec<_> = pairs.iter().filter(|(a, b)| !a.straight_reject && !b.straight_reject).collect();
    let gado = both
        .iter()
        .map(|(a, b)| (a.gadolinium.unwrap_or(false) as usize, b.gadolinium.unwrap_or(false) as usize))
        .collect();
    let grade = |k: usize| -> Vec<(usize, usize)> {
        both.iter()
            .map(|(a, b)| {
                let (ga, gb) = (a.grades.expect("validated"), b.grades.expect("validated"));
                (ga.as_array()[k].value() as usize, gb.as_array()[k].value() as usize)
            })
            .collect()
    };
    let tier = both
        .iter()
        .map(|(a, b)| {
            (a.tier().expect("graded").number() as usize - 1, b.tier().expect("graded").number() as usize - 1)
        })
        .collect();
    vec![
        kappa_row("straight_reject", 2, sr, w),
        kappa_row("gadolinium", 2, gado, w),
        kappa_row("motion", 3, grade(0), w),
        kappa_row("contrast", 3, grade(1), w),
        kappa_row("noise", 3, grade(2), w),
        kappa_row("tier", 3, tier, w),
    ]
}

pub fn kappa(common: &Common) -> Result<Value, CliError> {
    let cfg: KappaConfig = config::load(common.config.as_deref())?;
    let store = open_store(common, &cfg.store)?;
    let mut pairs = Vec::new();
    for id in store.images() {
        if let [a, b] = store.current_annotations(id)?[..] {
            pairs.push((a.annotation.clone(), b.annotation.clone()));
        }
    }
    let rows = kappa_rows(&pairs, cfg.weighting);
    let report = json!({ "weighting": cfg.weighting, "images": pairs.len(), "kappa": rows });
    if let Some(out) = &common.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub catalog: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub rules: Option<KeywordRules>,
}

/// Cross-tabulates manual gadolinium labels against description keywords.
pub fn audit_gado(common: &Common) -> Result<Value, CliError> {
    let base = common.config.as_deref();
    let cfg: AuditConfig = config::load(base)?;
    let catalog = load_catalog(&resolve(base, required(&cfg.catalog, "catalog")?))?;
    let labels: Vec<ConsensusLabel> = read_jsonl(&resolve(base, required(&cfg.labels, "labels")?))?;
    let audit = audit_gadolinium_keywords(&catalog, &labels, &cfg.rules.unwrap_or_default().normalized()?)?;
    let report = serde_json::to_value(&audit)?;
    if let Some(out) = &common.out {
        write_json(out, &report)?;
    }
    Ok(report)
}

pub fn consensus_outcome_json(outcome: &ConsensusOutcome) -> Value {
    match outcome {
        ConsensusOutcome::Consensus(label) => json!({ "status": "consensus", "label": label }),
        ConsensusOutcome::PendingAdjudication => json!({ "status": "pending-adjudication", "label": null }),
    }
}
