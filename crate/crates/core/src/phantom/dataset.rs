use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::anatomy::{generate_phantom, PhantomSpec, TissueIntensities};
use super::artifacts::{
    inject_contrast_loss, inject_gadolinium_with, inject_motion, inject_noise, make_sr_variant, SrMode,
};
use super::PhantomError;
use crate::eval::largest_remainder;
use crate::model::{ConsensusLabel, FieldStrength, Grade, Grades, ImageRecord, Tier, Volume};

/// Target proportions of straight rejects and the three tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub sr: f64,
    pub tier1: f64,
    pub tier2: f64,
    pub tier3: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self { sr: 0.26, tier1: 0.16, tier2: 0.28, tier3: 0.30 }
    }
}

impl ClassMix {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let v = [self.sr, self.tier1, self.tier2, self.tier3];
        if v.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PhantomError::InvalidMix(v));
        }
        Ok(())
    }

    /// Integer class counts for `n` samples (largest-remainder rounding): SR, tier 1, tier 2, tier 3.
    pub fn counts(&self, n: usize) -> [usize; 4] {
        let targets = [self.sr, self.tier1, self.tier2, self.tier3].map(|p| p * n as f64);
        let c = largest_remainder(&targets, n);
        [c[0], c[1], c[2], c[3]]
    }
}

/// Everything injected into one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub noise_grade: u8,
    pub contrast_grade: u8,
    pub motion_grade: u8,
    pub gadolinium: bool,
    pub sr_mode: Option<SrMode>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n: usize,
    pub shape: [usize; 3],
    pub class_mix: ClassMix,
    pub seed: u64,
    /// Probability of 1, 2 and 3 images per synthetic patient.
    pub images_per_patient: [f64; 3],
    /// Probability of gadolinium for tiers 1, 2 and 3.
    pub gadolinium_rate: [f64; 3],
    pub tissue_intensities: TissueIntensities,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n: 100,
            shape: [32, 40, 36],
            class_mix: ClassMix::default(),
            seed: 0,
            images_per_patient: [0.75, 0.18, 0.07],
            gadolinium_rate: [0.41, 0.53, 0.76],
            tissue_intensities: TissueIntensities::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomSample {
    pub image_id: String,
    pub patient_id: String,
    pub volume: Volume,
    pub label: ConsensusLabel,
    pub artifacts: ArtifactSpec,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw among the grade triples whose tier is `tier`.
pub fn sample_grades(tier: Tier, rng: &mut impl Rng) -> Grades {
    let options: Vec<[u8; 3]> = (0..27u8)
        .map(|i| [i / 9, i / 3 % 3, i % 3])
        .filter(|g| Grades::new(g[0], g[1], g[2]).map(|g| g.tier() == tier).unwrap_or(false))
        .collect();
    let g = options[rng.random_range(0..options.len())];
    Grades::new(g[0], g[1], g[2]).expect("grades in range")
}

/// Applies contrast, motion, noise and gadolinium in that order, or builds an SR variant.
pub fn render_sample(anatomy: &PhantomSpec, artifacts: &ArtifactSpec) -> Result<Volume, PhantomError> {
    let t = anatomy.tissue_intensities;
    let base = generate_phantom(anatomy)?;
    let grade = |g: u8| Grade::new(g).map_err(|e| PhantomError::InvalidSpec(e.to_string()));
    let s = artifacts.seed;
    let mut v = inject_contrast_loss(&base, grade(artifacts.contrast_grade)?, t.gm, t.wm);
    v = inject_motion(&v, grade(artifacts.motion_grade)?, s ^ 0x6d6f);
    v = inject_noise(&v, grade(artifacts.noise_grade)?, s ^ 0x6e6f);
    if artifacts.gadolinium {
        v = inject_gadolinium_with(&v, anatomy.ellipsoid_radii_fraction, s ^ 0x6761);
    }
    if let Some(mode) = artifacts.sr_mode {
        v = make_sr_variant(&v, mode, &t, s ^ 0x7372);
    }
    Ok(v)
}

/// Draws classes in the configured proportions, groups consecutive images into
/// synthetic patients (who share anatomy), and renders each sample.
///
/// Sample `i` uses seed `mix(seed) ^ i`, so samples can be rendered in any order.
pub fn generate_labeled_dataset(cfg: &DatasetConfig) -> Result<Vec<PhantomSample>, PhantomError> {
    cfg.class_mix.validate()?;
    let w = cfg.images_per_patient;
    if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(PhantomError::InvalidSpec(format!("images_per_patient weights {w:?}")));
    }
    PhantomSpec { shape: cfg.shape, tissue_intensities: cfg.tissue_intensities, ..PhantomSpec::new(cfg.shape, 0) }
        .validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts = cfg.class_mix.counts(cfg.n);
    let mut classes: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, counts[c])).collect();
    classes.shuffle(&mut rng);

    let mut patients = Vec::with_capacity(cfg.n);
    let mut p = 0;
    while patients.len() < cfg.n {
        let u = rng.random_range(0.0..w.iter().sum::<f64>());
        let k = if u < w[0] {
            1
        } else if u < w[0] + w[1] {
            2
        } else {
            3
        };
        for _ in 0..k.min(cfg.n - patients.len()) {
            patients.push(p);
        }
        p += 1;
    }

    let base = mix64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n);
    for (i, (&class, &patient)) in classes.iter().zip(&patients).enumerate() {
        let seed = base ^ i as u64;
        let mut srng = ChaCha8Rng::seed_from_u64(seed);
        let anatomy = PhantomSpec {
            seed: base ^ mix64(patient as u64),
            tissue_intensities: cfg.tissue_intensities,
            ..PhantomSpec::new(cfg.shape, 0)
        };
        let image_id = format!("img{i:05}");
        let (artifacts, label) = if class == 0 {
            // Straight rejects still carry arbitrary artifacts before rejection.
            let mode = if srng.random_bool(0.5) { SrMode::Truncated } else { SrMode::Segmented };
            let g = [0; 3].map(|_: u8| srng.random_range(0..=2u8));
            let a = ArtifactSpec {
                motion_grade: g[0],
                contrast_grade: g[1],
                noise_grade: g[2],
                gadolinium: false,
                sr_mode: Some(mode),
                seed,
            };
            (a, ConsensusLabel::straight_reject(image_id.clone()))
        } else {
            let tier = [Tier::Tier1, Tier::Tier2, Tier::Tier3][class - 1];
            let grades = sample_grades(tier, &mut srng);
            let gadolinium = srng.random_bool(cfg.gadolinium_rate[class - 1].clamp(0.0, 1.0));
            let a = ArtifactSpec {
                motion_grade: grades.motion.value(),
                contrast_grade: grades.contrast.value(),
                noise_grade: grades.noise.value(),
                gadolinium,
                sr_mode: None,
                seed,
            };
            (a, ConsensusLabel::graded(image_id.clone(), gadolinium, grades))
        };
        let volume = render_sample(&anatomy, &artifacts)?;
        out.push(PhantomSample { image_id, patient_id: format!("pat{patient:05}"), volume, label, artifacts });
    }
    Ok(out)
}

/// Synthetic catalog row for a sample. Gadolinium keywords appear in the
/// series description of 84% of injected and 61% of non-injected images.
pub fn synthetic_record(sample: &PhantomSample, seed: u64) -> ImageRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed) ^ mix64(sample.image_id.bytes().map(u64::from).sum()));
    let manufacturers = [("Siemens", "Avanto"), ("GE", "Signa HDxt"), ("Philips", "Achieva")];
    // Manufacturer is a property of the patient's scanner.
    let pid: u64 = sample.patient_id.trim_start_matches("pat").parse().unwrap_or(0);
    let (manufacturer, model) = manufacturers[(mix64(pid ^ seed) % 3) as usize];
    let injected = sample.label.gadolinium.unwrap_or(false);
    let flagged = rng.random_bool(if injected { 0.84 } else { 0.61 });
    let series = match (manufacturer, flagged) {
        ("Siemens", true) => "T1 EG 3D MPR GADO",
        ("Siemens", false) => "3D T1 EG MPRAGE",
        ("GE", true) => "SAG 3D BRAVO INJ",
        ("GE", false) => "SAG 3D BRAVO",
        (_, true) => "Brain T1W/FFEGADO",
        (_, false) => "Brain T1W/FFE",
    };
    ImageRecord {
        image_id: sample.image_id.clone(),
        patient_id: sample.patient_id.clone(),
        series_description: series.into(),
        study_description: "IRM cranio".into(),
        body_part_examined: "HEAD".into(),
        n_slices: sample.volume.dims()[2] as u32,
        manufacturer: manufacturer.into(),
        model_name: model.into(),
        field_strength_tesla: if rng.random_bool(0.7) { FieldStrength::T1_5 } else { FieldStrength::T3_0 },
    }
}

/// Writes `<image_id>.nii` per sample, `labels.jsonl` (one consensus label per
/// line), `artifacts.jsonl` and `catalog.csv`.
pub fn write_dataset(dir: &Path, samples: &[PhantomSample], seed: u64) -> Result<(), PhantomError> {
    let io = |e: std::io::Error| PhantomError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut labels = Vec::new();
    let mut artifacts = Vec::new();
    let mut catalog = csv::Writer::from_writer(Vec::new());
    catalog
        .write_record([
            "image_id",
            "patient_id",
            "series_description",
            "study_description",
            "body_part_examined",
            "n_slices",
            "manufacturer",
            "model_name",
            "field_strength_tesla",
        ])
        .map_err(|e| PhantomError::Io(e.to_string()))?;
    for s in samples {
        crate::nifti::write_nifti_file(&s.volume, &dir.join(format!("{}.nii", s.image_id)))
            .map_err(|e| PhantomError::Io(e.to_string()))?;
        serde_json::to_writer(&mut labels, &s.label).map_err(|e| PhantomError::Io(e.to_string()))?;
        labels.push(b'\n');
        let row = serde_json::json!({ "image_id": s.image_id, "patient_id": s.patient_id, "artifacts": s.artifacts });
        writeln!(artifacts, "{row}").map_err(io)?;
        let r = synthetic_record(s, seed);
        let field = match r.field_strength_tesla.tesla() {
            Some(t) => format!("{t:.1}"),
            None => String::new(),
        };
        catalog
            .write_record([
                r.image_id,
                r.patient_id,
                r.series_description,
                r.study_description,
                r.body_part_examined,
                r.n_slices.to_string(),
                r.manufacturer,
                r.model_name,
                field,
            ])
            .map_err(|e| PhantomError::Io(e.to_string()))?;
    }
    let catalog = catalog.into_inner().map_err(|e| PhantomError::Io(e.to_string()))?;
    std::fs::write(dir.join("labels.jsonl"), labels).map_err(io)?;
    std::fs::write(dir.join("artifacts.jsonl"), artifacts).map_err(io)?;
    std::fs::write(dir.join("catalog.csv"), catalog).map_err(io)?;
    Ok(())
}
