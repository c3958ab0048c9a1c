use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::model::Volume;

pub const MIN_EXTENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueIntensities {
    pub background: f32,
    pub csf: f32,
    pub gm: f32,
    pub wm: f32,
}

impl Default for TissueIntensities {
    fn default() -> Self {
        Self { background: 0.02, csf: 0.20, gm: 0.55, wm: 0.75 }
    }
}

impl TissueIntensities {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let v = [self.background, self.csf, self.gm, self.wm];
        if v.iter().all(|x| (0.0..=1.0).contains(x)) && v.windows(2).all(|w| w[0] < w[1]) {
            Ok(())
        } else {
            Err(PhantomError::InvalidSpec(format!("tissue intensities must be ordered within [0, 1], got {v:?}")))
        }
    }

    /// Threshold separating grey from white matter.
    pub fn gm_wm_midpoint(&self) -> f32 {
        (self.gm + self.wm) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: [usize; 3],
    pub seed: u64,
    pub tissue_intensities: TissueIntensities,
    /// Outer ellipsoid semi-axes as fractions of the half extent of each axis.
    pub ellipsoid_radii_fraction: [f64; 3],
}

impl PhantomSpec {
    pub fn new(shape: [usize; 3], seed: u64) -> Self {
        Self { shape, seed, tissue_intensities: TissueIntensities::default(), ellipsoid_radii_fraction: [0.85; 3] }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.shape.iter().any(|&d| d < MIN_EXTENT) {
            return Err(PhantomError::ShapeTooSmall(self.shape));
        }
        if self.ellipsoid_radii_fraction.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(PhantomError::InvalidSpec(format!(
                "radii fractions must lie in (0, 1], got {:?}",
                self.ellipsoid_radii_fraction
            )));
        }
        self.tissue_intensities.validate()
    }
}

/// Normalised-radius layout of the nested ellipsoids.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGeometry {
    /// Centre in voxel index coordinates.
    pub center: [f64; 3],
    /// Outer (CSF) semi-axes in voxels.
    pub semi_axes: [f64; 3],
    /// Inner radius of the CSF rim, as a fraction of the outer ellipsoid.
    pub csf_inner: f64,
    /// Mean radius of the white-matter core.
    pub wm_radius: f64,
    pub fold_amplitude: f64,
    pub fold_phase: [f64; 2],
}

pub(crate) const CSF_INNER: f64 = 0.88;
pub(crate) const WM_RADIUS: f64 = 0.66;

impl HeadGeometry {
    /// Unjittered geometry for a volume shape.
    pub fn nominal(shape: [usize; 3], radii_fraction: [f64; 3]) -> Self {
        Self {
            center: shape.map(|d| (d as f64 - 1.0) / 2.0),
            semi_axes: [0, 1, 2].map(|a| radii_fraction[a] * shape[a] as f64 / 2.0),
            csf_inner: CSF_INNER,
            wm_radius: WM_RADIUS,
            fold_amplitude: 0.07,
            fold_phase: [0.0, 0.0],
        }
    }

    /// Geometry with seeded ±5% semi-axis jitter and a random folding phase.
    pub fn jittered(spec: &PhantomSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut g = Self::nominal(spec.shape, spec.ellipsoid_radii_fraction);
        for a in &mut g.semi_axes {
            *a *= 1.0 + rng.random_range(-0.05..=0.05);
        }
        g.fold_phase = [rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU)];
        g
    }

    /// Normalised offset of a voxel from the centre.
    pub fn normalized(&self, p: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| (p[a] - self.center[a]) / self.semi_axes[a])
    }

    pub fn radius(&self, p: [f64; 3]) -> f64 {
        self.normalized(p).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// White-matter boundary radius in the direction of `n` (normalised offset), modulated to mimic gyri.
    pub fn wm_boundary(&self, n: [f64; 3]) -> f64 {
        let theta = n[1].atan2(n[0]);
        let r = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt().max(1e-12);
        let phi = (n[2] / r).acos();
        self.wm_radius
            * (1.0
                + self.fold_amplitude
                    * (5.0 * theta + self.fold_phase[0]).sin()
                    * (4.0 * phi + self.fold_phase[1]).cos())
    }

    fn in_ventricle(&self, n: [f64; 3]) -> bool {
        [-0.2, 0.2].iter().any(|&cx| {
            let d = [(n[0] - cx) / 0.08, n[1] / 0.22, n[2] / 0.12];
            d.iter().map(|v| v * v).sum::<f64>() <= 1.0
        })
    }

    pub fn tissue_at(&self, p: [f64; 3], t: &TissueIntensities) -> f32 {
        let n = self.normalized(p);
        let r = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if r > 1.0 {
            t.background
        } else if r > self.csf_inner || self.in_ventricle(n) {
            t.csf
        } else if r > self.wm_boundary(n) {
            t.gm
        } else {
            t.wm
        }
    }
}

/// Nested ellipsoids: white-matter core, grey-matter shell, CSF rim and two small ventricles.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume, PhantomError> {
    spec.validate()?;
    let g = HeadGeometry::jittered(spec);
    let t = spec.tissue_intensities;
    Ok(Volume::from_fn(spec.shape, [1.0; 3], |x, y, z| g.tissue_at([x as f64, y as f64, z as f64], &t))?)
}
