use serde::{Deserialize, Serialize};

pub type Mat3 = [[f64; 3]; 3];

fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn rot_x(t: f64) -> (Mat3, Mat3) {
    let (s, c) = t.sin_cos();
    ([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]], [[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])
}

fn rot_y(t: f64) -> (Mat3, Mat3) {
    let (s, c) = t.sin_cos();
    ([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], [[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])
}

fn rot_z(t: f64) -> (Mat3, Mat3) {
    let (s, c) = t.sin_cos();
    ([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], [[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
}

/// Twelve-parameter affine transform acting on physical coordinates centred on each volume.
///
/// The linear part is `Rz · Ry · Rx · Sh · S` with `S = diag(exp(log_scale))` and
/// `Sh` upper triangular with unit diagonal (`shear` = xy, xz, yz entries).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineParams {
    /// Millimetres.
    pub translation: [f64; 3],
    /// Radians about x, y, z.
    pub rotation: [f64; 3],
    pub log_scale: [f64; 3],
    pub shear: [f64; 3],
}

impl AffineParams {
    pub const N: usize = 12;

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(&self.translation);
        out[3..6].copy_from_slice(&self.rotation);
        out[6..9].copy_from_slice(&self.log_scale);
        out[9..12].copy_from_slice(&self.shear);
        out
    }

    pub fn from_array(a: &[f64; 12]) -> Self {
        Self {
            translation: [a[0], a[1], a[2]],
            rotation: [a[3], a[4], a[5]],
            log_scale: [a[6], a[7], a[8]],
            shear: [a[9], a[10], a[11]],
        }
    }

    fn factors(&self) -> [(Mat3, Mat3); 3] {
        [rot_z(self.rotation[2]), rot_y(self.rotation[1]), rot_x(self.rotation[0])]
    }

    fn shear_matrix(&self) -> Mat3 {
        let [xy, xz, yz] = self.shear;
        [[1.0, xy, xz], [0.0, 1.0, yz], [0.0, 0.0, 1.0]]
    }

    fn scale_matrix(&self) -> Mat3 {
        let s = self.log_scale.map(f64::exp);
        [[s[0], 0.0, 0.0], [0.0, s[1], 0.0], [0.0, 0.0, s[2]]]
    }

    pub fn matrix(&self) -> Mat3 {
        let [(rz, _), (ry, _), (rx, _)] = self.factors();
        mul(&mul(&mul(&rz, &ry), &rx), &mul(&self.shear_matrix(), &self.scale_matrix()))
    }

    /// Partial derivatives of [`matrix`](Self::matrix) with respect to the nine
    /// non-translation parameters, in [`to_array`](Self::to_array) order.
    pub fn matrix_derivatives(&self) -> [Mat3; 9] {
        let [(rz, drz), (ry, dry), (rx, drx)] = self.factors();
        let sh = self.shear_matrix();
        let sc = self.scale_matrix();
        let shs = mul(&sh, &sc);
        let r = mul(&mul(&rz, &ry), &rx);
        let mut out = [[[0.0; 3]; 3]; 9];
        out[0] = mul(&mul(&mul(&rz, &ry), &drx), &shs);
        out[1] = mul(&mul(&mul(&rz, &dry), &rx), &shs);
        out[2] = mul(&mul(&mul(&drz, &ry), &rx), &shs);
        for a in 0..3 {
            let mut dsc = [[0.0; 3]; 3];
            dsc[a][a] = sc[a][a];
            out[3 + a] = mul(&r, &mul(&sh, &dsc));
        }
        for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
            let mut dsh = [[0.0; 3]; 3];
            dsh[i][j] = 1.0;
            out[6 + k] = mul(&r, &mul(&dsh, &sc));
        }
        out
    }

    pub fn to_map(&self) -> AffineMap {
        AffineMap { matrix: self.matrix(), translation: self.translation }
    }
}

/// `y = M x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: Mat3,
    pub translation: [f64; 3],
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineParams::identity().to_map()
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [0, 1, 2].map(|i| m[i][0] * x[0] + m[i][1] * x[1] + m[i][2] * x[2] + self.translation[i])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<AffineMap> {
        let det = self.determinant();
        if det.abs() < 1e-12 {
            return None;
        }
        let m = &self.matrix;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let inv = [
            [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
            [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
            [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
        ];
        let t = self.translation;
        let translation = [0, 1, 2].map(|i| -(inv[i][0] * t[0] + inv[i][1] * t[1] + inv[i][2] * t[2]));
        Some(AffineMap { matrix: inv, translation })
    }
}
