//! Gaussian mixture representation, parameter activations and cameras.
//!
//! Parameters live in structure-of-arrays form: the rasterizer walks one
//! attribute at a time, and the on-disk layout mirrors this.

use half::{f16, slice::HalfFloatSliceExt};
use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

pub const DEFAULT_SH_DEGREE: u32 = 3;
pub const DEFAULT_FEATURE_DIM: usize = 32;

/// Number of SH coefficients (per color channel) for a degree.
pub fn sh_coeff_count(degree: u32) -> usize {
    ((degree + 1) * (degree + 1)) as usize
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn inverse_sigmoid(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// One Gaussian in array-of-structs form. Used for construction and inspection;
/// the scene itself stores attributes column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub centroid: [f32; 3],
    pub log_scale: [f32; 3],
    /// Quaternion `(w, x, y, z)`; normalized on activation.
    pub rotation: [f32; 4],
    pub opacity_logit: f32,
    /// `(L+1)^2` RGB triples, coefficient-major.
    pub sh: Vec<f32>,
    pub feature: Vec<f16>,
}

impl Gaussian {
    pub fn isotropic(centroid: [f32; 3], scale: f32, opacity: f32, rgb: [f32; 3], sh_degree: u32, feature_dim: usize) -> Self {
        let mut sh = vec![0.0; sh_coeff_count(sh_degree) * 3];
        for c in 0..3 {
            sh[c] = crate::sh::rgb_to_dc(rgb[c] as f64) as f32;
        }
        let ls = scale.ln();
        Gaussian {
            centroid,
            log_scale: [ls; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: inverse_sigmoid(opacity as f64) as f32,
            sh,
            feature: vec![f16::ZERO; feature_dim],
        }
    }
}

/// Activated quantities of a Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activated {
    pub scale: Vec3,
    pub rotation: Mat3,
    pub opacity: f64,
    pub covariance: Mat3,
}

/// Normalized quaternion; a zero quaternion maps to identity.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n == 0.0 || !n.is_finite() {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Quaternion `(w, x, y, z)` of a rotation matrix.
pub fn mat_to_quat(r: &Mat3) -> [f64; 4] {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    [q.w, q.i, q.j, q.k]
}

/// Hamilton product `a * b`.
pub fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let qa = Quaternion::new(a[0], a[1], a[2], a[3]);
    let qb = Quaternion::new(b[0], b[1], b[2], b[3]);
    let q = qa * qb;
    [q.w, q.i, q.j, q.k]
}

/// Activate raw parameters: `S = exp(log_scale)`, `R = R(q/|q|)`, `a = sigmoid(logit)`,
/// `Sigma = R S S^T R^T`.
pub fn activate_params(log_scale: [f32; 3], rotation: [f32; 4], opacity_logit: f32) -> Activated {
    let scale = Vec3::new(
        (log_scale[0] as f64).exp(),
        (log_scale[1] as f64).exp(),
        (log_scale[2] as f64).exp(),
    );
    let q = normalize_quat(rotation.map(|v| v as f64));
    let r = quat_to_mat(q);
    let m = r * Mat3::from_diagonal(&scale);
    let cov = m * m.transpose();
    // exact symmetry
    let cov = (cov + cov.transpose()) * 0.5;
    Activated { scale, rotation: r, opacity: sigmoid(opacity_logit as f64), covariance: cov }
}

pub fn activate(g: &Gaussian) -> Activated {
    activate_params(g.log_scale, g.rotation, g.opacity_logit)
}

/// Per-Gaussian feature vectors. Half precision is the default storage; full
/// precision exists for benchmarking the storage choice.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureStorage {
    Half(Vec<f16>),
    Full(Vec<f32>),
}

impl Default for FeatureStorage {
    fn default() -> Self {
        FeatureStorage::Half(Vec::new())
    }
}

impl FeatureStorage {
    pub fn len(&self) -> usize {
        match self {
            FeatureStorage::Half(v) => v.len(),
            FeatureStorage::Full(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_half(&self) -> bool {
        matches!(self, FeatureStorage::Half(_))
    }

    #[inline]
    pub fn get(&self, idx: usize) -> f32 {
        match self {
            FeatureStorage::Half(v) => v[idx].to_f32(),
            FeatureStorage::Full(v) => v[idx],
        }
    }

    #[inline]
    pub fn set(&mut self, idx: usize, value: f32) {
        match self {
            FeatureStorage::Half(v) => v[idx] = f16::from_f32(value),
            FeatureStorage::Full(v) => v[idx] = value,
        }
    }

    /// Adds `weight * row` into `acc`.
    #[inline]
    pub fn axpy_row(&self, start: usize, weight: f64, acc: &mut [f64]) {
        let n = acc.len();
        match self {
            FeatureStorage::Half(v) => {
                let mut buf = [0f32; 64];
                for (a, h) in acc.chunks_mut(64).zip(v[start..start + n].chunks(64)) {
                    let b = &mut buf[..h.len()];
                    h.convert_to_f32_slice(b);
                    for (a, f) in a.iter_mut().zip(b.iter()) {
                        *a += weight * *f as f64;
                    }
                }
            }
            FeatureStorage::Full(v) => {
                for (a, f) in acc.iter_mut().zip(&v[start..start + n]) {
                    *a += weight * *f as f64;
                }
            }
        }
    }

    #[inline]
    pub fn dot_row(&self, start: usize, other: &[f64]) -> f64 {
        match self {
            FeatureStorage::Half(v) => {
                let mut buf = [0f32; 64];
                let mut s = 0.0;
                for (g, h) in other.chunks(64).zip(v[start..start + other.len()].chunks(64)) {
                    let b = &mut buf[..h.len()];
                    h.convert_to_f32_slice(b);
                    s += b.iter().zip(g).map(|(f, g)| *f as f64 * g).sum::<f64>();
                }
                s
            }
            FeatureStorage::Full(v) => v[start..start + other.len()]
                .iter()
                .zip(other)
                .map(|(f, g)| *f as f64 * g)
                .sum(),
        }
    }

    pub fn to_half(&self) -> FeatureStorage {
        match self {
            FeatureStorage::Half(v) => FeatureStorage::Half(v.clone()),
            FeatureStorage::Full(v) => FeatureStorage::Half(v.iter().map(|x| f16::from_f32(*x)).collect()),
        }
    }

    pub fn to_full(&self) -> FeatureStorage {
        match self {
            FeatureStorage::Half(v) => FeatureStorage::Full(v.iter().map(|x| x.to_f32()).collect()),
            FeatureStorage::Full(v) => FeatureStorage::Full(v.clone()),
        }
    }

    pub fn as_half(&self) -> Option<&[f16]> {
        match self {
            FeatureStorage::Half(v) => Some(v),
            FeatureStorage::Full(_) => None,
        }
    }

    fn extend_from_range(&mut self, other: &FeatureStorage, start: usize, end: usize) {
        match (self, other) {
            (FeatureStorage::Half(a), FeatureStorage::Half(b)) => a.extend_from_slice(&b[start..end]),
            (FeatureStorage::Full(a), FeatureStorage::Full(b)) => a.extend_from_slice(&b[start..end]),
            (FeatureStorage::Half(a), FeatureStorage::Full(b)) => {
                a.extend(b[start..end].iter().map(|x| f16::from_f32(*x)))
            }
            (FeatureStorage::Full(a), FeatureStorage::Half(b)) => a.extend(b[start..end].iter().map(|x| x.to_f32())),
        }
    }

    fn push_half(&mut self, row: &[f16]) {
        match self {
            FeatureStorage::Half(a) => a.extend_from_slice(row),
            FeatureStorage::Full(a) => a.extend(row.iter().map(|x| x.to_f32())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    /// Characteristic scene size in world units.
    pub scene_scale: f32,
    pub units: String,
}

impl Default for SceneMeta {
    fn default() -> Self {
        SceneMeta { scene_scale: 1.0, units: "normalized".to_string() }
    }
}

/// The full Gaussian mixture. Indices are stable for the life of a scene value.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub positions: Vec<[f32; 3]>,
    pub log_scales: Vec<[f32; 3]>,
    pub rotations: Vec<[f32; 4]>,
    pub opacity_logits: Vec<f32>,
    pub sh: Vec<f32>,
    pub features: FeatureStorage,
    pub sh_degree: u32,
    pub feature_dim: usize,
    pub meta: SceneMeta,
}

impl GaussianScene {
    pub fn new(sh_degree: u32, feature_dim: usize) -> Self {
        GaussianScene {
            positions: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            features: FeatureStorage::Half(Vec::new()),
            sh_degree,
            feature_dim,
            meta: SceneMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// SH coefficients per Gaussian, times three channels.
    pub fn sh_stride(&self) -> usize {
        sh_coeff_count(self.sh_degree) * 3
    }

    pub fn push(&mut self, g: Gaussian) -> Result<()> {
        if g.sh.len() != self.sh_stride() {
            return Err(Error::contract(format!(
                "Gaussian has {} SH values, scene expects {}",
                g.sh.len(),
                self.sh_stride()
            )));
        }
        if g.feature.len() != self.feature_dim {
            return Err(Error::contract(format!(
                "Gaussian has feature dim {}, scene expects {}",
                g.feature.len(),
                self.feature_dim
            )));
        }
        self.positions.push(g.centroid);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        self.sh.extend_from_slice(&g.sh);
        self.features.push_half(&g.feature);
        Ok(())
    }

    pub fn gaussian(&self, i: usize) -> Gaussian {
        let s = self.sh_stride();
        let d = self.feature_dim;
        let feature = (0..d).map(|k| f16::from_f32(self.features.get(i * d + k))).collect();
        Gaussian {
            centroid: self.positions[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            opacity_logit: self.opacity_logits[i],
            sh: self.sh[i * s..(i + 1) * s].to_vec(),
            feature,
        }
    }

    pub fn activate(&self, i: usize) -> Activated {
        activate_params(self.log_scales[i], self.rotations[i], self.opacity_logits[i])
    }

    pub fn sh_row(&self, i: usize) -> &[f32] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    pub fn sh_row_mut(&mut self, i: usize) -> &mut [f32] {
        let s = self.sh_stride();
        &mut self.sh[i * s..(i + 1) * s]
    }

    pub fn feature_row(&self, i: usize) -> Vec<f32> {
        let d = self.feature_dim;
        (0..d).map(|k| self.features.get(i * d + k)).collect()
    }

    pub fn set_feature_row(&mut self, i: usize, row: &[f32]) {
        let d = self.feature_dim;
        for (k, v) in row.iter().enumerate().take(d) {
            self.features.set(i * d + k, *v);
        }
    }

    pub fn position(&self, i: usize) -> Vec3 {
        let p = self.positions[i];
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    }

    /// Rejects non-finite parameters, naming every offending index.
    /// `-inf` opacity logits are allowed (fully transparent Gaussians).
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.rotations.len() != n
            || self.opacity_logits.len() != n
            || self.sh.len() != n * self.sh_stride()
            || self.features.len() != n * self.feature_dim
        {
            return Err(Error::Format("attribute array lengths disagree".into()));
        }
        let s = self.sh_stride();
        let d = self.feature_dim;
        let mut bad = Vec::new();
        for i in 0..n {
            let finite = self.positions[i].iter().all(|v| v.is_finite())
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && !self.opacity_logits[i].is_nan()
                && self.opacity_logits[i] != f32::INFINITY
                && self.sh[i * s..(i + 1) * s].iter().all(|v| v.is_finite())
                && (0..d).all(|k| self.features.get(i * d + k).is_finite());
            if !finite {
                bad.push(i);
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation { message: "non-finite Gaussian parameters".into(), indices: bad })
        }
    }

    /// New scene holding the given Gaussians in the given order.
    pub fn subset(&self, indices: &[usize]) -> GaussianScene {
        let mut out = self.empty_like();
        for &i in indices {
            out.append_from(self, i);
        }
        out
    }

    /// Same layout and metadata, no Gaussians.
    pub fn empty_like(&self) -> GaussianScene {
        let features = match self.features {
            FeatureStorage::Half(_) => FeatureStorage::Half(Vec::new()),
            FeatureStorage::Full(_) => FeatureStorage::Full(Vec::new()),
        };
        GaussianScene {
            positions: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            features,
            sh_degree: self.sh_degree,
            feature_dim: self.feature_dim,
            meta: self.meta.clone(),
        }
    }

    /// Appends a copy of Gaussian `i` of `src` (which must share the layout).
    pub fn append_from(&mut self, src: &GaussianScene, i: usize) {
        debug_assert_eq!(src.sh_degree, self.sh_degree);
        debug_assert_eq!(src.feature_dim, self.feature_dim);
        let s = self.sh_stride();
        let d = self.feature_dim;
        self.positions.push(src.positions[i]);
        self.log_scales.push(src.log_scales[i]);
        self.rotations.push(src.rotations[i]);
        self.opacity_logits.push(src.opacity_logits[i]);
        self.sh.extend_from_slice(&src.sh[i * s..(i + 1) * s]);
        self.features.extend_from_range(&src.features, i * d, (i + 1) * d);
    }

    /// Keeps Gaussians whose mask entry is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> GaussianScene {
        let idx: Vec<usize> = keep.iter().enumerate().filter(|(_, k)| **k).map(|(i, _)| i).collect();
        self.subset(&idx)
    }

    /// Copy with a different feature table (`values.len() == n * dim`).
    pub fn with_features(&self, dim: usize, values: &[f32]) -> GaussianScene {
        assert_eq!(values.len(), self.len() * dim);
        let mut out = self.clone();
        out.feature_dim = dim;
        out.features = FeatureStorage::Half(values.iter().map(|v| f16::from_f32(*v)).collect());
        out
    }

    /// Axis-aligned bounds of the centroids.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(self.positions.iter().map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)))
    }

    /// Radius of the centroid cloud around its mean (the "scene extent").
    pub fn extent(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let c = self.centroid();
        let r = (0..self.len()).map(|i| (self.position(i) - c).norm()).fold(0.0, f64::max);
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn centroid(&self) -> Vec3 {
        if self.is_empty() {
            return Vec3::zeros();
        }
        let sum: Vec3 = (0..self.len()).map(|i| self.position(i)).sum();
        sum / self.len() as f64
    }
}

pub fn bounds_of(points: impl IntoIterator<Item = Vec3>) -> Option<(Vec3, Vec3)> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let (mut lo, mut hi) = (first, first);
    for p in it {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    Some((lo, hi))
}

/// Pinhole camera. `world_to_camera` is a row-major rigid 4x4 transform; the
/// camera looks down +z with +x right and +y down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [f64; 16],
}

impl CameraView {
    pub fn from_pose(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, rotation: &Mat3, translation: &Vec3) -> Self {
        let mut m = [0.0; 16];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 4 + c] = rotation[(r, c)];
            }
            m[r * 4 + 3] = translation[r];
        }
        m[15] = 1.0;
        CameraView { fx, fy, cx, cy, width, height, world_to_camera: m }
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: u32, height: u32) -> Self {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::new(1.0, 0.0, 0.0));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let cx = (width as f64 - 1.0) * 0.5;
        let cy = (height as f64 - 1.0) * 0.5;
        CameraView::from_pose(fy, fy, cx, cy, width, height, &r, &t)
    }

    pub fn rotation(&self) -> Mat3 {
        let m = &self.world_to_camera;
        Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10])
    }

    pub fn translation(&self) -> Vec3 {
        let m = &self.world_to_camera;
        Vec3::new(m[3], m[7], m[11])
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.world_to_camera)
    }

    /// Camera origin in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation().transpose() * self.translation())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::contract("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::contract("camera image size must be non-zero"));
        }
        let r = self.rotation();
        let ortho = (r.transpose() * r - Mat3::identity()).abs().max();
        let det = r.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!(
                "camera rotation is not a proper rotation (orthogonality err {ortho:.2e}, det {det:.6})"
            )));
        }
        Ok(())
    }

    /// Camera moved by a world-space translation (the scene appears shifted by `-offset`).
    pub fn translated(&self, offset: &Vec3) -> CameraView {
        let r = self.rotation();
        let t = self.translation() - r * offset;
        CameraView::from_pose(self.fx, self.fy, self.cx, self.cy, self.width, self.height, &r, &t)
    }
}
