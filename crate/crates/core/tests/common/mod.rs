//! Shared oracles for the integration and acceptance suites. Nothing here calls
//! the tiled rasterizer's compositing path.
#![allow(dead_code)]

use featsplat::scene::{sh_coeff_count, CameraView, Gaussian, GaussianScene, Mat3, Vec3};
use featsplat::sh;
use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DILATION: f64 = 0.3;
pub const CUTOFF_SIGMA: f64 = 3.0;
pub const ALPHA_MAX: f64 = 0.99;
pub const T_MIN: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random scene in front of a camera at the origin looking down +z.
pub fn random_scene(seed: u64, n: usize, sh_degree: u32, dim: usize) -> GaussianScene {
    let mut r = rng(seed);
    let mut s = GaussianScene::new(sh_degree, dim);
    let ncoef = sh_coeff_count(sh_degree);
    for _ in 0..n {
        let z: f32 = r.random_range(2.0..4.0);
        let x: f32 = r.random_range(-0.45..0.45) * z;
        let y: f32 = r.random_range(-0.45..0.45) * z;
        let mut q = [0f32; 4];
        for v in q.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
        if q.iter().map(|v| v * v).sum::<f32>() < 0.05 {
            q = [1.0, 0.0, 0.0, 0.0];
        }
        let mut sh = vec![0f32; ncoef * 3];
        for c in 0..3 {
            sh[c] = sh::rgb_to_dc(r.random_range(0.25..0.85)) as f32;
        }
        for v in sh.iter_mut().skip(3) {
            *v = r.random_range(-0.08..0.08);
        }
        let feature = (0..dim).map(|_| f16::from_f32(r.random_range(-1.0..1.0))).collect();
        let g = Gaussian {
            centroid: [x, y, z],
            log_scale: [
                r.random_range(-3.2f32..-1.6),
                r.random_range(-3.2f32..-1.6),
                r.random_range(-3.2f32..-1.6),
            ],
            rotation: q,
            opacity_logit: featsplat::scene::inverse_sigmoid(r.random_range(0.2..0.85)) as f32,
            sh,
            feature,
        };
        s.push(g).unwrap();
    }
    s
}

pub fn camera(w: u32, h: u32) -> CameraView {
    CameraView::from_pose(
        w as f64 * 0.9,
        h as f64 * 0.9,
        (w as f64 - 1.0) / 2.0,
        (h as f64 - 1.0) / 2.0,
        w,
        h,
        &Mat3::identity(),
        &Vec3::zeros(),
    )
}

/// A slightly rotated and shifted camera still facing the random scenes.
pub fn tilted_camera(seed: u64, w: u32, h: u32) -> CameraView {
    let mut r = rng(seed ^ 0xabcdef);
    let eye = Vec3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.0));
    let target = Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 3.0);
    let up = Vec3::new(r.random_range(-0.3..0.3), -1.0, 0.0);
    let mut cam = CameraView::look_at(eye, target, up, 60.0, w, h);
    cam.fx *= 1.0;
    cam
}

/// One Gaussian projected by the oracle.
#[derive(Debug, Clone)]
pub struct OracleSplat {
    pub index: usize,
    pub depth: f64,
    pub mean: [f64; 2],
    pub inv: [[f64; 2]; 2],
    pub opacity: f64,
    pub color: [f64; 3],
    pub color_clamped: [bool; 3],
}

fn quat_matrix(q: [f32; 4]) -> Mat3 {
    let q: Vec<f64> = q.iter().map(|v| *v as f64).collect();
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0] / n, q[1] / n, q[2] / n, q[3] / n));
    uq.to_rotation_matrix().into_inner()
}

pub fn oracle_project(scene: &GaussianScene, cam: &CameraView, near: f64) -> Vec<OracleSplat> {
    let rot = cam.rotation();
    let t = cam.translation();
    let center = cam.center();
    let mut out = Vec::new();
    for i in 0..scene.len() {
        let x = scene.position(i);
        let pc = rot * x + t;
        if pc.z <= near {
            continue;
        }
        let opacity = 1.0 / (1.0 + (-(scene.opacity_logits[i] as f64)).exp());
        if opacity <= 0.0 {
            continue;
        }
        let ls = scene.log_scales[i];
        let s = Mat3::from_diagonal(&Vec3::new((ls[0] as f64).exp(), (ls[1] as f64).exp(), (ls[2] as f64).exp()));
        let r = quat_matrix(scene.rotations[i]);
        let sigma = r * s * s.transpose() * r.transpose();
        let w = rot;
        let j = nalgebra::Matrix2x3::new(
            cam.fx / pc.z,
            0.0,
            -cam.fx * pc.x / (pc.z * pc.z),
            0.0,
            cam.fy / pc.z,
            -cam.fy * pc.y / (pc.z * pc.z),
        );
        let c2 = j * w * sigma * w.transpose() * j.transpose() + nalgebra::Matrix2::identity() * DILATION;
        let c2 = (c2 + c2.transpose()) * 0.5;
        let inv = c2.try_inverse().unwrap();
        let dir = (x - center).normalize();
        let (color, color_clamped) = sh::eval_color(scene.sh_degree, scene.sh_row(i), [dir.x, dir.y, dir.z]);
        out.push(OracleSplat {
            index: i,
            depth: pc.z,
            mean: [cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy],
            inv: [[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]],
            opacity,
            color,
            color_clamped,
        });
    }
    out.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap().then(a.index.cmp(&b.index)));
    out
}

pub struct OracleImage {
    pub color: Vec<f64>,
    pub feature: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Per pixel: contributing `(gaussian, alpha clamped)` in order, plus whether
    /// compositing terminated early. Changes in this signature mark
    /// discontinuities of the image as a function of the parameters.
    pub signature: Vec<(Vec<(usize, bool)>, bool)>,
    pub color_clamps: Vec<(usize, [bool; 3])>,
}

/// O(pixels x Gaussians) compositor: every pixel walks every Gaussian.
pub fn oracle_render(scene: &GaussianScene, cam: &CameraView) -> OracleImage {
    let splats = oracle_project(scene, cam, 0.01);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let d = scene.feature_dim;
    let mut img = OracleImage {
        color: vec![0.0; w * h * 3],
        feature: vec![0.0; w * h * d],
        alpha: vec![0.0; w * h],
        signature: Vec::with_capacity(w * h),
        color_clamps: splats.iter().map(|s| (s.index, s.color_clamped)).collect(),
    };
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            let mut t = 1.0;
            let mut sig = Vec::new();
            let mut terminated = false;
            for s in &splats {
                let dx = px as f64 - s.mean[0];
                let dy = py as f64 - s.mean[1];
                let m2 = s.inv[0][0] * dx * dx + (s.inv[0][1] + s.inv[1][0]) * dx * dy + s.inv[1][1] * dy * dy;
                if m2 > CUTOFF_SIGMA * CUTOFF_SIGMA {
                    continue;
                }
                let raw = s.opacity * (-0.5 * m2).exp();
                let a = raw.min(ALPHA_MAX);
                if t * (1.0 - a) < T_MIN {
                    terminated = true;
                    break;
                }
                for c in 0..3 {
                    img.color[p * 3 + c] += s.color[c] * a * t;
                }
                for k in 0..d {
                    img.feature[p * d + k] += scene.features.get(s.index * d + k) as f64 * a * t;
                }
                sig.push((s.index, raw > ALPHA_MAX));
                t *= 1.0 - a;
            }
            img.alpha[p] = 1.0 - t;
            img.signature.push((sig, terminated));
        }
    }
    img
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Which parameter of which Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Position(usize, usize),
    LogScale(usize, usize),
    Rotation(usize, usize),
    Opacity(usize),
    Sh(usize, usize),
    Feature(usize, usize),
}

impl Param {
    pub fn group(&self) -> &'static str {
        match self {
            Param::Position(..) => "position",
            Param::LogScale(..) => "log_scale",
            Param::Rotation(..) => "rotation",
            Param::Opacity(..) => "opacity",
            Param::Sh(..) => "sh",
            Param::Feature(..) => "feature",
        }
    }

    pub fn all(scene: &GaussianScene) -> Vec<Param> {
        let mut out = Vec::new();
        for i in 0..scene.len() {
            for k in 0..3 {
                out.push(Param::Position(i, k));
                out.push(Param::LogScale(i, k));
            }
            for k in 0..4 {
                out.push(Param::Rotation(i, k));
            }
            out.push(Param::Opacity(i));
            for k in 0..scene.sh_stride() {
                out.push(Param::Sh(i, k));
            }
            for k in 0..scene.feature_dim {
                out.push(Param::Feature(i, k));
            }
        }
        out
    }

    pub fn get(&self, s: &GaussianScene) -> f32 {
        match *self {
            Param::Position(i, k) => s.positions[i][k],
            Param::LogScale(i, k) => s.log_scales[i][k],
            Param::Rotation(i, k) => s.rotations[i][k],
            Param::Opacity(i) => s.opacity_logits[i],
            Param::Sh(i, k) => s.sh_row(i)[k],
            Param::Feature(i, k) => s.features.get(i * s.feature_dim + k),
        }
    }

    /// Sets the parameter and returns the value actually stored.
    pub fn set(&self, s: &mut GaussianScene, v: f32) -> f64 {
        match *self {
            Param::Position(i, k) => s.positions[i][k] = v,
            Param::LogScale(i, k) => s.log_scales[i][k] = v,
            Param::Rotation(i, k) => s.rotations[i][k] = v,
            Param::Opacity(i) => s.opacity_logits[i] = v,
            Param::Sh(i, k) => s.sh_row_mut(i)[k] = v,
            Param::Feature(i, k) => {
                let d = s.feature_dim;
                s.features.set(i * d + k, v)
            }
        }
        self.get(s) as f64
    }

    pub fn analytic(&self, g: &featsplat::raster::Gradients, d: usize, sh_stride: usize) -> f64 {
        match *self {
            Param::Position(i, k) => g.positions[i][k],
            Param::LogScale(i, k) => g.log_scales[i][k],
            Param::Rotation(i, k) => g.rotations[i][k],
            Param::Opacity(i) => g.opacity_logits[i],
            Param::Sh(i, k) => g.sh[i * sh_stride + k],
            Param::Feature(i, k) => g.features[i * d + k],
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_small: usize,
    pub skipped_discontinuous: usize,
    pub failures: Vec<String>,
    pub max_rel_err: f64,
    pub groups_checked: std::collections::BTreeMap<&'static str, usize>,
}

/// Richardson-extrapolated central differences of `L = <wc, C> + <wf, F>` against the analytic
/// gradients, using the oracle compositor for the loss.
pub fn gradient_check(seed: u64, n: usize, size: u32, h_rel: f64, tol: f64) -> GradCheckReport {
    use featsplat::raster::{rasterize, rasterize_backward, BackwardOptions, RasterConfig};
    let dim = 4;
    let scene = random_scene(seed, n, 3, dim);
    let cam = if seed % 2 == 0 { camera(size, size) } else { tilted_camera(seed, size, size) };
    let (w, hgt) = (size as usize, size as usize);
    let mut r = rng(seed.wrapping_mul(7919));
    let wc: Vec<f64> = (0..w * hgt * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let wf: Vec<f64> = (0..w * hgt * dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let cfg = RasterConfig::default();
    let target = rasterize(&scene, &cam, &cfg).unwrap();
    let grads = rasterize_backward(&scene, &cam, &target, &wc, &wf, &cfg, BackwardOptions::default()).unwrap();

    let loss = |s: &GaussianScene| -> (f64, OracleImage) {
        let img = oracle_render(s, cam_ref(&cam));
        let l = img.color.iter().zip(&wc).map(|(a, b)| a * b).sum::<f64>()
            + img.feature.iter().zip(&wf).map(|(a, b)| a * b).sum::<f64>();
        (l, img)
    };
    fn cam_ref(c: &CameraView) -> &CameraView {
        c
    }

    let mut rep = GradCheckReport::default();
    let stride = scene.sh_stride();
    let mut work = scene.clone();
    for p in Param::all(&scene) {
        let an = p.analytic(&grads, dim, stride);
        let base = p.get(&scene);
        let step = (h_rel * (base.abs() as f64).max(1.0)) as f32;
        // central differences at h and h/2, Richardson-combined to cancel the h² term
        let mut central = |h: f32| {
            let vp = p.set(&mut work, base + h);
            let (lp, ip) = loss(&work);
            let vm = p.set(&mut work, base - h);
            let (lm, im) = loss(&work);
            p.set(&mut work, base);
            let smooth = ip.signature == im.signature && ip.color_clamps == im.color_clamps;
            ((lp - lm) / (vp - vm), smooth)
        };
        let (d1, s1) = central(step);
        let (d2, s2) = central(step / 2.0);
        if !(s1 && s2) {
            rep.skipped_discontinuous += 1;
            continue;
        }
        let fd = (4.0 * d2 - d1) / 3.0;
        if an.abs() <= 1e-6 && fd.abs() <= 1e-6 {
            rep.skipped_small += 1;
            continue;
        }
        rep.checked += 1;
        *rep.groups_checked.entry(p.group()).or_default() += 1;
        let rel = (an - fd).abs() / an.abs().max(fd.abs());
        rep.max_rel_err = rep.max_rel_err.max(rel);
        if rel > tol {
            rep.failures.push(format!("seed {seed} {p:?}: analytic {an:.6e} fd {fd:.6e} rel {rel:.2e}"));
        }
    }
    rep
}
