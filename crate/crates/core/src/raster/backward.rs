use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Matrix2, Matrix2x3};

use super::project::jacobian;
use super::{footprint, map_tiles, RasterConfig, RenderTarget};
use crate::error::{Error, Result};
use crate::scene::{sh_coeff_count, CameraView, GaussianScene, Mat3, Vec3};
use crate::sh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    /// Let the feature loss reach geometry and opacity through the compositing
    /// weights. Training turns this off so the color path is unaffected by
    /// feature supervision.
    pub feature_geometry_coupling: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions { feature_geometry_coupling: true }
    }
}

/// Gradients for every Gaussian parameter, indexed like the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<f64>,
    pub features: Vec<f64>,
    /// Screen-space mean gradient, px units.
    pub mean2d: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Gradients {
    pub fn zeros(n: usize, sh_stride: usize, feature_dim: usize) -> Self {
        Gradients {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            sh: vec![0.0; n * sh_stride],
            features: vec![0.0; n * feature_dim],
            mean2d: vec![[0.0; 2]; n],
            visible: vec![false; n],
        }
    }
}

// Layout of one staged 2D gradient row.
const G_MEAN: usize = 0; // 2
const G_CONIC: usize = 2; // 3: d/da, d/db (each off-diagonal entry), d/dc
const G_OPACITY: usize = 5;
const G_COLOR: usize = 6; // 3
const G_FEAT: usize = 9;

struct TileGrad {
    /// Row per tile entry, `G_FEAT + d` wide.
    rows: Vec<f64>,
}

struct AtomicRows(Vec<AtomicU64>);

impl AtomicRows {
    fn new(n: usize) -> Self {
        AtomicRows((0..n).map(|_| AtomicU64::new(0f64.to_bits())).collect())
    }

    #[inline]
    fn add(&self, i: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let _ = self.0[i].fetch_update(Ordering::Relaxed, Ordering::Relaxed, |old| {
            Some((f64::from_bits(old) + v).to_bits())
        });
    }

    fn into_vec(self) -> Vec<f64> {
        self.0.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }
}

struct Contrib {
    entry: usize,
    alpha: f64,
    trans: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
    clamped: bool,
}

/// Analytic gradients of a loss given `dL/dC` (`H x W x 3`) and `dL/dF`
/// (`H x W x d`, may be empty when the target has no features).
pub fn rasterize_backward(
    scene: &GaussianScene,
    cam: &CameraView,
    target: &RenderTarget,
    dl_dcolor: &[f64],
    dl_dfeature: &[f64],
    cfg: &RasterConfig,
    opts: BackwardOptions,
) -> Result<Gradients> {
    let (w, h) = (target.width, target.height);
    if w != cam.width as usize || h != cam.height as usize {
        return Err(Error::contract("render target does not match camera size"));
    }
    if dl_dcolor.len() != w * h * 3 {
        return Err(Error::contract(format!("dL/dC has {} values, expected {}", dl_dcolor.len(), w * h * 3)));
    }
    let d = target.feature_dim;
    let feat_grads = !dl_dfeature.is_empty();
    if feat_grads && dl_dfeature.len() != w * h * d {
        return Err(Error::contract(format!(
            "dL/dF has {} values, expected {}",
            dl_dfeature.len(),
            w * h * d
        )));
    }
    if d > 0 && d != scene.feature_dim {
        return Err(Error::contract("render target feature dim does not match scene"));
    }
    let coupled = opts.feature_geometry_coupling && feat_grads;
    let proj = &target.projected;
    let bins = &target.bins;
    let stride = G_FEAT + if feat_grads { d } else { 0 };
    let dfeat = if feat_grads { d } else { 0 };

    let global_atomic = if cfg.grad_buffer { None } else { Some(AtomicRows::new(proj.len() * stride)) };

    let tiles = map_tiles(bins.tile_count(), |t| {
        let (x0, x1, y0, y1) = bins.tile_pixels(t, w, h);
        let entries = bins.entries_of(t);
        let mut buf = TileGrad { rows: if cfg.grad_buffer { vec![0.0; entries.len() * stride] } else { Vec::new() } };
        let mut contribs: Vec<Contrib> = Vec::new();
        let mut scratch = vec![0.0; stride];
        for py in y0..y1 {
            for px in x0..x1 {
                let p = py * w + px;
                let walked = target.n_walked[p] as usize;
                let g_c = [dl_dcolor[p * 3], dl_dcolor[p * 3 + 1], dl_dcolor[p * 3 + 2]];
                let g_f = if feat_grads { &dl_dfeature[p * d..(p + 1) * d] } else { &[][..] };
                contribs.clear();
                let mut t_acc = 1.0;
                for (k, &e) in entries[..walked].iter().enumerate() {
                    let g = &proj[e as usize];
                    let Some(fp) = footprint(g, px as f64, py as f64, cfg) else { continue };
                    contribs.push(Contrib {
                        entry: k,
                        alpha: fp.alpha,
                        trans: t_acc,
                        gauss: fp.gauss,
                        dx: fp.dx,
                        dy: fp.dy,
                        clamped: fp.clamped,
                    });
                    t_acc *= 1.0 - fp.alpha;
                }
                let mut suffix = 0.0;
                for c in contribs.iter().rev() {
                    let g = &proj[entries[c.entry] as usize];
                    let wgt = c.alpha * c.trans;
                    let mut s = g.color[0] * g_c[0] + g.color[1] * g_c[1] + g.color[2] * g_c[2];
                    if coupled {
                        s += scene.features.dot_row(g.index * d, g_f);
                    }
                    let d_alpha = c.trans * s - suffix / (1.0 - c.alpha);
                    suffix += wgt * s;

                    let row: &mut [f64] = if cfg.grad_buffer {
                        &mut buf.rows[c.entry * stride..(c.entry + 1) * stride]
                    } else {
                        scratch.iter_mut().for_each(|v| *v = 0.0);
                        &mut scratch
                    };
                    for k in 0..3 {
                        row[G_COLOR + k] += wgt * g_c[k];
                    }
                    for k in 0..dfeat {
                        row[G_FEAT + k] += wgt * g_f[k];
                    }
                    if !c.clamped {
                        row[G_OPACITY] += c.gauss * d_alpha;
                        let d_m2 = d_alpha * g.opacity * (-0.5 * c.gauss);
                        let [a, b, cc] = g.conic;
                        // m^2 = a dx^2 + 2 b dx dy + c dy^2, dx = px - mean
                        row[G_MEAN] += d_m2 * (-2.0 * (a * c.dx + b * c.dy));
                        row[G_MEAN + 1] += d_m2 * (-2.0 * (b * c.dx + cc * c.dy));
                        row[G_CONIC] += d_m2 * c.dx * c.dx;
                        row[G_CONIC + 1] += d_m2 * c.dx * c.dy;
                        row[G_CONIC + 2] += d_m2 * c.dy * c.dy;
                    }
                    if let Some(glob) = &global_atomic {
                        let base = entries[c.entry] as usize * stride;
                        for (k, v) in row.iter().enumerate() {
                            glob.add(base + k, *v);
                        }
                    }
                }
            }
        }
        buf
    });

    // Merge: one addition per touched Gaussian per tile, in tile order.
    let staged = match global_atomic {
        Some(glob) => glob.into_vec(),
        None => {
            let mut staged = vec![0.0; proj.len() * stride];
            for (t, buf) in tiles.iter().enumerate() {
                for (k, &e) in bins.entries_of(t).iter().enumerate() {
                    let src = &buf.rows[k * stride..(k + 1) * stride];
                    let dst = &mut staged[e as usize * stride..(e as usize + 1) * stride];
                    for (a, b) in dst.iter_mut().zip(src) {
                        *a += *b;
                    }
                }
            }
            staged
        }
    };

    let n = scene.len();
    let sh_stride = scene.sh_stride();
    let mut grads = Gradients::zeros(n, sh_stride, if feat_grads { d } else { 0 });
    let rot = cam.rotation();
    let per_gaussian = map_tiles(proj.len(), |pi| chain_to_params(scene, cam, &rot, pi, target, &staged[pi * stride..(pi + 1) * stride]));
    for (pi, pg) in per_gaussian.into_iter().enumerate() {
        let i = proj[pi].index;
        let row = &staged[pi * stride..(pi + 1) * stride];
        grads.visible[i] = true;
        grads.positions[i] = pg.position;
        grads.log_scales[i] = pg.log_scale;
        grads.rotations[i] = pg.rotation;
        grads.opacity_logits[i] = pg.opacity_logit;
        grads.mean2d[i] = [row[G_MEAN], row[G_MEAN + 1]];
        grads.sh[i * sh_stride..(i + 1) * sh_stride].copy_from_slice(&pg.sh);
        if feat_grads {
            grads.features[i * d..(i + 1) * d].copy_from_slice(&row[G_FEAT..G_FEAT + d]);
        }
    }
    Ok(grads)
}

struct ParamGrad {
    position: [f64; 3],
    log_scale: [f64; 3],
    rotation: [f64; 4],
    opacity_logit: f64,
    sh: Vec<f64>,
}

fn chain_to_params(
    scene: &GaussianScene,
    cam: &CameraView,
    rot: &Mat3,
    pi: usize,
    target: &RenderTarget,
    row: &[f64],
) -> ParamGrad {
    let g = &target.projected[pi];
    let i = g.index;
    let act = scene.activate(i);
    let degree = scene.sh_degree;
    let ncoef = sh_coeff_count(degree);

    // color -> SH coefficients and view direction
    let mut y = [0.0; 16];
    sh::basis(degree, g.view_dir, &mut y);
    let mut dy = [[0.0; 3]; 16];
    sh::basis_grad(degree, g.view_dir, &mut dy);
    let coeffs = scene.sh_row(i);
    let mut sh_grad = vec![0.0; ncoef * 3];
    let mut g_dir = Vec3::zeros();
    for ch in 0..3 {
        if g.color_clamped[ch] {
            continue;
        }
        let gc = row[G_COLOR + ch];
        for k in 0..ncoef {
            sh_grad[k * 3 + ch] = y[k] * gc;
            let cf = coeffs[k * 3 + ch] as f64 * gc;
            g_dir += Vec3::new(dy[k][0], dy[k][1], dy[k][2]) * cf;
        }
    }

    // opacity
    let a0 = act.opacity;
    let g_logit = row[G_OPACITY] * a0 * (1.0 - a0);

    // conic -> screen covariance
    let [ca, cb, cc] = g.conic;
    let q = Matrix2::new(ca, cb, cb, cc);
    let g_q = Matrix2::new(row[G_CONIC], row[G_CONIC + 1], row[G_CONIC + 1], row[G_CONIC + 2]);
    let g_cov2 = -(q * g_q * q);

    // screen covariance -> Jacobian and camera covariance
    let pc = Vec3::new(g.cam_pos[0], g.cam_pos[1], g.cam_pos[2]);
    let j: Matrix2x3<f64> = jacobian(cam, &pc);
    let cov_cam = rot * act.covariance * rot.transpose();
    let g_j: Matrix2x3<f64> = (g_cov2 + g_cov2.transpose()) * j * cov_cam;
    let g_cov_cam: Mat3 = j.transpose() * g_cov2 * j;
    let g_cov: Mat3 = rot.transpose() * g_cov_cam * rot;

    // covariance -> scale and rotation, Sigma = M M^T, M = R S
    let s = act.scale;
    let m = act.rotation * Mat3::from_diagonal(&s);
    let g_m: Mat3 = (g_cov + g_cov.transpose()) * m;
    let r = act.rotation;
    let mut g_r = Mat3::zeros();
    let mut g_logscale = [0.0; 3];
    for col in 0..3 {
        let mut gs = 0.0;
        for rr in 0..3 {
            g_r[(rr, col)] = g_m[(rr, col)] * s[col];
            gs += g_m[(rr, col)] * r[(rr, col)];
        }
        g_logscale[col] = gs * s[col];
    }
    let g_rot = quat_grad(scene.rotations[i], &g_r);

    // mean: pinhole projection and the Jacobian's dependence on the camera point
    let (x, yv, z) = (pc.x, pc.y, pc.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let (gmx, gmy) = (row[G_MEAN], row[G_MEAN + 1]);
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut g_pc = Vec3::new(fx * iz * gmx, fy * iz * gmy, -fx * x * iz2 * gmx - fy * yv * iz2 * gmy);
    g_pc.x += g_j[(0, 2)] * (-fx * iz2);
    g_pc.y += g_j[(1, 2)] * (-fy * iz2);
    g_pc.z += g_j[(0, 0)] * (-fx * iz2)
        + g_j[(0, 2)] * (2.0 * fx * x * iz3)
        + g_j[(1, 1)] * (-fy * iz2)
        + g_j[(1, 2)] * (2.0 * fy * yv * iz3);
    let mut g_world = rot.transpose() * g_pc;
    if g.view_dist > 0.0 {
        let dvec = Vec3::new(g.view_dir[0], g.view_dir[1], g.view_dir[2]);
        g_world += (g_dir - dvec * dvec.dot(&g_dir)) / g.view_dist;
    }

    ParamGrad {
        position: [g_world.x, g_world.y, g_world.z],
        log_scale: g_logscale,
        rotation: g_rot,
        opacity_logit: g_logit,
        sh: sh_grad,
    }
}

/// Gradient with respect to the raw quaternion given `dL/dR`.
fn quat_grad(raw: [f32; 4], g: &Mat3) -> [f64; 4] {
    let q = raw.map(|v| v as f64);
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return [0.0; 4];
    }
    let [w, x, y, z] = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
    let gv = |r: usize, c: usize| g[(r, c)];
    let gw = 2.0 * (-z * gv(0, 1) + y * gv(0, 2) + z * gv(1, 0) - x * gv(1, 2) - y * gv(2, 0) + x * gv(2, 1));
    let gx = 2.0
        * (y * gv(0, 1) + z * gv(0, 2) + y * gv(1, 0) - 2.0 * x * gv(1, 1) - w * gv(1, 2) + z * gv(2, 0)
            + w * gv(2, 1)
            - 2.0 * x * gv(2, 2));
    let gy = 2.0
        * (-2.0 * y * gv(0, 0) + x * gv(0, 1) + w * gv(0, 2) + x * gv(1, 0) + z * gv(1, 2) - w * gv(2, 0)
            + z * gv(2, 1)
            - 2.0 * y * gv(2, 2));
    let gz = 2.0
        * (-2.0 * z * gv(0, 0) - w * gv(0, 1) + x * gv(0, 2) + w * gv(1, 0) - 2.0 * z * gv(1, 1)
            + y * gv(1, 2)
            + x * gv(2, 0)
            + y * gv(2, 1));
    let gn = [gw, gx, gy, gz];
    let qn = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|k| (gn[k] - qn[k] * dot) / norm)
}
