use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::densify::{densify_and_prune, DensifyConfig, GradStats};
use super::head::DecodeHead;
use super::loss::{color_loss, cosine_distance, normalize, psnr};
use super::map::{enhance, upsample_bilinear};
use crate::error::{Error, Result};
use crate::io::FeatureDataset;
use crate::raster::{rasterize, rasterize_backward, BackwardOptions, RasterConfig, RenderTarget};
use crate::scene::{CameraView, FeatureStorage, GaussianScene};

/// Stream offset for the decode head's initialization, so that enabling
/// features never perturbs the draws used for geometry.
const HEAD_STREAM: u64 = 0x6865_6164;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Initial centroid rate, multiplied by the scene extent.
    pub position: f64,
    /// Final centroid rate (log-linear decay over the run).
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub feature: f64,
    /// Feature rate at the end of the feature phase (log-linear decay).
    pub feature_final: f64,
    pub mlp: f64,
    pub mlp_final: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 0.05,
            scale: 5e-3,
            rotation: 1e-3,
            feature: 2.5e-3,
            feature_final: 2.5e-6,
            mlp: 1e-3,
            mlp_final: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Features and the decode head are optimized only while `iteration < n_feat`.
    pub n_feat: usize,
    /// Weight of the DINO term.
    pub lambda: f64,
    /// Weight of `1 - SSIM` in the color loss.
    pub ssim_weight: f64,
    /// Feature losses only count pixels with rendered alpha above this.
    pub feature_alpha_threshold: f64,
    pub lr: LearningRates,
    pub densify: DensifyConfig,
    /// Every `holdout_every`-th view (1-based) is held out for validation; 0 disables.
    pub holdout_every: usize,
    pub hidden: usize,
    pub seed: u64,
    /// When false, the run is color-only: features and head are never touched.
    pub train_features: bool,
    pub raster: RasterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 30_000,
            n_feat: 2_500,
            lambda: 0.1,
            ssim_weight: 0.2,
            feature_alpha_threshold: 0.5,
            lr: LearningRates::default(),
            densify: DensifyConfig::default(),
            holdout_every: 10,
            hidden: 64,
            seed: 0,
            train_features: true,
            raster: RasterConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validation_views(&self, n: usize) -> Vec<usize> {
        if self.holdout_every == 0 {
            return Vec::new();
        }
        (0..n).filter(|i| (i + 1) % self.holdout_every == 0).collect()
    }

    pub fn training_views(&self, n: usize) -> Vec<usize> {
        let val = self.validation_views(n);
        (0..n).filter(|i| !val.contains(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub view: usize,
    pub color_loss: f64,
    pub psnr: f64,
    pub clip_loss: Option<f64>,
    pub dino_loss: Option<f64>,
    pub gaussians: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub scene: GaussianScene,
    pub head: DecodeHead,
    pub log: Vec<IterRecord>,
    /// For each output Gaussian, the input Gaussian it descends from.
    pub provenance: Vec<usize>,
    pub train_views: Vec<usize>,
    pub val_views: Vec<usize>,
}

/// Per-view supervision at image resolution: RGB in `[0, 1]` and unit-norm
/// reference features (zero where the reference is zero).
#[derive(Debug, Clone)]
pub struct ViewTargets {
    pub rgb: Vec<f64>,
    pub clip: Vec<f64>,
    pub dino: Vec<f64>,
    pub clip_dim: usize,
    pub dino_dim: usize,
}

pub fn prepare_targets(ds: &FeatureDataset) -> Vec<ViewTargets> {
    (0..ds.len())
        .map(|v| {
            let img = &ds.images[v];
            let (w, h) = (img.width as usize, img.height as usize);
            let unit = |data: Vec<f64>, dim: usize| {
                let mut data = data;
                if dim > 0 {
                    data.chunks_mut(dim).for_each(normalize);
                }
                data
            };
            let clip = enhance(&ds.clip[v], &ds.masks[v], h, w);
            let dino = upsample_bilinear(&ds.dino[v], h, w);
            ViewTargets {
                rgb: img.to_f64(),
                clip: unit(clip.data.iter().map(|x| *x as f64).collect(), clip.dim),
                dino: unit(dino.iter().map(|x| *x as f64).collect(), ds.dino[v].dim),
                clip_dim: clip.dim,
                dino_dim: ds.dino[v].dim,
            }
        })
        .collect()
}

struct FeatureStep {
    clip: f64,
    dino: Option<f64>,
    dl_dfeature: Vec<f64>,
    head_grad: Vec<f64>,
}

/// Masked mean cosine losses of the decoded rendered features, with
/// gradients when `with_grad` is set.
fn feature_losses(target: &RenderTarget, head: &DecodeHead, t: &ViewTargets, lambda: f64, alpha_thr: f64) -> FeatureStep {
    let d = target.feature_dim;
    let pix: Vec<usize> = (0..target.pixel_count()).filter(|&p| target.alpha[p] > alpha_thr).collect();
    let n = pix.len();
    let mut out = FeatureStep { clip: 0.0, dino: None, dl_dfeature: vec![0.0; target.pixel_count() * d], head_grad: Vec::new() };
    if n == 0 {
        out.head_grad = vec![0.0; head.params.len()];
        if lambda > 0.0 {
            out.dino = Some(0.0);
        }
        return out;
    }
    let mut input = Vec::with_capacity(n * d);
    for &p in &pix {
        input.extend_from_slice(&target.feature[p * d..(p + 1) * d]);
    }
    let with_dino = lambda > 0.0;
    let (clip, dino, cache) = head.forward(&input, n, with_dino);
    let (dc, dd) = (head.clip_dim, head.dino_dim);
    let inv = 1.0 / n as f64;
    let mut g_clip = DMatrix::zeros(n, dc);
    let mut g_dino = DMatrix::zeros(n, if with_dino { dd } else { 0 });
    let mut row = vec![0.0; dc.max(dd)];
    let mut grad = vec![0.0; dc.max(dd)];
    let (mut lc, mut ld) = (0.0, 0.0);
    for (r, &p) in pix.iter().enumerate() {
        for k in 0..dc {
            row[k] = clip[(r, k)];
        }
        lc += cosine_distance(&row[..dc], &t.clip[p * dc..(p + 1) * dc], &mut grad[..dc]);
        for k in 0..dc {
            g_clip[(r, k)] = grad[k] * inv;
        }
        if with_dino {
            for k in 0..dd {
                row[k] = dino[(r, k)];
            }
            ld += cosine_distance(&row[..dd], &t.dino[p * dd..(p + 1) * dd], &mut grad[..dd]);
            for k in 0..dd {
                g_dino[(r, k)] = grad[k] * inv * lambda;
            }
        }
    }
    let (hg, gin) = head.backward(&cache, &g_clip, &g_dino);
    for (r, &p) in pix.iter().enumerate() {
        out.dl_dfeature[p * d..(p + 1) * d].copy_from_slice(&gin[r * d..(r + 1) * d]);
    }
    out.clip = lc * inv;
    out.dino = with_dino.then_some(ld * inv);
    out.head_grad = hg;
    out
}

/// Mean masked CLIP cosine loss over the given views.
pub fn clip_loss_on_views(
    scene: &GaussianScene,
    head: &DecodeHead,
    views: &[usize],
    cams: &[CameraView],
    targets: &[ViewTargets],
    cfg: &TrainConfig,
) -> Result<f64> {
    if views.is_empty() {
        return Err(Error::Empty("no views to evaluate".into()));
    }
    let rc = RasterConfig { render_features: true, ..cfg.raster.clone() };
    let mut total = 0.0;
    for &v in views {
        let t = rasterize(scene, &cams[v], &rc)?;
        total += feature_losses(&t, head, &targets[v], 0.0, cfg.feature_alpha_threshold).clip;
    }
    Ok(total / views.len() as f64)
}

fn check_inputs(scene: &GaussianScene, ds: &FeatureDataset, cfg: &TrainConfig) -> Result<()> {
    if ds.len() < 2 {
        return Err(Error::contract("training needs at least two views"));
    }
    if cfg.n_feat > cfg.iterations {
        return Err(Error::contract("n_feat exceeds the iteration count"));
    }
    if cfg.train_features && cfg.n_feat > 0 {
        if scene.feature_dim == 0 {
            return Err(Error::contract("feature training needs a scene with features"));
        }
        if ds.clip_dim() == 0 {
            return Err(Error::contract("dataset has no CLIP maps"));
        }
    }
    if cfg.training_views(ds.len()).is_empty() {
        return Err(Error::contract("every view is held out"));
    }
    scene.validate()
}

/// Joint color and feature optimization.
pub fn train(scene: &GaussianScene, ds: &FeatureDataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    check_inputs(scene, ds, cfg)?;
    let targets = prepare_targets(ds);
    train_with_targets(scene, ds, &targets, cfg)
}

pub fn train_with_targets(scene: &GaussianScene, ds: &FeatureDataset, targets: &[ViewTargets], cfg: &TrainConfig) -> Result<TrainOutput> {
    check_inputs(scene, ds, cfg)?;
    let half = scene.features.is_half();
    let mut s = scene.clone();
    s.features = s.features.to_full();
    let d = s.feature_dim;
    let stride = s.sh_stride();
    let mut head = DecodeHead::new(d, cfg.hidden, ds.clip_dim(), ds.dino_dim(), cfg.seed ^ HEAD_STREAM);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let extent = s.extent();

    let n0 = s.len();
    let mut a_pos = Adam::new(n0, 3, 1e-15);
    let mut a_scale = Adam::new(n0, 3, 1e-15);
    let mut a_rot = Adam::new(n0, 4, 1e-15);
    let mut a_opa = Adam::new(n0, 1, 1e-15);
    let mut a_sh = Adam::new(n0, stride, 1e-15);
    let mut a_feat = Adam::new(n0, d, 1e-15);
    let mut a_head = Adam::new(1, head.params.len(), 1e-8);
    let mut stats = GradStats::new(n0);
    let mut provenance: Vec<usize> = (0..n0).collect();

    let train_views = cfg.training_views(ds.len());
    let val_views = cfg.validation_views(ds.len());
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        if order.is_empty() {
            order = train_views.clone();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let v = order.pop().unwrap();
        let cam = &ds.views[v];
        let tg = &targets[v];
        let feat_active = cfg.train_features && it < cfg.n_feat && d > 0;
        let rc = RasterConfig { render_features: feat_active, ..cfg.raster.clone() };
        let target = rasterize(&s, cam, &rc)?;
        let (w, h) = (target.width, target.height);
        let (c_loss, dl_dc) = color_loss(&target.color, &tg.rgb, w, h, cfg.ssim_weight);
        let p = psnr(&target.color, &tg.rgb);

        let fs = if feat_active {
            Some(feature_losses(&target, &head, tg, cfg.lambda, cfg.feature_alpha_threshold))
        } else {
            None
        };
        let total = c_loss + fs.as_ref().map_or(0.0, |f| f.clip + cfg.lambda * f.dino.unwrap_or(0.0));
        if !total.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        log.push(IterRecord {
            iteration: it,
            view: v,
            color_loss: c_loss,
            psnr: p,
            clip_loss: fs.as_ref().map(|f| f.clip),
            dino_loss: fs.as_ref().and_then(|f| f.dino),
            gaussians: s.len(),
        });

        let dl_df: &[f64] = fs.as_ref().map_or(&[], |f| &f.dl_dfeature);
        let g = rasterize_backward(&s, cam, &target, &dl_dc, dl_df, &rc, BackwardOptions { feature_geometry_coupling: false })?;

        let r = it as f64 / cfg.iterations.max(1) as f64;
        let lr_pos = ((1.0 - r) * cfg.lr.position.ln() + r * cfg.lr.position_final.ln()).exp() * extent;
        let flat3 = |v: &[[f64; 3]]| v.iter().flatten().cloned().collect::<Vec<f64>>();
        a_pos.step(&flat3(&g.positions), lr_pos, |i, dv| s.positions[i / 3][i % 3] += dv as f32);
        a_scale.step(&flat3(&g.log_scales), cfg.lr.scale, |i, dv| s.log_scales[i / 3][i % 3] += dv as f32);
        let rot: Vec<f64> = g.rotations.iter().flatten().cloned().collect();
        a_rot.step(&rot, cfg.lr.rotation, |i, dv| s.rotations[i / 4][i % 4] += dv as f32);
        a_opa.step(&g.opacity_logits, cfg.lr.opacity, |i, dv| s.opacity_logits[i] += dv as f32);
        a_sh.step(&g.sh, cfg.lr.sh, |i, dv| s.sh[i] += dv as f32);
        if let Some(f) = &fs {
            let FeatureStorage::Full(fv) = &mut s.features else { unreachable!() };
            let rf = it as f64 / cfg.n_feat.min(cfg.iterations).max(1) as f64;
            let lr_feat = ((1.0 - rf) * cfg.lr.feature.ln() + rf * cfg.lr.feature_final.ln()).exp();
            a_feat.step(&g.features, lr_feat, |i, dv| fv[i] += dv as f32);
            let lr_mlp = ((1.0 - rf) * cfg.lr.mlp.ln() + rf * cfg.lr.mlp_final.ln()).exp();
            a_head.step(&f.head_grad, lr_mlp, |i, dv| head.params[i] += dv);
        }

        let dc = &cfg.densify;
        if it < dc.until {
            stats.add(&g.mean2d, &g.visible, w, h);
            let step = it + 1;
            if dc.interval > 0 && step >= dc.from && step % dc.interval == 0 {
                let (ns, origins) = densify_and_prune(&s, &stats, dc, extent, &mut rng);
                for a in [&mut a_pos, &mut a_scale, &mut a_rot, &mut a_opa, &mut a_sh, &mut a_feat] {
                    a.remap(&origins);
                }
                provenance = origins.iter().map(|(src, _)| provenance[*src]).collect();
                s = ns;
                stats = GradStats::new(s.len());
            }
        }
    }
    if half {
        s.features = s.features.to_half();
    }
    Ok(TrainOutput { scene: s, head, log, provenance, train_views, val_views })
}

pub fn write_loss_csv(log: &[IterRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("csv: {e}")))?;
    for r in log {
        w.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
