//! Synthetic scenes with known ground truth: a two-object feature dataset for
//! the distillation pipeline, plus helpers shared by tests and demos.

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distill::DecodeHead;
use crate::error::{Error, Result};
use crate::io::{FeatureDataset, FeatureMap, Mask, RgbImage, Vocab};
use crate::raster::{rasterize, RasterConfig};
use crate::scene::{CameraView, Gaussian, GaussianScene, Vec3};

pub const NEGATIVES: [&str; 2] = ["objects", "things"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub views: usize,
    pub width: u32,
    pub height: u32,
    /// Side of the coarse reference maps.
    pub coarse: usize,
    pub clip_dim: usize,
    pub dino_dim: usize,
    pub feature_dim: usize,
    pub gaussians_per_object: usize,
    pub seed: u64,
    /// Std-dev of per-view, per-mask perturbations of the CLIP reference.
    pub clip_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            views: 8,
            width: 96,
            height: 96,
            coarse: 24,
            clip_dim: 16,
            dino_dim: 8,
            feature_dim: 32,
            gaussians_per_object: 250,
            seed: 0,
            clip_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub dataset: FeatureDataset,
    /// Scene the images were rendered from (no features).
    pub gt_scene: GaussianScene,
    /// Starting point for training: jittered ground-truth centroids, gray,
    /// with small random features.
    pub init_scene: GaussianScene,
    /// Object index of every Gaussian (shared by `gt_scene` and `init_scene`).
    pub labels: Vec<usize>,
    pub object_names: Vec<String>,
    /// Unit DINO-space embedding per object.
    pub dino_embeddings: Vec<Vec<f64>>,
}

/// `count` random orthonormal vectors of dimension `dim` (Gram-Schmidt).
pub fn orthonormal_set(count: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(count <= dim, "cannot fit {count} orthonormal vectors in {dim} dimensions");
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Object words map to the first basis vectors. Generic words ("objects",
/// "things") are, like real text embeddings of generic nouns, similar to every
/// object: the normalized object mean plus their own direction, scaled to unit
/// length, so their cosine with each of `K` objects is `1 / sqrt(2K)`.
pub fn synth_vocab(names: &[String], basis: &[Vec<f64>]) -> Vocab {
    let dim = basis[0].len();
    let k = names.len();
    let mut mean = vec![0.0; dim];
    for e in &basis[..k] {
        mean.iter_mut().zip(e).for_each(|(m, v)| *m += v / (k as f64).sqrt());
    }
    let mut vocab = Vocab::default();
    for (w, e) in names.iter().zip(basis) {
        vocab.insert(w.clone(), e.iter().map(|v| *v as f32).collect());
    }
    for (j, w) in NEGATIVES.iter().enumerate() {
        let own = &basis[k + j];
        let v: Vec<f64> = mean.iter().zip(own).map(|(m, o)| (m + o) / 2f64.sqrt()).collect();
        vocab.insert(*w, v.iter().map(|x| *x as f32).collect());
    }
    vocab
}

/// Cameras on a ring around the origin (z up), alternating above and below
/// the equator.
pub fn ring_cameras(n: usize, radius: f64, width: u32, height: u32, fov_deg: f64) -> Vec<CameraView> {
    (0..n)
        .map(|i| {
            let az = std::f64::consts::TAU * i as f64 / n as f64 + 0.3;
            let el = if i % 2 == 0 { 25f64 } else { -20f64 }.to_radians();
            let eye = Vec3::new(radius * el.cos() * az.cos(), radius * el.cos() * az.sin(), radius * el.sin());
            CameraView::look_at(eye, Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), fov_deg, width, height)
        })
        .collect()
}

fn sphere_point(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if v.norm() > 1e-9 {
            return v.normalize();
        }
    }
}

fn cube_surface_point(rng: &mut impl Rng) -> Vec3 {
    let face = rng.random_range(0..6);
    let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let s = if face % 2 == 0 { 1.0 } else { -1.0 };
    match face / 2 {
        0 => Vec3::new(s, a, b),
        1 => Vec3::new(a, s, b),
        _ => Vec3::new(a, b, s),
    }
}

/// Box-filters an `H x W x D` full-resolution map down by an integer factor.
fn downsample(full: &[f64], w: usize, h: usize, d: usize, cw: usize, ch: usize) -> Vec<f32> {
    let (fx, fy) = (w / cw, h / ch);
    let mut out = vec![0f32; cw * ch * d];
    for cy in 0..ch {
        for cx in 0..cw {
            for k in 0..d {
                let mut s = 0.0;
                for y in cy * fy..(cy + 1) * fy {
                    for x in cx * fx..(cx + 1) * fx {
                        s += full[(y * w + x) * d + k];
                    }
                }
                out[(cy * cw + cx) * d + k] = (s / (fx * fy) as f64) as f32;
            }
        }
    }
    out
}

/// Two objects, an "apple" sphere and a "box" cube, side by side.
pub fn two_object_dataset(cfg: &SynthConfig) -> Result<SynthScene> {
    if cfg.coarse == 0 || cfg.coarse > cfg.width.min(cfg.height) as usize {
        return Err(Error::Contract(format!("coarse map side {} must be in 1..={}", cfg.coarse, cfg.width.min(cfg.height))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names = vec!["apple".to_string(), "box".to_string()];
    let colors = [[0.85, 0.2, 0.15], [0.15, 0.3, 0.85]];
    let mut gt = GaussianScene::new(3, 2);
    let mut labels = Vec::new();
    for (k, color) in colors.iter().enumerate() {
        for _ in 0..cfg.gaussians_per_object {
            let p = if k == 0 {
                Vec3::new(-0.42, 0.0, 0.0) + sphere_point(&mut rng) * 0.32
            } else {
                Vec3::new(0.42, 0.0, 0.0) + cube_surface_point(&mut rng) * 0.25
            };
            let jitter: f64 = rng.random_range(-0.06..0.06);
            let rgb = color.map(|c| (c + jitter) as f32);
            let mut g = Gaussian::isotropic([p.x as f32, p.y as f32, p.z as f32], 0.045, 0.9, rgb, 3, 2);
            g.feature[k] = f16::ONE;
            gt.push(g)?;
            labels.push(k);
        }
    }

    let clip_basis = orthonormal_set(names.len() + NEGATIVES.len(), cfg.clip_dim, &mut rng);
    let dino_basis = orthonormal_set(names.len(), cfg.dino_dim, &mut rng);
    let vocab = synth_vocab(&names, &clip_basis);

    let views = ring_cameras(cfg.views, 2.4, cfg.width, cfg.height, 40.0);
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut ds = FeatureDataset { views: views.clone(), images: vec![], clip: vec![], dino: vec![], masks: vec![], vocab };
    let rc = RasterConfig::default();
    for cam in &views {
        let t = rasterize(&gt, cam, &rc)?;
        ds.images.push(RgbImage { width: cfg.width, height: cfg.height, data: t.to_rgb8() });
        let mut clip_full = vec![0.0; w * h * cfg.clip_dim];
        let mut dino_full = vec![0.0; w * h * cfg.dino_dim];
        let mut masks: Vec<Mask> = names.iter().map(|_| Mask { width: w, height: h, bits: vec![false; w * h] }).collect();
        // per-view perturbation of each object's reference direction
        let noisy: Vec<Vec<f64>> = (0..names.len())
            .map(|k| {
                let mut e: Vec<f64> = clip_basis[k].iter().map(|v| v + cfg.clip_noise * rng.sample::<f64, _>(StandardNormal)).collect();
                let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                e.iter_mut().for_each(|x| *x /= n);
                e
            })
            .collect();
        for p in 0..w * h {
            let wts = &t.feature[p * 2..p * 2 + 2];
            for k in 0..names.len() {
                for j in 0..cfg.clip_dim {
                    clip_full[p * cfg.clip_dim + j] += wts[k] * noisy[k][j];
                }
                for j in 0..cfg.dino_dim {
                    dino_full[p * cfg.dino_dim + j] += wts[k] * dino_basis[k][j];
                }
                masks[k].bits[p] = wts[k] > 0.5;
            }
        }
        let c = cfg.coarse;
        ds.clip.push(FeatureMap::from_f32(c, c, cfg.clip_dim, &downsample(&clip_full, w, h, cfg.clip_dim, c, c)));
        ds.dino.push(FeatureMap::from_f32(c, c, cfg.dino_dim, &downsample(&dino_full, w, h, cfg.dino_dim, c, c)));
        ds.masks.push(masks.into_iter().filter(|m| m.count() > 0).collect());
    }
    ds.validate()?;

    // separate stream: the initial features never shift the geometry draws above
    let mut frng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let mut init = GaussianScene::new(3, cfg.feature_dim);
    for i in 0..gt.len() {
        let mut g = Gaussian::isotropic(gt.positions[i], 0.05, 0.5, [0.5; 3], 3, cfg.feature_dim);
        for v in g.centroid.iter_mut() {
            *v += 0.01 * frng.sample::<f32, _>(StandardNormal);
        }
        for f in g.feature.iter_mut() {
            *f = f16::from_f32(0.01 * frng.sample::<f32, _>(StandardNormal));
        }
        init.push(g)?;
    }
    let gt_scene = gt.with_features(0, &[]);
    Ok(SynthScene { dataset: ds, gt_scene, init_scene: init, labels, object_names: names, dino_embeddings: dino_basis })
}

/// The ground-truth scene carrying each object's vocabulary embedding as its
/// feature, with a head that decodes features unchanged. Selection on this
/// pair is exact, which makes it a fixture for services and demos that need
/// a "trained" scene without running training.
pub fn oracle_features(syn: &SynthScene) -> Result<(GaussianScene, DecodeHead)> {
    let vocab = &syn.dataset.vocab;
    let dim = syn.dataset.clip_dim();
    let mut values = Vec::with_capacity(syn.labels.len() * dim);
    for &k in &syn.labels {
        values.extend_from_slice(vocab.get(&syn.object_names[k])?);
    }
    let head = DecodeHead::passthrough(dim, 2 * dim, syn.dataset.dino_dim())?;
    Ok((syn.gt_scene.with_features(dim, &values), head))
}
