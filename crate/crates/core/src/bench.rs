//! Forward+backward timing of the rasterizer across feature dimensions.
//!
//! Absolute times depend on the machine; rows carry a ratio to the dim-0
//! (color-only) row with the same toggles so orderings can be compared.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize, rasterize_backward, BackwardOptions, RasterConfig};
use crate::scene::{CameraView, Gaussian, GaussianScene, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    /// (grad_buffer, half_storage) combinations to measure.
    pub toggles: Vec<(bool, bool)>,
    pub reps: usize,
    pub warmup: usize,
    pub gaussians: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dims: vec![0, 32, 256, 768],
            toggles: vec![(false, false), (true, false), (false, true), (true, true)],
            reps: 20,
            warmup: 3,
            gaussians: 600,
            width: 64,
            height: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dim: usize,
    pub grad_buffer: bool,
    pub half_storage: bool,
    pub forward_ms: f64,
    pub backward_ms: f64,
    /// Mean forward+backward time per iteration.
    pub mean_ms: f64,
    pub std_ms: f64,
    /// `mean_ms` over the dim-0 row with the same toggles.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, dim: usize, grad_buffer: bool, half_storage: bool) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.dim == dim && r.grad_buffer == grad_buffer && r.half_storage == half_storage)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<BenchReport> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<BenchRow>, _>>().map_err(|e| Error::Format(e.to_string()))?;
        Ok(BenchReport { rows })
    }

    /// True when, for every toggle set, mean time does not decrease with dim.
    pub fn monotone_in_dim(&self) -> bool {
        let mut keys: Vec<(bool, bool)> = self.rows.iter().map(|r| (r.grad_buffer, r.half_storage)).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter().all(|(g, h)| {
            let mut rs: Vec<&BenchRow> = self.rows.iter().filter(|r| r.grad_buffer == g && r.half_storage == h).collect();
            rs.sort_by_key(|r| r.dim);
            rs.windows(2).all(|p| p[1].mean_ms >= p[0].mean_ms)
        })
    }
}

/// Random cloud of Gaussians in front of a single camera looking at the origin.
pub fn bench_scene(n: usize, dim: usize, seed: u64) -> Result<(GaussianScene, CameraView)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::new(0, dim);
    for _ in 0..n {
        let p = [0, 1, 2].map(|_| 0.6 * rng.sample::<f64, _>(StandardNormal) as f32);
        let rgb = [0, 1, 2].map(|_| rng.random::<f32>());
        let mut g = Gaussian::isotropic(p, 0.04 + 0.06 * rng.random::<f32>(), 0.3 + 0.6 * rng.random::<f32>(), rgb, 0, dim);
        for f in &mut g.feature {
            *f = half::f16::from_f32(rng.sample::<f32, _>(StandardNormal));
        }
        scene.push(g)?;
    }
    let cam = CameraView::look_at(Vec3::new(0.0, -4.0, 0.5), Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 50.0, 64, 64);
    Ok((scene, cam))
}

/// Times one configuration: returns (forward, backward, total) samples in ms.
fn time_config(scene: &GaussianScene, cam: &CameraView, raster: &RasterConfig, cfg: &BenchConfig) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let dl_dcolor: Vec<f64> = (0..w * h * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dl_dfeature: Vec<f64> = (0..w * h * scene.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mut fw, mut bw, mut tot) = (Vec::new(), Vec::new(), Vec::new());
    for rep in 0..cfg.warmup + cfg.reps {
        let t0 = Instant::now();
        let target = rasterize(scene, cam, raster)?;
        let t1 = Instant::now();
        let grads = rasterize_backward(scene, cam, &target, &dl_dcolor, &dl_dfeature, raster, BackwardOptions::default())?;
        let t2 = Instant::now();
        std::hint::black_box(&grads);
        if rep >= cfg.warmup {
            let (f, b) = ((t1 - t0).as_secs_f64() * 1e3, (t2 - t1).as_secs_f64() * 1e3);
            fw.push(f);
            bw.push(b);
            tot.push(f + b);
        }
    }
    Ok((fw, bw, tot))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

/// Measures every (dim, toggles) pair. Without an explicit scene a random
/// cloud from [`bench_scene`] is used; a given scene has its features replaced
/// by seeded noise of each dim.
pub fn run_bench(cfg: &BenchConfig, scene: Option<(&GaussianScene, &CameraView)>) -> Result<BenchReport> {
    if cfg.reps < 2 {
        return Err(Error::contract("bench needs at least two repetitions"));
    }
    let mut rows = Vec::new();
    for &dim in &cfg.dims {
        let (base, cam) = match scene {
            Some((s, c)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let vals: Vec<f32> = (0..s.len() * dim).map(|_| rng.sample(StandardNormal)).collect();
                (s.with_features(dim, &vals), c.clone())
            }
            None => {
                let (s, mut c) = bench_scene(cfg.gaussians, dim, cfg.seed)?;
                let (w, h) = (cfg.width as f64 / c.width as f64, cfg.height as f64 / c.height as f64);
                c = CameraView::from_pose(c.fx * w, c.fy * h, c.cx * w, c.cy * h, cfg.width, cfg.height, &c.rotation(), &c.translation());
                (s, c)
            }
        };
        for &(grad_buffer, half_storage) in &cfg.toggles {
            let mut s = base.clone();
            s.features = if half_storage { s.features.to_half() } else { s.features.to_full() };
            let raster = RasterConfig { grad_buffer, render_features: dim > 0, ..RasterConfig::default() };
            let (fw, bw, tot) = time_config(&s, &cam, &raster, cfg)?;
            let (mean_ms, std_ms) = mean_std(&tot);
            rows.push(BenchRow {
                dim,
                grad_buffer,
                half_storage,
                forward_ms: mean_std(&fw).0,
                backward_ms: mean_std(&bw).0,
                mean_ms,
                std_ms,
                ratio: f64::NAN,
            });
        }
    }
    let base: Vec<(bool, bool, f64)> = rows.iter().filter(|r| r.dim == 0).map(|r| (r.grad_buffer, r.half_storage, r.mean_ms)).collect();
    for r in &mut rows {
        if let Some(b) = base.iter().find(|b| b.0 == r.grad_buffer && b.1 == r.half_storage) {
            r.ratio = r.mean_ms / b.2;
        }
    }
    Ok(BenchReport { rows })
}
