use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scene::{GaussianScene, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    /// First iteration at which densification runs.
    pub from: usize,
    /// Densification stops at this iteration.
    pub until: usize,
    pub interval: usize,
    /// Mean view-space positional gradient norm (normalized device units).
    pub grad_threshold: f64,
    /// Gaussians larger than this fraction of the scene extent are split, smaller ones cloned.
    pub percent_dense: f64,
    pub split_factor: f64,
    pub min_opacity: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            from: 500,
            until: 15_000,
            interval: 100,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            split_factor: 1.6,
            min_opacity: 0.005,
        }
    }
}

/// Accumulated view-space positional gradient norms per Gaussian.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        GradStats { sum: vec![0.0; n], count: vec![0; n] }
    }

    /// Adds one view's screen-space gradients (px) for the visible Gaussians.
    pub fn add(&mut self, mean2d: &[[f64; 2]], visible: &[bool], width: usize, height: usize) {
        let (sx, sy) = (0.5 * width as f64, 0.5 * height as f64);
        for i in 0..self.sum.len() {
            if visible[i] {
                self.sum[i] += (mean2d[i][0] * sx).hypot(mean2d[i][1] * sy);
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

/// Clones small and splits large Gaussians whose mean gradient reaches the
/// threshold, then prunes low opacity. Survivors keep their order; new
/// Gaussians are appended. Children copy every attribute of their source
/// (features bit-for-bit); split children get positions sampled from the
/// parent density and scales divided by `split_factor`.
///
/// Returns the new scene and, per new Gaussian, `(source index, fresh)`.
pub fn densify_and_prune<R: Rng>(
    scene: &GaussianScene,
    stats: &GradStats,
    cfg: &DensifyConfig,
    extent: f64,
    rng: &mut R,
) -> (GaussianScene, Vec<(usize, bool)>) {
    let n = scene.len();
    let mut keep = vec![true; n];
    let mut added: Vec<(usize, Option<[f32; 3]>, bool)> = Vec::new();
    let shrink = (cfg.split_factor as f32).ln();
    for i in 0..n {
        if stats.mean(i) < cfg.grad_threshold {
            continue;
        }
        let act = scene.activate(i);
        let max_scale = act.scale.max();
        if max_scale <= cfg.percent_dense * extent {
            added.push((i, None, false));
        } else {
            keep[i] = false;
            let r = act.rotation;
            let mu = scene.position(i);
            for _ in 0..2 {
                let z = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
                let p = mu + r * Vec3::new(z.x * act.scale[0], z.y * act.scale[1], z.z * act.scale[2]);
                added.push((i, Some([p.x as f32, p.y as f32, p.z as f32]), true));
            }
        }
    }
    let mut out = scene.empty_like();
    let mut origins = Vec::new();
    let alive = |s: &GaussianScene, j: usize| crate::scene::sigmoid(s.opacity_logits[j] as f64) >= cfg.min_opacity;
    for i in 0..n {
        if keep[i] && alive(scene, i) {
            out.append_from(scene, i);
            origins.push((i, false));
        }
    }
    for (src, pos, split) in added {
        if !alive(scene, src) {
            continue;
        }
        out.append_from(scene, src);
        let j = out.len() - 1;
        if let Some(p) = pos {
            out.positions[j] = p;
        }
        if split {
            for v in out.log_scales[j].iter_mut() {
                *v -= shrink;
            }
        }
        origins.push((src, true));
    }
    (out, origins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;
    use half::f16;
    use rand::SeedableRng;

    fn scene() -> GaussianScene {
        let mut s = GaussianScene::new(0, 3);
        for (i, scale) in [0.001f32, 0.5, 0.002].iter().enumerate() {
            let mut g = Gaussian::isotropic([i as f32, 0.0, 0.0], *scale, 0.6, [0.5; 3], 0, 3);
            g.feature = vec![f16::from_f32(0.1 * i as f32 + 0.3), f16::from_f32(-0.7), f16::from_f32(0.33)];
            s.push(g).unwrap();
        }
        s
    }

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn nothing_above_threshold_is_identity() {
        let s = scene();
        let (out, origins) = densify_and_prune(&s, &GradStats::new(3), &DensifyConfig::default(), 2.0, &mut rng());
        assert_eq!(out, s);
        assert_eq!(origins, vec![(0, false), (1, false), (2, false)]);
    }

    #[test]
    fn split_children_copy_features() {
        let s = scene();
        let mut st = GradStats::new(3);
        st.sum[1] = 1.0;
        st.count[1] = 1;
        let (out, origins) = densify_and_prune(&s, &st, &DensifyConfig::default(), 2.0, &mut rng());
        assert_eq!(out.len(), 4);
        assert_eq!(&origins[2..], &[(1, true), (1, true)]);
        for j in 2..4 {
            assert_eq!(out.gaussian(j).feature, s.gaussian(1).feature);
            assert!((out.log_scales[j][0] - (s.log_scales[1][0] - 1.6f32.ln())).abs() < 1e-6);
        }
    }

    #[test]
    fn clone_and_prune() {
        let mut s = scene();
        s.opacity_logits[2] = crate::scene::inverse_sigmoid(0.001) as f32;
        let mut st = GradStats::new(3);
        st.sum[0] = 1.0;
        st.count[0] = 2;
        let (out, origins) = densify_and_prune(&s, &st, &DensifyConfig::default(), 2.0, &mut rng());
        assert_eq!(origins, vec![(0, false), (1, false), (0, true)]);
        assert_eq!(out.gaussian(2), s.gaussian(0));
    }
}
