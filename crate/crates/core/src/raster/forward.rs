use super::{footprint, map_tiles, project, ProjectedGaussian, RasterConfig, TileBins};
use crate::error::{Error, Result};
use crate::scene::{CameraView, GaussianScene};

/// Output buffers of one render, plus the bookkeeping the backward pass needs.
#[derive(Debug, Clone)]
pub struct RenderTarget {
    pub width: usize,
    pub height: usize,
    pub feature_dim: usize,
    /// `H x W x 3`, row-major.
    pub color: Vec<f64>,
    /// `H x W x d`; empty when features were not rendered.
    pub feature: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Transmittance left after the last contributing Gaussian.
    pub transmittance: Vec<f64>,
    /// Number of tile-list entries walked per pixel (contributors and skipped ones).
    pub n_walked: Vec<u32>,
    /// Depth-sorted projected Gaussians.
    pub projected: Vec<ProjectedGaussian>,
    pub bins: TileBins,
}

impl RenderTarget {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn has_features(&self) -> bool {
        !self.feature.is_empty()
    }

    pub fn color_at(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.color[o], self.color[o + 1], self.color[o + 2]]
    }

    pub fn feature_at(&self, x: usize, y: usize) -> &[f64] {
        let d = self.feature_dim;
        let o = (y * self.width + x) * d;
        &self.feature[o..o + d]
    }

    /// 8-bit RGB with values clamped to `[0, 1]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.color.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

struct TileOut {
    color: Vec<f64>,
    feature: Vec<f64>,
    alpha: Vec<f64>,
    trans: Vec<f64>,
    walked: Vec<u32>,
}

/// Front-to-back compositing of color and (optionally) features:
/// `{F, C} = sum_i {f_i, c_i} a_i prod_{j<i} (1 - a_j)`.
pub fn rasterize(scene: &GaussianScene, cam: &CameraView, cfg: &RasterConfig) -> Result<RenderTarget> {
    cam.validate()?;
    let with_features = cfg.render_features && scene.feature_dim > 0;
    if with_features && scene.feature_dim > cfg.max_feature_dim {
        return Err(Error::contract(format!(
            "feature dim {} exceeds configured max {}",
            scene.feature_dim, cfg.max_feature_dim
        )));
    }
    let width = cam.width as usize;
    let height = cam.height as usize;
    let d = if with_features { scene.feature_dim } else { 0 };
    let projected = project(scene, cam, cfg);
    let bins = TileBins::build(&projected, width, height, cfg.tile_size);

    let tiles = map_tiles(bins.tile_count(), |t| {
        let (x0, x1, y0, y1) = bins.tile_pixels(t, width, height);
        let entries = bins.entries_of(t);
        let npx = (x1 - x0) * (y1 - y0);
        let mut out = TileOut {
            color: vec![0.0; npx * 3],
            feature: vec![0.0; npx * d],
            alpha: vec![0.0; npx],
            trans: vec![1.0; npx],
            walked: vec![0; npx],
        };
        let mut local = 0;
        for py in y0..y1 {
            for px in x0..x1 {
                let mut t_acc = 1.0;
                let mut walked = 0u32;
                let acc_f = &mut out.feature[local * d..(local + 1) * d];
                let mut rgb = [0.0; 3];
                for &e in entries {
                    walked += 1;
                    let g = &projected[e as usize];
                    let Some(fp) = footprint(g, px as f64, py as f64, cfg) else { continue };
                    let next = t_acc * (1.0 - fp.alpha);
                    if next < cfg.transmittance_cutoff {
                        walked -= 1;
                        break;
                    }
                    let w = fp.alpha * t_acc;
                    for c in 0..3 {
                        rgb[c] += g.color[c] * w;
                    }
                    if d > 0 {
                        scene.features.axpy_row(g.index * d, w, acc_f);
                    }
                    t_acc = next;
                }
                out.color[local * 3..local * 3 + 3].copy_from_slice(&rgb);
                out.alpha[local] = 1.0 - t_acc;
                out.trans[local] = t_acc;
                out.walked[local] = walked;
                local += 1;
            }
        }
        out
    });

    let n = width * height;
    let mut target = RenderTarget {
        width,
        height,
        feature_dim: d,
        color: vec![0.0; n * 3],
        feature: vec![0.0; n * d],
        alpha: vec![0.0; n],
        transmittance: vec![1.0; n],
        n_walked: vec![0; n],
        projected,
        bins,
    };
    for (t, out) in tiles.into_iter().enumerate() {
        let (x0, x1, y0, y1) = target.bins.tile_pixels(t, width, height);
        let mut local = 0;
        for py in y0..y1 {
            for px in x0..x1 {
                let p = py * width + px;
                target.color[p * 3..p * 3 + 3].copy_from_slice(&out.color[local * 3..local * 3 + 3]);
                if d > 0 {
                    target.feature[p * d..(p + 1) * d].copy_from_slice(&out.feature[local * d..(local + 1) * d]);
                }
                target.alpha[p] = out.alpha[local];
                target.transmittance[p] = out.trans[local];
                target.n_walked[p] = out.walked[local];
                local += 1;
            }
        }
    }
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Gaussian, Mat3, Vec3};
    use half::f16;

    fn cam(w: u32, h: u32) -> CameraView {
        // pixel (cx, cy) looks down the optical axis
        CameraView::from_pose(20.0, 20.0, 8.0, 8.0, w, h, &Mat3::identity(), &Vec3::zeros())
    }

    #[test]
    fn single_gaussian_center_pixel_feature() {
        let mut s = GaussianScene::new(0, 4);
        let mut g = Gaussian::isotropic([0.0, 0.0, 2.0], 0.1, 0.7, [1.0, 0.0, 0.0], 0, 4);
        g.feature[0] = f16::ONE;
        s.push(g).unwrap();
        let t = rasterize(&s, &cam(16, 16), &RasterConfig::default()).unwrap();
        let f = t.feature_at(8, 8);
        assert!((f[0] - 0.7).abs() < 1e-6, "{f:?}");
        assert_eq!(&f[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_coincident_gaussians_composite() {
        let mut s = GaussianScene::new(0, 0);
        s.push(Gaussian::isotropic([0.0, 0.0, 2.0], 0.1, 0.5, [1.0, 0.0, 0.0], 0, 0)).unwrap();
        s.push(Gaussian::isotropic([0.0, 0.0, 2.0], 0.1, 0.5, [0.0, 1.0, 0.0], 0, 0)).unwrap();
        let t = rasterize(&s, &cam(16, 16), &RasterConfig::default()).unwrap();
        let c = t.color_at(8, 8);
        assert!((c[0] - 0.5).abs() < 1e-6 && (c[1] - 0.25).abs() < 1e-6 && c[2].abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn empty_scene_is_transparent() {
        let s = GaussianScene::new(3, 8);
        let t = rasterize(&s, &cam(20, 7), &RasterConfig::default()).unwrap();
        assert!(t.alpha.iter().all(|a| *a == 0.0));
        assert_eq!(t.feature.len(), 20 * 7 * 8);
    }

    #[test]
    fn feature_dim_limit() {
        let s = GaussianScene::new(0, 16);
        let cfg = RasterConfig { max_feature_dim: 8, ..Default::default() };
        assert!(rasterize(&s, &cam(4, 4), &cfg).is_err());
    }
}
