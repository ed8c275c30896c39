//! Tile-based differentiable splatting of colors and feature vectors.
//!
//! Every Gaussian contributes to a pixel only inside its `cutoff_sigma` ellipse
//! (`m^2 <= cutoff_sigma^2`). Tiles bin Gaussians by the exact axis-aligned box
//! of that ellipse, so the tiled result equals per-pixel compositing over all
//! Gaussians.

mod backward;
mod forward;
mod pca;
mod project;

pub use backward::{rasterize_backward, BackwardOptions, Gradients};
pub use forward::{rasterize, RenderTarget};
pub use pca::render_feature_pca;
pub use project::{project, ProjectedGaussian};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Camera-space depth below which Gaussians are culled.
    pub near: f64,
    /// Isotropic screen-space covariance dilation, px^2.
    pub dilation: f64,
    /// Compositing stops before transmittance would fall below this value.
    pub transmittance_cutoff: f64,
    pub alpha_max: f64,
    /// Footprint radius in standard deviations.
    pub cutoff_sigma: f64,
    pub max_feature_dim: usize,
    /// Render the feature channel alongside color.
    pub render_features: bool,
    /// Stage backward gradients in per-tile buffers before merging.
    pub grad_buffer: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            tile_size: 16,
            near: 0.01,
            dilation: 0.3,
            transmittance_cutoff: 1e-4,
            alpha_max: 0.99,
            cutoff_sigma: 3.0,
            max_feature_dim: 1024,
            render_features: true,
            grad_buffer: true,
        }
    }
}

impl RasterConfig {
    pub fn color_only() -> Self {
        RasterConfig { render_features: false, ..Default::default() }
    }
}

/// Per-tile ranges into the depth-sorted list of projected Gaussians.
#[derive(Debug, Clone, Default)]
pub struct TileBins {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_size: usize,
    /// `ranges[t] = (start, end)` into `entries`.
    pub ranges: Vec<(usize, usize)>,
    /// Indices into the projected list, depth-ordered within each tile.
    pub entries: Vec<u32>,
}

impl TileBins {
    pub fn build(projected: &[ProjectedGaussian], width: usize, height: usize, tile_size: usize) -> TileBins {
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let n_tiles = tiles_x * tiles_y;
        let mut counts = vec![0usize; n_tiles];
        let rects: Vec<Option<(usize, usize, usize, usize)>> = projected
            .iter()
            .map(|p| p.tile_rect(width, height, tile_size))
            .collect();
        for r in rects.iter().flatten() {
            for ty in r.1..=r.3 {
                for tx in r.0..=r.2 {
                    counts[ty * tiles_x + tx] += 1;
                }
            }
        }
        let mut ranges = Vec::with_capacity(n_tiles);
        let mut start = 0;
        for c in &counts {
            ranges.push((start, start + c));
            start += c;
        }
        let mut fill: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        let mut entries = vec![0u32; start];
        for (pi, r) in rects.iter().enumerate() {
            if let Some(r) = r {
                for ty in r.1..=r.3 {
                    for tx in r.0..=r.2 {
                        let t = ty * tiles_x + tx;
                        entries[fill[t]] = pi as u32;
                        fill[t] += 1;
                    }
                }
            }
        }
        TileBins { tiles_x, tiles_y, tile_size, ranges, entries }
    }

    pub fn tile_count(&self) -> usize {
        self.ranges.len()
    }

    /// Pixel rectangle `[x0, x1) x [y0, y1)` of tile `t`.
    pub fn tile_pixels(&self, t: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = t % self.tiles_x;
        let ty = t / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(width), y0, (y0 + self.tile_size).min(height))
    }

    pub fn entries_of(&self, t: usize) -> &[u32] {
        let (a, b) = self.ranges[t];
        &self.entries[a..b]
    }
}

/// Per-pixel evaluation shared by the forward and backward passes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Footprint {
    pub alpha: f64,
    pub gauss: f64,
    pub dx: f64,
    pub dy: f64,
    pub clamped: bool,
}

#[inline]
pub(crate) fn footprint(p: &ProjectedGaussian, px: f64, py: f64, cfg: &RasterConfig) -> Option<Footprint> {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    let m2 = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
    if !(m2 <= cfg.cutoff_sigma * cfg.cutoff_sigma) {
        return None;
    }
    let gauss = (-0.5 * m2).exp();
    let raw = p.opacity * gauss;
    let (alpha, clamped) = if raw > cfg.alpha_max { (cfg.alpha_max, true) } else { (raw, false) };
    Some(Footprint { alpha, gauss, dx, dy, clamped })
}

#[cfg(feature = "parallel")]
pub(crate) fn map_tiles<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_tiles<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}
