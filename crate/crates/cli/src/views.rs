//! Camera resolution, rendering to PNG and query heatmaps, shared by the
//! subcommands and the HTTP service.

use featsplat::decompose::{query_probabilities, QuerySpec};
use featsplat::distill::DecodeHead;
use featsplat::io::{RgbImage, Vocab};
use featsplat::raster::{rasterize, render_feature_pca, RasterConfig};
use featsplat::scene::Vec3;
use featsplat::{CameraView, GaussianScene};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Either a stored camera (`view`) or an explicit look-at pose. `width` and
/// `height` rescale a stored camera's intrinsics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewRequest {
    pub view: Option<usize>,
    pub eye: Option<[f64; 3]>,
    pub target: Option<[f64; 3]>,
    pub fov: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

pub fn parse_vec3(s: &str) -> CliResult<[f64; 3]> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| CliError::Usage(format!("expected x,y,z, got {s:?}")))?;
    <[f64; 3]>::try_from(v).map_err(|_| CliError::Usage(format!("expected three components, got {s:?}")))
}

fn rescale(c: &CameraView, width: u32, height: u32) -> CameraView {
    let (sx, sy) = (width as f64 / c.width as f64, height as f64 / c.height as f64);
    CameraView::from_pose(c.fx * sx, c.fy * sy, c.cx * sx, c.cy * sy, width, height, &c.rotation(), &c.translation())
}

/// Orbit camera framing the scene from the -y side, z up.
pub fn default_camera(scene: &GaussianScene, width: u32, height: u32) -> CameraView {
    let c = scene.centroid();
    let r = scene.extent();
    let eye = c + Vec3::new(0.0, -2.6 * r, 0.9 * r);
    CameraView::look_at(eye, c, Vec3::new(0.0, 0.0, 1.0), 40.0, width, height)
}

pub fn resolve_camera(req: &ViewRequest, cameras: &[CameraView], scene: &GaussianScene) -> CliResult<CameraView> {
    if let Some(eye) = req.eye {
        let target = req.target.map(Vec3::from).unwrap_or_else(|| scene.centroid());
        let fov = req.fov.unwrap_or(40.0);
        if !(fov > 0.0 && fov < 180.0) {
            return Err(CliError::Usage(format!("fov {fov} outside (0, 180)")));
        }
        let (w, h) = (req.width.unwrap_or(256), req.height.unwrap_or(256));
        check_size(w, h)?;
        let cam = CameraView::look_at(Vec3::from(eye), target, Vec3::new(0.0, 0.0, 1.0), fov, w, h);
        cam.validate()?;
        return Ok(cam);
    }
    let base = match req.view {
        Some(v) => cameras.get(v).cloned().ok_or_else(|| CliError::Usage(format!("view {v} out of range ({} cameras)", cameras.len())))?,
        None => cameras.first().cloned().unwrap_or_else(|| default_camera(scene, 256, 256)),
    };
    let (w, h) = (req.width.unwrap_or(base.width), req.height.unwrap_or(base.height));
    check_size(w, h)?;
    Ok(if (w, h) == (base.width, base.height) { base } else { rescale(&base, w, h) })
}

fn check_size(w: u32, h: u32) -> CliResult<()> {
    if w == 0 || h == 0 || w > 4096 || h > 4096 {
        return Err(CliError::Usage(format!("image size {w}x{h} outside 1..=4096")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    Color,
    /// Top-3 principal components of the rendered feature channel.
    Pca,
}

pub fn render_rgb(scene: &GaussianScene, cam: &CameraView, mode: RenderMode) -> CliResult<RgbImage> {
    let (w, h) = (cam.width, cam.height);
    Ok(match mode {
        RenderMode::Color => RgbImage::from_f64(w, h, &rasterize(scene, cam, &RasterConfig::color_only())?.color),
        RenderMode::Pca => {
            if scene.feature_dim == 0 {
                return Err(CliError::Usage("scene has no features to project".into()));
            }
            let t = rasterize(scene, cam, &RasterConfig::default())?;
            RgbImage::from_f64(w, h, &render_feature_pca(&t)?)
        }
    })
}

/// Per-pixel composited query probability (`sum_i w_i p_i`) and the color render.
pub fn query_heat(scene: &GaussianScene, head: &DecodeHead, vocab: &Vocab, q: &QuerySpec, cam: &CameraView) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let p = query_probabilities(scene, head, vocab, q)?;
    let values: Vec<f32> = p.iter().map(|&v| v as f32).collect();
    let t = rasterize(&scene.with_features(1, &values), cam, &RasterConfig::default())?;
    Ok((t.feature, t.color))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum HeatMode {
    /// Red tint over the color render, proportional to the probability.
    #[default]
    Overlay,
    /// Probability as gray levels (`round(255 p)` in every channel).
    Mask,
}

pub fn heat_image(heat: &[f64], color: &[f64], w: u32, h: u32, mode: HeatMode) -> RgbImage {
    let mut rgb = vec![0.0; heat.len() * 3];
    for (p, &v) in heat.iter().enumerate() {
        let v = v.clamp(0.0, 1.0);
        for c in 0..3 {
            rgb[p * 3 + c] = match mode {
                HeatMode::Mask => v,
                HeatMode::Overlay => {
                    let tint = if c == 0 { 1.0 } else { 0.0 };
                    color[p * 3 + c] * (1.0 - 0.6 * v) + tint * 0.6 * v
                }
            };
        }
    }
    RgbImage::from_f64(w, h, &rgb)
}

/// Parses `"a,b,c"` into trimmed non-empty words.
pub fn split_words(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect()
}
