//! Browser demo over the synthetic two-object scene: orbit rendering, text
//! query heatmaps with a threshold, and remove / move / recolor edits of the
//! queried object. Images are returned as RGBA bytes for `ImageData`.

use featsplat::decompose::{query_probabilities, segment, QuerySpec, SegmentSelection};
use featsplat::distill::DecodeHead;
use featsplat::edit::{optimize_appearance, remove, translate, AppearanceConfig, TargetColorProvider};
use featsplat::io::Vocab;
use featsplat::raster::{rasterize, RasterConfig};
use featsplat::scene::Vec3;
use featsplat::synth::{oracle_features, two_object_dataset, SynthConfig, NEGATIVES};
use featsplat::{CameraView, GaussianScene};
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn err(e: featsplat::Error) -> String {
    format!("{}: {e}", e.code())
}

#[wasm_bindgen]
pub struct Demo {
    original: GaussianScene,
    scene: GaussianScene,
    head: DecodeHead,
    vocab: Vocab,
    cams: Vec<CameraView>,
    size: u32,
}

#[wasm_bindgen]
impl Demo {
    /// Builds the scene; `size` is the side of rendered images in pixels.
    #[wasm_bindgen(constructor)]
    pub fn new(size: u32) -> Res<Demo> {
        if !(8..=512).contains(&size) {
            return Err(format!("size {size} outside 8..=512"));
        }
        let cfg = SynthConfig { views: 4, width: 48, height: 48, coarse: 12, gaussians_per_object: 200, ..Default::default() };
        let syn = two_object_dataset(&cfg).map_err(err)?;
        let (scene, head) = oracle_features(&syn).map_err(err)?;
        Ok(Demo { original: scene.clone(), scene, head, vocab: syn.dataset.vocab, cams: syn.dataset.views, size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn gaussians(&self) -> usize {
        self.scene.len()
    }

    /// Object words in the vocabulary (the generic negatives are left out).
    pub fn words(&self) -> Vec<String> {
        self.vocab.entries.keys().filter(|w| !NEGATIVES.contains(&w.as_str())).cloned().collect()
    }

    fn camera(&self, azimuth_deg: f64, elevation_deg: f64) -> CameraView {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.clamp(-85.0, 85.0).to_radians());
        let r = 2.4;
        let eye = Vec3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin());
        CameraView::look_at(eye, Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 40.0, self.size, self.size)
    }

    fn query(&self, word: &str, tau: f64) -> Res<QuerySpec> {
        let q = QuerySpec { tau, ..QuerySpec::new(word) };
        q.validate().map_err(err)?;
        Ok(q)
    }

    fn selection(&self, word: &str, tau: f64) -> Res<SegmentSelection> {
        segment(&self.scene, &self.head, &self.vocab, &self.query(word, tau)?).map_err(err)
    }

    /// Color render from an orbit camera, RGBA.
    pub fn render(&self, azimuth_deg: f64, elevation_deg: f64) -> Res<Vec<u8>> {
        let t = rasterize(&self.scene, &self.camera(azimuth_deg, elevation_deg), &RasterConfig::color_only()).map_err(err)?;
        Ok(rgba(&t.color, |_| None))
    }

    /// Render with pixels whose composited query probability exceeds `tau`
    /// tinted red.
    pub fn heatmap(&self, word: &str, tau: f64, azimuth_deg: f64, elevation_deg: f64) -> Res<Vec<u8>> {
        let p = query_probabilities(&self.scene, &self.head, &self.vocab, &self.query(word, tau)?).map_err(err)?;
        let values: Vec<f32> = p.iter().map(|&v| v as f32).collect();
        let t = rasterize(&self.scene.with_features(1, &values), &self.camera(azimuth_deg, elevation_deg), &RasterConfig::default()).map_err(err)?;
        Ok(rgba(&t.color, |px| {
            let h = t.feature[px];
            (h > tau).then_some(h)
        }))
    }

    /// Number of Gaussians the query selects at threshold `tau`.
    pub fn count(&self, word: &str, tau: f64) -> Res<usize> {
        Ok(self.selection(word, tau)?.len())
    }

    /// Deletes the queried object; returns the number of Gaussians removed.
    pub fn remove(&mut self, word: &str, tau: f64) -> Res<usize> {
        let sel = self.selection(word, tau)?;
        self.scene = remove(&self.scene, &sel).map_err(err)?;
        Ok(sel.len())
    }

    /// Moves the queried object by `(dx, dy, dz)`.
    pub fn translate(&mut self, word: &str, tau: f64, dx: f64, dy: f64, dz: f64) -> Res<usize> {
        let sel = self.selection(word, tau)?;
        self.scene = translate(&self.scene, &sel, [dx, dy, dz]).map_err(err)?;
        Ok(sel.len())
    }

    /// Optimizes the queried object's color toward `(r, g, b)` in `[0, 1]`.
    pub fn recolor(&mut self, word: &str, tau: f64, r: f64, g: f64, b: f64, iterations: usize) -> Res<usize> {
        let sel = self.selection(word, tau)?;
        let mut provider = TargetColorProvider::new(&self.scene, &sel, &self.cams, [r, g, b]).map_err(err)?;
        let cfg = AppearanceConfig { iterations, lr: 2e-2, raster: RasterConfig::color_only() };
        self.scene = optimize_appearance(&self.scene, &sel, &self.cams, &mut provider, &cfg).map_err(err)?;
        Ok(sel.len())
    }

    pub fn reset(&mut self) {
        self.scene = self.original.clone();
    }
}

/// `H x W x 3` linear color to RGBA bytes, blending red by `tint(pixel)`.
fn rgba(color: &[f64], tint: impl Fn(usize) -> Option<f64>) -> Vec<u8> {
    let n = color.len() / 3;
    let mut out = Vec::with_capacity(n * 4);
    for px in 0..n {
        let t = tint(px).map_or(0.0, |h| 0.6 * h.clamp(0.0, 1.0));
        for c in 0..3 {
            let red = if c == 0 { 1.0 } else { 0.0 };
            let v = color[px * 3 + c] * (1.0 - t) + red * t;
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.push(255);
    }
    out
}
