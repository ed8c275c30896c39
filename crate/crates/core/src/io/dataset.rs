//! Dataset directories:
//!
//! ```text
//! cameras.json      array of camera views
//! rgb/NNN.png       8-bit RGB per view
//! clip/NNN.bin      u32 H | u32 W | u32 D | H*W*D f16, little-endian, row-major
//! dino/NNN.bin      same layout
//! masks/NNN.rle     u32 H | u32 W | u32 count, then per mask: u32 n_runs | n_runs x u32
//! vocab.json        {"word": [floats], ...}
//! ```
//!
//! Mask runs alternate starting with a run of zeros (which may be empty) and
//! must sum to `H * W`.

use std::collections::BTreeMap;
use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};

use super::image::{read_png, write_png, RgbImage};
use crate::error::{Error, Result};
use crate::scene::CameraView;

/// A coarse `H x W x D` feature map in half precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f16>,
}

impl FeatureMap {
    pub fn from_f32(height: usize, width: usize, dim: usize, values: &[f32]) -> Self {
        assert_eq!(values.len(), height * width * dim);
        FeatureMap { height, width, dim, data: values.iter().map(|v| f16::from_f32(*v)).collect() }
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f16] {
        let s = (y * self.width + x) * self.dim;
        &self.data[s..s + self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 2);
        for v in [self.height, self.width, self.dim] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 12 {
            return Err(Error::Format("feature map header truncated".into()));
        }
        let u = |i: usize| u32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (height, width, dim) = (u(0), u(1), u(2));
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Error::Format("feature map size overflow".into()))?;
        if b.len() != 12 + n * 2 {
            return Err(Error::Format(format!("feature map {height}x{width}x{dim} has {} payload bytes", b.len() - 12)));
        }
        let data = b[12..].chunks_exact(2).map(|c| f16::from_bits(u16::from_le_bytes([c[0], c[1]]))).collect();
        Ok(FeatureMap { height, width, dim, data })
    }
}

/// Binary mask at image resolution, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

pub fn encode_rle(mask: &Mask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut cur = false;
    let mut len = 0u32;
    for &b in &mask.bits {
        if b != cur {
            runs.push(len);
            cur = b;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[u32], width: usize, height: usize) -> Result<Mask> {
    let total: u64 = runs.iter().map(|r| *r as u64).sum();
    if total != (width * height) as u64 {
        return Err(Error::Format(format!("mask runs sum to {total}, expected {}", width * height)));
    }
    let mut bits = Vec::with_capacity(width * height);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(Mask { width, height, bits })
}

fn masks_to_bytes(masks: &[Mask], width: usize, height: usize) -> Vec<u8> {
    let mut words = vec![height as u32, width as u32, masks.len() as u32];
    for m in masks {
        let runs = encode_rle(m);
        words.push(runs.len() as u32);
        words.extend(runs);
    }
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

fn masks_from_bytes(b: &[u8]) -> Result<(usize, usize, Vec<Mask>)> {
    if b.len() % 4 != 0 || b.len() < 12 {
        return Err(Error::Format("mask file is not a whole number of u32 words".into()));
    }
    let words: Vec<u32> = b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let (h, w, count) = (words[0] as usize, words[1] as usize, words[2] as usize);
    let mut pos = 3;
    let mut masks = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let n = *words.get(pos).ok_or_else(|| Error::Format("mask file truncated".into()))? as usize;
        pos += 1;
        let runs = words.get(pos..pos + n).ok_or_else(|| Error::Format("mask file truncated".into()))?;
        masks.push(decode_rle(runs, w, h)?);
        pos += n;
    }
    if pos != words.len() {
        return Err(Error::Format("trailing data in mask file".into()));
    }
    Ok((h, w, masks))
}

/// Text embedding table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocab {
    pub entries: BTreeMap<String, Vec<f32>>,
}

impl Vocab {
    pub fn get(&self, word: &str) -> Result<&[f32]> {
        self.entries.get(word).map(|v| v.as_slice()).ok_or_else(|| Error::UnknownVocabulary(word.to_string()))
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.values().next().map(|v| v.len())
    }

    pub fn insert(&mut self, word: impl Into<String>, v: Vec<f32>) {
        self.entries.insert(word.into(), v);
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        for (k, v) in &self.entries {
            if Some(v.len()) != dim {
                return Err(Error::Format(format!("vocab entry {k:?} has dimension {}", v.len())));
            }
            let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= 1e-3) {
                return Err(Error::Format(format!("vocab entry {k:?} has norm {n}, expected unit")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub views: Vec<CameraView>,
    pub images: Vec<RgbImage>,
    pub clip: Vec<FeatureMap>,
    pub dino: Vec<FeatureMap>,
    pub masks: Vec<Vec<Mask>>,
    pub vocab: Vocab,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn clip_dim(&self) -> usize {
        self.clip.first().map_or(0, |m| m.dim)
    }

    pub fn dino_dim(&self) -> usize {
        self.dino.first().map_or(0, |m| m.dim)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.views.len();
        if [self.images.len(), self.clip.len(), self.dino.len(), self.masks.len()].iter().any(|l| *l != n) {
            return Err(Error::Format("per-view arrays differ in length".into()));
        }
        let bad = |view: usize, message: String| Error::DatasetView { view, message };
        for v in 0..n {
            let cam = &self.views[v];
            cam.validate().map_err(|e| bad(v, e.to_string()))?;
            let img = &self.images[v];
            if (img.width, img.height) != (cam.width, cam.height) {
                return Err(bad(v, format!("image {}x{} vs camera {}x{}", img.width, img.height, cam.width, cam.height)));
            }
            for (k, m) in self.masks[v].iter().enumerate() {
                if (m.width, m.height) != (img.width as usize, img.height as usize) {
                    return Err(bad(v, format!("mask {k} is {}x{}, image is {}x{}", m.width, m.height, img.width, img.height)));
                }
            }
            if self.clip[v].dim != self.clip_dim() || self.dino[v].dim != self.dino_dim() {
                return Err(bad(v, "feature dimension differs from view 0".into()));
            }
            if self.clip[v].data.iter().chain(&self.dino[v].data).any(|x| !x.is_finite()) {
                return Err(bad(v, "non-finite reference feature".into()));
            }
        }
        self.vocab.validate()?;
        if let Some(d) = self.vocab.dim() {
            if n > 0 && d != self.clip_dim() {
                return Err(Error::Format(format!("vocab dimension {d} != clip dimension {}", self.clip_dim())));
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, b: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    std::fs::write(path, b).map_err(|e| Error::io(path, e))
}

fn view_file(dir: &Path, sub: &str, v: usize, ext: &str) -> std::path::PathBuf {
    dir.join(sub).join(format!("{v:03}.{ext}"))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<FeatureDataset> {
    let dir = dir.as_ref();
    let views: Vec<CameraView> = serde_json::from_slice(&read(&dir.join("cameras.json"))?)?;
    let vocab: Vocab = serde_json::from_slice(&read(&dir.join("vocab.json"))?)?;
    let mut ds = FeatureDataset { views, images: vec![], clip: vec![], dino: vec![], masks: vec![], vocab };
    let wrap = |v: usize| move |e: Error| Error::DatasetView { view: v, message: e.to_string() };
    for v in 0..ds.views.len() {
        ds.images.push(read_png(view_file(dir, "rgb", v, "png")).map_err(wrap(v))?);
        ds.clip.push(FeatureMap::from_bytes(&read(&view_file(dir, "clip", v, "bin"))?).map_err(wrap(v))?);
        ds.dino.push(FeatureMap::from_bytes(&read(&view_file(dir, "dino", v, "bin"))?).map_err(wrap(v))?);
        let (h, w, masks) = masks_from_bytes(&read(&view_file(dir, "masks", v, "rle"))?).map_err(wrap(v))?;
        let img = &ds.images[v];
        if (w, h) != (img.width as usize, img.height as usize) {
            return Err(Error::DatasetView {
                view: v,
                message: format!("mask size {w}x{h} does not match image {}x{}", img.width, img.height),
            });
        }
        ds.masks.push(masks);
    }
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &FeatureDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write(&dir.join("cameras.json"), &serde_json::to_vec_pretty(&ds.views)?)?;
    write(&dir.join("vocab.json"), &serde_json::to_vec(&ds.vocab)?)?;
    for v in 0..ds.views.len() {
        let img = &ds.images[v];
        let rgb = dir.join("rgb");
        std::fs::create_dir_all(&rgb).map_err(|e| Error::io(&rgb, e))?;
        write_png(img, view_file(dir, "rgb", v, "png"))?;
        write(&view_file(dir, "clip", v, "bin"), &ds.clip[v].to_bytes())?;
        write(&view_file(dir, "dino", v, "bin"), &ds.dino[v].to_bytes())?;
        write(
            &view_file(dir, "masks", v, "rle"),
            &masks_to_bytes(&ds.masks[v], img.width as usize, img.height as usize),
        )?;
    }
    Ok(())
}
