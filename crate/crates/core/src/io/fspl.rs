//! `FSPL` scene files.
//!
//! Little-endian. Header:
//!
//! ```text
//! magic "FSPL" | version u32 | count u64 | sh_degree u32 | feature_dim u32
//! | feature_kind u32 (0 = f16, 1 = f32) | scene_scale f32 | units_len u32 | units utf-8
//! ```
//!
//! followed, when count > 0, by chunks `tag [4]u8 | byte_len u64 | payload`:
//! `POSN`, `LSCL`, `ROTQ`, `OPAC`, `SHCF`, `FEAT`, in that order. Every chunk
//! stores its attribute component-major: all Gaussians' component 0, then
//! component 1, and so on.

use std::io::{Read, Write};
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::scene::{sh_coeff_count, FeatureStorage, GaussianScene, SceneMeta};

pub const FSPL_MAGIC: &[u8; 4] = b"FSPL";
pub const FSPL_VERSION: u32 = 1;
/// Header size for an empty `units` string.
pub const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 4 + 4 + 4;

const MAX_UNITS_LEN: u32 = 1 << 16;

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_scene(scene, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_scene(&mut bytes.as_slice())
}

fn chunk<W: Write>(w: &mut W, tag: &[u8; 4], payload: &[u8]) -> std::io::Result<()> {
    w.write_all(tag)?;
    w.write_all(&(payload.len() as u64).to_le_bytes())?;
    w.write_all(payload)
}

fn columns_f32<const K: usize>(rows: &[[f32; K]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(rows.len() * K * 4);
    for k in 0..K {
        for r in rows {
            out.extend_from_slice(&r[k].to_le_bytes());
        }
    }
    out
}

pub fn write_scene<W: Write>(scene: &GaussianScene, w: &mut W) -> std::io::Result<()> {
    let n = scene.len();
    let stride = scene.sh_stride();
    let d = scene.feature_dim;
    w.write_all(FSPL_MAGIC)?;
    w.write_all(&FSPL_VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&scene.sh_degree.to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(if scene.features.is_half() { 0u32 } else { 1u32 }).to_le_bytes())?;
    w.write_all(&scene.meta.scene_scale.to_le_bytes())?;
    w.write_all(&(scene.meta.units.len() as u32).to_le_bytes())?;
    w.write_all(scene.meta.units.as_bytes())?;
    if n == 0 {
        return Ok(());
    }
    chunk(w, b"POSN", &columns_f32(&scene.positions))?;
    chunk(w, b"LSCL", &columns_f32(&scene.log_scales))?;
    chunk(w, b"ROTQ", &columns_f32(&scene.rotations))?;
    let opac: Vec<u8> = scene.opacity_logits.iter().flat_map(|v| v.to_le_bytes()).collect();
    chunk(w, b"OPAC", &opac)?;
    let mut sh = Vec::with_capacity(n * stride * 4);
    for k in 0..stride {
        for i in 0..n {
            sh.extend_from_slice(&scene.sh[i * stride + k].to_le_bytes());
        }
    }
    chunk(w, b"SHCF", &sh)?;
    let mut feat = Vec::new();
    match &scene.features {
        FeatureStorage::Half(v) => {
            for k in 0..d {
                for i in 0..n {
                    feat.extend_from_slice(&v[i * d + k].to_bits().to_le_bytes());
                }
            }
        }
        FeatureStorage::Full(v) => {
            for k in 0..d {
                for i in 0..n {
                    feat.extend_from_slice(&v[i * d + k].to_le_bytes());
                }
            }
        }
    }
    chunk(w, b"FEAT", &feat)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format(format!("truncated file while reading {what}")));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn chunk(&mut self, tag: &[u8; 4], expected: usize) -> Result<&'a [u8]> {
        let got = self.take(4, "chunk tag")?;
        if got != tag {
            return Err(Error::Format(format!(
                "expected chunk {:?}, found {:?}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(got)
            )));
        }
        let len = self.u64("chunk length")?;
        if len != expected as u64 {
            return Err(Error::Format(format!(
                "chunk {} has {len} bytes, expected {expected}",
                String::from_utf8_lossy(tag)
            )));
        }
        self.take(expected, "chunk payload")
    }
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes(b[i * 4..i * 4 + 4].try_into().unwrap())
}

fn rows_f32<const K: usize>(b: &[u8], n: usize) -> Vec<[f32; K]> {
    (0..n).map(|i| std::array::from_fn(|k| f32_at(b, k * n + i))).collect()
}

/// Parses a scene and validates it (non-finite parameters are a validation error).
pub fn read_scene<R: Read>(r: &mut R) -> Result<GaussianScene> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let mut c = Cursor { buf: &bytes };
    let magic = c.take(4, "magic")?;
    if magic != FSPL_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = c.u32("version")?;
    if version != FSPL_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = c.u64("count")? as usize;
    let sh_degree = c.u32("sh degree")?;
    if sh_degree > 3 {
        return Err(Error::Format(format!("sh degree {sh_degree} > 3")));
    }
    let d = c.u32("feature dim")? as usize;
    let kind = c.u32("feature kind")?;
    if kind > 1 {
        return Err(Error::Format(format!("unknown feature kind {kind}")));
    }
    let scene_scale = f32::from_le_bytes(c.take(4, "scene scale")?.try_into().unwrap());
    let ulen = c.u32("units length")?;
    if ulen > MAX_UNITS_LEN {
        return Err(Error::Format("units string too long".into()));
    }
    let units = String::from_utf8(c.take(ulen as usize, "units")?.to_vec())
        .map_err(|_| Error::Format("units not utf-8".into()))?;

    let mut scene = GaussianScene::new(sh_degree, d);
    scene.meta = SceneMeta { scene_scale, units };
    if kind == 1 {
        scene.features = FeatureStorage::Full(Vec::new());
    }
    if n > 0 {
        // reject absurd counts before allocating
        let stride = sh_coeff_count(sh_degree) * 3;
        let per = 4 * (3 + 3 + 4 + 1 + stride) + d * if kind == 0 { 2 } else { 4 };
        if n.checked_mul(per).is_none_or(|t| t > c.buf.len()) {
            return Err(Error::Format(format!("count {n} exceeds file size")));
        }
        scene.positions = rows_f32::<3>(c.chunk(b"POSN", n * 12)?, n);
        scene.log_scales = rows_f32::<3>(c.chunk(b"LSCL", n * 12)?, n);
        scene.rotations = rows_f32::<4>(c.chunk(b"ROTQ", n * 16)?, n);
        let op = c.chunk(b"OPAC", n * 4)?;
        scene.opacity_logits = (0..n).map(|i| f32_at(op, i)).collect();
        let sh = c.chunk(b"SHCF", n * stride * 4)?;
        scene.sh = vec![0.0; n * stride];
        for k in 0..stride {
            for i in 0..n {
                scene.sh[i * stride + k] = f32_at(sh, k * n + i);
            }
        }
        if kind == 0 {
            let f = c.chunk(b"FEAT", n * d * 2)?;
            let mut v = vec![f16::ZERO; n * d];
            for k in 0..d {
                for i in 0..n {
                    let j = (k * n + i) * 2;
                    v[i * d + k] = f16::from_bits(u16::from_le_bytes([f[j], f[j + 1]]));
                }
            }
            scene.features = FeatureStorage::Half(v);
        } else {
            let f = c.chunk(b"FEAT", n * d * 4)?;
            let mut v = vec![0f32; n * d];
            for k in 0..d {
                for i in 0..n {
                    v[i * d + k] = f32_at(f, k * n + i);
                }
            }
            scene.features = FeatureStorage::Full(v);
        }
    }
    if !c.buf.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", c.buf.len())));
    }
    scene.validate()?;
    Ok(scene)
}
