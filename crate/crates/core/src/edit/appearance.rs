//! SH-only appearance optimization against an image-space loss.
//!
//! A [`LossProvider`] maps a rendered image to a scalar loss and its per-pixel
//! gradient. External providers (an image-text embedding model, typically) run
//! as subprocesses speaking a little-endian framed protocol on stdin/stdout:
//!
//! ```text
//! request  = "FSIM" | u32 view | u32 width | u32 height | f32[height*width*3] rgb
//! response = "FSLG" | f64 loss | f32[height*width*3] dL/drgb
//!          | "FSER" | u32 len | utf-8 message[len]
//! ```
//!
//! Pixels are row-major, RGB interleaved, linear and unclamped. The provider
//! process stays alive for the whole optimization and sees one request per
//! iteration; closing its stdin ends the session.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::decompose::SegmentSelection;
use crate::distill::Adam;
use crate::error::{Error, Result};
use crate::raster::{rasterize, rasterize_backward, BackwardOptions, RasterConfig};
use crate::scene::{CameraView, GaussianScene};

pub const FRAME_IMAGE: &[u8; 4] = b"FSIM";
pub const FRAME_LOSS: &[u8; 4] = b"FSLG";
const FRAME_ERROR: &[u8; 4] = b"FSER";

pub trait LossProvider {
    /// Loss and `dL/drgb` (`height x width x 3`) for the rendered `rgb` of `view`.
    fn evaluate(&mut self, view: usize, width: usize, height: usize, rgb: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppearanceConfig {
    pub iterations: usize,
    pub lr: f64,
    pub raster: RasterConfig,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        AppearanceConfig { iterations: 2500, lr: 2.5e-3, raster: RasterConfig::color_only() }
    }
}

/// Optimizes the SH coefficients of the selected Gaussians only, cycling
/// through `cams`. Every other parameter is carried over bit-for-bit. A
/// provider error aborts and leaves the input untouched.
pub fn optimize_appearance(
    scene: &GaussianScene,
    sel: &SegmentSelection,
    cams: &[CameraView],
    provider: &mut dyn LossProvider,
    cfg: &AppearanceConfig,
) -> Result<GaussianScene> {
    if let Some(&i) = sel.indices.iter().find(|&&i| i >= scene.len()) {
        return Err(Error::contract(format!("selection index {i} out of range")));
    }
    let mut out = scene.clone();
    if cfg.iterations == 0 || sel.is_empty() {
        return Ok(out);
    }
    if cams.is_empty() {
        return Err(Error::Empty("appearance optimization needs at least one camera".into()));
    }
    let stride = scene.sh_stride();
    let mut adam = Adam::new(sel.len(), stride, 1e-15);
    let mut grad = vec![0.0; sel.len() * stride];
    let rc = RasterConfig { render_features: false, ..cfg.raster.clone() };
    for it in 0..cfg.iterations {
        let v = it % cams.len();
        let cam = &cams[v];
        let target = rasterize(&out, cam, &rc)?;
        let (loss, dl) = provider.evaluate(v, target.width, target.height, &target.color)?;
        if !loss.is_finite() || dl.len() != target.color.len() {
            return Err(Error::Provider(format!("iteration {it}: loss {loss}, gradient of {} values", dl.len())));
        }
        let g = rasterize_backward(&out, cam, &target, &dl, &[], &rc, BackwardOptions::default())?;
        for (r, &i) in sel.indices.iter().enumerate() {
            grad[r * stride..(r + 1) * stride].copy_from_slice(&g.sh[i * stride..(i + 1) * stride]);
        }
        let idx = &sel.indices;
        adam.step(&grad, cfg.lr, |k, dv| {
            if dv != 0.0 {
                out.sh[idx[k / stride] * stride + k % stride] += dv as f32;
            }
        });
    }
    Ok(out)
}

/// Always returns zero loss and gradient.
pub struct ZeroProvider;

impl LossProvider for ZeroProvider {
    fn evaluate(&mut self, _view: usize, _w: usize, _h: usize, rgb: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((0.0, vec![0.0; rgb.len()]))
    }
}

/// Mean squared error to a constant color over the pixels covered by the
/// selection (alpha of the selection rendered on its own > 0.5).
pub struct TargetColorProvider {
    pub target: [f64; 3],
    pub masks: Vec<Vec<bool>>,
}

impl TargetColorProvider {
    pub fn new(scene: &GaussianScene, sel: &SegmentSelection, cams: &[CameraView], target: [f64; 3]) -> Result<Self> {
        let sub = scene.subset(&sel.indices);
        let rc = RasterConfig::color_only();
        let masks = cams
            .iter()
            .map(|c| Ok(rasterize(&sub, c, &rc)?.alpha.iter().map(|&a| a > 0.5).collect()))
            .collect::<Result<Vec<Vec<bool>>>>()?;
        Ok(TargetColorProvider { target, masks })
    }
}

impl LossProvider for TargetColorProvider {
    fn evaluate(&mut self, view: usize, w: usize, h: usize, rgb: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mask = self.masks.get(view).ok_or_else(|| Error::Provider(format!("no mask for view {view}")))?;
        if mask.len() != w * h {
            return Err(Error::Provider("mask size does not match image".into()));
        }
        let n = mask.iter().filter(|m| **m).count();
        let mut g = vec![0.0; rgb.len()];
        if n == 0 {
            return Ok((0.0, g));
        }
        let mut loss = 0.0;
        for p in (0..w * h).filter(|&p| mask[p]) {
            for c in 0..3 {
                let d = rgb[p * 3 + c] - self.target[c];
                loss += d * d;
                g[p * 3 + c] = 2.0 * d / n as f64;
            }
        }
        Ok((loss / n as f64, g))
    }
}

/// Runs an external provider process; see the module docs for the framing.
pub struct SubprocessProvider {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessProvider {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Provider(format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessProvider { child, stdin, stdout })
    }
}

impl LossProvider for SubprocessProvider {
    fn evaluate(&mut self, view: usize, w: usize, h: usize, rgb: &[f64]) -> Result<(f64, Vec<f64>)> {
        let pipe = self.stdin.as_mut().ok_or_else(|| Error::Provider("provider stdin closed".into()))?;
        write_image_frame(pipe, view, w, h, rgb).map_err(|e| Error::Provider(format!("writing request: {e}")))?;
        pipe.flush().map_err(|e| Error::Provider(format!("writing request: {e}")))?;
        read_loss_frame(&mut self.stdout, w * h * 3)
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

pub fn write_image_frame(out: &mut impl Write, view: usize, w: usize, h: usize, rgb: &[f64]) -> std::io::Result<()> {
    out.write_all(FRAME_IMAGE)?;
    for v in [view, w, h] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in rgb {
        out.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads one request; `Ok(None)` on a clean end of stream.
pub fn read_image_frame(input: &mut impl Read) -> Result<Option<(usize, usize, usize, Vec<f64>)>> {
    let mut tag = [0u8; 4];
    match input.read_exact(&mut tag) {
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        r => r.map_err(|e| Error::Provider(e.to_string()))?,
    }
    if &tag != FRAME_IMAGE {
        return Err(Error::Provider(format!("bad request tag {tag:?}")));
    }
    let mut u = [0u8; 4];
    let mut next = |input: &mut dyn Read| -> Result<usize> {
        input.read_exact(&mut u).map_err(|e| Error::Provider(e.to_string()))?;
        Ok(u32::from_le_bytes(u) as usize)
    };
    let (view, w, h) = (next(input)?, next(input)?, next(input)?);
    let n = w.checked_mul(h).and_then(|v| v.checked_mul(3)).filter(|&n| n <= 1 << 28).ok_or_else(|| Error::Provider("image too large".into()))?;
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf).map_err(|e| Error::Provider(e.to_string()))?;
    Ok(Some((view, w, h, buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())))
}

pub fn write_loss_frame(out: &mut impl Write, result: &Result<(f64, Vec<f64>)>) -> std::io::Result<()> {
    match result {
        Ok((loss, grad)) => {
            out.write_all(FRAME_LOSS)?;
            out.write_all(&loss.to_le_bytes())?;
            for v in grad {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Err(e) => {
            let msg = e.to_string();
            out.write_all(FRAME_ERROR)?;
            out.write_all(&(msg.len() as u32).to_le_bytes())?;
            out.write_all(msg.as_bytes())?;
        }
    }
    out.flush()
}

fn read_loss_frame(input: &mut impl Read, n: usize) -> Result<(f64, Vec<f64>)> {
    let io = |e: std::io::Error| Error::Provider(format!("reading response: {e}"));
    let mut tag = [0u8; 4];
    input.read_exact(&mut tag).map_err(io)?;
    if &tag == FRAME_ERROR {
        let mut len = [0u8; 4];
        input.read_exact(&mut len).map_err(io)?;
        let mut msg = vec![0u8; (u32::from_le_bytes(len) as usize).min(1 << 20)];
        input.read_exact(&mut msg).map_err(io)?;
        return Err(Error::Provider(String::from_utf8_lossy(&msg).into_owned()));
    }
    if &tag != FRAME_LOSS {
        return Err(Error::Provider(format!("bad response tag {tag:?}")));
    }
    let mut l = [0u8; 8];
    input.read_exact(&mut l).map_err(io)?;
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf).map_err(io)?;
    Ok((f64::from_le_bytes(l), buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect()))
}

/// Serves `provider` over the framed protocol until `input` ends.
pub fn serve_provider(input: &mut impl Read, output: &mut impl Write, provider: &mut dyn LossProvider) -> Result<()> {
    while let Some((view, w, h, rgb)) = read_image_frame(input)? {
        let r = provider.evaluate(view, w, h, &rgb);
        write_loss_frame(output, &r).map_err(|e| Error::Provider(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let rgb = vec![0.25, 0.5, 1.0, 0.0, -0.5, 2.0];
        let mut buf = Vec::new();
        write_image_frame(&mut buf, 3, 2, 1, &rgb).unwrap();
        let (v, w, h, back) = read_image_frame(&mut buf.as_slice()).unwrap().unwrap();
        assert_eq!((v, w, h, back), (3, 2, 1, rgb.clone()));

        let mut buf = Vec::new();
        write_loss_frame(&mut buf, &Ok((1.5, rgb.clone()))).unwrap();
        assert_eq!(read_loss_frame(&mut buf.as_slice(), 6).unwrap(), (1.5, rgb));

        let mut buf = Vec::new();
        write_loss_frame(&mut buf, &Err(Error::Provider("nope".into()))).unwrap();
        assert!(matches!(read_loss_frame(&mut buf.as_slice(), 6), Err(Error::Provider(m)) if m.contains("nope")));
    }

    #[test]
    fn serve_loop_ends_on_eof() {
        let mut req = Vec::new();
        write_image_frame(&mut req, 0, 1, 1, &[0.1, 0.2, 0.3]).unwrap();
        let mut out = Vec::new();
        serve_provider(&mut req.as_slice(), &mut out, &mut ZeroProvider).unwrap();
        assert_eq!(read_loss_frame(&mut out.as_slice(), 3).unwrap(), (0.0, vec![0.0; 3]));
    }
}
