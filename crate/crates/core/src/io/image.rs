use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        RgbImage { width, height, data: vec![0; width as usize * height as usize * 3] }
    }

    pub fn from_f64(width: u32, height: u32, rgb: &[f64]) -> Self {
        let data = rgb.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        RgbImage { width, height, data }
    }

    /// Pixel values in `[0, 1]`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64 / 255.0).collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Format(format!("png: {e}")))?;
            w.write_image_data(&self.data).map_err(|e| Error::Format(format!("png: {e}")))?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| Error::Format(format!("png: {e}")))?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::Format("png too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(format!("png: {e}")))?;
        let (w, h) = (info.width, info.height);
        let px = w as usize * h as usize;
        let data = match info.color_type {
            png::ColorType::Rgb => buf[..px * 3].to_vec(),
            png::ColorType::Rgba => buf[..px * 4].chunks(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
            png::ColorType::Grayscale => buf[..px].iter().flat_map(|v| [*v; 3]).collect(),
            png::ColorType::GrayscaleAlpha => buf[..px * 2].chunks(2).flat_map(|c| [c[0]; 3]).collect(),
            png::ColorType::Indexed => return Err(Error::Format("unexpanded palette".into())),
        };
        Ok(RgbImage { width: w, height: h, data })
    }
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, img.encode_png()?).map_err(|e| Error::io(path, e))
}

pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    std::io::Read::read_to_end(&mut BufReader::new(f), &mut bytes).map_err(|e| Error::io(path, e))?;
    RgbImage::decode_png(&bytes)
}
