use crate::io::{FeatureMap, Mask};

/// Full-resolution reference feature map after masked average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedFeatureMap {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    /// Number of masks covering each pixel.
    pub counts: Vec<u32>,
}

impl EnhancedFeatureMap {
    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

/// Bilinear resampling with pixel-center alignment (edges clamped).
pub fn upsample_bilinear(map: &FeatureMap, height: usize, width: usize) -> Vec<f32> {
    let d = map.dim;
    let mut out = vec![0f32; height * width * d];
    if map.height == 0 || map.width == 0 {
        return out;
    }
    let sy = map.height as f64 / height as f64;
    let sx = map.width as f64 / width as f64;
    let coord = |dst: usize, s: f64, n: usize| {
        let c = ((dst as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, c - i0 as f64)
    };
    for y in 0..height {
        let (y0, y1, fy) = coord(y, sy, map.height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, sx, map.width);
            let o = &mut out[(y * width + x) * d..(y * width + x + 1) * d];
            for (wgt, yy, xx) in [
                ((1.0 - fy) * (1.0 - fx), y0, x0),
                ((1.0 - fy) * fx, y0, x1),
                (fy * (1.0 - fx), y1, x0),
                (fy * fx, y1, x1),
            ] {
                if wgt == 0.0 {
                    continue;
                }
                for (v, s) in o.iter_mut().zip(map.pixel(yy, xx)) {
                    *v += (wgt * s.to_f64()) as f32;
                }
            }
        }
    }
    out
}

/// Masked average pooling over a full-resolution map (`H x W x D`, row-major).
///
/// Each mask's pooled vector is the mean of the unit-normalized features under
/// it; a pixel covered by several masks gets the mean of their pooled vectors,
/// and uncovered pixels keep their input feature. Zero-norm input features
/// contribute nothing to the sum but still count toward the mask area. Empty
/// masks are skipped.
pub fn masked_average_pool(features: &[f32], height: usize, width: usize, dim: usize, masks: &[Mask]) -> EnhancedFeatureMap {
    let n = height * width;
    assert_eq!(features.len(), n * dim, "feature map size");
    let mut acc = vec![0f64; n * dim];
    let mut counts = vec![0u32; n];
    let mut pooled = vec![0f64; dim];
    for (k, m) in masks.iter().enumerate() {
        assert_eq!(m.bits.len(), n, "mask {k} resolution");
        let area = m.count();
        if area == 0 {
            log::warn!("mask {k} is empty; skipped");
            continue;
        }
        pooled.iter_mut().for_each(|v| *v = 0.0);
        for p in (0..n).filter(|&p| m.bits[p]) {
            let f = &features[p * dim..(p + 1) * dim];
            let norm = f.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (a, v) in pooled.iter_mut().zip(f) {
                    *a += *v as f64 / norm;
                }
            }
        }
        pooled.iter_mut().for_each(|v| *v /= area as f64);
        for p in (0..n).filter(|&p| m.bits[p]) {
            counts[p] += 1;
            for (a, v) in acc[p * dim..(p + 1) * dim].iter_mut().zip(&pooled) {
                *a += v;
            }
        }
    }
    let mut data = features.to_vec();
    for p in 0..n {
        if counts[p] > 0 {
            let c = counts[p] as f64;
            for k in 0..dim {
                data[p * dim + k] = (acc[p * dim + k] / c) as f32;
            }
        }
    }
    EnhancedFeatureMap { height, width, dim, data, counts }
}

/// Upsamples a coarse map to `height x width`, then pools it under `masks`.
pub fn enhance(map: &FeatureMap, masks: &[Mask], height: usize, width: usize) -> EnhancedFeatureMap {
    let up = upsample_bilinear(map, height, width);
    masked_average_pool(&up, height, width, map.dim, masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[bool], w: usize, h: usize) -> Mask {
        Mask { width: w, height: h, bits: bits.to_vec() }
    }

    #[test]
    fn single_pixel_mask_normalizes() {
        let f = [3.0, 4.0, 1.0, 1.0];
        let e = masked_average_pool(&f, 1, 2, 2, &[mask(&[true, false], 2, 1)]);
        assert!((e.data[0] - 0.6).abs() < 1e-6 && (e.data[1] - 0.8).abs() < 1e-6);
        assert_eq!(&e.data[2..], &[1.0, 1.0]);
    }

    #[test]
    fn bilinear_identity_and_constant() {
        let m = FeatureMap::from_f32(2, 2, 1, &[0.0, 1.0, 2.0, 3.0]);
        let up = upsample_bilinear(&m, 2, 2);
        assert_eq!(up, vec![0.0, 1.0, 2.0, 3.0]);
        let c = FeatureMap::from_f32(1, 1, 2, &[0.5, -1.0]);
        assert!(upsample_bilinear(&c, 3, 4).chunks(2).all(|p| p == [0.5, -1.0]));
        let up = upsample_bilinear(&m, 4, 4);
        // (1, 1) maps to source (0.25, 0.25)
        assert!((up[5] - (0.0 * 0.5625 + 1.0 * 0.1875 + 2.0 * 0.1875 + 3.0 * 0.0625)).abs() < 1e-6);
    }

    #[test]
    fn empty_mask_skipped() {
        let f = [1.0, 2.0];
        let e = masked_average_pool(&f, 1, 1, 2, &[mask(&[false], 1, 1)]);
        assert_eq!(e.data, vec![1.0, 2.0]);
        assert_eq!(e.counts, vec![0]);
    }
}
