use nalgebra::{DMatrix, SymmetricEigen};

use super::RenderTarget;
use crate::error::{Error, Result};

/// Minimum alpha for a pixel to count as covered.
const VALID_ALPHA: f64 = 1e-3;

/// Projects each covered pixel's feature onto the top three principal
/// components of the covered set, min-max normalized to `[0, 1]` per channel.
/// Channels without variance (and all channels for all-zero features) are 0.5;
/// uncovered pixels are black. Output is `H x W x 3`.
pub fn render_feature_pca(target: &RenderTarget) -> Result<Vec<f64>> {
    let n = target.pixel_count();
    let d = target.feature_dim;
    if n == 0 || d == 0 || !target.has_features() {
        return Err(Error::Empty("render target has no feature image".into()));
    }
    let valid: Vec<usize> = (0..n).filter(|&p| target.alpha[p] > VALID_ALPHA).collect();
    let mut out = vec![0.0; n * 3];
    if valid.is_empty() {
        return Err(Error::Empty("render target has no covered pixels".into()));
    }
    let mut mean = vec![0.0; d];
    for &p in &valid {
        for (m, v) in mean.iter_mut().zip(&target.feature[p * d..(p + 1) * d]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= valid.len() as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for &p in &valid {
        for k in 0..d {
            centered[k] = target.feature[p * d + k] - mean[k];
        }
        for a in 0..d {
            if centered[a] == 0.0 {
                continue;
            }
            for b in 0..d {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    cov /= valid.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    for ch in 0..3 {
        let has_component = ch < d && eig.eigenvalues[order[ch]] > 1e-10 * scale;
        if !has_component {
            for &p in &valid {
                out[p * 3 + ch] = 0.5;
            }
            continue;
        }
        let axis = eig.eigenvectors.column(order[ch]);
        let proj: Vec<f64> = valid
            .iter()
            .map(|&p| (0..d).map(|k| (target.feature[p * d + k] - mean[k]) * axis[k]).sum())
            .collect();
        let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (&p, v) in valid.iter().zip(&proj) {
            out[p * 3 + ch] = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::TileBins;

    fn target_from(features: Vec<f64>, w: usize, h: usize, d: usize) -> RenderTarget {
        let n = w * h;
        RenderTarget {
            width: w,
            height: h,
            feature_dim: d,
            color: vec![0.0; n * 3],
            feature: features,
            alpha: vec![1.0; n],
            transmittance: vec![0.0; n],
            n_walked: vec![0; n],
            projected: Vec::new(),
            bins: TileBins::default(),
        }
    }

    #[test]
    fn constant_features_are_mid_gray() {
        let t = target_from(vec![0.3; 4 * 2 * 5], 4, 2, 5);
        let img = render_feature_pca(&t).unwrap();
        assert!(img.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn all_zero_features_are_mid_gray() {
        let t = target_from(vec![0.0; 3 * 3 * 4], 3, 3, 4);
        assert!(render_feature_pca(&t).unwrap().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn two_clusters_give_two_flat_regions() {
        // left half e1, right half e2: rank one after centering, along e1 - e2
        let (w, h, d) = (4, 2, 3);
        let mut f = vec![0.0; w * h * d];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                f[p * d + if x < 2 { 0 } else { 1 }] = 1.0;
            }
        }
        let img = render_feature_pca(&target_from(f, w, h, d)).unwrap();
        let px = |x: usize, y: usize| [img[(y * w + x) * 3], img[(y * w + x) * 3 + 1], img[(y * w + x) * 3 + 2]];
        let left = px(0, 0);
        let right = px(3, 1);
        assert_eq!(px(1, 1), left);
        assert_eq!(px(2, 0), right);
        assert_eq!((left[0] - right[0]).abs(), 1.0);
        assert_eq!(&left[1..], &[0.5, 0.5]);
        assert_eq!(&right[1..], &[0.5, 0.5]);
    }

    #[test]
    fn empty_target_is_error() {
        let t = target_from(Vec::new(), 0, 0, 4);
        assert!(render_feature_pca(&t).is_err());
    }
}
