use featsplat::decompose::SegmentSelection;
use featsplat::edit::{self, optimize_appearance, AppearanceConfig, LossProvider, TargetColorProvider, ZeroProvider};
use featsplat::raster::{rasterize, RasterConfig};
use featsplat::scene::{Gaussian, GaussianScene, Vec3};
use featsplat::synth::{two_object_dataset, SynthConfig, SynthScene};
use featsplat::{Error, Result};
use proptest::prelude::*;

fn dataset() -> SynthScene {
    two_object_dataset(&SynthConfig::default()).unwrap()
}

fn object(s: &SynthScene, k: usize) -> SegmentSelection {
    SegmentSelection::from_indices((0..s.labels.len()).filter(|&i| s.labels[i] == k).collect())
}

fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 { 1.0 } else { inter as f64 / union as f64 }
}

#[test]
fn removing_object_a_leaves_only_object_b() {
    let s = dataset();
    let out = edit::remove(&s.gt_scene, &object(&s, 0)).unwrap();
    assert_eq!(out.len(), s.gt_scene.len() - object(&s, 0).len());
    // reference: object B rendered in isolation from the untouched scene
    let b_only = s.gt_scene.subset(&object(&s, 1).indices);
    let rc = RasterConfig::color_only();
    for cam in &s.dataset.views {
        let got: Vec<bool> = rasterize(&out, cam, &rc).unwrap().alpha.iter().map(|&a| a > 0.5).collect();
        let want: Vec<bool> = rasterize(&b_only, cam, &rc).unwrap().alpha.iter().map(|&a| a > 0.5).collect();
        let v = iou(&got, &want);
        assert!(v >= 0.95, "IoU {v}");
    }
}

#[test]
fn remove_all_and_none() {
    let s = dataset();
    let n = s.gt_scene.len();
    assert!(edit::remove(&s.gt_scene, &SegmentSelection::from_indices((0..n).collect())).unwrap().is_empty());
    assert_eq!(edit::remove(&s.gt_scene, &SegmentSelection::default()).unwrap(), s.gt_scene);
}

#[test]
fn translation_matches_counter_translated_camera() {
    let s = dataset();
    let apple = s.gt_scene.subset(&object(&s, 0).indices);
    let all = SegmentSelection::from_indices((0..apple.len()).collect());
    let b = [0.25, -0.125, 0.0625];
    let moved = edit::translate(&apple, &all, b).unwrap();
    let rc = RasterConfig::color_only();
    for cam in &s.dataset.views {
        let a = rasterize(&moved, cam, &rc).unwrap();
        let c = rasterize(&apple, &cam.translated(&-Vec3::from(b)), &rc).unwrap();
        let d = a.color.iter().zip(&c.color).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-4, "max color difference {d}");
    }
}

/// Centroids on a 1/8 grid so every sum below is exact in f32.
fn dyadic_scene(n: usize, seed: u64) -> GaussianScene {
    let mut scene = GaussianScene::new(1, 4);
    let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let mut next = || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x
    };
    for _ in 0..n {
        let p = [0, 1, 2].map(|_| (next() % 64) as f32 / 8.0 - 4.0);
        let mut g = Gaussian::isotropic(p, 0.1 + (next() % 8) as f32 * 0.05, 0.7, [0.2, 0.5, 0.8], 1, 4);
        g.rotation = [0, 1, 2, 3].map(|_| (next() % 100) as f32 / 50.0 - 1.0);
        g.rotation[0] += 2.0;
        for (k, f) in g.feature.iter_mut().enumerate() {
            *f = half::f16::from_f32(k as f32 * 0.25 - 0.5);
        }
        scene.push(g).unwrap();
    }
    scene
}

fn untouched(a: &GaussianScene, b: &GaussianScene, sel: &SegmentSelection) {
    let stride = a.sh_stride();
    for i in (0..a.len()).filter(|&i| !sel.contains(i)) {
        assert_eq!(a.gaussian(i), b.gaussian(i), "non-selected Gaussian {i} changed");
        assert_eq!(a.sh[i * stride..(i + 1) * stride], b.sh[i * stride..(i + 1) * stride]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn translate_inverse_is_bit_exact(seed in 0u64..1000, mask in prop::collection::vec(any::<bool>(), 40), b in prop::array::uniform3(-32i32..32)) {
        let scene = dyadic_scene(40, seed);
        let sel = SegmentSelection::from_indices((0..40).filter(|&i| mask[i]).collect());
        let b = b.map(|v| v as f64 / 16.0);
        let there = edit::translate(&scene, &sel, b).unwrap();
        untouched(&scene, &there, &sel);
        let back = edit::translate(&there, &sel, b.map(|v| -v)).unwrap();
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn rotate_inverse_within_tolerance(seed in 0u64..1000, mask in prop::collection::vec(any::<bool>(), 40), axis in prop::array::uniform3(-1.0f64..1.0), deg in -180.0f64..180.0) {
        prop_assume!(axis.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let scene = dyadic_scene(40, seed);
        let sel = SegmentSelection::from_indices((0..40).filter(|&i| mask[i]).collect());
        let r = edit::axis_angle(axis, deg).unwrap();
        let pivot = Vec3::new(0.5, -0.25, 1.0);
        let there = edit::rotate(&scene, &sel, &r, pivot).unwrap();
        untouched(&scene, &there, &sel);
        let back = edit::rotate(&there, &sel, &r.transpose(), pivot).unwrap();
        untouched(&scene, &back, &sel);
        for &i in &sel.indices {
            let (a, b) = (scene.activate(i), back.activate(i));
            let ca = a.rotation * nalgebra::Matrix3::from_diagonal(&a.scale.component_mul(&a.scale)) * a.rotation.transpose();
            let cb = b.rotation * nalgebra::Matrix3::from_diagonal(&b.scale.component_mul(&b.scale)) * b.rotation.transpose();
            prop_assert!((ca - cb).norm() <= 1e-6, "covariance drift {}", (ca - cb).norm());
            prop_assert!((scene.position(i) - back.position(i)).norm() <= 1e-6);
            prop_assert_eq!(scene.feature_row(i), back.feature_row(i));
            prop_assert_eq!(scene.sh_row(i), back.sh_row(i));
        }
    }

    #[test]
    fn clone_then_remove_clones_is_bit_exact(seed in 0u64..1000, mask in prop::collection::vec(any::<bool>(), 40)) {
        let scene = dyadic_scene(40, seed);
        let sel = SegmentSelection::from_indices((0..40).filter(|&i| mask[i]).collect());
        let grown = edit::clone(&scene, &sel, [1.0, 0.0, -0.5]).unwrap();
        prop_assert_eq!(grown.len(), 40 + sel.len());
        for (k, &i) in sel.indices.iter().enumerate() {
            prop_assert_eq!(grown.feature_row(40 + k), scene.feature_row(i));
        }
        let clones = SegmentSelection::from_indices((40..grown.len()).collect());
        prop_assert_eq!(edit::remove(&grown, &clones).unwrap(), scene);
    }

    #[test]
    fn scale_preserves_unselected(seed in 0u64..1000, mask in prop::collection::vec(any::<bool>(), 40), s in prop::array::uniform3(0.25f64..4.0)) {
        let scene = dyadic_scene(40, seed);
        let sel = SegmentSelection::from_indices((0..40).filter(|&i| mask[i]).collect());
        let out = edit::scale(&scene, &sel, s, Vec3::zeros()).unwrap();
        untouched(&scene, &out, &sel);
        out.validate().unwrap();
    }
}

/// CIE L*a*b* (D65) of an sRGB-encoded color.
fn lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = |c: f64| if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
    let [r, g, b] = rgb.map(|v| lin(v.clamp(0.0, 1.0)));
    let x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    let y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    let f = |t: f64| if t > (6.0f64 / 29.0).powi(3) { t.cbrt() } else { t / (3.0 * (6.0f64 / 29.0).powi(2)) + 4.0 / 29.0 };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn delta_e(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (la, lb) = (lab(a), lab(b));
    (0..3).map(|k| (la[k] - lb[k]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn red_target_recolors_selection_only() {
    let s = dataset();
    let sel = object(&s, 1);
    let cams = &s.dataset.views;
    let mut provider = TargetColorProvider::new(&s.gt_scene, &sel, cams, [1.0, 0.0, 0.0]).unwrap();
    let out = optimize_appearance(&s.gt_scene, &sel, cams, &mut provider, &AppearanceConfig::default()).unwrap();

    let stride = s.gt_scene.sh_stride();
    for i in 0..out.len() {
        let mut a = out.gaussian(i);
        let b = s.gt_scene.gaussian(i);
        if sel.contains(i) {
            a.sh = b.sh.clone();
        }
        assert_eq!(a, b, "only SH of selected Gaussians may change");
        if !sel.contains(i) {
            assert_eq!(out.sh[i * stride..(i + 1) * stride], s.gt_scene.sh[i * stride..(i + 1) * stride]);
        }
    }

    let rc = RasterConfig::color_only();
    let sub = s.gt_scene.subset(&sel.indices);
    let (mut sum, mut count) = ([0.0; 3], 0usize);
    for (v, cam) in cams.iter().enumerate() {
        let before = rasterize(&s.gt_scene, cam, &rc).unwrap();
        let after = rasterize(&out, cam, &rc).unwrap();
        let footprint = rasterize(&sub, cam, &rc).unwrap();
        for p in 0..before.alpha.len() {
            if footprint.alpha[p] == 0.0 {
                for k in 0..3 {
                    assert_eq!(before.color[p * 3 + k].to_bits(), after.color[p * 3 + k].to_bits(), "view {v} pixel {p}");
                }
            }
            if provider.masks[v][p] {
                for k in 0..3 {
                    sum[k] += after.color[p * 3 + k];
                }
                count += 1;
            }
        }
    }
    let mean = sum.map(|c| c / count as f64);
    let de = delta_e(mean, [1.0, 0.0, 0.0]);
    assert!(de < 10.0, "mean {mean:?}, delta E {de}");
}

#[test]
fn zero_provider_and_zero_iterations_are_identity() {
    let s = dataset();
    let sel = object(&s, 0);
    let cams = &s.dataset.views[..2];
    let cfg = AppearanceConfig { iterations: 20, ..AppearanceConfig::default() };
    assert_eq!(optimize_appearance(&s.gt_scene, &sel, cams, &mut ZeroProvider, &cfg).unwrap(), s.gt_scene);
    let mut red = TargetColorProvider::new(&s.gt_scene, &sel, cams, [1.0, 0.0, 0.0]).unwrap();
    let none = AppearanceConfig { iterations: 0, ..AppearanceConfig::default() };
    assert_eq!(optimize_appearance(&s.gt_scene, &sel, cams, &mut red, &none).unwrap(), s.gt_scene);
}

struct FailsAt(usize);

impl LossProvider for FailsAt {
    fn evaluate(&mut self, _view: usize, _w: usize, _h: usize, rgb: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.0 == 0 {
            return Err(Error::Provider("encoder crashed".into()));
        }
        self.0 -= 1;
        Ok((1.0, vec![0.1; rgb.len()]))
    }
}

#[test]
fn provider_failure_aborts() {
    let s = dataset();
    let sel = object(&s, 0);
    let cfg = AppearanceConfig { iterations: 10, ..AppearanceConfig::default() };
    let err = optimize_appearance(&s.gt_scene, &sel, &s.dataset.views, &mut FailsAt(3), &cfg).unwrap_err();
    assert!(matches!(err, Error::Provider(_)));
}
