//! Editing primitives over a selection.
//!
//! Every primitive returns a new scene and leaves non-selected Gaussians
//! bit-identical. Rotation and scaling take an explicit pivot; the selection
//! centroid is the usual choice (see [`selection_centroid`]).

mod appearance;
mod script;

pub use appearance::{
    optimize_appearance, read_image_frame, serve_provider, write_image_frame, write_loss_frame, AppearanceConfig, LossProvider,
    SubprocessProvider, TargetColorProvider, ZeroProvider, FRAME_IMAGE, FRAME_LOSS,
};
pub use script::{apply_script, EditOp, EditScript, Selector};

use nalgebra::SymmetricEigen;

use crate::decompose::SegmentSelection;
use crate::error::{Error, Result};
use crate::scene::{mat_to_quat, normalize_quat, quat_mul, GaussianScene, Mat3, Vec3};

fn check_selection(scene: &GaussianScene, sel: &SegmentSelection) -> Result<()> {
    if let Some(&i) = sel.indices.iter().find(|&&i| i >= scene.len()) {
        return Err(Error::contract(format!("selection index {i} out of range for {} Gaussians", scene.len())));
    }
    if sel.indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("selection indices must be strictly ascending"));
    }
    Ok(())
}

/// Mean centroid of the selected Gaussians (origin for an empty selection).
pub fn selection_centroid(scene: &GaussianScene, sel: &SegmentSelection) -> Vec3 {
    if sel.is_empty() {
        return Vec3::zeros();
    }
    sel.indices.iter().map(|&i| scene.position(i)).sum::<Vec3>() / sel.len() as f64
}

pub fn remove(scene: &GaussianScene, sel: &SegmentSelection) -> Result<GaussianScene> {
    check_selection(scene, sel)?;
    let mut keep = vec![true; scene.len()];
    for &i in &sel.indices {
        keep[i] = false;
    }
    Ok(scene.retain_mask(&keep))
}

/// Shifts selected centroids by `b`; shape, color and features are untouched.
///
/// The shift is applied in single precision, so `translate(-b)` undoes
/// `translate(b)` bit-exactly whenever the sums are representable (e.g.
/// dyadic offsets on a dyadic grid); otherwise up to one rounding per axis.
pub fn translate(scene: &GaussianScene, sel: &SegmentSelection, b: [f64; 3]) -> Result<GaussianScene> {
    check_selection(scene, sel)?;
    let mut out = scene.clone();
    let bf = b.map(|v| v as f32);
    for &i in &sel.indices {
        for k in 0..3 {
            out.positions[i][k] += bf[k];
        }
    }
    Ok(out)
}

fn check_rotation(r: &Mat3) -> Result<()> {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    if !(err <= 1e-6) {
        return Err(Error::contract(format!("rotation is not orthonormal (|RᵀR - I| = {err:.3e})")));
    }
    if r.determinant() < 0.0 {
        return Err(Error::contract("rotation has determinant -1 (reflection)"));
    }
    Ok(())
}

/// Rotates selected Gaussians by `r1` about `pivot`. Orientation quaternions
/// are left-composed, `q := quat(r1) q`, so the activated covariance becomes
/// `r1 R S Sᵀ Rᵀ r1ᵀ`.
pub fn rotate(scene: &GaussianScene, sel: &SegmentSelection, r1: &Mat3, pivot: Vec3) -> Result<GaussianScene> {
    check_selection(scene, sel)?;
    check_rotation(r1)?;
    let q1 = mat_to_quat(r1);
    let mut out = scene.clone();
    for &i in &sel.indices {
        let x = r1 * (scene.position(i) - pivot) + pivot;
        out.positions[i] = [x.x as f32, x.y as f32, x.z as f32];
        let q = normalize_quat(scene.rotations[i].map(|v| v as f64));
        out.rotations[i] = normalize_quat(quat_mul(q1, q)).map(|v| v as f32);
    }
    Ok(out)
}

/// Scales the selection about `pivot`. Isotropic factors add `ln s` to the
/// log-scales and keep orientations; anisotropic factors act along the
/// principal axes of the selected centroids, `A = E diag(s) Eᵀ`, and each
/// covariance becomes `A Σ Aᵀ`, re-factored into rotation and scales.
pub fn scale(scene: &GaussianScene, sel: &SegmentSelection, s: [f64; 3], pivot: Vec3) -> Result<GaussianScene> {
    check_selection(scene, sel)?;
    if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::contract(format!("scale factors must be positive, got {s:?}")));
    }
    let mut out = scene.clone();
    if s[0] == s[1] && s[1] == s[2] {
        let (f, ls) = (s[0], s[0].ln());
        for &i in &sel.indices {
            let x = (scene.position(i) - pivot) * f + pivot;
            out.positions[i] = [x.x as f32, x.y as f32, x.z as f32];
            for k in 0..3 {
                out.log_scales[i][k] = (scene.log_scales[i][k] as f64 + ls) as f32;
            }
        }
        return Ok(out);
    }
    let a = principal_frame(scene, sel) * Mat3::from_diagonal(&Vec3::from(s)) * principal_frame(scene, sel).transpose();
    for &i in &sel.indices {
        let x = a * (scene.position(i) - pivot) + pivot;
        out.positions[i] = [x.x as f32, x.y as f32, x.z as f32];
        let cov = a * scene.activate(i).covariance * a.transpose();
        let (q, ls) = factor_covariance(&cov);
        out.rotations[i] = q.map(|v| v as f32);
        out.log_scales[i] = ls.map(|v| v as f32);
    }
    Ok(out)
}

/// Eigenvectors (columns, right-handed) of the selected centroids' covariance.
fn principal_frame(scene: &GaussianScene, sel: &SegmentSelection) -> Mat3 {
    let c = selection_centroid(scene, sel);
    let mut cov = Mat3::zeros();
    for &i in &sel.indices {
        let d = scene.position(i) - c;
        cov += d * d.transpose();
    }
    if sel.len() < 3 || cov.abs().max() == 0.0 {
        return Mat3::identity();
    }
    let eig = SymmetricEigen::new(cov);
    let mut e = eig.eigenvectors;
    if e.determinant() < 0.0 {
        e.set_column(2, &(-e.column(2)));
    }
    e
}

/// Splits an SPD covariance into a unit quaternion and log-scales.
fn factor_covariance(cov: &Mat3) -> ([f64; 4], [f64; 3]) {
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let mut r = eig.eigenvectors;
    if r.determinant() < 0.0 {
        r.set_column(2, &(-r.column(2)));
    }
    let ls = [0, 1, 2].map(|k| 0.5 * eig.eigenvalues[k].max(1e-300).ln());
    (mat_to_quat(&r), ls)
}

/// Appends deep copies of the selected Gaussians shifted by `offset`.
pub fn clone(scene: &GaussianScene, sel: &SegmentSelection, offset: [f64; 3]) -> Result<GaussianScene> {
    check_selection(scene, sel)?;
    let mut out = scene.clone();
    let of = offset.map(|v| v as f32);
    for &i in &sel.indices {
        out.append_from(scene, i);
        let j = out.len() - 1;
        for k in 0..3 {
            out.positions[j][k] += of[k];
        }
    }
    Ok(out)
}

/// Rotation matrix for `angle_deg` about `axis` (right-hand rule).
pub fn axis_angle(axis: [f64; 3], angle_deg: f64) -> Result<Mat3> {
    let a = Vec3::from(axis);
    if !(a.norm() > 0.0) {
        return Err(Error::contract("rotation axis must be non-zero"));
    }
    let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(a), angle_deg.to_radians());
    Ok(*r.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;

    fn scene() -> GaussianScene {
        let mut s = GaussianScene::new(0, 2);
        for i in 0..4 {
            let mut g = Gaussian::isotropic([i as f32, 0.0, 0.0], 0.1, 0.5, [0.5; 3], 0, 2);
            g.log_scale = [4f32.sqrt().ln(), 0.0, 0.0];
            s.push(g).unwrap();
        }
        s
    }

    #[test]
    fn translate_moves_selected_only() {
        let s = scene();
        let t = translate(&s, &SegmentSelection::from_indices(vec![1]), [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(t.positions[1], [2.0, 0.0, 0.0]);
        assert_eq!(t.positions[0], s.positions[0]);
        assert_eq!(t.log_scales, s.log_scales);
    }

    #[test]
    fn quarter_turn_swaps_covariance_axes() {
        let s = scene();
        let r = axis_angle([0.0, 0.0, 1.0], 90.0).unwrap();
        let t = rotate(&s, &SegmentSelection::from_indices(vec![1]), &r, Vec3::zeros()).unwrap();
        let p = t.position(1);
        assert!((p - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-6);
        let c = t.activate(1).covariance;
        assert!((c - Mat3::from_diagonal(&Vec3::new(1.0, 4.0, 1.0))).abs().max() < 1e-5, "{c}");
    }

    #[test]
    fn reflection_is_rejected() {
        let m = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(rotate(&scene(), &SegmentSelection::from_indices(vec![0]), &m, Vec3::zeros()), Err(Error::Contract(_))));
        let skew = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(rotate(&scene(), &SegmentSelection::from_indices(vec![0]), &skew, Vec3::zeros()).is_err());
    }

    #[test]
    fn isotropic_scale_about_origin() {
        let s = scene();
        let t = scale(&s, &SegmentSelection::from_indices(vec![1]), [2.0; 3], Vec3::zeros()).unwrap();
        assert_eq!(t.positions[1], [2.0, 0.0, 0.0]);
        let ratio = t.activate(1).covariance.component_div(&s.activate(1).covariance.map(|v| if v == 0.0 { 1.0 } else { v }));
        assert!((ratio[(0, 0)] - 4.0).abs() < 1e-5 && (ratio[(2, 2)] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn anisotropic_scale_volume() {
        let s = scene();
        let sel = SegmentSelection::from_indices(vec![0, 1, 2, 3]);
        let t = scale(&s, &sel, [2.0, 1.0, 0.5], Vec3::zeros()).unwrap();
        for i in 0..4 {
            let (d0, d1) = (s.activate(i).covariance.determinant(), t.activate(i).covariance.determinant());
            assert!((d1 / d0 - 1.0).abs() < 1e-4, "{}", d1 / d0);
        }
    }

    #[test]
    fn clone_appends_copies() {
        let s = scene();
        let sel = SegmentSelection::from_indices(vec![0, 2]);
        let t = clone(&s, &sel, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.feature_row(4), s.feature_row(0));
        assert_eq!(t.positions[5], [2.0, 1.0, 0.0]);
        let back = remove(&t, &SegmentSelection::from_indices(vec![4, 5])).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn out_of_range_selection() {
        assert!(remove(&scene(), &SegmentSelection::from_indices(vec![9])).is_err());
    }
}
