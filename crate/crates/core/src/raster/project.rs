use nalgebra::{Matrix2, Matrix2x3};

use super::RasterConfig;
use crate::scene::{CameraView, GaussianScene, Mat3, Vec3};
use crate::sh;

/// A Gaussian after projection into one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Index into the source scene.
    pub index: usize,
    pub mean2d: [f64; 2],
    /// Screen covariance `(xx, xy, yy)` including dilation.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, `(a, b, c)` with `m^2 = a dx^2 + 2 b dx dy + c dy^2`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub cam_pos: [f64; 3],
    pub color: [f64; 3],
    pub color_clamped: [bool; 3],
    /// View direction used for SH (unit, world space).
    pub view_dir: [f64; 3],
    pub view_dist: f64,
    pub opacity: f64,
    /// Half extents of the footprint box, px.
    pub extent: [f64; 2],
}

impl ProjectedGaussian {
    /// Inclusive tile rectangle `(tx0, ty0, tx1, ty1)` covered by the footprint box,
    /// or `None` if it misses the image.
    pub fn tile_rect(&self, width: usize, height: usize, tile: usize) -> Option<(usize, usize, usize, usize)> {
        let (x0, x1, y0, y1) = self.pixel_rect(width, height)?;
        Some((x0 / tile, y0 / tile, x1 / tile, y1 / tile))
    }

    /// Inclusive pixel rectangle `(x0, x1, y0, y1)` of the footprint box clipped to the image.
    pub fn pixel_rect(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let lo_x = (self.mean2d[0] - self.extent[0]).ceil();
        let hi_x = (self.mean2d[0] + self.extent[0]).floor();
        let lo_y = (self.mean2d[1] - self.extent[1]).ceil();
        let hi_y = (self.mean2d[1] + self.extent[1]).floor();
        let lo_x = lo_x.max(0.0);
        let lo_y = lo_y.max(0.0);
        let hi_x = hi_x.min(width as f64 - 1.0);
        let hi_y = hi_y.min(height as f64 - 1.0);
        if !(lo_x <= hi_x && lo_y <= hi_y) {
            return None;
        }
        Some((lo_x as usize, hi_x as usize, lo_y as usize, hi_y as usize))
    }
}

/// Pinhole Jacobian at a camera-frame point.
pub(crate) fn jacobian(cam: &CameraView, p: &Vec3) -> Matrix2x3<f64> {
    let (x, y, z) = (p.x, p.y, p.z);
    let iz = 1.0 / z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * y * iz * iz,
    )
}

pub(crate) fn project_one(
    scene: &GaussianScene,
    i: usize,
    cam: &CameraView,
    rot: &Mat3,
    trans: &Vec3,
    center: &Vec3,
    cfg: &RasterConfig,
) -> Option<ProjectedGaussian> {
    let world = scene.position(i);
    let pc = rot * world + trans;
    if !(pc.z > cfg.near) {
        return None;
    }
    let act = scene.activate(i);
    if !(act.opacity > 0.0) {
        return None;
    }
    let j = jacobian(cam, &pc);
    let cov_cam = rot * act.covariance * rot.transpose();
    let c2: Matrix2<f64> = j * cov_cam * j.transpose();
    let xx = c2[(0, 0)] + cfg.dilation;
    let xy = 0.5 * (c2[(0, 1)] + c2[(1, 0)]);
    let yy = c2[(1, 1)] + cfg.dilation;
    let det = xx * yy - xy * xy;
    if !(det > 0.0) {
        return None;
    }
    let inv_det = 1.0 / det;
    let conic = [yy * inv_det, -xy * inv_det, xx * inv_det];
    let mean = [cam.fx * pc.x / pc.z + cam.cx, cam.fy * pc.y / pc.z + cam.cy];
    let k = cfg.cutoff_sigma;
    let pad = |v: f64| k * v.sqrt() * (1.0 + 1e-9) + 1e-9;
    let extent = [pad(xx), pad(yy)];

    let v = world - center;
    let dist = v.norm();
    let dir = if dist > 0.0 { v / dist } else { Vec3::new(0.0, 0.0, 1.0) };
    let dir = [dir.x, dir.y, dir.z];
    let (color, color_clamped) = sh::eval_color(scene.sh_degree, scene.sh_row(i), dir);

    let p = ProjectedGaussian {
        index: i,
        mean2d: mean,
        cov2d: [xx, xy, yy],
        conic,
        depth: pc.z,
        cam_pos: [pc.x, pc.y, pc.z],
        color,
        color_clamped,
        view_dir: dir,
        view_dist: dist,
        opacity: act.opacity,
        extent,
    };
    // frustum cull with the footprint margin
    p.pixel_rect(cam.width as usize, cam.height as usize)?;
    Some(p)
}

/// Projects and culls all Gaussians, returned sorted front to back
/// (camera depth, ties by index).
pub fn project(scene: &GaussianScene, cam: &CameraView, cfg: &RasterConfig) -> Vec<ProjectedGaussian> {
    let rot = cam.rotation();
    let trans = cam.translation();
    let center = cam.center();
    let mut out: Vec<ProjectedGaussian> =
        (0..scene.len()).filter_map(|i| project_one(scene, i, cam, &rot, &trans, &center, cfg)).collect();
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;

    fn unit_cam(w: u32, h: u32) -> CameraView {
        CameraView::from_pose(1.0, 1.0, 0.0, 0.0, w, h, &Mat3::identity(), &Vec3::zeros())
    }

    fn scene_with(points: &[[f32; 3]]) -> GaussianScene {
        let mut s = GaussianScene::new(0, 0);
        for p in points {
            s.push(Gaussian::isotropic(*p, 1.0, 0.5, [0.5, 0.5, 0.5], 0, 0)).unwrap();
        }
        s
    }

    #[test]
    fn on_axis_projection() {
        let s = scene_with(&[[0.0, 0.0, 1.0]]);
        let p = project(&s, &unit_cam(4, 4), &RasterConfig::default());
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].mean2d, [0.0, 0.0]);
        let [xx, xy, yy] = p[0].cov2d;
        assert!((xx - 1.3).abs() < 1e-12 && xy.abs() < 1e-12 && (yy - 1.3).abs() < 1e-12);
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let s = scene_with(&[[0.0, 0.0, -1.0]]);
        let cfg = RasterConfig { near: 0.1, ..Default::default() };
        assert!(project(&s, &unit_cam(4, 4), &cfg).is_empty());
    }

    #[test]
    fn off_axis_covariance() {
        // J = [[1/2, 0, -1/8], [0, 1/2, 0]]; J J^T = [[1/4 + 1/64, 0], [0, 1/4]]
        let s = scene_with(&[[0.5, 0.0, 2.0]]);
        let p = project(&s, &unit_cam(4, 4), &RasterConfig::default());
        let [xx, xy, yy] = p[0].cov2d;
        assert!((xx - (0.25 + 1.0 / 64.0 + 0.3)).abs() < 1e-12);
        assert!(xy.abs() < 1e-12);
        assert!((yy - (0.25 + 0.3)).abs() < 1e-12);
        assert_eq!(p[0].mean2d, [0.25, 0.0]);
    }

    #[test]
    fn outside_frustum_with_margin() {
        // far to the left: footprint box misses the image entirely
        let mut s = scene_with(&[[-50.0, 0.0, 1.0], [-1.5, 0.0, 1.0]]);
        s.log_scales[0] = [(0.01f32).ln(); 3];
        let p = project(&s, &unit_cam(4, 4), &RasterConfig::default());
        // second one reaches pixel 0 through its 3-sigma box (sigma ~ 1.14 px)
        assert_eq!(p.iter().map(|g| g.index).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn sorted_by_depth_then_index() {
        let s = scene_with(&[[0.0, 0.0, 3.0], [0.0, 0.0, 1.0], [0.0, 0.0, 3.0]]);
        let p = project(&s, &unit_cam(4, 4), &RasterConfig::default());
        assert_eq!(p.iter().map(|g| g.index).collect::<Vec<_>>(), vec![1, 0, 2]);
    }
}
