use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Mat3, Vec3};

/// Plane `{x : n . x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inliers: usize,
}

impl Plane {
    pub fn normal(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(p) - self.offset
    }

    fn oriented(n: Vec3, offset: f64) -> (Vec3, f64) {
        // deterministic sign: largest-magnitude component positive
        let k = n.iamax();
        if n[k] < 0.0 {
            (-n, -offset)
        } else {
            (n, offset)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iters: usize,
    pub inlier_tol: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { iters: 1000, inlier_tol: 0.01, seed: 0 }
    }
}

/// Least-squares plane: centroid and smallest eigenvector of the covariance.
pub fn fit_plane(points: &[Vec3]) -> Result<(Vec3, f64)> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{} points cannot define a plane", points.len())));
    }
    let c = points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let l1 = eig.eigenvalues[order[1]];
    if !(l1 > 1e-12 * eig.eigenvalues[order[2]].abs().max(1e-300)) {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    let n = eig.eigenvectors.column(order[0]).normalize();
    Ok(Plane::oriented(n, n.dot(&c)))
}

fn count_inliers(points: &[Vec3], n: &Vec3, o: f64, tol: f64) -> usize {
    points.iter().filter(|p| (n.dot(p) - o).abs() <= tol).count()
}

/// Best 3-point hypothesis by inlier count, refit to its inliers. The reported
/// inlier count is re-measured against the refit plane.
pub fn ransac_plane(points: &[Vec3], cfg: &RansacConfig) -> Result<Plane> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} points cannot define a plane")));
    }
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Vec3, f64)> = None;
    let hypothesis = |a: usize, b: usize, c: usize| -> Option<(Vec3, f64)> {
        let cr = (points[b] - points[a]).cross(&(points[c] - points[a]));
        if cr.norm() <= 1e-12 * scale * scale {
            return None;
        }
        let nn = cr.normalize();
        Some((nn, nn.dot(&points[a])))
    };
    if n == 3 {
        let (nn, o) = hypothesis(0, 1, 2).ok_or_else(|| Error::Degenerate("points are collinear".into()))?;
        let (nn, o) = Plane::oriented(nn, o);
        return Ok(Plane { normal: nn.into(), offset: o, inliers: 3 });
    }
    for _ in 0..cfg.iters {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.random_range(0..n - 2);
        for m in [a.min(b), a.max(b)] {
            if c >= m {
                c += 1;
            }
        }
        let Some((nn, o)) = hypothesis(a, b, c) else { continue };
        let cnt = count_inliers(points, &nn, o, cfg.inlier_tol);
        if best.as_ref().is_none_or(|(bc, _, _)| cnt > *bc) {
            best = Some((cnt, nn, o));
        }
    }
    let (_, nn, o) = match best {
        Some(b) => b,
        None => {
            // every sampled triple was collinear; decide exactly
            fit_plane(points)?;
            return Err(Error::Degenerate("no non-collinear sample found".into()));
        }
    };
    let inl: Vec<Vec3> = points.iter().filter(|p| (nn.dot(p) - o).abs() <= cfg.inlier_tol).cloned().collect();
    let (rn, ro) = if inl.len() >= 3 { fit_plane(&inl).unwrap_or(Plane::oriented(nn, o)) } else { Plane::oriented(nn, o) };
    let refit_count = count_inliers(points, &rn, ro, cfg.inlier_tol);
    let (fnn, fo, cnt) = if refit_count >= inl.len() {
        (rn, ro, refit_count)
    } else {
        let (a, b) = Plane::oriented(nn, o);
        (a, b, inl.len())
    };
    Ok(Plane { normal: fnn.into(), offset: fo, inliers: cnt })
}

/// Unit gravity along the plane normal, pointing from `centroid` toward the plane.
pub fn gravity_from_plane(plane: &Plane, centroid: &Vec3) -> Result<Vec3> {
    let s = plane.signed_distance(centroid);
    if s == 0.0 {
        return Err(Error::Degenerate("scene centroid lies on the floor plane".into()));
    }
    Ok(plane.normal() * -s.signum())
}
