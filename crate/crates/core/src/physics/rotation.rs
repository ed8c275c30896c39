//! Per-Gaussian rotation estimates during deformation.

use serde::{Deserialize, Serialize};

use super::mpm::svd_rotations;
use super::particles::ParticleSystem;
use crate::geom::KdTree;
use crate::scene::{Mat3, Vec3};

/// Normal proxy of one bound particle: the plane through it and its two
/// nearest bound neighbors at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingRecord {
    /// Particle index of the bound Gaussian.
    pub particle: usize,
    pub gaussian: usize,
    pub neighbors: [usize; 2],
    pub n0: Vec3,
    pub r0: Mat3,
    pub degenerate: bool,
}

/// Builds records for every bound particle. `rest_rotation(g)` gives the
/// activated rotation of Gaussian `g`. Triplets whose triangle area is below
/// `area_tol` (relative to the squared neighbor distance) are degenerate.
pub fn bind(ps: &ParticleSystem, rest_rotation: impl Fn(usize) -> Mat3, area_tol: f64) -> Vec<BindingRecord> {
    let bound: Vec<usize> = (0..ps.particles.len()).filter(|&i| ps.particles[i].binding.is_some()).collect();
    let pts: Vec<[f64; 3]> = bound.iter().map(|&i| ps.particles[i].x.into()).collect();
    let tree = KdTree::new(pts.clone());
    bound
        .iter()
        .enumerate()
        .map(|(k, &pi)| {
            let g = ps.particles[pi].binding.unwrap();
            let nb: Vec<usize> = tree.knn(pts[k], 3).into_iter().filter(|&j| j != k).take(2).map(|j| bound[j]).collect();
            let mut rec = BindingRecord { particle: pi, gaussian: g, neighbors: [pi, pi], n0: Vec3::z(), r0: rest_rotation(g), degenerate: true };
            if nb.len() == 2 {
                rec.neighbors = [nb[0], nb[1]];
                let x = ps.particles[pi].x;
                let (a, b) = (ps.particles[nb[0]].x - x, ps.particles[nb[1]].x - x);
                let n = a.cross(&b);
                let scale = a.norm_squared().max(b.norm_squared());
                if n.norm() > area_tol * scale && scale > 0.0 {
                    rec.n0 = n.normalize();
                    rec.degenerate = false;
                }
            }
            rec
        })
        .collect()
}

/// Smallest rotation taking unit `a` to unit `b`.
pub fn minimal_rotation(a: &Vec3, b: &Vec3) -> Mat3 {
    let axis = a.cross(b);
    let s = axis.norm();
    let c = a.dot(b);
    if s < 1e-15 {
        return Mat3::identity();
    }
    let k = axis / s;
    let kx = k.cross_matrix();
    Mat3::identity() + kx * s + kx * kx * (1.0 - c)
}

/// `R₁` per record: the minimal rotation from the rest normal to the current
/// (sign-aligned) normal of the displaced triplet; identity for degenerate
/// triplets.
pub fn rotation_from_normals(ps: &ParticleSystem, records: &[BindingRecord]) -> Vec<Mat3> {
    records
        .iter()
        .map(|r| {
            if r.degenerate {
                return Mat3::identity();
            }
            let x = ps.particles[r.particle].x;
            let n = (ps.particles[r.neighbors[0]].x - x).cross(&(ps.particles[r.neighbors[1]].x - x));
            if !(n.norm() > 0.0) {
                return Mat3::identity();
            }
            let mut nt = n.normalize();
            if nt.dot(&r.n0) < 0.0 {
                nt = -nt;
            }
            minimal_rotation(&r.n0, &nt)
        })
        .collect()
}

/// Which rotation factor of `F = U Σ Vᵀ` to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationConvention {
    /// `V Uᵀ`: the inverse of the material rotation (transpose of the polar factor).
    Vut,
    /// `U Vᵀ`: the polar rotation, which maps rest directions to current ones.
    Polar,
}

/// Rotation factor of each particle's deformation gradient; non-finite
/// gradients yield the identity.
pub fn rotation_from_deformation(ps: &ParticleSystem, convention: DeformationConvention) -> Vec<Mat3> {
    ps.particles.iter().map(|p| deformation_rotation(&p.f, convention)).collect()
}

pub fn deformation_rotation(f: &Mat3, convention: DeformationConvention) -> Mat3 {
    if !f.iter().all(|v| v.is_finite()) {
        log::warn!("non-finite deformation gradient; using identity rotation");
        return Mat3::identity();
    }
    let (u, _, vt) = svd_rotations(f);
    match convention {
        DeformationConvention::Polar => u * vt,
        DeformationConvention::Vut => vt.transpose() * u.transpose(),
    }
}

/// Best-fit rotation taking `rest` points to `cur` (Kabsch), about their centroids.
pub fn kabsch(rest: &[Vec3], cur: &[Vec3]) -> Mat3 {
    if rest.len() < 3 {
        return Mat3::identity();
    }
    let (c0, c1) = (rest.iter().sum::<Vec3>() / rest.len() as f64, cur.iter().sum::<Vec3>() / cur.len() as f64);
    let mut h = Mat3::zeros();
    for (a, b) in rest.iter().zip(cur) {
        h += (b - c1) * (a - c0).transpose();
    }
    if h.abs().max() == 0.0 {
        return Mat3::identity();
    }
    let (u, _, vt) = svd_rotations(&h);
    u * vt
}
