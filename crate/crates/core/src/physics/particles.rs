use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::material::{MaterialBank, MaterialSpec};
use crate::decompose::SegmentSelection;
use crate::error::{Error, Result};
use crate::geom::KdTree;
use crate::scene::{bounds_of, Gaussian, GaussianScene, Mat3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: Vec3,
    pub v: Vec3,
    pub mass: f64,
    /// Rest volume.
    pub volume: f64,
    /// Deformation gradient.
    pub f: Mat3,
    /// APIC affine velocity.
    pub c: Mat3,
    /// Volume ratio tracked for liquids (F stays the identity for them).
    pub j: f64,
    pub material: usize,
    /// Source Gaussian, `None` for infill particles.
    pub binding: Option<usize>,
    pub transparent: bool,
}

impl Particle {
    pub fn new(x: Vec3, mass: f64, volume: f64, material: usize, binding: Option<usize>) -> Self {
        Particle {
            x,
            v: Vec3::zeros(),
            mass,
            volume,
            f: Mat3::identity(),
            c: Mat3::zeros(),
            j: 1.0,
            material,
            binding,
            transparent: binding.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub particles: Vec<Particle>,
    pub materials: Vec<MaterialSpec>,
    /// Prescribed velocity of rigid particles.
    pub rigid_velocity: Vec3,
    /// Edge length of the infill voxels (0 when no infill ran).
    pub voxel: f64,
}

impl ParticleSystem {
    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.particles.iter().map(|p| p.v * p.mass).sum()
    }

    pub fn centroid(&self) -> Vec3 {
        let m = self.total_mass();
        self.particles.iter().map(|p| p.x * p.mass).sum::<Vec3>() / m
    }

    pub fn max_speed(&self) -> f64 {
        self.particles.iter().map(|p| p.v.norm()).fold(0.0, f64::max)
    }

    pub fn interior_count(&self) -> usize {
        self.particles.iter().filter(|p| p.binding.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfillConfig {
    /// Voxels along the longest side of the surface bounding box.
    pub grid_res: usize,
    pub samples_per_gaussian: usize,
    /// Gaussians with base opacity above this count as surface.
    pub surface_opacity: f64,
    /// Disk radius in standard deviations for surface sampling.
    pub disk_sigma: f64,
    /// Fill the interior; `false` yields only the bound particles.
    pub enabled: bool,
    pub seed: u64,
}

impl Default for InfillConfig {
    fn default() -> Self {
        InfillConfig { grid_res: 32, samples_per_gaussian: 8, surface_opacity: 0.1, disk_sigma: 2.0, enabled: true, seed: 0 }
    }
}

/// Points on the disks spanned by the two largest principal axes of each
/// surface Gaussian; proposals are uniform on the disk and accepted with
/// probability `opacity * exp(-r²/2)` (r in standard deviations).
pub fn surface_samples(scene: &GaussianScene, sel: &SegmentSelection, cfg: &InfillConfig) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for &i in &sel.indices {
        let a = scene.activate(i);
        if a.opacity <= cfg.surface_opacity {
            continue;
        }
        let c = scene.position(i);
        out.push(c);
        let mut axes: Vec<(f64, Vec3)> = (0..3).map(|k| (a.scale[k], a.rotation.column(k).into_owned())).collect();
        axes.sort_by(|x, y| y.0.total_cmp(&x.0));
        let (mut got, mut tries) = (0, 0);
        while got < cfg.samples_per_gaussian && tries < 64 * cfg.samples_per_gaussian.max(1) {
            tries += 1;
            let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let r2 = u * u + v * v;
            if r2 > 1.0 {
                continue;
            }
            let (su, sv) = (u * cfg.disk_sigma, v * cfg.disk_sigma);
            if rng.random::<f64>() >= a.opacity * (-(su * su + sv * sv) / 2.0).exp() {
                continue;
            }
            out.push(c + axes[0].1 * (su * axes[0].0) + axes[1].1 * (sv * axes[1].0));
            got += 1;
        }
    }
    out
}

/// Voxel grid over a point set, cubic cells, one empty voxel of padding.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub h: f64,
    pub dims: [usize; 3],
    pub occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn from_points(points: &[Vec3], res: usize) -> Option<VoxelGrid> {
        let (lo, hi) = bounds_of(points.iter().cloned())?;
        let ext = hi - lo;
        let longest = ext.max();
        if !(longest > 0.0) || res == 0 {
            return None;
        }
        let h = longest / res as f64;
        let dims = [0, 1, 2].map(|k| (ext[k] / h).floor() as usize + 3);
        let origin = lo - Vec3::repeat(h);
        let mut g = VoxelGrid { origin, h, dims, occupied: vec![false; dims[0] * dims[1] * dims[2]] };
        for p in points {
            let idx = g.cell_of(p);
            let k = g.index(idx);
            g.occupied[k] = true;
        }
        Some(g)
    }

    pub fn cell_of(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| (((p[k] - self.origin[k]) / self.h).floor().max(0.0) as usize).min(self.dims[k] - 1))
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn center(&self, c: [usize; 3]) -> Vec3 {
        self.origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.h
    }

    /// Empty voxels whose six axis rays hit an occupied voxel in at least
    /// `min_hits` directions.
    pub fn interior(&self, min_hits: usize) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.dims;
        // hits[dir][cell]: an occupied voxel lies strictly beyond the cell in that direction
        let mut count = vec![0u8; self.occupied.len()];
        for axis in 0..3 {
            let len = self.dims[axis];
            let (oa, ob) = ((axis + 1) % 3, (axis + 2) % 3);
            for a in 0..self.dims[oa] {
                for b in 0..self.dims[ob] {
                    let cell = |t: usize| {
                        let mut c = [0; 3];
                        c[axis] = t;
                        c[oa] = a;
                        c[ob] = b;
                        c
                    };
                    let mut seen = false;
                    for t in 0..len {
                        let k = self.index(cell(t));
                        if seen {
                            count[k] += 1;
                        }
                        seen |= self.occupied[k];
                    }
                    seen = false;
                    for t in (0..len).rev() {
                        let k = self.index(cell(t));
                        if seen {
                            count[k] += 1;
                        }
                        seen |= self.occupied[k];
                    }
                }
            }
        }
        let mut out = Vec::new();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let k = self.index([x, y, z]);
                    if !self.occupied[k] && count[k] as usize >= min_hits {
                        out.push([x, y, z]);
                    }
                }
            }
        }
        out
    }
}

/// Particles for a selection: one per selected Gaussian at its centroid, plus
/// transparent particles at interior voxel centers when infill is enabled.
/// `materials` is aligned with `sel.indices`; interior particles take the
/// material of the nearest bound particle. Every particle gets one voxel of
/// rest volume.
pub fn infill(scene: &GaussianScene, sel: &SegmentSelection, materials: &[usize], bank: &MaterialBank, cfg: &InfillConfig) -> Result<ParticleSystem> {
    bank.validate()?;
    if sel.is_empty() {
        return Err(Error::Empty("infill needs a non-empty selection".into()));
    }
    if materials.len() != sel.len() || materials.iter().any(|&m| m >= bank.materials.len()) {
        return Err(Error::contract("materials must give a bank index per selected Gaussian"));
    }
    let pts = surface_samples(scene, sel, cfg);
    let centers: Vec<Vec3> = sel.indices.iter().map(|&i| scene.position(i)).collect();
    let grid = VoxelGrid::from_points(if pts.is_empty() { &centers } else { &pts }, cfg.grid_res);
    let h = grid.as_ref().map_or_else(|| scene.extent().max(1e-3) / cfg.grid_res.max(1) as f64, |g| g.h);
    let vol = h * h * h;
    let mut particles: Vec<Particle> = sel
        .indices
        .iter()
        .zip(materials)
        .map(|(&i, &m)| Particle::new(scene.position(i), bank.materials[m].density * vol, vol, m, Some(i)))
        .collect();
    if cfg.enabled {
        if let Some(g) = &grid {
            let inside = g.interior(5);
            if inside.is_empty() {
                log::warn!("infill found no enclosed voxels; the selection may be open or flat");
            }
            let tree = KdTree::new(centers.iter().map(|c| [c.x, c.y, c.z]).collect());
            for c in inside {
                let x = g.center(c);
                let m = materials[tree.knn([x.x, x.y, x.z], 1)[0]];
                particles.push(Particle::new(x, bank.materials[m].density * vol, vol, m, None));
            }
        }
    }
    Ok(ParticleSystem { particles, materials: bank.materials.clone(), rigid_velocity: Vec3::zeros(), voxel: h })
}

/// `scene` plus one fully transparent Gaussian per infill particle.
pub fn with_infill_gaussians(scene: &GaussianScene, ps: &ParticleSystem) -> Result<GaussianScene> {
    let mut out = scene.clone();
    let s = (ps.voxel * 0.5).max(1e-6) as f32;
    for p in ps.particles.iter().filter(|p| p.binding.is_none()) {
        let mut g = Gaussian::isotropic([p.x.x as f32, p.x.y as f32, p.x.z as f32], s, 0.5, [0.5; 3], scene.sh_degree, scene.feature_dim);
        g.opacity_logit = f32::NEG_INFINITY;
        out.push(g)?;
    }
    Ok(out)
}
