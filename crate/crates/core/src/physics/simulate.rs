use super::material::{MaterialBank, MaterialModel};
use super::mpm::{Mpm, SimConfig};
use super::particles::{infill, InfillConfig, ParticleSystem};
use super::rotation::{bind, rotation_from_normals};
use crate::decompose::SegmentSelection;
use crate::error::{Error, Result};
use crate::scene::{mat_to_quat, normalize_quat, quat_mul, GaussianScene, Vec3};

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Frame 0 is the input scene, bit for bit.
    pub frames: Vec<GaussianScene>,
    /// Mass centroid of all particles per frame.
    pub centroids: Vec<Vec3>,
    pub particle_count: usize,
    pub interior_count: usize,
}

/// Runs the full dynamics pipeline on the selected Gaussians: particles from
/// `infill`, `frames - 1` frames of `cfg.substeps_per_frame` substeps, and
/// per-frame scenes where bound Gaussians follow their particles. Elastic
/// Gaussians are re-oriented with the normal proxy composed onto their rest
/// rotation. Rigid particles only translate with their prescribed velocity, so
/// rigid Gaussians keep their orientation, as do granular and liquid ones.
/// `progress(frame)` returning `false` cancels with the frames so far.
pub fn simulate(
    scene: &GaussianScene,
    sel: &SegmentSelection,
    materials: &[usize],
    bank: &MaterialBank,
    cfg: &SimConfig,
    fill: &InfillConfig,
    frames: usize,
    mut progress: impl FnMut(usize) -> bool,
) -> Result<SimulationOutput> {
    if frames == 0 {
        return Err(Error::contract("at least one frame is required"));
    }
    let mut ps = infill(scene, sel, materials, bank, fill)?;
    let particle_count = ps.particles.len();
    let interior_count = ps.interior_count();
    let mut out = SimulationOutput { frames: vec![scene.clone()], centroids: vec![ps.centroid()], particle_count, interior_count };
    if frames == 1 {
        return Ok(out);
    }
    let records = bind(&ps, |g| scene.activate(g).rotation, 1e-3);
    let rest_q: Vec<[f64; 4]> = records.iter().map(|r| normalize_quat(scene.rotations[r.gaussian].map(|v| v as f64))).collect();
    let v0 = Vec3::from(cfg.initial_velocity);
    for i in 0..ps.particles.len() {
        if !is_rigid(&ps, i) {
            ps.particles[i].v = v0;
        }
    }
    let mut solver = Mpm::new(&ps, cfg)?;
    for f in 1..frames {
        for _ in 0..cfg.substeps_per_frame {
            solver.substep(&mut ps)?;
        }
        out.frames.push(frame_scene(scene, &ps, &records, &rest_q));
        out.centroids.push(ps.centroid());
        if !progress(f) {
            break;
        }
    }
    Ok(out)
}

fn is_rigid(ps: &ParticleSystem, i: usize) -> bool {
    ps.materials[ps.particles[i].material].model == MaterialModel::Rigid
}

fn frame_scene(scene: &GaussianScene, ps: &ParticleSystem, records: &[super::rotation::BindingRecord], rest_q: &[[f64; 4]]) -> GaussianScene {
    let mut s = scene.clone();
    let normal_rot = rotation_from_normals(ps, records);
    for (k, r) in records.iter().enumerate() {
        let p = &ps.particles[r.particle];
        s.positions[r.gaussian] = [p.x.x as f32, p.x.y as f32, p.x.z as f32];
        if ps.materials[p.material].model == MaterialModel::Elastic {
            s.rotations[r.gaussian] = normalize_quat(quat_mul(mat_to_quat(&normal_rot[k]), rest_q[k])).map(|v| v as f32);
        }
    }
    s
}
