//! Gaussian-aware material point method.
//!
//! Selected Gaussians become particles (plus transparent interior particles
//! from [`infill`]), an MLS-MPM solver moves them, and each output frame is
//! the input scene with bound Gaussians moved and re-oriented.

mod material;
mod mpm;
mod particles;
mod rotation;
mod simulate;

pub use material::{assign_materials, MaterialBank, MaterialModel, MaterialSpec};
pub use mpm::{kirchhoff, polar_rotation, step, svd_rotations, CollisionPlane, Domain, Mpm, SimConfig, StepStats};
pub use particles::{infill, surface_samples, with_infill_gaussians, InfillConfig, Particle, ParticleSystem, VoxelGrid};
pub use rotation::{
    bind, deformation_rotation, kabsch, minimal_rotation, rotation_from_deformation, rotation_from_normals, BindingRecord, DeformationConvention,
};
pub use simulate::{simulate, SimulationOutput};
