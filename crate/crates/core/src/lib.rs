//! Feature-carrying 3D Gaussian scenes.
//!
//! The crate covers the whole pipeline: the scene model and its file formats,
//! a tiled differentiable rasterizer for color and feature vectors, feature
//! distillation from 2D reference maps, text-driven selection, editing
//! primitives, geometry helpers and a Gaussian-aware material point method.

pub mod bench;
pub mod decompose;
pub mod distill;
pub mod edit;
pub mod error;
pub mod geom;
pub mod io;
pub mod physics;
pub mod raster;
pub mod scene;
pub mod sh;
pub mod synth;

pub use error::{Error, Result};
pub use scene::{CameraView, Gaussian, GaussianScene};
