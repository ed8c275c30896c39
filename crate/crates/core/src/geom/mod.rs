//! Nearest neighbors, clustering and plane fitting.

mod dbscan;
mod kdtree;
mod gravity;
mod ransac;

pub use dbscan::{dbscan, largest_cluster, NOISE};
pub use kdtree::{brute_knn, KdTree};
pub use gravity::{estimate_gravity, GravityConfig};
pub use ransac::{fit_plane, gravity_from_plane, ransac_plane, Plane, RansacConfig};
