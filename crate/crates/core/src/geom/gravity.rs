use serde::{Deserialize, Serialize};

use super::{gravity_from_plane, ransac_plane, RansacConfig};
use crate::decompose::{segment, QuerySpec};
use crate::distill::DecodeHead;
use crate::error::{Error, Result};
use crate::io::Vocab;
use crate::scene::{GaussianScene, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GravityConfig {
    /// Planar support words; those missing from the vocabulary are skipped.
    pub queries: Vec<String>,
    pub query: QuerySpec,
    pub ransac: RansacConfig,
}

impl Default for GravityConfig {
    fn default() -> Self {
        GravityConfig {
            queries: vec!["floor".into(), "tabletop".into()],
            query: QuerySpec::default(),
            ransac: RansacConfig::default(),
        }
    }
}

/// Unit gravity direction: the normal of the plane fitted to the Gaussians
/// matching the floor queries, pointing from the remaining content toward it.
pub fn estimate_gravity(scene: &GaussianScene, head: &DecodeHead, vocab: &Vocab, cfg: &GravityConfig) -> Result<Vec3> {
    let mut on_floor = vec![false; scene.len()];
    for word in cfg.queries.iter().filter(|w| vocab.entries.contains_key(*w)) {
        let q = QuerySpec { positive: word.clone(), ..cfg.query.clone() };
        for i in segment(scene, head, vocab, &q)?.indices {
            on_floor[i] = true;
        }
    }
    let floor: Vec<Vec3> = (0..scene.len()).filter(|&i| on_floor[i]).map(|i| scene.position(i)).collect();
    if floor.len() < 3 {
        return Err(Error::NoFloor { queries: cfg.queries.clone() });
    }
    let plane = ransac_plane(&floor, &cfg.ransac)?;
    let rest: Vec<Vec3> = (0..scene.len()).filter(|&i| !on_floor[i]).map(|i| scene.position(i)).collect();
    let centroid = if rest.is_empty() { scene.centroid() } else { rest.iter().sum::<Vec3>() / rest.len() as f64 };
    gravity_from_plane(&plane, &centroid)
}
