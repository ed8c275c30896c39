//! Turning a simulation request into solver inputs.

use featsplat::decompose::{select, PostProcess, QuerySpec, SegmentSelection};
use featsplat::distill::DecodeHead;
use featsplat::edit::Selector;
use featsplat::geom::{estimate_gravity, GravityConfig};
use featsplat::io::Vocab;
use featsplat::physics::{assign_materials, CollisionPlane, InfillConfig, MaterialBank, MaterialSpec, SimConfig};
use featsplat::scene::Vec3;
use featsplat::GaussianScene;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GravitySpec {
    /// `"auto"`: estimated from the floor Gaussians.
    Auto(String),
    Vector([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimRequest {
    pub select: Selector,
    /// Material for Gaussians matching no rigid alias; config default when unset.
    pub material: Option<String>,
    /// `name=model[,E[,nu[,density]]]` entries added to the material bank.
    pub overrides: Vec<String>,
    /// Query rigid-material aliases ("wood", "steel", ...) within the selection.
    pub auto_materials: bool,
    pub frames: Option<usize>,
    pub gravity: Option<GravitySpec>,
    /// A point on a floor plane perpendicular to gravity.
    pub floor: Option<[f64; 3]>,
    pub initial_velocity: Option<[f64; 3]>,
}

impl Default for SimRequest {
    fn default() -> Self {
        SimRequest {
            select: Selector::All,
            material: None,
            overrides: Vec::new(),
            auto_materials: true,
            frames: None,
            gravity: None,
            floor: None,
            initial_velocity: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedSim {
    pub sel: SegmentSelection,
    pub materials: Vec<usize>,
    pub bank: MaterialBank,
    pub cfg: SimConfig,
    pub fill: InfillConfig,
    pub frames: usize,
}

pub fn resolve_selector(scene: &GaussianScene, s: &Selector, lang: Option<(&DecodeHead, &Vocab)>) -> CliResult<SegmentSelection> {
    match s {
        Selector::All => Ok(SegmentSelection::from_indices((0..scene.len()).collect())),
        Selector::Indices(ix) => {
            if let Some(i) = ix.iter().find(|&&i| i >= scene.len()) {
                return Err(CliError::Usage(format!("index {i} out of range ({} Gaussians)", scene.len())));
            }
            Ok(SegmentSelection::from_indices(ix.clone()))
        }
        Selector::Query { spec, postprocess } => {
            let (head, vocab) = lang.ok_or_else(no_language)?;
            let pp = PostProcess::default();
            Ok(select(scene, head, vocab, spec, postprocess.then_some(&pp))?)
        }
    }
}

pub fn no_language() -> CliError {
    CliError::Usage("text queries need a decode head and a vocabulary".into())
}

pub fn prepare(scene: &GaussianScene, req: &SimRequest, lang: Option<(&DecodeHead, &Vocab)>, config: &Config, bank: &MaterialBank) -> CliResult<PreparedSim> {
    let sel = resolve_selector(scene, &req.select, lang)?;
    if sel.is_empty() {
        return Err(featsplat::Error::Empty("the selection matched no Gaussians".into()).into());
    }
    let mut bank = bank.clone();
    for o in &req.overrides {
        bank.upsert(MaterialSpec::parse_override(o)?);
    }
    let name = req.material.as_deref().unwrap_or(&config.simulate.material);
    let default = bank.index_of(name)?;
    let materials = match lang {
        Some((head, vocab)) if req.auto_materials => assign_materials(scene, &sel, head, vocab, &bank, default, &QuerySpec::default())?,
        _ => vec![default; sel.len()],
    };

    let mut cfg = config.sim.clone();
    let g = Vec3::from(cfg.gravity);
    let gravity = match &req.gravity {
        None => g,
        Some(GravitySpec::Vector(v)) => Vec3::from(*v),
        Some(GravitySpec::Auto(s)) if s == "auto" => {
            let (head, vocab) = lang.ok_or_else(no_language)?;
            estimate_gravity(scene, head, vocab, &GravityConfig::default())? * g.norm()
        }
        Some(GravitySpec::Auto(s)) => return Err(CliError::Usage(format!("gravity must be \"auto\" or [x, y, z], got {s:?}"))),
    };
    cfg.gravity = gravity.into();
    if let Some(p) = req.floor {
        if gravity.norm() == 0.0 {
            return Err(CliError::Usage("a floor needs a nonzero gravity".into()));
        }
        cfg.planes.push(CollisionPlane::floor(gravity, Vec3::from(p)));
    }
    if let Some(v) = req.initial_velocity {
        cfg.initial_velocity = v;
    }
    let frames = req.frames.unwrap_or(config.simulate.frames);
    if frames == 0 {
        return Err(CliError::Usage("at least one frame is required".into()));
    }
    Ok(PreparedSim { sel, materials, bank, cfg, fill: config.infill.clone(), frames })
}
