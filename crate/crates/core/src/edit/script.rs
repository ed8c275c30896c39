//! JSON edit scripts: an ordered list of primitive invocations.
//!
//! ```json
//! {"ops": [
//!   {"op": "translate", "select": {"query": {"positive": "apple", "postprocess": true}}, "offset": [0.5, 0, 0]},
//!   {"op": "rotate", "select": {"indices": [0, 4, 7]}, "axis": [0, 0, 1], "angle_deg": 90},
//!   {"op": "scale", "select": "all", "factors": [2, 2, 2]},
//!   {"op": "clone", "select": {"indices": [3]}, "offset": [0, 1, 0]},
//!   {"op": "remove", "select": {"query": {"positive": "box"}}}
//! ]}
//! ```
//!
//! Selections are resolved against the scene as it is when the op runs, so
//! indices refer to the state after the previous ops. Rotation and scaling
//! pivot about the selection centroid unless `pivot` is given.

use serde::{Deserialize, Serialize};

use super::{clone, remove, rotate, scale, selection_centroid, translate, axis_angle};
use crate::decompose::{select, PostProcess, QuerySpec, SegmentSelection};
use crate::distill::DecodeHead;
use crate::error::{Error, Result};
use crate::io::Vocab;
use crate::scene::{GaussianScene, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    All,
    Indices(Vec<usize>),
    Query {
        #[serde(flatten)]
        spec: QuerySpec,
        #[serde(default)]
        postprocess: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Remove { select: Selector },
    Translate { select: Selector, offset: [f64; 3] },
    Rotate { select: Selector, axis: [f64; 3], angle_deg: f64, #[serde(default)] pivot: Option<[f64; 3]> },
    Scale { select: Selector, factors: [f64; 3], #[serde(default)] pivot: Option<[f64; 3]> },
    Clone { select: Selector, offset: [f64; 3] },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditScript {
    #[serde(default)]
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn resolve(scene: &GaussianScene, s: &Selector, lang: Option<(&DecodeHead, &Vocab)>) -> Result<SegmentSelection> {
    match s {
        Selector::All => Ok(SegmentSelection::from_indices((0..scene.len()).collect())),
        Selector::Indices(ix) => Ok(SegmentSelection::from_indices(ix.clone())),
        Selector::Query { spec, postprocess } => {
            let (head, vocab) = lang.ok_or_else(|| Error::contract("query selectors need a decode head and vocabulary"))?;
            let pp = PostProcess::default();
            select(scene, head, vocab, spec, postprocess.then_some(&pp))
        }
    }
}

/// Applies `script` in order. An empty script returns an identical scene.
pub fn apply_script(scene: &GaussianScene, script: &EditScript, lang: Option<(&DecodeHead, &Vocab)>) -> Result<GaussianScene> {
    let mut cur = scene.clone();
    for op in &script.ops {
        cur = match op {
            EditOp::Remove { select } => remove(&cur, &resolve(&cur, select, lang)?)?,
            EditOp::Translate { select, offset } => translate(&cur, &resolve(&cur, select, lang)?, *offset)?,
            EditOp::Rotate { select, axis, angle_deg, pivot } => {
                let sel = resolve(&cur, select, lang)?;
                let p = pivot.map(Vec3::from).unwrap_or_else(|| selection_centroid(&cur, &sel));
                rotate(&cur, &sel, &axis_angle(*axis, *angle_deg)?, p)?
            }
            EditOp::Scale { select, factors, pivot } => {
                let sel = resolve(&cur, select, lang)?;
                let p = pivot.map(Vec3::from).unwrap_or_else(|| selection_centroid(&cur, &sel));
                scale(&cur, &sel, *factors, p)?
            }
            EditOp::Clone { select, offset } => clone(&cur, &resolve(&cur, select, lang)?, *offset)?,
        };
    }
    Ok(cur)
}
