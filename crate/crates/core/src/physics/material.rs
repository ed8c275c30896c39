use serde::{Deserialize, Serialize};

use crate::decompose::{query_probabilities, QuerySpec, SegmentSelection};
use crate::distill::DecodeHead;
use crate::error::{Error, Result};
use crate::io::Vocab;
use crate::scene::GaussianScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialModel {
    Rigid,
    Elastic,
    Granular,
    Liquid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialSpec {
    pub name: String,
    pub model: MaterialModel,
    pub density: f64,
    pub youngs: f64,
    pub poisson: f64,
    pub friction_angle_deg: f64,
    pub bulk: f64,
    /// Vocabulary words that select this material.
    pub aliases: Vec<String>,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        MaterialSpec {
            name: "elastic".into(),
            model: MaterialModel::Elastic,
            density: 1e3,
            youngs: 1e5,
            poisson: 0.3,
            friction_angle_deg: 30.0,
            bulk: 1e5,
            aliases: Vec::new(),
        }
    }
}

impl MaterialSpec {
    pub fn new(name: &str, model: MaterialModel) -> Self {
        MaterialSpec { name: name.into(), model, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) || !(self.youngs > 0.0) || !(0.0..0.5).contains(&self.poisson) || !(self.bulk > 0.0) {
            return Err(Error::contract(format!(
                "material {:?}: need density > 0, E > 0, 0 <= nu < 0.5, bulk > 0",
                self.name
            )));
        }
        if !(0.0..90.0).contains(&self.friction_angle_deg) {
            return Err(Error::contract(format!("material {:?}: friction angle must be in [0, 90)", self.name)));
        }
        Ok(())
    }

    /// Lamé parameters `(mu, lambda)`.
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.youngs, self.poisson);
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }

    /// Parses `name=model[,E[,nu[,density]]]`, e.g. `rubber=elastic,2e5,0.4`.
    pub fn parse_override(text: &str) -> Result<Self> {
        let (name, rest) = text.split_once('=').ok_or_else(|| Error::contract(format!("material override {text:?}: expected name=model,...")))?;
        let mut parts = rest.split(',');
        let model: MaterialModel = serde_json::from_value(serde_json::Value::String(parts.next().unwrap_or("").trim().into()))
            .map_err(|_| Error::contract(format!("material override {text:?}: model must be rigid|elastic|granular|liquid")))?;
        let mut m = MaterialSpec::new(name.trim(), model);
        let nums: Vec<f64> = parts
            .map(|p| p.trim().parse::<f64>().map_err(|_| Error::contract(format!("material override {text:?}: bad number {p:?}"))))
            .collect::<Result<_>>()?;
        if let Some(&e) = nums.first() {
            m.youngs = e;
            m.bulk = e;
        }
        if let Some(&nu) = nums.get(1) {
            m.poisson = nu;
        }
        if let Some(&rho) = nums.get(2) {
            m.density = rho;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialBank {
    pub materials: Vec<MaterialSpec>,
}

impl Default for MaterialBank {
    fn default() -> Self {
        let mut rigid = MaterialSpec::new("rigid", MaterialModel::Rigid);
        rigid.aliases = vec!["wood".into(), "ceramic".into(), "steel".into()];
        MaterialBank {
            materials: vec![
                rigid,
                MaterialSpec::new("elastic", MaterialModel::Elastic),
                MaterialSpec::new("sand", MaterialModel::Granular),
                MaterialSpec::new("water", MaterialModel::Liquid),
            ],
        }
    }
}

impl MaterialBank {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.materials
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::contract(format!("no material named {name:?} in the bank")))
    }

    /// Replaces a same-named material or appends a new one.
    pub fn upsert(&mut self, m: MaterialSpec) -> usize {
        match self.materials.iter().position(|x| x.name == m.name) {
            Some(i) => {
                self.materials[i] = m;
                i
            }
            None => {
                self.materials.push(m);
                self.materials.len() - 1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.materials.is_empty() {
            return Err(Error::Empty("material bank".into()));
        }
        self.materials.iter().try_for_each(MaterialSpec::validate)
    }
}

/// Material index for every selected Gaussian (aligned with `sel.indices`).
///
/// Each rigid alias present in the vocabulary is queried with the same
/// temperatured softmax as selection, restricted to `sel`; Gaussians above the
/// threshold take the best-scoring rigid material, the rest take `default`.
pub fn assign_materials(
    scene: &GaussianScene,
    sel: &SegmentSelection,
    head: &DecodeHead,
    vocab: &Vocab,
    bank: &MaterialBank,
    default: usize,
    query: &QuerySpec,
) -> Result<Vec<usize>> {
    bank.validate()?;
    if sel.is_empty() {
        return Err(Error::Empty("material assignment needs a non-empty selection".into()));
    }
    if default >= bank.materials.len() {
        return Err(Error::contract(format!("default material {default} not in bank")));
    }
    let mut out = vec![default; sel.len()];
    let mut best = vec![query.tau; sel.len()];
    let sub = scene.subset(&sel.indices);
    for (mi, m) in bank.materials.iter().enumerate().filter(|(_, m)| m.model == MaterialModel::Rigid) {
        for alias in m.aliases.iter().filter(|a| vocab.entries.contains_key(*a)) {
            let q = QuerySpec { positive: alias.clone(), ..query.clone() };
            let p = query_probabilities(&sub, head, vocab, &q)?;
            for (k, &pk) in p.iter().enumerate() {
                if pk > best[k] {
                    best[k] = pk;
                    out[k] = mi;
                }
            }
        }
    }
    Ok(out)
}
