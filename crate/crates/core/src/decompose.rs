//! Text-driven selection of Gaussians and its post-processing.
//!
//! The full pipeline runs `segment -> knn_close -> dbscan_open ->
//! subtract_negatives`; the threshold applies to the raw per-Gaussian
//! probabilities before any post-processing.

use serde::{Deserialize, Serialize};

use crate::distill::DecodeHead;
use crate::error::{Error, Result};
use crate::geom::{dbscan, largest_cluster, KdTree};
use crate::io::Vocab;
use crate::scene::GaussianScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuerySpec {
    pub positive: String,
    pub negatives: Vec<String>,
    pub tau: f64,
    pub temperature: f64,
}

impl Default for QuerySpec {
    fn default() -> Self {
        QuerySpec {
            positive: String::new(),
            negatives: vec!["objects".into(), "things".into()],
            tau: 0.6,
            temperature: 0.1,
        }
    }
}

impl QuerySpec {
    pub fn new(positive: impl Into<String>) -> Self {
        QuerySpec { positive: positive.into(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::contract(format!("tau {} outside (0, 1)", self.tau)));
        }
        if self.negatives.is_empty() {
            return Err(Error::contract("at least one negative query is required"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::contract("temperature must be positive"));
        }
        Ok(())
    }
}

/// Selected Gaussian indices (ascending) with a score per index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSelection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SegmentSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }

    /// Selection of exactly these indices with unit scores.
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let scores = vec![1.0; indices.len()];
        SegmentSelection { indices, scores }
    }

    fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        SegmentSelection { indices: pairs.iter().map(|p| p.0).collect(), scores: pairs.iter().map(|p| p.1).collect() }
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().cloned().zip(self.scores.iter().cloned())
    }
}

/// Decoded CLIP-space feature of every Gaussian, `n x dc` row-major.
pub fn decode_scene_features(scene: &GaussianScene, head: &DecodeHead) -> Result<Vec<f64>> {
    if head.input_dim != scene.feature_dim {
        return Err(Error::contract(format!(
            "decode head expects {} feature dims, scene has {}",
            head.input_dim, scene.feature_dim
        )));
    }
    let n = scene.len();
    let d = scene.feature_dim;
    let mut input = vec![0.0; n * d];
    for (i, v) in input.iter_mut().enumerate() {
        *v = scene.features.get(i) as f64;
    }
    Ok(head.decode_clip_batch(&input, n))
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// `p(positive)` per Gaussian from a temperatured softmax over cosine
/// similarities to `[positive, negatives...]`.
pub fn query_probabilities(scene: &GaussianScene, head: &DecodeHead, vocab: &Vocab, q: &QuerySpec) -> Result<Vec<f64>> {
    q.validate()?;
    let words: Vec<&str> = std::iter::once(q.positive.as_str()).chain(q.negatives.iter().map(|s| s.as_str())).collect();
    let embs: Vec<Vec<f64>> = words
        .iter()
        .map(|w| vocab.get(w).map(|e| unit(&e.iter().map(|v| *v as f64).collect::<Vec<_>>())))
        .collect::<Result<_>>()?;
    if embs[0].len() != head.clip_dim {
        return Err(Error::contract(format!("vocabulary dimension {} != head output {}", embs[0].len(), head.clip_dim)));
    }
    let dec = decode_scene_features(scene, head)?;
    let dc = head.clip_dim;
    let mut probs = Vec::with_capacity(scene.len());
    let mut logits = vec![0.0; embs.len()];
    for i in 0..scene.len() {
        let f = unit(&dec[i * dc..(i + 1) * dc]);
        for (l, e) in logits.iter_mut().zip(&embs) {
            *l = f.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / q.temperature;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        probs.push((logits[0] - m).exp() / z);
    }
    Ok(probs)
}

/// Gaussians with `p(positive) > tau`.
pub fn segment(scene: &GaussianScene, head: &DecodeHead, vocab: &Vocab, q: &QuerySpec) -> Result<SegmentSelection> {
    let p = query_probabilities(scene, head, vocab, q)?;
    Ok(SegmentSelection::from_pairs(p.iter().enumerate().filter(|(_, v)| **v > q.tau).map(|(i, v)| (i, *v)).collect()))
}

fn centroids(scene: &GaussianScene) -> Vec<[f64; 3]> {
    (0..scene.len()).map(|i| scene.position(i).into()).collect()
}

/// Single pass: adds every unselected Gaussian whose `k` nearest other
/// centroids are more than `majority` selected. Added Gaussians are scored by
/// that selected fraction.
pub fn knn_close(scene: &GaussianScene, sel: &SegmentSelection, k: usize, majority: f64) -> SegmentSelection {
    let n = scene.len();
    if sel.is_empty() || k == 0 || n < 2 {
        return sel.clone();
    }
    let k = k.min(n - 1);
    let mask = sel.mask(n);
    let pts = centroids(scene);
    let tree = KdTree::new(pts.clone());
    let mut pairs: Vec<(usize, f64)> = sel.pairs().collect();
    for i in (0..n).filter(|&i| !mask[i]) {
        let nb: Vec<usize> = tree.knn(pts[i], k + 1).into_iter().filter(|&j| j != i).take(k).collect();
        let frac = nb.iter().filter(|&&j| mask[j]).count() as f64 / k as f64;
        if frac > majority {
            pairs.push((i, frac));
        }
    }
    SegmentSelection::from_pairs(pairs)
}

/// Default DBSCAN radius: 1.5x the median distance from a selected centroid to
/// its `min_pts`-th nearest selected neighbor.
pub fn default_eps(scene: &GaussianScene, sel: &SegmentSelection, min_pts: usize) -> Option<f64> {
    // k-distance heuristic: a typical selected point should see min_pts neighbors
    let k = min_pts.max(1).min(sel.len().saturating_sub(1));
    if k == 0 {
        return None;
    }
    let pts: Vec<[f64; 3]> = sel.indices.iter().map(|&i| scene.position(i).into()).collect();
    let tree = KdTree::new(pts.clone());
    let mut kd: Vec<f64> = pts.iter().map(|p| tree.knn_with_dist(*p, k + 1)[k].1.sqrt()).collect();
    kd.sort_by(f64::total_cmp);
    let med = kd[kd.len() / 2];
    (med > 0.0).then_some(1.5 * med)
}

/// Keeps only the largest DBSCAN cluster of the selected centroids.
pub fn dbscan_open(scene: &GaussianScene, sel: &SegmentSelection, eps: f64, min_pts: usize) -> Result<SegmentSelection> {
    if !(eps > 0.0) {
        return Err(Error::contract("eps must be positive"));
    }
    let pts: Vec<[f64; 3]> = sel.indices.iter().map(|&i| scene.position(i).into()).collect();
    let labels = dbscan(&pts, eps, min_pts);
    let Some(best) = largest_cluster(&labels) else {
        return Ok(SegmentSelection::default());
    };
    Ok(SegmentSelection::from_pairs(sel.pairs().zip(&labels).filter(|(_, l)| **l == best).map(|(p, _)| p).collect()))
}

/// Removes Gaussians that each extra negative, used as a positive query with
/// the same negatives/threshold, would select.
pub fn subtract_negatives(
    scene: &GaussianScene,
    head: &DecodeHead,
    vocab: &Vocab,
    sel: &SegmentSelection,
    extra_negatives: &[String],
    q: &QuerySpec,
) -> Result<SegmentSelection> {
    let mut keep = sel.mask(scene.len());
    for word in extra_negatives {
        let nq = QuerySpec { positive: word.clone(), ..q.clone() };
        for i in segment(scene, head, vocab, &nq)?.indices {
            keep[i] = false;
        }
    }
    Ok(SegmentSelection::from_pairs(sel.pairs().filter(|(i, _)| keep[*i]).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostProcess {
    pub knn_k: usize,
    pub majority: f64,
    /// DBSCAN radius; `None` picks [`default_eps`].
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub extra_negatives: Vec<String>,
}

impl Default for PostProcess {
    fn default() -> Self {
        PostProcess { knn_k: 8, majority: 0.5, eps: None, min_pts: 10, extra_negatives: Vec::new() }
    }
}

/// The full selection pipeline; `post = None` returns the raw thresholded set.
pub fn select(
    scene: &GaussianScene,
    head: &DecodeHead,
    vocab: &Vocab,
    q: &QuerySpec,
    post: Option<&PostProcess>,
) -> Result<SegmentSelection> {
    let mut sel = segment(scene, head, vocab, q)?;
    let Some(pp) = post else { return Ok(sel) };
    sel = knn_close(scene, &sel, pp.knn_k, pp.majority);
    if let Some(eps) = pp.eps.or_else(|| default_eps(scene, &sel, pp.min_pts)) {
        sel = dbscan_open(scene, &sel, eps, pp.min_pts)?;
    }
    subtract_negatives(scene, head, vocab, &sel, &pp.extra_negatives, q)
}
