use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shallow decoder from rendered features to the two reference spaces:
/// `h = relu(W1 f)`, `clip = Wc h`, `dino = Wd h`.
///
/// There are no bias terms, so the head is positively homogeneous: scaling a
/// feature scales its decoding, and cosine-based selection is scale invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeHead {
    pub input_dim: usize,
    pub hidden: usize,
    pub clip_dim: usize,
    pub dino_dim: usize,
    /// `[W1 | Wc | Wd]`, each row-major (`out x in`).
    pub params: Vec<f64>,
}

/// Forward activations kept for the backward pass.
pub struct HeadCache {
    input: DMatrix<f64>,
    hidden: DMatrix<f64>,
}

impl DecodeHead {
    pub fn param_count(d: usize, h: usize, dc: usize, dd: usize) -> usize {
        h * d + dc * h + dd * h
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization from a dedicated stream.
    pub fn new(input_dim: usize, hidden: usize, clip_dim: usize, dino_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(input_dim, hidden, clip_dim, dino_dim));
        let mut layer = |rows: usize, fan_in: usize, params: &mut Vec<f64>| {
            let b = 1.0 / (fan_in.max(1) as f64).sqrt();
            for _ in 0..rows * fan_in {
                params.push(rng.random_range(-b..b));
            }
        };
        layer(hidden, input_dim, &mut params);
        layer(clip_dim, hidden, &mut params);
        layer(dino_dim, hidden, &mut params);
        DecodeHead { input_dim, hidden, clip_dim, dino_dim, params }
    }

    /// A head whose CLIP branch returns its input exactly: the hidden layer
    /// holds `relu(f)` and `relu(-f)`. Needs `hidden >= 2 * input_dim` and
    /// `clip_dim == input_dim`; the DINO branch is zero.
    pub fn passthrough(dim: usize, hidden: usize, dino_dim: usize) -> Result<Self> {
        if hidden < 2 * dim {
            return Err(Error::contract(format!("passthrough head needs hidden >= {}", 2 * dim)));
        }
        let mut h = DecodeHead {
            input_dim: dim,
            hidden,
            clip_dim: dim,
            dino_dim,
            params: vec![0.0; Self::param_count(dim, hidden, dim, dino_dim)],
        };
        for k in 0..dim {
            h.params[k * dim + k] = 1.0;
            h.params[(dim + k) * dim + k] = -1.0;
        }
        let wc = hidden * dim;
        for k in 0..dim {
            h.params[wc + k * hidden + k] = 1.0;
            h.params[wc + k * hidden + dim + k] = -1.0;
        }
        Ok(h)
    }

    fn offsets(&self) -> [usize; 3] {
        let (d, h, dc) = (self.input_dim, self.hidden, self.clip_dim);
        [0, h * d, h * d + dc * h]
    }

    fn mat(&self, off: usize, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, &self.params[off..off + rows * cols])
    }

    /// Batched forward over `n` inputs (`n x d`, row-major). Returns
    /// `(clip n x dc, dino n x dd, cache)`; the DINO output is empty when
    /// `with_dino` is false.
    pub fn forward(&self, input: &[f64], n: usize, with_dino: bool) -> (DMatrix<f64>, DMatrix<f64>, HeadCache) {
        let (d, h, dc, dd) = (self.input_dim, self.hidden, self.clip_dim, self.dino_dim);
        let [w1, wc, wd] = self.offsets();
        let x = DMatrix::from_row_slice(n, d, input);
        let mut hid = &x * self.mat(w1, h, d).transpose();
        hid.apply(|v| *v = v.max(0.0));
        let clip = &hid * self.mat(wc, dc, h).transpose();
        let dino = if with_dino {
            &hid * self.mat(wd, dd, h).transpose()
        } else {
            DMatrix::zeros(n, 0)
        };
        (clip, dino, HeadCache { input: x, hidden: hid })
    }

    /// Decodes one feature vector through the CLIP branch.
    pub fn decode_clip(&self, f: &[f64]) -> Vec<f64> {
        let (c, _, _) = self.forward(f, 1, false);
        c.row(0).iter().cloned().collect()
    }

    /// Decodes many features (`n x d`) through the CLIP branch; `n x dc` row-major.
    pub fn decode_clip_batch(&self, f: &[f64], n: usize) -> Vec<f64> {
        let (c, _, _) = self.forward(f, n, false);
        let mut out = Vec::with_capacity(n * self.clip_dim);
        for r in 0..n {
            out.extend(c.row(r).iter());
        }
        out
    }

    /// Backward from output gradients. Returns `(dL/dparams, dL/dinput n x d row-major)`.
    /// An empty `g_dino` means the DINO branch received no gradient.
    pub fn backward(&self, cache: &HeadCache, g_clip: &DMatrix<f64>, g_dino: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
        let (d, h, dc, dd) = (self.input_dim, self.hidden, self.clip_dim, self.dino_dim);
        let [w1, wc, wd] = self.offsets();
        let n = cache.input.nrows();
        let mut grad = vec![0.0; self.params.len()];
        let gwc = g_clip.transpose() * &cache.hidden;
        grad[wc..wc + dc * h].copy_from_slice(gwc.transpose().as_slice());
        let mut gh = g_clip * self.mat(wc, dc, h);
        if g_dino.ncols() > 0 {
            let gwd = g_dino.transpose() * &cache.hidden;
            grad[wd..wd + dd * h].copy_from_slice(gwd.transpose().as_slice());
            gh += g_dino * self.mat(wd, dd, h);
        }
        for r in 0..n {
            for c in 0..h {
                if cache.hidden[(r, c)] <= 0.0 {
                    gh[(r, c)] = 0.0;
                }
            }
        }
        let gw1 = gh.transpose() * &cache.input;
        grad[w1..w1 + h * d].copy_from_slice(gw1.transpose().as_slice());
        let gx = gh * self.mat(w1, h, d);
        let mut gin = Vec::with_capacity(n * d);
        for r in 0..n {
            gin.extend(gx.row(r).iter());
        }
        (grad, gin)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: DecodeHead = serde_json::from_str(s)?;
        if h.params.len() != Self::param_count(h.input_dim, h.hidden, h.clip_dim, h.dino_dim) {
            return Err(Error::Format("decode head parameter count mismatch".into()));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passthrough_is_exact() {
        let h = DecodeHead::passthrough(4, 9, 3).unwrap();
        let f = [0.25, -1.5, 0.0, 3.0];
        assert_eq!(h.decode_clip(&f), f.to_vec());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let head = DecodeHead::new(3, 5, 4, 2, 9);
        let n = 3;
        let x: Vec<f64> = (0..n * 3).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3 + 0.05).collect();
        let wc: Vec<f64> = (0..n * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let wd: Vec<f64> = (0..n * 2).map(|i| (i as f64 * 0.91).cos()).collect();
        let loss = |h: &DecodeHead, x: &[f64]| {
            let (c, dn, _) = h.forward(x, n, true);
            c.as_slice().iter().zip(DMatrix::from_row_slice(n, 4, &wc).as_slice()).map(|(a, b)| a * b).sum::<f64>()
                + dn.as_slice().iter().zip(DMatrix::from_row_slice(n, 2, &wd).as_slice()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, _, cache) = head.forward(&x, n, true);
        let (gp, gx) = head.backward(&cache, &DMatrix::from_row_slice(n, 4, &wc), &DMatrix::from_row_slice(n, 2, &wd));
        let eps = 1e-6;
        for k in 0..head.params.len() {
            let mut a = head.clone();
            a.params[k] += eps;
            let mut b = head.clone();
            b.params[k] -= eps;
            let fd = (loss(&a, &x) - loss(&b, &x)) / (2.0 * eps);
            assert!((fd - gp[k]).abs() < 1e-6, "param {k}: {fd} vs {}", gp[k]);
        }
        for k in 0..x.len() {
            let mut a = x.clone();
            a[k] += eps;
            let mut b = x.clone();
            b[k] -= eps;
            let fd = (loss(&head, &a) - loss(&head, &b)) / (2.0 * eps);
            assert!((fd - gx[k]).abs() < 1e-6, "input {k}");
        }
    }

    #[test]
    fn positively_homogeneous() {
        let h = DecodeHead::new(3, 8, 4, 2, 3);
        let f = [0.5, -0.25, 1.0];
        let a = h.decode_clip(&f);
        let b = h.decode_clip(&f.map(|v| v * 4.0));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x * 4.0, *y);
        }
    }

    #[test]
    fn json_round_trip() {
        let h = DecodeHead::new(2, 3, 2, 1, 1);
        assert_eq!(DecodeHead::from_json(&h.to_json().unwrap()).unwrap(), h);
    }
}
