/// Adam moments for a parameter group stored as fixed-width rows (one row per
/// Gaussian, or a single row for the decode head).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub width: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(rows: usize, width: usize, eps: f64) -> Self {
        Adam { width, m: vec![0.0; rows * width], v: vec![0.0; rows * width], t: 0, beta1: 0.9, beta2: 0.999, eps }
    }

    /// Advances the moments with `grad` and calls `apply(index, delta)` for
    /// every entry; `delta` is to be added to the parameter.
    pub fn step(&mut self, grad: &[f64], lr: f64, mut apply: impl FnMut(usize, f64)) {
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grad.iter().enumerate() {
            let m = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let mh = m / bc1;
            let vh = v / bc2;
            apply(i, -lr * mh / (vh.sqrt() + self.eps));
        }
    }

    /// Rebuilds row state after densification. `origins[j]` is the source row
    /// of new row `j` and whether it is freshly created (zeroed moments).
    pub fn remap(&mut self, origins: &[(usize, bool)]) {
        let w = self.width;
        let mut m = vec![0.0; origins.len() * w];
        let mut v = vec![0.0; origins.len() * w];
        for (j, &(src, fresh)) in origins.iter().enumerate() {
            if !fresh {
                m[j * w..(j + 1) * w].copy_from_slice(&self.m[src * w..(src + 1) * w]);
                v[j * w..(j + 1) * w].copy_from_slice(&self.v[src * w..(src + 1) * w]);
            }
        }
        self.m = m;
        self.v = v;
    }
}
