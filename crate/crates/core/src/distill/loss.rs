//! Image losses with analytic gradients. Images are `H x W x C`, row-major.

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn psnr(pred: &[f64], gt: &[f64]) -> f64 {
    let mse = pred.iter().zip(gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len().max(1) as f64;
    -10.0 * mse.log10()
}

/// Mean absolute error and its gradient.
pub fn l1(pred: &[f64], gt: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let loss = pred.iter().zip(gt).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(a, b)| if a > b { 1.0 / n } else if a < b { -1.0 / n } else { 0.0 })
        .collect();
    (loss, grad)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "same" convolution with zero padding. With a symmetric kernel
/// this operator is self-adjoint, which the SSIM gradient relies on.
fn blur(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += kv * img[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Mean SSIM over pixels and channels (11x11 Gaussian window, sigma 1.5) and
/// its gradient with respect to `pred`.
pub fn ssim(pred: &[f64], gt: &[f64], w: usize, h: usize, channels: usize) -> (f64, Vec<f64>) {
    let k = gaussian_kernel();
    let n = w * h;
    let total = (n * channels).max(1) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    let plane = |img: &[f64], c: usize| -> Vec<f64> { (0..n).map(|p| img[p * channels + c]).collect() };
    for c in 0..channels {
        let x = plane(pred, c);
        let y = plane(gt, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let (mx, my) = (blur(&x, w, h, &k), blur(&y, w, h, &k));
        let (sxx, syy, sxy) = (blur(&xx, w, h, &k), blur(&yy, w, h, &k), blur(&xy, w, h, &k));
        // per-pixel partials w.r.t. the blurred moments mu_x, E[x^2], E[xy]
        let mut d_m = vec![0.0; n];
        let mut d_s = vec![0.0; n];
        let mut d_c = vec![0.0; n];
        for p in 0..n {
            let (ux, uy) = (mx[p], my[p]);
            let vx = sxx[p] - ux * ux;
            let vy = syy[p] - uy * uy;
            let cxy = sxy[p] - ux * uy;
            let a1 = 2.0 * ux * uy + C1;
            let a2 = 2.0 * cxy + C2;
            let b1 = ux * ux + uy * uy + C1;
            let b2 = vx + vy + C2;
            let s = a1 * a2 / (b1 * b2);
            value += s;
            d_m[p] = (2.0 * uy * a2 - 2.0 * uy * a1) / (b1 * b2) - s * (2.0 * ux / b1 - 2.0 * ux / b2);
            d_s[p] = -s / b2;
            d_c[p] = 2.0 * a1 / (b1 * b2);
        }
        let (gm, gs, gc) = (blur(&d_m, w, h, &k), blur(&d_s, w, h, &k), blur(&d_c, w, h, &k));
        for p in 0..n {
            grad[p * channels + c] = (gm[p] + 2.0 * x[p] * gs[p] + y[p] * gc[p]) / total;
        }
    }
    (value / total, grad)
}

/// `L1 + weight * (1 - SSIM)` and its gradient.
pub fn color_loss(pred: &[f64], gt: &[f64], w: usize, h: usize, ssim_weight: f64) -> (f64, Vec<f64>) {
    let (l, mut g) = l1(pred, gt);
    if ssim_weight == 0.0 {
        return (l, g);
    }
    let (s, gs) = ssim(pred, gt, w, h, 3);
    for (a, b) in g.iter_mut().zip(gs) {
        *a -= ssim_weight * b;
    }
    (l + ssim_weight * (1.0 - s), g)
}

/// `1 - cos(x, y)` for one pair and its gradient w.r.t. `x`; `y_unit` must be
/// unit length (or zero, giving zero loss gradient). Zero `x` has zero gradient.
pub fn cosine_distance(x: &[f64], y_unit: &[f64], grad: &mut [f64]) -> f64 {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return 1.0;
    }
    let cos = x.iter().zip(y_unit).map(|(a, b)| a * b).sum::<f64>() / nx;
    for k in 0..x.len() {
        grad[k] = -(y_unit[k] - cos * x[k] / nx) / nx;
    }
    1.0 - cos
}

pub fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
