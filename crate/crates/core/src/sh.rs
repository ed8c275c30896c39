//! Real spherical harmonics up to degree 3, with direction derivatives.

pub const C0: f64 = 0.282_094_791_773_878_14;
pub const C1: f64 = 0.488_602_511_902_919_9;
pub const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_DEGREE: u32 = 3;

pub fn rgb_to_dc(c: f64) -> f64 {
    (c - 0.5) / C0
}

pub fn dc_to_rgb(dc: f64) -> f64 {
    dc * C0 + 0.5
}

/// Basis values `Y_k(d)` for a unit direction, `k < (degree+1)^2`.
pub fn basis(degree: u32, d: [f64; 3], out: &mut [f64]) {
    let [x, y, z] = d;
    out[0] = C0;
    if degree < 1 {
        return;
    }
    out[1] = -C1 * y;
    out[2] = C1 * z;
    out[3] = -C1 * x;
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = C2[0] * x * y;
    out[5] = C2[1] * y * z;
    out[6] = C2[2] * (2.0 * zz - xx - yy);
    out[7] = C2[3] * x * z;
    out[8] = C2[4] * (xx - yy);
    if degree < 3 {
        return;
    }
    out[9] = C3[0] * y * (3.0 * xx - yy);
    out[10] = C3[1] * x * y * z;
    out[11] = C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = C3[5] * z * (xx - yy);
    out[15] = C3[6] * x * (xx - 3.0 * yy);
}

/// Partial derivatives of each basis function with respect to the (unnormalized
/// polynomial) direction components.
pub fn basis_grad(degree: u32, d: [f64; 3], out: &mut [[f64; 3]]) {
    let [x, y, z] = d;
    out[0] = [0.0; 3];
    if degree < 1 {
        return;
    }
    out[1] = [0.0, -C1, 0.0];
    out[2] = [0.0, 0.0, C1];
    out[3] = [-C1, 0.0, 0.0];
    if degree < 2 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = [C2[0] * y, C2[0] * x, 0.0];
    out[5] = [0.0, C2[1] * z, C2[1] * y];
    out[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
    out[7] = [C2[3] * z, 0.0, C2[3] * x];
    out[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
    if degree < 3 {
        return;
    }
    out[9] = [C3[0] * 6.0 * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
    out[10] = [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y];
    out[11] = [
        -2.0 * C3[2] * x * y,
        C3[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * C3[2] * y * z,
    ];
    out[12] = [
        -6.0 * C3[3] * x * z,
        -6.0 * C3[3] * y * z,
        C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
    ];
    out[13] = [
        C3[4] * (4.0 * zz - 3.0 * xx - yy),
        -2.0 * C3[4] * x * y,
        8.0 * C3[4] * x * z,
    ];
    out[14] = [2.0 * C3[5] * x * z, -2.0 * C3[5] * y * z, C3[5] * (xx - yy)];
    out[15] = [C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * C3[6] * x * y, 0.0];
}

/// View-dependent RGB: `max(0, sum_k Y_k(d) c_k + 1/2)` per channel.
/// Returns the color and, per channel, whether the lower clamp was active.
pub fn eval_color(degree: u32, coeffs: &[f32], dir: [f64; 3]) -> ([f64; 3], [bool; 3]) {
    let n = crate::scene::sh_coeff_count(degree);
    let mut y = [0.0; 16];
    basis(degree, dir, &mut y);
    let mut rgb = [0.5; 3];
    for k in 0..n {
        for c in 0..3 {
            rgb[c] += y[k] * coeffs[k * 3 + c] as f64;
        }
    }
    let mut clamped = [false; 3];
    for c in 0..3 {
        if rgb[c] < 0.0 {
            rgb[c] = 0.0;
            clamped[c] = true;
        }
    }
    (rgb, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    #[test]
    fn dc_roundtrip() {
        for c in [0.0, 0.25, 0.9] {
            assert!((dc_to_rgb(rgb_to_dc(c)) - c).abs() < 1e-15);
        }
    }

    #[test]
    fn basis_gradient_matches_central_differences() {
        let d = unit([0.3, -0.7, 0.5]);
        let mut g = [[0.0; 3]; 16];
        basis_grad(3, d, &mut g);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = d;
            let mut m = d;
            p[axis] += h;
            m[axis] -= h;
            let mut yp = [0.0; 16];
            let mut ym = [0.0; 16];
            basis(3, p, &mut yp);
            basis(3, m, &mut ym);
            for k in 0..16 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-7, "k={k} axis={axis} fd={fd} an={}", g[k][axis]);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_on_sphere() {
        // Fibonacci-sphere quadrature of Y_i Y_j.
        let n = 20000;
        let mut gram = [[0.0; 16]; 16];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for i in 0..n {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let mut y = [0.0; 16];
            basis(3, [r * phi.cos(), r * phi.sin(), z], &mut y);
            for a in 0..16 {
                for b in 0..16 {
                    gram[a][b] += y[a] * y[b];
                }
            }
        }
        let w = 4.0 * std::f64::consts::PI / n as f64;
        for a in 0..16 {
            for b in 0..16 {
                let v = gram[a][b] * w;
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 2e-3, "({a},{b}) = {v}");
            }
        }
    }

    #[test]
    fn clamp_flags() {
        let mut coeffs = vec![0.0f32; 3];
        coeffs[0] = rgb_to_dc(-0.2) as f32;
        coeffs[1] = rgb_to_dc(0.4) as f32;
        coeffs[2] = rgb_to_dc(1.3) as f32;
        let (rgb, clamped) = eval_color(0, &coeffs, [0.0, 0.0, 1.0]);
        assert_eq!(rgb[0], 0.0);
        assert_eq!(clamped, [true, false, false]);
        assert!((rgb[2] - 1.3).abs() < 1e-6);
    }
}
