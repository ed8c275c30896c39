//! MLS-MPM with quadratic B-splines and APIC transfer.

use serde::{Deserialize, Serialize};

use super::material::{MaterialModel, MaterialSpec};
use super::particles::ParticleSystem;
use crate::error::{Error, Result};
use crate::scene::{Mat3, Vec3};

/// Half-space boundary `{x : n·x >= offset}`; `n` points into the free side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(default = "default_friction")]
    pub friction: f64,
}

fn default_friction() -> f64 {
    0.4
}

impl CollisionPlane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let n = normal.normalize();
        CollisionPlane { normal: [n.x, n.y, n.z], offset, friction: 0.4 }
    }

    /// Floor through `point` opposite to `gravity`.
    pub fn floor(gravity: Vec3, point: Vec3) -> Self {
        let n = -gravity.normalize();
        CollisionPlane::new(n, n.dot(&point))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub origin: [f64; 3],
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Grid nodes per axis.
    pub grid_res: usize,
    /// Substep; `None` uses `1e-4 * scene_scale`.
    pub dt: Option<f64>,
    pub scene_scale: f64,
    pub gravity: [f64; 3],
    pub planes: Vec<CollisionPlane>,
    pub substeps_per_frame: usize,
    /// Allowed `dt * max|v|` as a fraction of the grid spacing.
    pub cfl: f64,
    pub max_subdivision: usize,
    /// Cubic simulation box; `None` pads the particle bounds.
    pub domain: Option<Domain>,
    /// Slip walls on the domain faces.
    pub walls: bool,
    /// Velocity given to every non-rigid particle before the first substep.
    pub initial_velocity: [f64; 3],
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid_res: 64,
            dt: None,
            scene_scale: 1.0,
            gravity: [0.0, 0.0, -9.8],
            planes: Vec::new(),
            substeps_per_frame: 100,
            cfl: 0.5,
            max_subdivision: 64,
            domain: None,
            walls: true,
            initial_velocity: [0.0; 3],
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-4 * self.scene_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub grid_mass: f64,
    pub particle_mass: f64,
    pub max_speed: f64,
    /// Number of pieces the substep was split into for the CFL bound.
    pub pieces: usize,
}

pub struct Mpm {
    pub cfg: SimConfig,
    pub origin: Vec3,
    pub h: f64,
    res: usize,
    mass: Vec<f64>,
    mom: Vec<Vec3>,
    rigid: Vec<bool>,
    touched: Vec<usize>,
}

impl Mpm {
    /// Solver whose domain is `cfg.domain` or the particle bounds padded by
    /// half their longest side on every face.
    pub fn new(ps: &ParticleSystem, cfg: &SimConfig) -> Result<Mpm> {
        if cfg.grid_res < 8 {
            return Err(Error::contract("grid resolution must be at least 8"));
        }
        if ps.particles.is_empty() {
            return Err(Error::Empty("particle system".into()));
        }
        let (origin, size) = match &cfg.domain {
            Some(d) => (Vec3::from(d.origin), d.size),
            None => {
                let (lo, hi) = crate::scene::bounds_of(ps.particles.iter().map(|p| p.x)).unwrap();
                let side = (hi - lo).max().max(ps.voxel).max(1e-6);
                let c = (lo + hi) * 0.5;
                (c - Vec3::repeat(side), 2.0 * side)
            }
        };
        if !(size > 0.0) {
            return Err(Error::contract("domain size must be positive"));
        }
        let res = cfg.grid_res;
        let n = res * res * res;
        Ok(Mpm {
            cfg: cfg.clone(),
            origin,
            h: size / (res - 1) as f64,
            res,
            mass: vec![0.0; n],
            mom: vec![Vec3::zeros(); n],
            rigid: vec![false; n],
            touched: Vec::new(),
        })
    }

    fn node(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.res + j) * self.res + i
    }

    /// One substep of `cfg.dt()`, split into equal pieces while the CFL bound
    /// would be violated.
    pub fn substep(&mut self, ps: &mut ParticleSystem) -> Result<StepStats> {
        let dt = self.cfg.dt();
        let limit = self.cfg.cfl * self.h;
        let mut pieces = 1;
        let vmax = ps.max_speed();
        while dt / pieces as f64 * vmax > limit {
            pieces *= 2;
            if pieces > self.cfg.max_subdivision {
                return Err(Error::Cfl { value: dt / self.cfg.max_subdivision as f64 * vmax, limit });
            }
        }
        let mut stats = StepStats { grid_mass: 0.0, particle_mass: ps.total_mass(), max_speed: vmax, pieces };
        for _ in 0..pieces {
            stats.grid_mass = self.advance(ps, dt / pieces as f64);
        }
        stats.max_speed = ps.max_speed();
        if !stats.max_speed.is_finite() {
            return Err(Error::Diverged { iteration: 0 });
        }
        Ok(stats)
    }

    fn weights(&self, x: &Vec3) -> ([usize; 3], Vec3, [[f64; 3]; 3]) {
        let xs = (x - self.origin) / self.h;
        let base = [0, 1, 2].map(|d| ((xs[d] - 0.5).floor().max(0.0) as usize).min(self.res - 3));
        let fx = Vec3::new(xs[0] - base[0] as f64, xs[1] - base[1] as f64, xs[2] - base[2] as f64);
        let mut w = [[0.0; 3]; 3];
        for d in 0..3 {
            w[0][d] = 0.5 * (1.5 - fx[d]).powi(2);
            w[1][d] = 0.75 - (fx[d] - 1.0).powi(2);
            w[2][d] = 0.5 * (fx[d] - 0.5).powi(2);
        }
        (base, fx, w)
    }

    /// Runs P2G, the grid update and G2P; returns the grid mass after P2G.
    fn advance(&mut self, ps: &mut ParticleSystem, dt: f64) -> f64 {
        for &n in &self.touched {
            self.mass[n] = 0.0;
            self.mom[n] = Vec3::zeros();
            self.rigid[n] = false;
        }
        self.touched.clear();
        let h = self.h;
        let inv_d = 4.0 / (h * h);

        for p in &ps.particles {
            let (base, fx, w) = self.weights(&p.x);
            let m = &ps.materials[p.material];
            let is_rigid = m.model == MaterialModel::Rigid;
            let affine = if is_rigid { Mat3::zeros() } else { kirchhoff(p, m) * (-dt * p.volume * inv_d) + p.c * p.mass };
            for (a, wa) in w.iter().enumerate() {
                for (b, wb) in w.iter().enumerate() {
                    for (c, wc) in w.iter().enumerate() {
                        let weight = wa[0] * wb[1] * wc[2];
                        let n = self.node(base[0] + a, base[1] + b, base[2] + c);
                        if self.mass[n] == 0.0 && !self.rigid[n] {
                            self.touched.push(n);
                        }
                        if is_rigid {
                            if weight > 0.0 {
                                self.rigid[n] = true;
                            }
                            continue;
                        }
                        let dpos = (Vec3::new(a as f64, b as f64, c as f64) - fx) * h;
                        self.mom[n] += (p.v * p.mass + affine * dpos) * weight;
                        self.mass[n] += weight * p.mass;
                    }
                }
            }
        }
        self.touched.sort_unstable();
        self.touched.dedup();
        let grid_mass: f64 = self.touched.iter().map(|&n| self.mass[n]).sum();

        let g = Vec3::from(self.cfg.gravity);
        let planes: Vec<(Vec3, f64, f64)> = self.cfg.planes.iter().map(|p| (Vec3::from(p.normal), p.offset, p.friction)).collect();
        let rv = ps.rigid_velocity;
        let r = self.res;
        for &n in &self.touched {
            if self.mass[n] <= 0.0 {
                continue;
            }
            let mut v = self.mom[n] / self.mass[n] + g * dt;
            let (i, j, k) = (n % r, (n / r) % r, n / (r * r));
            let xg = self.origin + Vec3::new(i as f64, j as f64, k as f64) * h;
            for &(nrm, off, mu) in &planes {
                if nrm.dot(&xg) - off <= 0.0 {
                    v = collide(v, nrm, mu);
                }
            }
            if self.cfg.walls {
                for (d, idx) in [i, j, k].into_iter().enumerate() {
                    if (idx < 2 && v[d] < 0.0) || (idx + 3 > r && v[d] > 0.0) {
                        v[d] = 0.0;
                    }
                }
            }
            if self.rigid[n] {
                v = rv;
            }
            self.mom[n] = v;
        }

        let lo = self.origin + Vec3::repeat(h);
        let hi = self.origin + Vec3::repeat(h * (r as f64 - 2.0));
        for p in &mut ps.particles {
            let m = &ps.materials[p.material];
            if m.model == MaterialModel::Rigid {
                p.v = rv;
                p.x += rv * dt;
                continue;
            }
            let (base, fx, w) = self.weights(&p.x);
            let mut v = Vec3::zeros();
            let mut bmat = Mat3::zeros();
            for (a, wa) in w.iter().enumerate() {
                for (b, wb) in w.iter().enumerate() {
                    for (c, wc) in w.iter().enumerate() {
                        let weight = wa[0] * wb[1] * wc[2];
                        let n = self.node(base[0] + a, base[1] + b, base[2] + c);
                        let gv = self.mom[n];
                        let dpos = (Vec3::new(a as f64, b as f64, c as f64) - fx) * h;
                        v += gv * weight;
                        bmat += gv * dpos.transpose() * weight;
                    }
                }
            }
            p.v = v;
            p.c = bmat * inv_d;
            p.x += v * dt;
            for d in 0..3 {
                p.x[d] = p.x[d].clamp(lo[d], hi[d]);
            }
            match m.model {
                MaterialModel::Liquid => p.j *= 1.0 + dt * p.c.trace(),
                MaterialModel::Granular => {
                    p.f = (Mat3::identity() + p.c * dt) * p.f;
                    p.f = drucker_prager(&p.f, m);
                }
                _ => p.f = (Mat3::identity() + p.c * dt) * p.f,
            }
        }
        grid_mass
    }

    /// Grid mass after scattering the current particles (no state change
    /// besides the grid buffers).
    pub fn scatter_mass(&mut self, ps: &ParticleSystem) -> f64 {
        let mut tmp = ps.clone();
        for p in &mut tmp.particles {
            p.v = Vec3::zeros();
        }
        self.advance(&mut tmp, 0.0)
    }
}

/// Coulomb contact on a grid velocity against a plane with normal `n`.
fn collide(v: Vec3, n: Vec3, mu: f64) -> Vec3 {
    let vn = v.dot(&n);
    if vn >= 0.0 {
        return v;
    }
    let vt = v - n * vn;
    let t = vt.norm();
    if t <= -mu * vn {
        Vec3::zeros()
    } else {
        vt * (1.0 + mu * vn / t)
    }
}

/// Kirchhoff stress `P Fᵀ` of a particle.
pub fn kirchhoff(p: &super::particles::Particle, m: &MaterialSpec) -> Mat3 {
    match m.model {
        MaterialModel::Rigid => Mat3::zeros(),
        MaterialModel::Liquid => Mat3::identity() * (m.bulk * (p.j - 1.0) * p.j),
        MaterialModel::Elastic => {
            let (mu, la) = m.lame();
            let j = p.f.determinant();
            let r = polar_rotation(&p.f);
            (p.f - r) * p.f.transpose() * (2.0 * mu) + Mat3::identity() * (la * (j - 1.0) * j)
        }
        MaterialModel::Granular => {
            // St. Venant-Kirchhoff on the Hencky strain
            let (mu, la) = m.lame();
            let svd = p.f.svd(true, true);
            let u = svd.u.unwrap();
            let eps = svd.singular_values.map(|s| s.max(1e-12).ln());
            let tr = eps.sum();
            let tau = Mat3::from_diagonal(&(eps * (2.0 * mu) + Vec3::repeat(la * tr)));
            u * tau * u.transpose()
        }
    }
}

/// Rotation factor `U Vᵀ` of the polar decomposition, det fixed to +1.
pub fn polar_rotation(f: &Mat3) -> Mat3 {
    let (u, _, vt) = svd_rotations(f);
    u * vt
}

/// SVD with both orthogonal factors proper rotations; the sign flip goes to
/// the smallest singular value.
pub fn svd_rotations(f: &Mat3) -> (Mat3, Vec3, Mat3) {
    let svd = f.svd(true, true);
    let (mut u, mut s, mut vt) = (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());
    // order descending so the last column is the smallest
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (u0, s0, vt0) = (u, s, vt);
    for (k, &i) in idx.iter().enumerate() {
        u.set_column(k, &u0.column(i));
        s[k] = s0[i];
        vt.set_row(k, &vt0.row(i));
    }
    if u.determinant() < 0.0 {
        u.set_column(2, &(-u.column(2)));
        s[2] = -s[2];
    }
    if vt.determinant() < 0.0 {
        vt.set_row(2, &(-vt.row(2)));
        s[2] = -s[2];
    }
    (u, s, vt)
}

/// Drucker-Prager return mapping on the Hencky strain.
fn drucker_prager(f: &Mat3, m: &MaterialSpec) -> Mat3 {
    let (mu, la) = m.lame();
    let svd = f.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let eps = svd.singular_values.map(|s| s.max(1e-12).ln());
    let tr = eps.sum();
    let dev = eps - Vec3::repeat(tr / 3.0);
    let dn = dev.norm();
    let sin_phi = m.friction_angle_deg.to_radians().sin();
    let alpha = (2.0f64 / 3.0).sqrt() * 2.0 * sin_phi / (3.0 - sin_phi);
    let h = if tr >= 0.0 || dn == 0.0 {
        Vec3::zeros()
    } else {
        let dgamma = dn + (3.0 * la + 2.0 * mu) / (2.0 * mu) * tr * alpha;
        if dgamma <= 0.0 {
            eps
        } else {
            eps - dev * (dgamma / dn)
        }
    };
    u * Mat3::from_diagonal(&h.map(f64::exp)) * vt
}

/// Advances `ps` by one substep with a fresh solver; use [`Mpm`] directly to
/// reuse the grid across substeps.
pub fn step(ps: &mut ParticleSystem, cfg: &SimConfig) -> Result<StepStats> {
    Mpm::new(ps, cfg)?.substep(ps)
}
