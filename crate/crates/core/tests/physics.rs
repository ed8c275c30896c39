use featsplat::decompose::SegmentSelection;
use featsplat::physics::*;
use featsplat::scene::{mat_to_quat, Gaussian, GaussianScene, Mat3, Vec3};

/// Fibonacci sphere of flat, tangent Gaussians.
fn sphere_shell(n: usize, r: f64, center: Vec3) -> GaussianScene {
    let mut s = GaussianScene::new(0, 0);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let spacing = (4.0 * std::f64::consts::PI * r * r / n as f64).sqrt();
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let rho = (1.0 - z * z).sqrt();
        let th = golden * i as f64;
        let nrm = Vec3::new(rho * th.cos(), rho * th.sin(), z);
        let p = center + nrm * r;
        let t1 = nrm.cross(&if nrm.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() }).normalize();
        let t2 = nrm.cross(&t1);
        let rot = Mat3::from_columns(&[t1, t2, nrm]);
        let q = mat_to_quat(&rot);
        let mut g = Gaussian::isotropic([p.x as f32, p.y as f32, p.z as f32], 0.5 * spacing as f32, 0.9, [0.8, 0.2, 0.2], 0, 0);
        g.log_scale[2] = (0.1 * spacing).ln() as f32;
        g.rotation = q.map(|v| v as f32);
        s.push(g).unwrap();
    }
    s
}

fn blob(seed: u64, n: usize) -> ParticleSystem {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bank = MaterialBank::default();
    let m = bank.index_of("elastic").unwrap();
    let vol = 1e-5;
    let particles = (0..n)
        .map(|_| {
            let x = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let mut p = Particle::new(x, 1e3 * vol * rng.random_range(0.5..1.5), vol, m, Some(0));
            p.v = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            p.f = Mat3::identity() + Mat3::from_fn(|_, _| rng.random_range(-0.05..0.05));
            p
        })
        .collect();
    ParticleSystem { particles, materials: bank.materials, rigid_velocity: Vec3::zeros(), voxel: 0.0 }
}

fn force_free() -> SimConfig {
    SimConfig {
        grid_res: 32,
        gravity: [0.0; 3],
        walls: false,
        domain: Some(Domain { origin: [-0.5; 3], size: 1.0 }),
        ..Default::default()
    }
}

#[test]
fn free_particle_follows_discrete_integration() {
    let bank = MaterialBank::default();
    let x0 = Vec3::new(0.01, -0.02, 0.03);
    let mut ps = ParticleSystem {
        particles: vec![Particle::new(x0, 1.0, 1e-3, bank.index_of("elastic").unwrap(), Some(0))],
        materials: bank.materials,
        rigid_velocity: Vec3::zeros(),
        voxel: 0.0,
    };
    let cfg = SimConfig { gravity: [0.0, 0.0, -9.8], ..force_free() };
    let dt = cfg.dt();
    let mut mpm = Mpm::new(&ps, &cfg).unwrap();
    let n = 200;
    for _ in 0..n {
        mpm.substep(&mut ps).unwrap();
    }
    let p = &ps.particles[0];
    let g = Vec3::new(0.0, 0.0, -9.8);
    assert!((p.v - g * (n as f64 * dt)).norm() < 1e-12, "{}", p.v);
    let x = x0 + g * (dt * dt * (n * (n + 1)) as f64 / 2.0);
    assert!((p.x - x).norm() < 1e-12, "{} vs {}", p.x, x);
}

#[test]
fn force_free_blobs_conserve_momentum_and_mass() {
    for seed in 0..10 {
        let mut ps = blob(seed, 200);
        let p0 = ps.momentum();
        let scale: f64 = ps.particles.iter().map(|p| p.mass * p.v.norm()).sum();
        let mut mpm = Mpm::new(&ps, &force_free()).unwrap();
        for _ in 0..100 {
            let st = mpm.substep(&mut ps).unwrap();
            assert!((st.grid_mass - st.particle_mass).abs() <= 1e-10 * st.particle_mass, "seed {seed}: {st:?}");
        }
        let drift = (ps.momentum() - p0).norm() / scale;
        assert!(drift <= 1e-5, "seed {seed}: drift {drift:e}");
    }
}

#[test]
fn cfl_violation_is_an_error() {
    let mut ps = blob(0, 10);
    ps.particles[0].v = Vec3::new(1e6, 0.0, 0.0);
    let cfg = force_free();
    assert!(matches!(step(&mut ps, &cfg), Err(featsplat::Error::Cfl { .. })));
    // moderate speeds are handled by subdividing
    let mut ps = blob(0, 10);
    ps.particles[0].v = Vec3::new(200.0, 0.0, 0.0);
    assert!(step(&mut ps, &cfg).unwrap().pieces > 1);
}

#[test]
fn sphere_infill_matches_voxel_oracle() {
    let scene = sphere_shell(4000, 1.0, Vec3::zeros());
    let sel = SegmentSelection::from_indices((0..scene.len()).collect());
    let bank = MaterialBank::default();
    let mats = vec![1; sel.len()];
    let cfg = InfillConfig { grid_res: 32, ..Default::default() };
    let ps = infill(&scene, &sel, &mats, &bank, &cfg).unwrap();
    // independent estimate: voxel centers of a 32^3 lattice over the sphere's
    // box that lie inside the sphere, less one voxel of shell
    let h = 2.0 / 32.0;
    let mut count = 0;
    for i in 0..34 {
        for j in 0..34 {
            for k in 0..34 {
                let c = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h - Vec3::repeat(1.0 + h);
                if c.norm() < 1.0 - h {
                    count += 1;
                }
            }
        }
    }
    let got = ps.interior_count() as f64;
    assert!((got / count as f64 - 1.0).abs() < 0.15, "interior {got} vs oracle {count}");
    assert!(ps.particles.iter().all(|p| p.transparent == p.binding.is_none()));
}

#[test]
fn flat_plate_has_no_interior() {
    let mut s = GaussianScene::new(0, 0);
    for k in 0..400 {
        s.push(Gaussian::isotropic([(k % 20) as f32 * 0.05, (k / 20) as f32 * 0.05, 0.0], 0.03, 0.9, [0.5; 3], 0, 0)).unwrap();
    }
    let sel = SegmentSelection::from_indices((0..s.len()).collect());
    let ps = infill(&s, &sel, &vec![1; s.len()], &MaterialBank::default(), &InfillConfig::default()).unwrap();
    assert_eq!(ps.interior_count(), 0);
}

#[test]
fn infill_gaussians_are_invisible() {
    use featsplat::raster::{rasterize, RasterConfig};
    let scene = sphere_shell(300, 0.3, Vec3::zeros());
    let sel = SegmentSelection::from_indices((0..scene.len()).collect());
    let ps = infill(&scene, &sel, &vec![1; scene.len()], &MaterialBank::default(), &InfillConfig { grid_res: 16, ..Default::default() }).unwrap();
    assert!(ps.interior_count() > 0);
    let filled = with_infill_gaussians(&scene, &ps).unwrap();
    filled.validate().unwrap();
    let cam = featsplat::CameraView::look_at(Vec3::new(1.5, 0.3, 0.4), Vec3::zeros(), Vec3::z(), 50.0, 48, 40);
    let a = rasterize(&scene, &cam, &RasterConfig::color_only()).unwrap();
    let b = rasterize(&filled, &cam, &RasterConfig::color_only()).unwrap();
    assert_eq!(a.color, b.color);
    assert_eq!(a.alpha, b.alpha);
}

/// Bound particles at random points with disk Gaussians whose normals equal
/// their binding normals.
fn bound_cloud(seed: u64) -> (ParticleSystem, Vec<BindingRecord>, Vec<Mat3>) {
    let mut ps = blob(seed, 60);
    for (k, p) in ps.particles.iter_mut().enumerate() {
        p.binding = Some(k);
    }
    let recs = bind(&ps, |_| Mat3::identity(), 1e-3);
    let covs = recs
        .iter()
        .map(|r| {
            let n = r.n0;
            (Mat3::identity() - n * n.transpose()) * 4e-4 + n * n.transpose() * 1e-6
        })
        .collect();
    (ps, recs, covs)
}

#[test]
fn normal_proxy_is_exact_on_rigid_motion() {
    let rx = *nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), 45f64.to_radians()).matrix();
    for seed in 0..5 {
        let (mut ps, recs, covs) = bound_cloud(seed);
        let c = ps.centroid();
        for p in &mut ps.particles {
            p.x = rx * (p.x - c) + c + Vec3::new(0.3, 0.0, -0.1);
        }
        let r1 = rotation_from_normals(&ps, &recs);
        for ((r, rec), cov) in r1.iter().zip(&recs).zip(&covs) {
            if rec.degenerate {
                continue;
            }
            assert!((r * rec.n0 - rx * rec.n0).norm() < 1e-9);
            let err = (r * cov * r.transpose() - rx * cov * rx.transpose()).norm();
            assert!(err <= 1e-6, "covariance error {err:e}");
        }
    }
}

#[test]
fn normal_proxy_null_cases() {
    // translation, and rotation of a plate about its own normal
    let (mut ps, recs, _) = bound_cloud(1);
    for p in &mut ps.particles {
        p.x += Vec3::new(1.0, -2.0, 0.5);
    }
    assert!(rotation_from_normals(&ps, &recs).iter().all(|r| (r - Mat3::identity()).norm() < 1e-9));

    let bank = MaterialBank::default();
    let mut plate = ParticleSystem {
        particles: (0..25).map(|k| Particle::new(Vec3::new((k % 5) as f64 * 0.1, (k / 5) as f64 * 0.13, 0.0), 1.0, 1.0, 1, Some(k))).collect(),
        materials: bank.materials,
        rigid_velocity: Vec3::zeros(),
        voxel: 0.0,
    };
    let recs = bind(&plate, |_| Mat3::identity(), 1e-3);
    let rz = *nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), 0.7).matrix();
    for p in &mut plate.particles {
        p.x = rz * p.x;
    }
    for (r, rec) in rotation_from_normals(&plate, &recs).iter().zip(&recs) {
        assert!(rec.degenerate || (r - Mat3::identity()).norm() < 1e-9);
    }
}

/// Polar rotation via `F (FᵀF)^{-1/2}`.
fn polar_oracle(f: &Mat3) -> Mat3 {
    let e = nalgebra::SymmetricEigen::new(f.transpose() * f);
    let inv_sqrt = e.eigenvectors * Mat3::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.sqrt())) * e.eigenvectors.transpose();
    f * inv_sqrt
}

#[test]
fn deformation_rotation_conventions() {
    let rx = *nalgebra::Rotation3::from_axis_angle(&Vec3::x_axis(), 30f64.to_radians()).matrix();
    let polar = deformation_rotation(&rx, DeformationConvention::Polar);
    let vut = deformation_rotation(&rx, DeformationConvention::Vut);
    assert!((polar - polar_oracle(&rx)).norm() < 1e-12);
    assert!((polar - rx).norm() < 1e-12);
    assert!((vut - rx.transpose()).norm() < 1e-12);
    for conv in [DeformationConvention::Polar, DeformationConvention::Vut] {
        assert!((deformation_rotation(&Mat3::identity(), conv) - Mat3::identity()).norm() < 1e-12);
        let stretch = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        assert!((deformation_rotation(&stretch, conv) - Mat3::identity()).norm() < 1e-12);
    }
    // a general deformation: rotation times stretch
    let f = rx * Mat3::new(1.3, 0.2, 0.0, 0.2, 0.9, 0.1, 0.0, 0.1, 1.1);
    assert!((deformation_rotation(&f, DeformationConvention::Polar) - polar_oracle(&f)).norm() < 1e-10);
    assert_eq!(deformation_rotation(&Mat3::from_element(f64::NAN), DeformationConvention::Polar), Mat3::identity());
}

#[test]
fn frame_zero_is_the_input() {
    let scene = sphere_shell(200, 0.3, Vec3::new(0.0, 0.0, 0.5));
    let sel = SegmentSelection::from_indices((0..150).collect());
    let bank = MaterialBank::default();
    let cfg = SimConfig { grid_res: 24, substeps_per_frame: 5, ..Default::default() };
    let out = simulate(&scene, &sel, &vec![1; 150], &bank, &cfg, &InfillConfig { grid_res: 12, ..Default::default() }, 3, |_| true).unwrap();
    assert_eq!(out.frames.len(), 3);
    assert_eq!(out.frames[0], scene);
    // unselected Gaussians never move
    for f in &out.frames {
        assert_eq!(&f.positions[150..], &scene.positions[150..]);
    }
    assert_ne!(out.frames[2].positions[0], scene.positions[0]);
}

#[test]
fn rigid_part_stays_put() {
    // a rigid "vase" column with an elastic "flower" blob on top, pushed sideways
    let mut s = GaussianScene::new(0, 0);
    for k in 0..200 {
        let (a, h) = ((k % 20) as f64 / 20.0 * std::f64::consts::TAU, (k / 20) as f64 * 0.03);
        s.push(Gaussian::isotropic([(0.08 * a.cos()) as f32, (0.08 * a.sin()) as f32, h as f32], 0.02, 0.9, [0.9; 3], 0, 0)).unwrap();
    }
    let top = sphere_shell(150, 0.1, Vec3::new(0.0, 0.0, 0.4));
    for i in 0..top.len() {
        s.append_from(&top, i);
    }
    let sel = SegmentSelection::from_indices((0..s.len()).collect());
    let bank = MaterialBank::default();
    let mut mats = vec![bank.index_of("rigid").unwrap(); 200];
    mats.extend(vec![bank.index_of("elastic").unwrap(); 150]);
    let cfg = SimConfig { grid_res: 32, substeps_per_frame: 20, gravity: [0.0; 3], initial_velocity: [1.0, 0.0, 0.0], ..Default::default() };
    let out = simulate(&s, &sel, &mats, &bank, &cfg, &InfillConfig { grid_res: 16, ..Default::default() }, 6, |_| true).unwrap();
    let last = out.frames.last().unwrap();
    for i in 0..200 {
        assert!((last.position(i) - s.position(i)).norm() < 1e-6);
        assert_eq!(last.rotations[i], s.rotations[i]);
    }
    let moved: f64 = (200..350).map(|i| (last.position(i) - s.position(i)).norm()).sum::<f64>() / 150.0;
    assert!(moved > 1e-3, "flowers moved {moved}");
}

#[test]
fn ceramic_vase_is_rigid_flowers_default() {
    use featsplat::decompose::QuerySpec;
    use featsplat::distill::DecodeHead;
    use featsplat::io::Vocab;
    let dim = 6;
    let words = ["objects", "things", "ceramic", "flower", "wood", "steel"];
    let mut vocab = Vocab::default();
    for (k, w) in words.iter().enumerate() {
        let mut e = vec![0.0f32; dim];
        e[k] = 1.0;
        vocab.insert(*w, e);
    }
    let mut s = GaussianScene::new(0, dim);
    let mut truth = Vec::new();
    for k in 0..40 {
        let vase = k % 3 != 0;
        let mut g = Gaussian::isotropic([k as f32 * 0.01, 0.0, 0.0], 0.01, 0.9, [0.5; 3], 0, dim);
        let hot = if vase { 2 } else { 3 };
        g.feature = (0..dim).map(|j| half::f16::from_f32(if j == hot { 1.0 } else { 0.05 })).collect();
        s.push(g).unwrap();
        truth.push(vase);
    }
    let head = DecodeHead::passthrough(dim, 2 * dim, 0).unwrap();
    let bank = MaterialBank::default();
    let (rigid, elastic) = (bank.index_of("rigid").unwrap(), bank.index_of("elastic").unwrap());
    let sel = SegmentSelection::from_indices((0..40).collect());
    let m = assign_materials(&s, &sel, &head, &vocab, &bank, elastic, &QuerySpec::default()).unwrap();
    for (k, &vase) in truth.iter().enumerate() {
        assert_eq!(m[k], if vase { rigid } else { elastic }, "gaussian {k}");
    }
    // no rigid alias in the vocabulary: everything takes the default
    let mut v2 = Vocab::default();
    for w in ["objects", "things", "flower"] {
        v2.insert(w, vocab.get(w).unwrap().to_vec());
    }
    let m = assign_materials(&s, &sel, &head, &v2, &bank, elastic, &QuerySpec::default()).unwrap();
    assert!(m.iter().all(|&x| x == elastic));
    assert!(assign_materials(&s, &SegmentSelection::default(), &head, &vocab, &bank, elastic, &QuerySpec::default()).is_err());
}
