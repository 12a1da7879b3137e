use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spheremorse::energy::*;
use spheremorse::linalg::{symmetric_smallest, EigenOptions};
use spheremorse::mesh::*;

fn mesh(level: usize) -> Arc<SphereMesh> {
    Arc::new(build_icosphere(level).unwrap())
}

fn random_map(mesh: Arc<SphereMesh>, n: usize, seed: u64) -> SphereMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // smooth random map: equator plus a few low-order modes
    let coeffs: Vec<[f64; 4]> = (0..=n).map(|_| std::array::from_fn(|_| rng.random_range(-0.6..0.6))).collect();
    SphereMap::from_fn(mesh, n, |x| {
        (0..=n)
            .map(|c| {
                let base = if c < 3 { x[c] } else { 0.0 };
                let k = &coeffs[c];
                base + k[0] + k[1] * x.x * x.y + k[2] * x.z * x.z + k[3] * (2.0 * x.y).sin()
            })
            .collect()
    })
    .unwrap()
}

#[test]
fn icosphere_counts() {
    assert_eq!(build_icosphere(0).unwrap().vertex_count(), 12);
    assert_eq!(build_icosphere(0).unwrap().face_count(), 20);
    assert_eq!(build_icosphere(1).unwrap().vertex_count(), 42);
    assert_eq!(build_icosphere(1).unwrap().face_count(), 80);
    for level in 0..=5 {
        let m = build_icosphere(level).unwrap();
        let chi = m.vertex_count() as i64 - m.edge_count() as i64 + m.face_count() as i64;
        assert_eq!(chi, 2);
        m.validate().unwrap();
    }
}

#[test]
fn pencil_mass_and_constants() {
    let m = mesh(4);
    let p = assemble_pencil(&m).unwrap();
    let total = p.mass.sum();
    assert!(total > 4.0 * PI * 0.999 && total < 4.0 * PI * 1.001, "{total}");
    assert!((total - m.area()).abs() < 1e-11);
    let k1 = p.stiffness.mul_vec(&vec![1.0; m.vertex_count()]);
    assert!(k1.iter().all(|v| v.abs() < 1e-13));
    assert_eq!(p.mass.asymmetry(), 0.0);
    assert_eq!(p.stiffness.asymmetry(), 0.0);
}

#[test]
fn laplace_spectrum_on_level_four() {
    let m = mesh(4);
    let p = assemble_pencil(&m).unwrap();
    let eig = symmetric_smallest(&p.stiffness, &p.mass, &EigenOptions::new(10)).unwrap();
    assert!(eig.converged);
    assert!(eig.values[0].abs() < 1e-8);
    for v in &eig.values[1..4] {
        assert!((v - 2.0).abs() < 0.02, "{v}");
    }
    for v in &eig.values[4..9] {
        assert!((v - 6.0).abs() < 0.06, "{v}");
    }
}

#[test]
fn area_one_view() {
    let m = build_icosphere(3).unwrap();
    let one = to_area_one(&m);
    assert_eq!(one.convention(), AreaConvention::AreaOne);
    assert!((one.area() * one.scale_factor() - 1.0).abs() < 1e-12);
    assert_eq!(one.face_count(), m.face_count());
    let a = SphereMap::equator(Arc::new(m.clone()), 4).unwrap();
    let b = SphereMap::equator(Arc::new(one.clone()), 4).unwrap();
    assert!((dirichlet_energy(&a) - dirichlet_energy(&b)).abs() < 1e-12);
    // metric scaling: eigenvalues of the area-one metric are A times larger
    let p = assemble_pencil(&m).unwrap();
    let scaled_mass = p.mass.linear_combination(one.scale_factor(), &p.mass, 0.0);
    let unit = symmetric_smallest(&p.stiffness, &p.mass, &EigenOptions::new(4)).unwrap();
    let rescaled = symmetric_smallest(&p.stiffness, &scaled_mass, &EigenOptions::new(4)).unwrap();
    let ratio = rescaled.values[1] / unit.values[1];
    assert!((ratio - m.area()).abs() < 1e-6 * m.area());
    assert!((ratio - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
}

#[test]
fn refinement_order_of_area_and_first_eigenvalue() {
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for level in 3..=5 {
        let m = mesh(level);
        let p = assemble_pencil(&m).unwrap();
        let eig = symmetric_smallest(&p.stiffness, &p.mass, &EigenOptions::new(5)).unwrap();
        let cluster = &eig.values[1..4];
        let spread = cluster.iter().cloned().fold(f64::MIN, f64::max) - cluster.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-8, "degenerate λ₁ cluster split by {spread}");
        // element areas are exact; the flat triangles carry the geometric error
        assert!((m.area() - 4.0 * PI).abs() < 1e-11);
        let flat: f64 = m.elements().iter().map(|e| e.flat_area).sum();
        errs.push(((flat - 4.0 * PI).abs(), (eig.values[1] - 2.0).abs()));
        hs.push(m.max_edge_length());
    }
    for k in 0..2 {
        let rate = |e: fn(&(f64, f64)) -> f64| (e(&errs[k]) / e(&errs[k + 1])).ln() / (hs[k] / hs[k + 1]).ln();
        assert!(rate(|e| e.0) >= 1.5, "area order {}", rate(|e| e.0));
        assert!(rate(|e| e.1) >= 1.5, "eigenvalue order {}", rate(|e| e.1));
    }
}

#[test]
fn dirichlet_energy_of_equator_and_rotation_invariance() {
    let m = mesh(4);
    let eq = SphereMap::equator(m.clone(), 4).unwrap();
    let e = dirichlet_energy(&eq);
    assert!((e - 4.0 * PI).abs() < 0.005 * 4.0 * PI, "{e}");
    // rotating the target values leaves the energy unchanged exactly
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 0.7);
    let rotated = SphereMap::from_fn(m.clone(), 4, |x| {
        let y = rot * x;
        vec![y.x, y.y, y.z, 0.0, 0.0]
    })
    .unwrap();
    assert!((dirichlet_energy(&rotated) - e).abs() < 1e-10);
}

#[test]
fn alpha_energy_values() {
    let m = mesh(4);
    let c = SphereMap::constant(m.clone(), 4, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(alpha_energy(&c, 1.7).unwrap().abs() < 1e-14);
    let eq = SphereMap::equator(m.clone(), 4).unwrap();
    for alpha in [1.05, 1.2, 1.5] {
        let exact = ((1.0 + 8.0 * PI).powf(alpha) - 1.0) / 2.0;
        let v = alpha_energy(&eq, alpha).unwrap();
        assert!((v - exact).abs() < 0.01 * exact, "{alpha}: {v} vs {exact}");
    }
    let f = random_map(m, 4, 9);
    assert!((alpha_energy(&f, 1.0).unwrap() - dirichlet_energy(&f)).abs() < 1e-9);
    let mut last = 0.0;
    for alpha in [1.0, 1.01, 1.1, 1.5, 2.0] {
        let v = alpha_energy(&f, alpha).unwrap();
        assert!(v >= last);
        last = v;
    }
    assert!(alpha_energy(&f, 0.9).is_err());
}

#[test]
fn gradient_matches_finite_differences() {
    let m = mesh(2);
    for seed in 0..10u64 {
        let f = random_map(m.clone(), 4, seed);
        let alpha = 1.0 + 0.05 * seed as f64;
        let g = alpha_energy_euclidean_gradient(&f, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for _ in 0..3 {
            let dir: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-5;
            let shifted = |s: f64| {
                let v: Vec<f64> = f.values().iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                // raw perturbation without renormalization: the gradient is
                // the derivative of the unconstrained discrete functional
                spheremorse::energy::alpha_energy_raw(&f, &v, alpha).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let exact: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "seed {seed}: {fd} vs {exact}");
        }
    }
}

#[test]
fn equator_is_critical() {
    let m = mesh(4);
    let eq = SphereMap::equator(m, 4).unwrap();
    for alpha in [1.0, 1.1] {
        let g = alpha_energy_gradient(&eq, alpha).unwrap();
        let e = alpha_energy_euclidean_gradient(&eq, alpha).unwrap();
        let scale = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(g.norm() < 0.05 * scale, "{} vs {}", g.norm(), scale);
    }
}

#[test]
fn tangent_projection() {
    let m = mesh(2);
    let f = random_map(m, 3, 1);
    let parallel = f.values().to_vec();
    assert!(f.project_tangent(&parallel).unwrap().norm() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw: Vec<f64> = (0..parallel.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let once = f.project_tangent(&raw).unwrap();
    for i in 0..f.mesh().vertex_count() {
        let d: f64 = once.vector(i).iter().zip(f.value(i)).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-10);
    }
    let twice = f.project_tangent(&once.values).unwrap();
    for (a, b) in once.values.iter().zip(&twice.values) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn center_of_mass_symmetries() {
    let m = mesh(3);
    let c = SphereMap::constant(m.clone(), 4, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert!(center_of_mass(&c, 1.1).unwrap().norm() < 1e-20);
    let eq = SphereMap::equator(m.clone(), 4).unwrap();
    assert!(center_of_mass(&eq, 1.1).unwrap().norm() < 1e-8);
    // antipodal precomposition negates the center of mass; the mesh is
    // antipodally symmetric so no resampling error enters
    let f = random_map(m.clone(), 4, 5);
    let g = f.precompose(|x| -x).unwrap();
    let (a, b) = (center_of_mass(&f, 1.1).unwrap(), center_of_mass(&g, 1.1).unwrap());
    assert!((a + b).norm() < 1e-9, "{a} {b}");
}

#[test]
fn recenter_inverts_a_known_dilation() {
    let m = mesh(4);
    let eq = SphereMap::equator(m.clone(), 4).unwrap();
    let same = recenter(&eq, 1.05).unwrap();
    assert_eq!(same.params, [0.0; 3]);
    assert_eq!(same.map.values(), eq.values());
    let dilated = SphereMap::from_fn(m, 4, |x| {
        let y = dilate(2, 0.3, x);
        vec![y.x, y.y, y.z, 0.0, 0.0]
    })
    .unwrap();
    let r = recenter(&dilated, 1.05).unwrap();
    assert!(r.residual <= 1e-8);
    assert!((r.params[2] + 0.3).abs() < 0.01, "{:?}", r.params);
    assert!(r.params[0].abs() < 0.01 && r.params[1].abs() < 0.01);
    assert!((dirichlet_energy(&r.map) - dirichlet_energy(&dilated)).abs() < 0.01 * 4.0 * PI);
}

#[test]
fn axisymmetric_energy_values() {
    let zero = axisymmetric_alpha_energy(|_| 0.0, 1.2, 10.0).unwrap();
    assert!((zero - 2.0 * PI * 10f64.tanh()).abs() < 1e-9);
    let mut last = 0.0;
    for u in [5.0, 10.0, 20.0] {
        let v = axisymmetric_alpha_energy(|_| 1.0, 1.2, u).unwrap();
        assert!(v > last);
        last = v;
    }
    assert!(axisymmetric_alpha_energy(|_| 1.0, 1.0, 5.0).is_err());
}

#[test]
fn rotation_of_domain_points_preserves_energy_under_refinement() {
    let rot = Rotation3::from_euler_angles(0.4, 0.9, -0.2);
    let mut diffs = Vec::new();
    for level in [3, 4] {
        let m = mesh(level);
        let f = |x: &Vector3<f64>| vec![x.x, x.y * x.z, x.z, 0.3 * x.x * x.y, 1.0];
        let a = SphereMap::from_fn(m.clone(), 4, f).unwrap();
        let b = SphereMap::from_fn(m, 4, |x| f(&(rot * x))).unwrap();
        diffs.push((dirichlet_energy(&a) - dirichlet_energy(&b)).abs());
    }
    assert!(diffs[1] < diffs[0] || diffs[1] < 1e-10, "{diffs:?}");
}
