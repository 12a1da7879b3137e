use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spheremorse::energy::*;
use spheremorse::flow::*;
use spheremorse::mesh::*;
use spheremorse::Error;

fn mesh(level: usize) -> Arc<SphereMesh> {
    Arc::new(build_icosphere(level).unwrap())
}

/// Equator into `Sⁿ` precomposed with a random Möbius dilation. It stays in
/// the totally geodesic `S²`, which the flow preserves.
fn distorted(mesh: Arc<SphereMesh>, n: usize, seed: u64) -> SphereMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.6..0.6));
    SphereMap::equator(mesh, n).unwrap().precompose(|x| dilation_chart(&t, x)).unwrap()
}

fn near_constant(mesh: Arc<SphereMesh>, n: usize, seed: u64) -> SphereMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<[f64; 3]> = (0..=n).map(|_| std::array::from_fn(|_| rng.random_range(-0.05..0.05))).collect();
    SphereMap::from_fn(mesh, n, |x| {
        (0..=n)
            .map(|c| if c == 0 { 1.0 } else { 0.0 } + k[c][0] * x.x + k[c][1] * x.y * x.z + k[c][2] * x.z)
            .collect()
    })
    .unwrap()
}

#[test]
fn projection_kills_normal_components() {
    let map = distorted(mesh(2), 4, 1);
    let parallel = map.values().to_vec();
    assert!(map.project_tangent(&parallel).unwrap().norm() < 1e-13);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let raw: Vec<f64> = (0..map.values().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let once = map.project_tangent(&raw).unwrap();
    let twice = map.project_tangent(&once.values).unwrap();
    for (a, b) in once.values.iter().zip(&twice.values) {
        assert!((a - b).abs() < 1e-14);
    }
    for i in 0..map.mesh().vertex_count() {
        let ip: f64 = once.vector(i).iter().zip(map.value(i)).map(|(a, b)| a * b).sum();
        assert!(ip.abs() < 1e-14);
    }
}

#[test]
fn equator_is_already_critical_at_mesh_resolution() {
    let map = SphereMap::equator(mesh(3), 4).unwrap();
    let cfg = FlowConfig { abs_tol: 0.1, ..FlowConfig::with_alpha(1.1) };
    let rec = descend(&map, &cfg).unwrap();
    assert!(rec.converged);
    assert!(rec.iterations <= 5, "{}", rec.iterations);
    assert!(rec.grad_norm <= 0.1);
}

#[test]
fn equator_descends_to_the_discrete_critical_point() {
    let map = SphereMap::equator(mesh(3), 4).unwrap();
    let rec = descend(&map, &FlowConfig::with_alpha(1.1)).unwrap();
    assert!(rec.converged);
    assert!((rec.energy - 4.0 * PI).abs() < 0.01 * 4.0 * PI, "{}", rec.energy);
}

#[test]
fn near_constant_maps_collapse() {
    let map = near_constant(mesh(3), 4, 7);
    let start = alpha_energy(&map, 1.1).unwrap();
    let rec = descend(&map, &FlowConfig::with_alpha(1.1)).unwrap();
    assert!(rec.converged);
    assert!(rec.alpha_energy <= 1e-6, "{} from {start}", rec.alpha_energy);
}

#[test]
fn distorted_degree_one_map_reaches_the_equator_energy() {
    let map = distorted(mesh(3), 4, 11);
    let cfg = FlowConfig { max_iterations: 3000, ..FlowConfig::with_alpha(1.05) };
    let rec = descend(&map, &cfg).unwrap();
    assert!(rec.converged);
    assert!((rec.energy - 4.0 * PI).abs() <= 0.02 * 4.0 * PI, "{}", rec.energy);

    let trace = rec.energy_trace();
    assert!(trace[0] < alpha_energy(&map, 1.05).unwrap());
    assert!(trace.windows(2).all(|w| w[1] < w[0]));

    let (e1, e2) = rec.pseudogradient_constants();
    assert!(e1.is_finite() && e1 > 0.0);
    assert!(e2 > 0.0);
    assert_eq!(rec.pseudogradient_log.len(), rec.iterations);
}

#[test]
fn mesh_symmetric_rotation_commutes_with_descent() {
    // a fifth of a turn about the polar axis maps the icosphere to itself
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * PI / 5.0);
    let base = |x: &Vector3<f64>| {
        let y = dilate(0, 0.3, &dilate(1, -0.5, x));
        vec![y.x, y.y, y.z, 0.1 * y.x * y.z]
    };
    let m = mesh(2);
    let a = SphereMap::from_fn(m.clone(), 3, base).unwrap();
    let b = SphereMap::from_fn(m, 3, |x| base(&(rot * x))).unwrap();
    let cfg = FlowConfig { max_iterations: 40, ..FlowConfig::with_alpha(1.1) };
    let ra = descend(&a, &cfg).unwrap();
    let rb = descend(&b, &cfg).unwrap();
    let (ta, tb) = (ra.energy_trace(), rb.energy_trace());
    assert_eq!(ta.len(), tb.len());
    for (x, y) in ta.iter().zip(&tb) {
        assert!((x - y).abs() <= 1e-8, "{x} {y}");
    }
}

#[test]
fn generic_rotation_agrees_to_discretization_error() {
    let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
    let base = |x: &Vector3<f64>| {
        let y = dilate(2, 0.5, x);
        vec![y.x, y.y, y.z, 0.0, 0.0]
    };
    let mut gaps = Vec::new();
    for level in [2, 3] {
        let m = mesh(level);
        let a = descend(&SphereMap::from_fn(m.clone(), 4, base).unwrap(), &FlowConfig::with_alpha(1.1)).unwrap();
        let b = descend(&SphereMap::from_fn(m, 4, |x| base(&(rot * x))).unwrap(), &FlowConfig::with_alpha(1.1)).unwrap();
        gaps.push((a.alpha_energy - b.alpha_energy).abs() / a.alpha_energy);
    }
    assert!(gaps[1] < 0.01, "{gaps:?}");
}

#[test]
fn stagnation_carries_the_last_record() {
    // a single admissible step length that cannot decrease anything
    let map = distorted(mesh(2), 4, 3);
    let cfg = FlowConfig { step_init: 1e-15, ..FlowConfig::with_alpha(1.1) };
    match descend(&map, &cfg) {
        Err(Error::Stagnation { record, .. }) => {
            assert!(!record.converged);
            assert_eq!(record.iterations, 0);
        }
        other => panic!("expected stagnation, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let map = SphereMap::equator(mesh(1), 3).unwrap();
    for cfg in [
        FlowConfig { armijo_c1: 0.7, ..FlowConfig::default() },
        FlowConfig { step_shrink: 1.5, ..FlowConfig::default() },
        FlowConfig { alpha: 0.5, ..FlowConfig::default() },
        FlowConfig { grad_tol: -1.0, ..FlowConfig::default() },
    ] {
        assert!(matches!(descend(&map, &cfg), Err(Error::Config { .. })), "{cfg:?}");
    }
}

#[test]
fn continuation_keeps_the_equator_energy() {
    let map = SphereMap::equator(mesh(3), 4).unwrap();
    let cfg = FlowConfig::with_alpha(1.2);
    let start = descend(&map, &cfg).unwrap();
    let out = continue_in_alpha(&start, &[1.2, 1.1, 1.05, 1.01], &cfg, 1e-8).unwrap();
    assert!(out.failure.is_none(), "{:?}", out.failure);
    assert_eq!(out.records.len(), 4);
    let e0 = out.records[0].energy;
    for r in &out.records {
        assert!(r.converged);
        assert!((r.energy - e0).abs() <= 0.01 * e0);
        assert!(r.center_of_mass_drift.is_some());
        assert!(relative_center_of_mass(r.map(), r.alpha).unwrap() <= 1e-4);
    }
    assert!(continue_in_alpha(&start, &[], &cfg, 1e-8).unwrap().records.is_empty());
    assert!(continue_in_alpha(&start, &[1.1, 1.2], &cfg, 1e-8).is_err());
}

#[test]
fn continuation_from_a_distorted_start_approaches_a_harmonic_map() {
    let m = mesh(3);
    let cfg = FlowConfig { max_iterations: 3000, ..FlowConfig::with_alpha(1.1) };
    let start = descend(&distorted(m.clone(), 4, 5), &cfg).unwrap();
    let out = continue_in_alpha(&start, &[1.1, 1.05, 1.01], &cfg, 1e-8).unwrap();
    assert!(out.failure.is_none(), "{:?}", out.failure);
    let last = out.records.last().unwrap();
    let reference = harmonic_residual(&SphereMap::equator(m, 4).unwrap()).unwrap();
    assert!(last.harmonic_residual <= 10.0 * reference, "{} vs {reference}", last.harmonic_residual);
}

#[test]
fn harmonic_residual_behaviour() {
    let m = mesh(3);
    assert_eq!(harmonic_residual(&SphereMap::constant(m.clone(), 4, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()).unwrap(), 0.0);
    assert!(harmonic_residual(&distorted(m, 4, 9)).unwrap() > 0.0);
    let r: Vec<f64> = (3..=5).map(|l| harmonic_residual(&SphereMap::equator(mesh(l), 4).unwrap()).unwrap()).collect();
    assert!(r[0] > r[1] && r[1] > r[2], "{r:?}");
    assert!(r[2] < 0.01, "{r:?}");
}

#[test]
fn uniform_energy_has_no_concentration() {
    let eq = SphereMap::equator(mesh(4), 4).unwrap();
    assert!(detect_concentration(&eq, 1.0, 0.2).unwrap().is_empty());
    let c = SphereMap::constant(mesh(4), 4, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(detect_concentration(&c, 1.0, 0.2).unwrap().is_empty());
    assert!(detect_concentration(&eq, 1.0, 2.0).is_err());
}

#[test]
fn dilated_equator_shows_one_bubble() {
    let bubble = SphereMap::equator(mesh(7), 4).unwrap().precompose(|x| dilate(2, 5.0, x)).unwrap();
    let found = detect_concentration(&bubble, 1.0, 0.2).unwrap();
    assert_eq!(found.len(), 1, "{found:?}");
    assert!(found[0].local_energy >= 0.9 * 4.0 * PI, "{}", found[0].local_energy);
    assert!(found[0].center[2].abs() > 0.95);
}
