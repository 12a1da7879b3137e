use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spheremorse::energy::*;
use spheremorse::mesh::*;
use spheremorse::spectrum::*;
use spheremorse::Error;

fn mesh(level: usize) -> Arc<SphereMesh> {
    Arc::new(build_icosphere(level).unwrap())
}

fn smooth_random_map(mesh: Arc<SphereMesh>, n: usize, seed: u64) -> SphereMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.4..0.4));
    let k: Vec<[f64; 2]> = (0..=n).map(|_| std::array::from_fn(|_| rng.random_range(-0.15..0.15))).collect();
    SphereMap::from_fn(mesh, n, |x| {
        let y = dilation_chart(&t, x);
        (0..=n).map(|c| if c < 3 { y[c] } else { 0.0 } + k[c][0] * y.x * y.y + k[c][1] * y.z).collect()
    })
    .unwrap()
}

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn hessian_vector_products_match_gradient_differences() {
    let m = mesh(2);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..4 {
        let map = smooth_random_map(m.clone(), 4, seed);
        for alpha in [1.0, 1.1, 1.5] {
            let h = euclidean_hessian(&map, alpha).unwrap();
            assert!(h.asymmetry() <= 1e-12 * h.max_abs());
            let v = gaussian(&mut rng, map.values().len());
            let hv = h.mul_vec(&v);
            let step = 1e-5;
            let shifted = |s: f64| -> Vec<f64> {
                let vals: Vec<f64> = map.values().iter().zip(&v).map(|(a, b)| a + s * b).collect();
                alpha_energy_gradient_raw(&map, &vals, alpha).unwrap()
            };
            let (gp, gm) = (shifted(step), shifted(-step));
            let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect();
            let err: f64 = fd.iter().zip(&hv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err <= 1e-4 * scale, "alpha {alpha}: {err} vs {scale}");
        }
    }
}

#[test]
fn tangent_pencil_is_the_second_derivative_along_retractions() {
    let map = smooth_random_map(mesh(2), 3, 5);
    let alpha = 1.2;
    let pencil = assemble_second_variation(&map, alpha).unwrap();
    assert_eq!(pencil.fiber, 3);
    assert_eq!(pencil.hessian.asymmetry(), 0.0);
    assert_eq!(pencil.mass.asymmetry(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coeffs = gaussian(&mut rng, pencil.dim());
    let field = pencil.lift(&coeffs);
    let back = pencil.restrict(&field);
    assert!(back.iter().zip(&coeffs).all(|(a, b)| (a - b).abs() < 1e-12));

    let along = |s: f64| {
        let vals = map.values().iter().zip(&field).map(|(a, b)| a + s * b).collect();
        alpha_energy(&map.with_values(vals).unwrap(), alpha).unwrap()
    };
    let h = 1e-4;
    let second = (along(h) - 2.0 * along(0.0) + along(-h)) / (h * h);
    let quad = pencil.hessian.bilinear(&coeffs, &coeffs);
    assert!((second - quad).abs() <= 1e-4 * quad.abs(), "{second} vs {quad}");
}

#[test]
fn constant_map_is_a_stable_minimum() {
    let map = SphereMap::constant(mesh(3), 4, &[0.0, 0.6, 0.0, 0.8, 0.0]).unwrap();
    let pencil = assemble_second_variation(&map, 1.1).unwrap();
    let report = morse_index_nullity(&pencil, 10, 1e-6).unwrap();
    assert!(report.converged);
    assert_eq!(report.index, 0);
    // constants in every tangent direction of the target
    assert_eq!(report.nullity, 4);
    assert!(report.eigenvalues[4] > 1.0);
}

#[test]
fn equator_second_variation_in_s4() {
    let tau = calibrate_tau(3).unwrap();
    assert!(tau.largest_null < tau.tau && tau.tau < tau.smallest_positive);
    let map = SphereMap::equator(mesh(3), 4).unwrap();
    let pencil = assemble_second_variation(&map, 1.0).unwrap();
    assert!(pencil.criticality < 0.05);
    let report = morse_index_nullity(&pencil, 19, tau.tau).unwrap();
    assert!(report.converged);
    assert_eq!(report.index, 2);
    assert_eq!(report.nullity, 12);
    assert!(report.index + report.nullity <= report.k);
    for l in &report.eigenvalues[..2] {
        assert!((l + 2.0).abs() <= 0.05 * 2.0, "{l}");
    }
    assert!(report.eigenvalues.windows(2).all(|w| w[0] <= w[1]));

    // the count is stable across a decade of thresholds
    for factor in [0.32, 1.0, 3.2] {
        let r = report.with_tau(tau.tau * factor);
        assert_eq!((r.index, r.nullity), (2, 12), "factor {factor}");
    }
    assert_eq!(report.classify(-2.0), "negative");
    assert_eq!(report.classify(0.0), "null");
    assert_eq!(report.classify(4.0), "positive");
}

#[test]
fn equator_index_persists_for_alpha_slightly_above_one() {
    let tau = calibrate_tau(3).unwrap().tau;
    let map = SphereMap::equator(mesh(3), 4).unwrap();
    let at = |alpha: f64| morse_index_nullity(&assemble_second_variation(&map, alpha).unwrap(), 19, tau).unwrap();
    assert_eq!(at(1.0).index, 2);
    assert_eq!(at(1.01).index, 2);
}

#[test]
fn normal_pencil_of_the_equator() {
    for n in [4, 5] {
        let map = SphereMap::equator(mesh(3), n).unwrap();
        let pencil = normal_second_variation(&map).unwrap();
        assert_eq!(pencil.fiber, n - 2);
        let report = morse_index_nullity(&pencil, 4 * (n - 2) + 2, 0.1).unwrap();
        assert!(report.converged);
        assert_eq!(report.index, n - 2);
        assert_eq!(report.nullity, 3 * (n - 2));
        for l in &report.eigenvalues[..n - 2] {
            assert!((l + 2.0).abs() <= 0.05 * 2.0);
        }
    }
}

#[test]
fn normal_eigenvalues_converge_under_refinement() {
    let errors: Vec<f64> = (2..=4)
        .map(|level| {
            let map = SphereMap::equator(mesh(level), 3).unwrap();
            let report = morse_index_nullity(&normal_second_variation(&map).unwrap(), 10, 0.1).unwrap();
            // −2 once, 0 three times, then the first 4
            (report.eigenvalues[0] + 2.0).abs().max((report.eigenvalues[4] - 4.0).abs())
        })
        .collect();
    let order = |a: f64, b: f64| (a / b).log2();
    assert!(order(errors[0], errors[1]) >= 1.5, "{errors:?}");
    assert!(order(errors[1], errors[2]) >= 1.5, "{errors:?}");
}

#[test]
fn normal_pencil_rejects_collapsed_maps() {
    let map = SphereMap::constant(mesh(2), 4, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    match normal_second_variation(&map) {
        Err(Error::Degeneracy { elements }) => assert_eq!(elements.len(), map.mesh().face_count()),
        other => panic!("expected degeneracy, got {other:?}"),
    }
    let low = SphereMap::equator(mesh(1), 2).unwrap();
    assert!(normal_second_variation(&low).is_err());
}

#[test]
fn weight_invariance_of_schrodinger_spectra() {
    let m = mesh(3);
    let phi = vec![2.0; m.vertex_count()];
    let same = scaling_invariance_check(&m, &phi, &vec![1.0; m.vertex_count()], 9).unwrap();
    assert_eq!(same.discrepancy, 0.0);
    let scaled = scaling_invariance_check(&m, &phi, &vec![3.0; m.vertex_count()], 9).unwrap();
    assert!(scaled.discrepancy <= 1e-10);
    assert!((scaled.unweighted[0] + 2.0).abs() < 1e-8);

    let mut previous = f64::INFINITY;
    for level in [2, 3, 4] {
        let m = mesh(level);
        let w: Vec<f64> = m.vertices().iter().map(|x| 1.25 + 0.75 * (1.3 * x.x + 0.8 * x.y * x.z + 0.5 * x.z).sin()).collect();
        let r = scaling_invariance_check(&m, &vec![2.0; m.vertex_count()], &w, 9).unwrap();
        assert!(r.discrepancy < previous, "level {level}: {}", r.discrepancy);
        previous = r.discrepancy;
    }
    assert!(previous <= 0.05);

    assert!(scaling_invariance_check(&m, &phi, &vec![0.0; m.vertex_count()], 9).is_err());
    assert!(scaling_invariance_check(&m, &phi[1..], &vec![1.0; m.vertex_count()], 9).is_err());
}

#[test]
fn cutoff_profile_values() {
    for eps in [0.5, 0.1, 0.01] {
        let phi = cutoff_profile(eps).unwrap();
        assert_eq!(phi(eps * eps), 0.0);
        assert_eq!(phi(eps), 1.0);
        assert!((phi(eps.powf(1.5)) - 0.5).abs() < 1e-14);
        assert_eq!(phi(0.0), 0.0);
        assert_eq!(phi(2.0), 1.0);
        let grid: Vec<f64> = (0..=1000).map(|k| phi(k as f64 / 1000.0)).collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        assert!(grid.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(cutoff_profile(0.0).is_err());
    assert!(cutoff_profile(1.0).is_err());
}

#[test]
fn cutoff_energy_matches_the_closed_form() {
    assert!((cutoff_dirichlet_energy((-1.0f64).exp()).unwrap() - 2.0 * PI).abs() < 1e-10);
    assert!((cutoff_dirichlet_energy(0.1).unwrap() - 2.728752).abs() < 1e-6);
    let energies: Vec<f64> = [0.5, 0.1, 0.01, 1e-4, 1e-8].iter().map(|&e| cutoff_dirichlet_energy(e).unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[1] < w[0]));
    assert!(energies[4] < 0.35);
    assert!(cutoff_dirichlet_energy(1.5).is_err());
}

#[test]
fn index_energy_constant() {
    let eq = IndexSample { energy: 4.0 * PI, index: 2 };
    let c = index_energy_diagnostic(&[eq]).unwrap();
    assert!(c <= 3.0 / (4.0 * PI) + 1e-15);
    let cover = IndexSample { energy: 8.0 * PI, index: 4 };
    let c2 = index_energy_diagnostic(&[eq, cover]).unwrap();
    assert!((c2 - 5.0 / (8.0 * PI)).abs() < 1e-15);
    assert!(matches!(index_energy_diagnostic(&[]), Err(Error::Precondition(_))));
}
