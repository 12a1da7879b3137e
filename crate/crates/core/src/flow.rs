//! Projected pseudogradient descent for the α-energy, continuation in α and
//! detection of energy concentration.

use serde::{Deserialize, Serialize};

use crate::energy::{
    alpha_energy, alpha_energy_gradient, center_of_mass, dirichlet_energy, element_density, mean_density,
    psi_alpha, recenter_with_tol, SphereMap,
};
use crate::error::{precondition, Error, Result};
use crate::linalg::{CsrMatrix, SkylineCholesky};
use crate::mesh::{assemble_pencil, SphereMesh};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop when the gradient norm falls below `grad_tol` times its
    /// initial value ...
    pub grad_tol: f64,
    /// ... or below this absolute floor.
    pub abs_tol: f64,
    pub armijo_c1: f64,
    pub step_init: f64,
    pub step_shrink: f64,
    /// Search along `(K + M)⁻¹ grad` instead of the lumped-mass gradient.
    pub preconditioned: bool,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            alpha: 1.1,
            max_iterations: 500,
            grad_tol: 1e-6,
            abs_tol: 1e-6,
            armijo_c1: 1e-4,
            step_init: 1.0,
            step_shrink: 0.5,
            preconditioned: true,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("grad_tol", self.grad_tol),
            ("abs_tol", self.abs_tol),
            ("step_init", self.step_init),
            ("step_shrink", self.step_shrink),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config { field: name.into(), message: format!("must be positive, got {v}") });
            }
        }
        if self.alpha < 1.0 {
            return Err(Error::Config { field: "alpha".into(), message: "must be at least 1".into() });
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 0.5) {
            return Err(Error::Config { field: "armijo_c1".into(), message: "must lie in (0, 0.5)".into() });
        }
        if self.step_shrink >= 1.0 {
            return Err(Error::Config { field: "step_shrink".into(), message: "must be below 1".into() });
        }
        if self.max_iterations == 0 {
            return Err(Error::Config { field: "max_iterations".into(), message: "must be positive".into() });
        }
        Ok(())
    }
}

/// One accepted descent step: the pseudogradient `X` (minus the search
/// direction), the dual norm of `dF` and the pairing `dF(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoStep {
    pub iteration: usize,
    pub alpha_energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub x_norm: f64,
    pub df_norm: f64,
    pub df_x: f64,
}

#[derive(Clone, Serialize)]
pub struct CriticalRecord {
    #[serde(skip)]
    pub map: Option<SphereMap>,
    pub alpha: f64,
    pub energy: f64,
    pub alpha_energy: f64,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|∫X ψ_α(|df|²) dA|` of `map`.
    pub center_of_mass_norm: f64,
    /// The same quantity before recentering, when recentering was applied.
    pub center_of_mass_drift: Option<f64>,
    pub harmonic_residual: f64,
    pub pseudogradient_log: Vec<PseudoStep>,
}

impl std::fmt::Debug for CriticalRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CriticalRecord")
            .field("alpha", &self.alpha)
            .field("energy", &self.energy)
            .field("alpha_energy", &self.alpha_energy)
            .field("grad_norm", &self.grad_norm)
            .field("iterations", &self.iterations)
            .field("converged", &self.converged)
            .finish_non_exhaustive()
    }
}

impl CriticalRecord {
    pub fn map(&self) -> &SphereMap {
        self.map.as_ref().expect("record carries its map")
    }

    /// `(ε₁, ε₂)` with `‖X‖ ≤ ε₁‖dF‖` and `dF(X) ≥ ε₂‖dF‖²` along the run.
    pub fn pseudogradient_constants(&self) -> (f64, f64) {
        let mut e1 = 0.0f64;
        let mut e2 = f64::INFINITY;
        for s in &self.pseudogradient_log {
            if s.df_norm > 0.0 {
                e1 = e1.max(s.x_norm / s.df_norm);
                e2 = e2.min(s.df_x / (s.df_norm * s.df_norm));
            }
        }
        (e1, e2)
    }

    /// Accepted α-energies in order.
    pub fn energy_trace(&self) -> Vec<f64> {
        self.pseudogradient_log.iter().map(|s| s.alpha_energy).collect()
    }
}

/// Factorizations reused across the iterations of one run.
struct Operators {
    mass: CsrMatrix,
    mass_chol: SkylineCholesky,
    lumped: Vec<f64>,
    stiff_mass: Option<(CsrMatrix, SkylineCholesky)>,
}

impl Operators {
    fn new(mesh: &SphereMesh, preconditioned: bool) -> Result<Self> {
        let pencil = assemble_pencil(mesh)?;
        let mass_chol = SkylineCholesky::factor(&pencil.mass)?;
        let lumped = (0..mesh.vertex_count()).map(|i| pencil.mass.row(i).map(|(_, v)| v).sum()).collect();
        let stiff_mass = if preconditioned {
            let a = pencil.stiffness.linear_combination(1.0, &pencil.mass, 1.0);
            let chol = SkylineCholesky::factor(&a)?;
            Some((a, chol))
        } else {
            None
        };
        Ok(Self { mass: pencil.mass, mass_chol, lumped, stiff_mass })
    }
}

/// Applies `solve` to each ambient coordinate of a row-major field.
fn per_coordinate(field: &[f64], d: usize, mut solve: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let nv = field.len() / d;
    let mut out = vec![0.0; field.len()];
    let mut col = vec![0.0; nv];
    for c in 0..d {
        for i in 0..nv {
            col[i] = field[i * d + c];
        }
        let s = solve(&col);
        for i in 0..nv {
            out[i * d + c] = s[i];
        }
    }
    out
}

/// `sqrt(gᵀ M⁻¹ g)` summed over coordinates.
fn dual_mass_norm(ops: &Operators, g: &[f64], d: usize) -> f64 {
    let mg = per_coordinate(g, d, |c| ops.mass_chol.solve(c));
    g.iter().zip(&mg).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

/// `M⁻¹`-norm of the tangential part of the discrete Laplacian `K f`, the
/// discrete tension field.
pub fn harmonic_residual(map: &SphereMap) -> Result<f64> {
    let ops = Operators::new(map.mesh(), false)?;
    harmonic_residual_with(&ops, map)
}

fn harmonic_residual_with(ops: &Operators, map: &SphereMap) -> Result<f64> {
    let g = alpha_energy_gradient(map, 1.0)?;
    Ok(dual_mass_norm(ops, &g.values, map.dim()))
}

fn retract(map: &SphereMap, dir: &[f64], step: f64) -> Result<SphereMap> {
    let values = map.values().iter().zip(dir).map(|(u, d)| u + step * d).collect();
    map.with_values(values)
}

/// Armijo backtracking descent with renormalization onto the sphere.
///
/// The gradient norm used for stopping is the `M⁻¹` dual norm of the
/// projected gradient. A run also counts as converged when the predicted
/// decrease drops below the rounding level of the energy. Otherwise a
/// failed line search returns a stagnation error carrying the last record.
pub fn descend(map0: &SphereMap, config: &FlowConfig) -> Result<CriticalRecord> {
    config.validate()?;
    let d = map0.dim();
    let ops = Operators::new(map0.mesh(), config.preconditioned)?;
    let mut map = map0.clone();
    let mut energy = alpha_energy(&map, config.alpha)?;
    let mut grad = alpha_energy_gradient(&map, config.alpha)?;
    let mut gnorm = dual_mass_norm(&ops, &grad.values, d);
    let g0 = gnorm;
    let target = (config.grad_tol * g0).max(config.abs_tol);
    let mut step = config.step_init;
    let mut log = Vec::new();
    let mut iterations = 0;

    let record = |map: &SphereMap, energy: f64, gnorm: f64, iterations: usize, log: &Vec<PseudoStep>, converged| {
        Ok::<_, Error>(CriticalRecord {
            map: Some(map.clone()),
            alpha: config.alpha,
            energy: dirichlet_energy(map),
            alpha_energy: energy,
            grad_norm: gnorm,
            initial_grad_norm: g0,
            iterations,
            converged,
            center_of_mass_norm: center_of_mass(map, config.alpha)?.norm(),
            center_of_mass_drift: None,
            harmonic_residual: harmonic_residual_with(&ops, map)?,
            pseudogradient_log: log.clone(),
        })
    };

    while gnorm > target && iterations < config.max_iterations {
        let raw_dir: Vec<f64> = match &ops.stiff_mass {
            Some((_, chol)) => per_coordinate(&grad.values, d, |c| chol.solve(c)),
            None => grad.values.chunks(d).zip(&ops.lumped).flat_map(|(g, m)| g.iter().map(move |v| v / m)).collect(),
        };
        let dir: Vec<f64> = map.project_tangent(&raw_dir)?.values.iter().map(|v| -v).collect();
        let slope: f64 = grad.values.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            return Err(Error::Numeric("search direction is not a descent direction".into()));
        }
        let x_norm = match &ops.stiff_mass {
            Some((a, _)) => per_coordinate(&dir, d, |c| a.mul_vec(c))
                .iter()
                .zip(&dir)
                .map(|(p, q)| p * q)
                .sum::<f64>()
                .sqrt(),
            None => per_coordinate(&dir, d, |c| ops.mass.mul_vec(c))
                .iter()
                .zip(&dir)
                .map(|(p, q)| p * q)
                .sum::<f64>()
                .sqrt(),
        };
        let df_norm = match &ops.stiff_mass {
            Some(_) => (-slope).sqrt(),
            None => gnorm,
        };

        let mut accepted = None;
        while step > 1e-14 {
            let trial = retract(&map, &dir, step)?;
            let e = alpha_energy(&trial, config.alpha)?;
            if e < energy + config.armijo_c1 * step * slope {
                accepted = Some((trial, e));
                break;
            }
            step *= config.step_shrink;
        }
        let Some((next, e)) = accepted else {
            // the predicted decrease is below what the energy can resolve
            if -slope <= 1e-11 * energy.abs().max(1.0) {
                return record(&map, energy, gnorm, iterations, &log, true);
            }
            let last = record(&map, energy, gnorm, iterations, &log, false)?;
            return Err(Error::Stagnation { iterations, record: Box::new(last) });
        };
        iterations += 1;
        map = next;
        energy = e;
        grad = alpha_energy_gradient(&map, config.alpha)?;
        gnorm = dual_mass_norm(&ops, &grad.values, d);
        log.push(PseudoStep { iteration: iterations, alpha_energy: energy, grad_norm: gnorm, step, x_norm, df_norm, df_x: -slope });
        step = (step / config.step_shrink).min(config.step_init.max(1.0) * 4.0);
    }
    record(&map, energy, gnorm, iterations, &log, gnorm <= target)
}

#[derive(Debug, Clone, Serialize)]
pub struct Continuation {
    pub records: Vec<CriticalRecord>,
    /// Index into the schedule and message of the first failing stage.
    pub failure: Option<(usize, String)>,
}

/// Warm-started descent at each α of a decreasing schedule. Every stage
/// is descended, then recentered so that its α-center of mass vanishes
/// (to `com_tol`); the pre-recentering value is kept as the drift.
pub fn continue_in_alpha(record: &CriticalRecord, schedule: &[f64], config: &FlowConfig, com_tol: f64) -> Result<Continuation> {
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(precondition("alpha schedule must be strictly decreasing"));
    }
    let mut records = Vec::with_capacity(schedule.len());
    let mut current = record.map().clone();
    for (k, &alpha) in schedule.iter().enumerate() {
        let cfg = FlowConfig { alpha, ..config.clone() };
        let stage = descend(&current, &cfg).and_then(|mut r| {
            if !r.converged {
                return Err(Error::Convergence { what: format!("descent at alpha {alpha}"), residual: r.grad_norm });
            }
            if r.energy > 1e-10 {
                let drift = r.center_of_mass_norm;
                let centered = recenter_with_tol(r.map(), alpha, com_tol)?;
                r.center_of_mass_norm = centered.residual;
                r.center_of_mass_drift = Some(drift);
                r.energy = dirichlet_energy(&centered.map);
                r.alpha_energy = alpha_energy(&centered.map, alpha)?;
                r.harmonic_residual = harmonic_residual(&centered.map)?;
                r.map = Some(centered.map);
            }
            Ok(r)
        });
        match stage {
            Ok(r) => {
                current = r.map().clone();
                records.push(r);
            }
            Err(e) => return Ok(Continuation { records, failure: Some((k, e.to_string())) }),
        }
    }
    Ok(Continuation { records, failure: None })
}

/// `|∫X ψ_α(|df|²)dA|` relative to `ψ_α` of the mean area-one density.
pub fn relative_center_of_mass(map: &SphereMap, alpha: f64) -> Result<f64> {
    let scale = psi_alpha(mean_density(map), alpha)?;
    Ok(center_of_mass(map, alpha)?.norm() / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub center: [f64; 3],
    pub local_energy: f64,
}

/// Greedy search for disjoint geodesic balls of the given radius whose
/// Dirichlet energy exceeds `epsilon_su`.
///
/// Candidate centers are the vertices of the level-4 (or coarser) mesh
/// contained in the map's mesh; a ball contains the triangles whose
/// centroid lies within `radius`. The highest-energy ball is taken first
/// and candidates whose balls would overlap it are discarded.
pub fn detect_concentration(map: &SphereMap, epsilon_su: f64, radius: f64) -> Result<Vec<Concentration>> {
    if !(radius > 0.0 && radius < std::f64::consts::FRAC_PI_2) {
        return Err(precondition("radius must lie in (0, π/2)"));
    }
    let mesh = map.mesh();
    let density = element_density(map);
    let energy: Vec<f64> = mesh.elements().iter().zip(&density).map(|(e, q)| 0.5 * e.area * q).collect();
    let centroids: Vec<_> = (0..mesh.face_count()).map(|f| mesh.centroid(f).normalize()).collect();

    // bucket faces by their ancestor at a coarse level
    let coarse = mesh.level().min(3);
    let per_cell = 4usize.pow((mesh.level() - coarse) as u32);
    let cells = mesh.face_count() / per_cell;
    let mut cell_center = Vec::with_capacity(cells);
    let mut cell_radius = Vec::with_capacity(cells);
    for c in 0..cells {
        let span = c * per_cell..(c + 1) * per_cell;
        let center = span.clone().map(|f| centroids[f]).sum::<nalgebra::Vector3<f64>>().normalize();
        let r = span.map(|f| center.dot(&centroids[f]).clamp(-1.0, 1.0).acos()).fold(0.0, f64::max);
        cell_center.push(center);
        cell_radius.push(r);
    }

    let candidates = 10 * 4usize.pow(mesh.level().min(4) as u32) + 2;
    let ball_energy = |x: &nalgebra::Vector3<f64>| -> f64 {
        let mut s = 0.0;
        for c in 0..cells {
            if x.dot(&cell_center[c]).clamp(-1.0, 1.0).acos() > radius + cell_radius[c] {
                continue;
            }
            for f in c * per_cell..(c + 1) * per_cell {
                if x.dot(&centroids[f]).clamp(-1.0, 1.0).acos() <= radius {
                    s += energy[f];
                }
            }
        }
        s
    };
    let mut scored: Vec<(usize, f64)> =
        (0..candidates).map(|v| (v, ball_energy(&mesh.vertices()[v]))).filter(|&(_, e)| e > epsilon_su).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut found: Vec<Concentration> = Vec::new();
    for (v, e) in scored {
        let x = mesh.vertices()[v];
        let overlaps = found.iter().any(|c| {
            let y = nalgebra::Vector3::from(c.center);
            x.dot(&y).clamp(-1.0, 1.0).acos() < 2.0 * radius
        });
        if !overlaps {
            found.push(Concentration { center: [x.x, x.y, x.z], local_energy: e });
        }
    }
    Ok(found)
}
