//! Second variation of the discrete energies, Morse index and nullity, the
//! metric-weight invariance check for Schrödinger pencils and the logarithmic
//! cutoff.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::energy::{alpha_energy_euclidean_gradient, element_states, SphereMap};
use crate::error::{precondition, Error, Result};
use crate::linalg::{general_smallest, symmetric_smallest, CsrMatrix, EigenOptions, TripletBuilder};
use crate::mesh::{assemble_pencil, build_icosphere, SphereMesh};
use crate::quadrature::integrate;

/// A symmetric pencil `H v = λ M v` on fields written in per-vertex
/// orthonormal frames.
#[derive(Debug, Clone)]
pub struct SecondVariation {
    pub hessian: CsrMatrix,
    pub mass: CsrMatrix,
    /// Ambient dimension `n + 1`.
    pub ambient: usize,
    /// Frame vectors per vertex.
    pub fiber: usize,
    /// Frames, `vertex × fiber × ambient` row-major.
    frames: Vec<f64>,
    /// Projected gradient norm relative to the unprojected one; near zero
    /// when the map is close to critical.
    pub criticality: f64,
}

impl SecondVariation {
    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    /// Frame vector `a` at vertex `i`.
    pub fn frame(&self, i: usize, a: usize) -> &[f64] {
        let start = (i * self.fiber + a) * self.ambient;
        &self.frames[start..start + self.ambient]
    }

    /// Ambient per-vertex vectors of a coefficient vector.
    pub fn lift(&self, coeffs: &[f64]) -> Vec<f64> {
        let vertices = coeffs.len() / self.fiber.max(1);
        let mut out = vec![0.0; vertices * self.ambient];
        for i in 0..vertices {
            for a in 0..self.fiber {
                let c = coeffs[i * self.fiber + a];
                for (o, b) in out[i * self.ambient..(i + 1) * self.ambient].iter_mut().zip(self.frame(i, a)) {
                    *o += c * b;
                }
            }
        }
        out
    }

    /// Frame coefficients of ambient per-vertex vectors (orthogonal projection).
    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        let vertices = field.len() / self.ambient;
        let mut out = vec![0.0; vertices * self.fiber];
        for i in 0..vertices {
            let v = &field[i * self.ambient..(i + 1) * self.ambient];
            for a in 0..self.fiber {
                out[i * self.fiber + a] = v.iter().zip(self.frame(i, a)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }
}

/// Unconstrained Hessian of the discrete α-energy with respect to the
/// vertex values, in the row-major layout of the map values.
pub fn euclidean_hessian(map: &SphereMap, alpha: f64) -> Result<CsrMatrix> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(precondition(format!("alpha = {alpha} must be at least 1")));
    }
    let d = map.dim();
    let mesh = map.mesh();
    let total = mesh.area();
    let mut h = TripletBuilder::with_capacity(map.values().len(), 9 * d * d * mesh.face_count());
    for ((tri, e), st) in mesh.faces().iter().zip(mesh.elements()).zip(element_states(map)) {
        let base = 1.0 + total * st.q;
        let beta = alpha * base.powf(alpha - 1.0);
        let gamma = if alpha == 1.0 {
            0.0
        } else {
            2.0 * alpha * (alpha - 1.0) * (total / e.area) * base.powf(alpha - 2.0)
        };
        for i in 0..3 {
            for j in 0..3 {
                let kij = beta * e.k[i][j];
                for a in 0..d {
                    let row = tri[i] * d + a;
                    if kij != 0.0 {
                        h.push(row, tri[j] * d + a, kij);
                    }
                    if gamma != 0.0 {
                        let ga = gamma * st.ku[i * d + a];
                        for b in 0..d {
                            h.push(row, tri[j] * d + b, ga * st.ku[j * d + b]);
                        }
                    }
                }
            }
        }
    }
    Ok(h.build())
}

/// Hessian of `E_α` along the sphere constraint in ambient coordinates:
/// the Euclidean Hessian minus `⟨∇_i E, f_i⟩` times the identity at each vertex.
fn constrained_hessian(map: &SphereMap, alpha: f64) -> Result<(CsrMatrix, Vec<f64>)> {
    let d = map.dim();
    let h = euclidean_hessian(map, alpha)?;
    let g = alpha_energy_euclidean_gradient(map, alpha)?;
    let mut shift = TripletBuilder::with_capacity(g.len(), g.len());
    for i in 0..map.mesh().vertex_count() {
        let lagrange: f64 = (0..d).map(|c| g[i * d + c] * map.value(i)[c]).sum();
        for c in 0..d {
            shift.push(i * d + c, i * d + c, lagrange);
        }
    }
    Ok((h.linear_combination(1.0, &shift.build(), -1.0), g))
}

/// Orthonormal complement of the unit vector `f`, from the Householder
/// reflection sending `f` to a coordinate axis.
fn householder_complement(f: &[f64]) -> Vec<Vec<f64>> {
    let d = f.len();
    let k = (0..d).max_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs())).unwrap_or(0);
    let mut v = f.to_vec();
    v[k] += f[k].signum();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    (0..d)
        .filter(|&j| j != k)
        .map(|j| {
            let mut col: Vec<f64> = v.iter().map(|&vi| -2.0 * vi * v[j] / vv).collect();
            col[j] += 1.0;
            col
        })
        .collect()
}

/// Reduce an ambient operator to the per-vertex frames: block
/// `(i, j)` becomes `B_iᵀ H_ij B_j`.
fn reduce(ambient: &CsrMatrix, d: usize, frames: &[f64], r: usize) -> CsrMatrix {
    let vertices = ambient.dim() / d;
    let frame = |i: usize, a: usize| &frames[(i * r + a) * d..(i * r + a + 1) * d];
    let mut out = TripletBuilder::with_capacity(vertices * r, ambient.nnz() / (d * d) * r * r + 1);
    for i in 0..vertices {
        let mut blocks: HashMap<usize, Vec<f64>> = HashMap::new();
        for a in 0..d {
            for (col, v) in ambient.row(i * d + a) {
                let block = blocks.entry(col / d).or_insert_with(|| vec![0.0; d * d]);
                block[a * d + col % d] += v;
            }
        }
        let mut keys: Vec<usize> = blocks.keys().copied().collect();
        keys.sort_unstable();
        for j in keys {
            let block = &blocks[&j];
            // t = H_ij B_j, then B_iᵀ t
            for b in 0..r {
                let bj = frame(j, b);
                let t: Vec<f64> = (0..d).map(|a| (0..d).map(|c| block[a * d + c] * bj[c]).sum()).collect();
                for a in 0..r {
                    let value: f64 = frame(i, a).iter().zip(&t).map(|(x, y)| x * y).sum();
                    out.push(i * r + a, j * r + b, value);
                }
            }
        }
    }
    out.build()
}

fn ambient_mass(mesh: &SphereMesh, d: usize) -> Result<CsrMatrix> {
    let m = assemble_pencil(mesh)?.mass;
    let mut out = TripletBuilder::with_capacity(m.dim() * d, m.nnz() * d);
    for i in 0..m.dim() {
        for (j, v) in m.row(i) {
            for c in 0..d {
                out.push(i * d + c, j * d + c, v);
            }
        }
    }
    Ok(out.build())
}

fn symmetrize(m: CsrMatrix) -> CsrMatrix {
    m.linear_combination(0.5, &m.transpose(), 0.5)
}

fn pencil_on_frames(map: &SphereMap, alpha: f64, frames: Vec<f64>, fiber: usize) -> Result<SecondVariation> {
    let d = map.dim();
    let (h, g) = constrained_hessian(map, alpha)?;
    let m = ambient_mass(map.mesh(), d)?;
    let projected = map.project_tangent(&g)?.norm();
    let raw = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SecondVariation {
        hessian: symmetrize(reduce(&h, d, &frames, fiber)),
        mass: symmetrize(reduce(&m, d, &frames, fiber)),
        ambient: d,
        fiber,
        frames,
        criticality: if raw > 0.0 { projected / raw } else { 0.0 },
    })
}

/// Second variation of the discrete α-energy on tangent fields along `map`,
/// with the unit-sphere mass matrix as the second form.
///
/// The map should be close to critical for the pencil to mean anything;
/// [`SecondVariation::criticality`] reports how close it is.
pub fn assemble_second_variation(map: &SphereMap, alpha: f64) -> Result<SecondVariation> {
    let d = map.dim();
    let mut frames = Vec::with_capacity(map.values().len() * (d - 1));
    for i in 0..map.mesh().vertex_count() {
        for col in householder_complement(map.value(i)) {
            frames.extend(col);
        }
    }
    pencil_on_frames(map, alpha, frames, d - 1)
}

/// Gradient of each P1 hat function on the flat triangle.
fn hat_gradients(p: [&Vector3<f64>; 3]) -> [Vector3<f64>; 3] {
    let normal = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let twice_area2 = normal.norm_squared();
    std::array::from_fn(|i| normal.cross(&(p[(i + 2) % 3] - p[(i + 1) % 3])) / twice_area2)
}

fn gram_schmidt(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>, floor: f64) -> bool {
    for _ in 0..2 {
        for q in basis.iter() {
            let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len <= floor {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= len);
    basis.push(v);
    true
}

/// Second variation restricted to fields orthogonal to both the map and its
/// image tangent plane.
///
/// Triangles whose energy density falls below a thousandth of the mean
/// (branch points, collapsed regions) make the normal bundle undefined and
/// are reported as a degeneracy.
pub fn normal_second_variation(map: &SphereMap) -> Result<SecondVariation> {
    let d = map.dim();
    if d < 4 {
        return Err(precondition("normal fields need a target of dimension at least 3"));
    }
    let mesh = map.mesh();
    let states = element_states(map);
    let area = mesh.area();
    let mean = mesh.elements().iter().zip(&states).map(|(e, s)| e.area * s.q).sum::<f64>() / area;
    let bad: Vec<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| !(s.q > 1e-3 * mean))
        .map(|(f, _)| f)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Degeneracy { elements: bad });
    }

    // area-weighted vertex averages of the element differentials (d × 3)
    let v = mesh.vertex_count();
    let mut differential = vec![0.0; v * d * 3];
    let mut weight = vec![0.0; v];
    for (tri, e) in mesh.faces().iter().zip(mesh.elements()) {
        let p = tri.map(|i| &mesh.vertices()[i]);
        let grads = hat_gradients(p);
        for &i in tri {
            weight[i] += e.area;
            for (k, &j) in tri.iter().enumerate() {
                for c in 0..d {
                    for s in 0..3 {
                        differential[(i * d + c) * 3 + s] += e.area * map.value(j)[c] * grads[k][s];
                    }
                }
            }
        }
    }

    let r = d - 3;
    let mut frames = Vec::with_capacity(v * r * d);
    let mut degenerate = Vec::new();
    for i in 0..v {
        let x = mesh.vertices()[i];
        let domain = householder_complement(x.as_slice());
        let f = map.value(i);
        let mut basis = vec![f.to_vec()];
        let mut ok = true;
        for t in &domain {
            let image: Vec<f64> = (0..d)
                .map(|c| (0..3).map(|s| differential[(i * d + c) * 3 + s] * t[s]).sum::<f64>() / weight[i])
                .collect();
            let scale = image.iter().map(|y| y * y).sum::<f64>().sqrt();
            ok &= scale > 0.0 && gram_schmidt(&mut basis, image, 1e-3 * scale);
        }
        if !ok {
            degenerate.push(i);
            continue;
        }
        let mut candidates: Vec<usize> = (0..d).collect();
        while basis.len() < d {
            // the coordinate axis with the largest residual is the stablest next vector
            let residual = |c: usize| {
                1.0 - basis.iter().map(|q| q[c] * q[c]).sum::<f64>()
            };
            let (pos, &c) = candidates
                .iter()
                .enumerate()
                .max_by(|a, b| residual(*a.1).total_cmp(&residual(*b.1)))
                .expect("fewer axes than ambient dimensions");
            candidates.remove(pos);
            let mut axis = vec![0.0; d];
            axis[c] = 1.0;
            gram_schmidt(&mut basis, axis, 1e-8);
        }
        for q in &basis[3..] {
            frames.extend_from_slice(q);
        }
    }
    if !degenerate.is_empty() {
        let faces = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.iter().any(|i| degenerate.binary_search(i).is_ok()))
            .map(|(f, _)| f)
            .collect();
        return Err(Error::Degeneracy { elements: faces });
    }
    pencil_on_frames(map, 1.0, frames, r)
}

/// The smallest eigenvalues of a second variation and their classification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below `−tau`.
    pub index: usize,
    /// Eigenvalues within `tau` of zero.
    pub nullity: usize,
    pub tau: f64,
    pub k: usize,
    pub converged: bool,
}

impl SpectrumReport {
    pub fn classify(&self, lambda: f64) -> &'static str {
        if lambda < -self.tau {
            "negative"
        } else if lambda.abs() <= self.tau {
            "null"
        } else {
            "positive"
        }
    }

    /// The same eigenvalues classified with another threshold.
    pub fn with_tau(&self, tau: f64) -> Self {
        let mut out = self.clone();
        out.tau = tau;
        out.index = self.eigenvalues.iter().filter(|&&l| l < -tau).count();
        out.nullity = self.eigenvalues.iter().filter(|&&l| l.abs() <= tau).count();
        out
    }
}

/// The `k` smallest eigenvalues of `pencil`, classified by `tau`.
///
/// An eigensolver that runs out of restarts yields `converged = false` with
/// the Ritz values it reached.
pub fn morse_index_nullity(pencil: &SecondVariation, k: usize, tau: f64) -> Result<SpectrumReport> {
    morse_index_nullity_with(pencil, &spectrum_options(k), tau)
}

/// Solver settings for second variations: the guard block is wide enough
/// to hold a whole degenerate cluster straddling the cut.
pub fn spectrum_options(k: usize) -> EigenOptions {
    let mut opts = EigenOptions::new(k).with_tol(1e-8);
    opts.guard = k.max(12);
    opts
}

pub fn morse_index_nullity_with(pencil: &SecondVariation, opts: &EigenOptions, tau: f64) -> Result<SpectrumReport> {
    if !(tau >= 0.0) {
        return Err(precondition("tau must be nonnegative"));
    }
    let (values, converged) = match symmetric_smallest(&pencil.hessian, &pencil.mass, opts) {
        Ok(pairs) => (pairs.values, pairs.converged),
        Err(Error::Convergence { .. }) => (Vec::new(), false),
        Err(e) => return Err(e),
    };
    let report = SpectrumReport { eigenvalues: values, index: 0, nullity: 0, tau, k: opts.count, converged };
    Ok(report.with_tau(tau))
}

/// The null-cluster threshold measured on the equator into `S⁴`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TauCalibration {
    pub level: usize,
    /// Largest `|λ|` among the eigenvalues that vanish in the continuum.
    pub largest_null: f64,
    /// Smallest eigenvalue that is positive in the continuum.
    pub smallest_positive: f64,
    /// Geometric mean of the two.
    pub tau: f64,
}

/// Index and nullity of the equator into `S⁴`: `n − 2` and `3(n − 2) + 6`.
pub const EQUATOR_S4_INDEX: usize = 2;
pub const EQUATOR_S4_NULLITY: usize = 12;

/// Calibrates the nullity threshold for meshes of the given level and
/// caches the result.
pub fn calibrate_tau(level: usize) -> Result<TauCalibration> {
    static CACHE: OnceLock<Mutex<HashMap<usize, TauCalibration>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().expect("tau cache poisoned").get(&level) {
        return Ok(*c);
    }
    let mesh = Arc::new(build_icosphere(level)?);
    let map = SphereMap::equator(mesh, 4)?;
    let pencil = assemble_second_variation(&map, 1.0)?;
    let count = EQUATOR_S4_INDEX + EQUATOR_S4_NULLITY + 1;
    let pairs = symmetric_smallest(&pencil.hessian, &pencil.mass, &spectrum_options(count))?;
    if !pairs.converged {
        return Err(Error::Convergence { what: "tau calibration".into(), residual: pairs.residuals.iter().fold(0.0, |a: f64, &b| a.max(b)) });
    }
    let null = &pairs.values[EQUATOR_S4_INDEX..EQUATOR_S4_INDEX + EQUATOR_S4_NULLITY];
    let largest_null = null.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let smallest_positive = pairs.values[EQUATOR_S4_INDEX + EQUATOR_S4_NULLITY];
    if !(smallest_positive > largest_null) {
        return Err(Error::Numeric(format!(
            "no spectral gap at level {level}: null cluster reaches {largest_null:e}, next eigenvalue {smallest_positive:e}"
        )));
    }
    let c = TauCalibration { level, largest_null, smallest_positive, tau: (largest_null * smallest_positive).sqrt() };
    cache.lock().expect("tau cache poisoned").insert(level, c);
    Ok(c)
}

/// Spectra of the unweighted and weighted Schrödinger pencils.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScalingReport {
    pub unweighted: Vec<f64>,
    pub weighted: Vec<f64>,
    /// Largest `|λ_μ − λ| / max(1, |λ|)` over the compared eigenvalues,
    /// as complex numbers.
    pub discrepancy: f64,
}

/// Pencil of `∫⟨dV, d(μ²W)⟩ − φμ²VW` against `∫μ²VW` with P1 trial and
/// weighted test functions, `μ²` and `φ` interpolated linearly.
fn weighted_schrodinger(mesh: &SphereMesh, potential: &[f64], weight: &[f64]) -> (CsrMatrix, CsrMatrix) {
    let v = mesh.vertex_count();
    let mut a = TripletBuilder::with_capacity(v, 9 * mesh.face_count());
    let mut b = TripletBuilder::with_capacity(v, 9 * mesh.face_count());
    for (tri, e) in mesh.faces().iter().zip(mesh.elements()) {
        let mu = tri.map(|i| weight[i]);
        let phi = tri.map(|i| potential[i]);
        let mean_mu = (mu[0] + mu[1] + mu[2]) / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                // ∫ φ_i φ_j φ_k over the triangle, in units of the area
                let triple = |k: usize| match (i == j, j == k, i == k) {
                    (true, true, _) => 1.0 / 10.0,
                    (true, false, _) | (false, true, _) | (false, false, true) => 1.0 / 30.0,
                    (false, false, false) => 1.0 / 60.0,
                };
                let grad_mu: f64 = (0..3).map(|k| e.k[j][k] * (mu[k] - mu[j])).sum();
                let stiff = e.k[i][j] * mean_mu + grad_mu / 3.0;
                let mass: f64 = (0..3).map(|k| mu[k] * triple(k)).sum::<f64>() * e.area;
                let pot = quartic_product(&phi, &mu, i, j) * e.area;
                a.push(tri[i], tri[j], stiff - pot);
                b.push(tri[i], tri[j], mass);
            }
        }
    }
    (a.build(), b.build())
}

/// `∫ φ μ² λ_i λ_j / area` for linear `φ` and `μ²` on a triangle with
/// barycentric coordinates `λ`.
fn quartic_product(phi: &[f64; 3], mu: &[f64; 3], i: usize, j: usize) -> f64 {
    // ∫ λ^a = 2 a! b! c! / (|a| + 2)! per unit area
    let fact = [1.0, 1.0, 2.0, 6.0, 24.0];
    let mut s = 0.0;
    for p in 0..3 {
        for q in 0..3 {
            let mut pow = [0usize; 3];
            pow[i] += 1;
            pow[j] += 1;
            pow[p] += 1;
            pow[q] += 1;
            let num = 2.0 * fact[pow[0]] * fact[pow[1]] * fact[pow[2]];
            s += phi[p] * mu[q] * num / 720.0;
        }
    }
    s
}

/// Compares the `count` smallest eigenvalues of the Schrödinger pencil
/// `Δ − φ` with those of the same pencil with both forms weighted by the
/// per-vertex function `μ²`.
pub fn scaling_invariance_check(mesh: &SphereMesh, potential: &[f64], weight: &[f64], count: usize) -> Result<ScalingReport> {
    let v = mesh.vertex_count();
    if potential.len() != v || weight.len() != v {
        return Err(precondition("potential and weight need one value per vertex"));
    }
    if !weight.iter().all(|&w| w > 0.0 && w.is_finite()) {
        return Err(precondition("weight must be positive"));
    }
    let shift = -potential.iter().fold(0.0f64, |a, &b| a.max(b)) - 1.0;
    let opts = EigenOptions::new(count).with_tol(1e-10);
    let solve = |w: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = weighted_schrodinger(mesh, potential, w);
        let eig = general_smallest(&a, &b, shift, &opts)?;
        Ok((eig.values, eig.imag))
    };
    let (plain, plain_imag) = solve(&vec![1.0; v])?;
    let (weighted, imag) = solve(weight)?;
    if plain.len() != weighted.len() {
        return Err(Error::Numeric("eigenvalue counts differ between pencils".into()));
    }
    let discrepancy = (0..plain.len())
        .map(|k| (plain[k] - weighted[k]).hypot(plain_imag[k] - imag[k]) / plain[k].abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(ScalingReport { unweighted: plain, weighted, discrepancy })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(precondition(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    Ok(())
}

/// The logarithmic cutoff `φ_ε(r)`: 0 inside `ε²`, 1 outside `ε`, and
/// `2 − log r / log ε` in between.
pub fn cutoff_profile(epsilon: f64) -> Result<impl Fn(f64) -> f64> {
    check_epsilon(epsilon)?;
    let le = epsilon.ln();
    Ok(move |r: f64| {
        if r <= epsilon * epsilon {
            0.0
        } else if r >= epsilon {
            1.0
        } else {
            (2.0 - r.ln() / le).clamp(0.0, 1.0)
        }
    })
}

/// `∫∫ (dφ_ε/dr)² r dr dθ` over the flat disc by adaptive quadrature; the
/// closed form is `−2π / log ε`.
pub fn cutoff_dirichlet_energy(epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let le = epsilon.ln();
    let slope = |r: f64| -1.0 / (r * le);
    let radial = integrate(|r: f64| slope(r).powi(2) * r, epsilon * epsilon, epsilon, 1e-14, 1e-12)?;
    Ok(2.0 * std::f64::consts::PI * radial)
}

/// Energy and Morse index of one critical point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct IndexSample {
    pub energy: f64,
    pub index: usize,
}

/// `min (index + 1) / E` over the samples.
pub fn index_energy_diagnostic(samples: &[IndexSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(precondition("no critical points to compare"));
    }
    if let Some(s) = samples.iter().find(|s| !(s.energy > 0.0)) {
        return Err(precondition(format!("energy {} is not positive", s.energy)));
    }
    Ok(samples.iter().map(|s| (s.index as f64 + 1.0) / s.energy).fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn householder_frames_are_orthonormal() {
        let f = [0.6, -0.0, 0.8, 0.0];
        let cols = householder_complement(&f);
        assert_eq!(cols.len(), 3);
        for (a, ca) in cols.iter().enumerate() {
            assert!(ca.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-15);
            for (b, cb) in cols.iter().enumerate() {
                let ip: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
                assert!((ip - if a == b { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn triple_products_integrate_to_one() {
        let one = [1.0; 3];
        let total: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| quartic_product(&one, &one, i, j)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}
