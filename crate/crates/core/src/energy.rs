//! Dirichlet and α-energies of piecewise linear maps `S² → Sⁿ`, their exact
//! discrete gradients, the α-center of mass and conformal dilations.
//!
//! Densities are constant per triangle. The α-energy uses the area-one
//! view of the mesh: with `A` the total element area, a triangle of area `A_e`
//! has weight `A_e / A` and energy density `A·q_e`, where `q_e` is `|df|²`
//! in unit-sphere units. At `α = 1` this reproduces the Dirichlet energy
//! exactly.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::error::{precondition, Error, Result};
use crate::mesh::SphereMesh;
use crate::quadrature::integrate;

/// A map into the unit sphere `Sⁿ ⊂ ℝⁿ⁺¹`, one value per mesh vertex.
#[derive(Clone)]
pub struct SphereMap {
    mesh: Arc<SphereMesh>,
    n: usize,
    /// Row-major `vertex_count × (n + 1)`.
    values: Vec<f64>,
}

/// Per-vertex vectors orthogonal to the map values.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl TangentField {
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Euclidean norm of the stacked vertex values.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::fmt::Debug for SphereMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereMap")
            .field("level", &self.mesh.level())
            .field("vertices", &self.mesh.vertex_count())
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl SphereMap {
    /// Wraps raw values, checking shapes and unit norms.
    pub fn new(mesh: Arc<SphereMesh>, n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(precondition("target sphere dimension must be at least 2"));
        }
        if values.len() != mesh.vertex_count() * (n + 1) {
            return Err(precondition("value array does not match the mesh"));
        }
        for (i, v) in values.chunks(n + 1).enumerate() {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (r - 1.0).abs() > 1e-10 {
                return Err(precondition(format!("value at vertex {i} has norm {r}")));
            }
        }
        Ok(Self { mesh, n, values })
    }

    /// Samples `f` at the vertices and normalizes.
    pub fn from_fn(mesh: Arc<SphereMesh>, n: usize, f: impl Fn(&Vector3<f64>) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.vertex_count() * (n + 1));
        for (i, x) in mesh.vertices().iter().enumerate() {
            let v = f(x);
            if v.len() != n + 1 {
                return Err(precondition("sampled value has the wrong dimension"));
            }
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Numeric(format!("cannot normalize value at vertex {i}")));
            }
            values.extend(v.iter().map(|a| a / r));
        }
        Self::new(mesh, n, values)
    }

    pub fn constant(mesh: Arc<SphereMesh>, n: usize, point: &[f64]) -> Result<Self> {
        Self::from_fn(mesh, n, |_| point.to_vec())
    }

    /// The totally geodesic inclusion `x ↦ (x, 0, …, 0)`.
    pub fn equator(mesh: Arc<SphereMesh>, n: usize) -> Result<Self> {
        Self::from_fn(mesh, n, |x| {
            let mut v = vec![0.0; n + 1];
            v[..3].copy_from_slice(x.as_slice());
            v
        })
    }

    pub fn mesh(&self) -> &Arc<SphereMesh> {
        &self.mesh
    }

    /// Target sphere dimension `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    /// Replaces the values, renormalizing each vertex onto the sphere.
    pub fn with_values(&self, mut values: Vec<f64>) -> Result<Self> {
        let d = self.dim();
        for (i, v) in values.chunks_mut(d).enumerate() {
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Numeric(format!("cannot normalize value at vertex {i}")));
            }
            v.iter_mut().for_each(|a| *a /= r);
        }
        Ok(Self { mesh: self.mesh.clone(), n: self.n, values })
    }

    /// Value of the piecewise linear interpolant at a point of the sphere,
    /// projected back to `Sⁿ`.
    pub fn interpolate(&self, p: &Vector3<f64>) -> Vec<f64> {
        let (f, w) = self.mesh.locate(p);
        let tri = self.mesh.faces()[f];
        let mut v = vec![0.0; self.dim()];
        for (k, &vi) in tri.iter().enumerate() {
            for (a, b) in v.iter_mut().zip(self.value(vi)) {
                *a += w[k] * b;
            }
        }
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= r);
        v
    }

    /// `f ∘ T` sampled at the vertices through the interpolant of `f`.
    pub fn precompose(&self, t: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        let values = self.mesh.vertices().iter().flat_map(|x| self.interpolate(&t(x))).collect();
        self.with_values(values)
    }

    /// Pointwise `V_i − ⟨V_i, f_i⟩ f_i`.
    pub fn project_tangent(&self, raw: &[f64]) -> Result<TangentField> {
        if raw.len() != self.values.len() {
            return Err(precondition("field does not match the map"));
        }
        let d = self.dim();
        let mut out = raw.to_vec();
        for (v, f) in out.chunks_mut(d).zip(self.values.chunks(d)) {
            let c: f64 = v.iter().zip(f).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(f).for_each(|(a, b)| *a -= c * b);
        }
        Ok(TangentField { dim: d, values: out })
    }
}

/// Per-triangle quantities shared by the energies, gradients and Hessians.
pub(crate) struct ElementState {
    /// `|df|²` in unit-sphere units.
    pub q: f64,
    /// `K_e u` restricted to the three vertices, `3 × dim` row-major.
    pub ku: Vec<f64>,
}

pub(crate) fn element_states(map: &SphereMap) -> Vec<ElementState> {
    states_of(map.mesh(), map.dim(), map.values())
}

fn states_of(mesh: &SphereMesh, d: usize, values: &[f64]) -> Vec<ElementState> {
    let value = |i: usize| &values[i * d..(i + 1) * d];
    mesh.faces()
        .iter()
        .zip(mesh.elements())
        .map(|(tri, e)| {
            let mut ku = vec![0.0; 3 * d];
            // rows of K_e sum to zero, so differences keep constants exact
            for i in 0..3 {
                let ui = value(tri[i]);
                for j in 0..3 {
                    if j == i {
                        continue;
                    }
                    let kij = e.k[i][j];
                    let uj = value(tri[j]);
                    for c in 0..d {
                        ku[i * d + c] += kij * (uj[c] - ui[c]);
                    }
                }
            }
            let mut energy2 = 0.0;
            for i in 0..3 {
                let ui = value(tri[i]);
                for c in 0..d {
                    energy2 += ui[c] * ku[i * d + c];
                }
            }
            ElementState { q: energy2.max(0.0) / e.area, ku }
        })
        .collect()
}

/// `|df|²` per triangle in unit-sphere units.
pub fn element_density(map: &SphereMap) -> Vec<f64> {
    element_states(map).into_iter().map(|s| s.q).collect()
}

/// `½∫|df|² dA`; identical under both area conventions.
pub fn dirichlet_energy(map: &SphereMap) -> f64 {
    let states = element_states(map);
    0.5 * map.mesh().elements().iter().zip(&states).map(|(e, s)| e.area * s.q).sum::<f64>()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(precondition(format!("alpha = {alpha} must be at least 1")));
    }
    Ok(())
}

/// `½∫(1 + |df|²)^α dA − ½` with area-one normalization.
pub fn alpha_energy(map: &SphereMap, alpha: f64) -> Result<f64> {
    alpha_energy_raw(map, map.values(), alpha)
}

/// The discrete α-energy of arbitrary vertex values on the mesh of `map`,
/// without projecting them to the sphere.
pub fn alpha_energy_raw(map: &SphereMap, values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if values.len() != map.values().len() {
        return Err(precondition("value array does not match the map"));
    }
    let mesh = map.mesh();
    let total = mesh.area();
    let states = states_of(mesh, map.dim(), values);
    if alpha == 1.0 {
        return Ok(0.5 * mesh.elements().iter().zip(&states).map(|(e, st)| e.area * st.q).sum::<f64>());
    }
    let s: f64 = mesh
        .elements()
        .iter()
        .zip(&states)
        .map(|(e, st)| e.area / total * (alpha * (total * st.q).ln_1p()).exp_m1())
        .sum();
    Ok(0.5 * s)
}

/// Unprojected gradient of [`alpha_energy`] with respect to the vertex
/// values (row-major like the map values).
pub fn alpha_energy_euclidean_gradient(map: &SphereMap, alpha: f64) -> Result<Vec<f64>> {
    alpha_energy_gradient_raw(map, map.values(), alpha)
}

/// Gradient of [`alpha_energy_raw`].
pub fn alpha_energy_gradient_raw(map: &SphereMap, values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if values.len() != map.values().len() {
        return Err(precondition("value array does not match the map"));
    }
    let d = map.dim();
    let mesh = map.mesh();
    let total = mesh.area();
    let mut g = vec![0.0; values.len()];
    for (tri, st) in mesh.faces().iter().zip(states_of(mesh, d, values)) {
        let beta = alpha * (1.0 + total * st.q).powf(alpha - 1.0);
        for i in 0..3 {
            for c in 0..d {
                g[tri[i] * d + c] += beta * st.ku[i * d + c];
            }
        }
    }
    Ok(g)
}

/// Gradient of the discrete α-energy projected to the tangent spaces of
/// `Sⁿ` at the vertex values.
pub fn alpha_energy_gradient(map: &SphereMap, alpha: f64) -> Result<TangentField> {
    let g = alpha_energy_euclidean_gradient(map, alpha)?;
    map.project_tangent(&g)
}

/// `ψ_α(t) = [α(1+t)^{α−1} t − (1+t)^α + 1]/(α − 1)`, with the limit
/// `ψ₁(t) = t − log(1+t)`.
///
/// Within `1e-6` of `α = 1` the difference quotient loses too many digits
/// and the integral form `∫₀ᵗ α τ (1+τ)^{α−2} dτ` is integrated instead.
pub fn psi_alpha(t: f64, alpha: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(precondition(format!("psi argument {t} must be nonnegative")));
    }
    check_alpha(alpha)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if alpha == 1.0 {
        return Ok(t - t.ln_1p());
    }
    if alpha - 1.0 < 1e-6 {
        return integrate(|s| alpha * s * (1.0 + s).powf(alpha - 2.0), 0.0, t, 1e-15, 1e-13);
    }
    let lp = t.ln_1p();
    let num = alpha * t * ((alpha - 1.0) * lp).exp() - ((alpha * lp).exp_m1());
    Ok(num / (alpha - 1.0))
}

/// `∫ X ψ_α(|df|²) dA` over the area-one sphere, `X` the position vector.
pub fn center_of_mass(map: &SphereMap, alpha: f64) -> Result<Vector3<f64>> {
    check_alpha(alpha)?;
    let mesh = map.mesh();
    let total = mesh.area();
    let mut c = Vector3::zeros();
    for (f, (e, st)) in mesh.elements().iter().zip(element_states(map)).enumerate() {
        c += mesh.centroid(f) * (e.area / total * psi_alpha(total * st.q, alpha)?);
    }
    Ok(c)
}

/// Average area-one energy density `∫|df|² dA`.
pub fn mean_density(map: &SphereMap) -> f64 {
    2.0 * dirichlet_energy(map)
}

/// Conformal dilation of the unit sphere along coordinate axis `axis`:
/// the height `c = x_axis` moves to `(c + tanh t)/(1 + c tanh t)`, pushing
/// points toward the pole `+e_axis` for `t > 0`.
pub fn dilate(axis: usize, t: f64, x: &Vector3<f64>) -> Vector3<f64> {
    if t == 0.0 {
        return *x;
    }
    let c = x[axis];
    let th = t.tanh();
    let denom = t.cosh() + c * t.sinh();
    let mut y = x / denom;
    y[axis] = (c + th) / (1.0 + c * th);
    y.normalize()
}

/// Dilations along `x`, then `y`, then `z` with parameters `t`.
pub fn dilation_chart(t: &[f64; 3], x: &Vector3<f64>) -> Vector3<f64> {
    let a = dilate(0, t[0], x);
    let b = dilate(1, t[1], &a);
    dilate(2, t[2], &b)
}

#[derive(Debug, Clone)]
pub struct Recentered {
    pub map: SphereMap,
    /// Chart parameters of the dilation `T` with result `f ∘ T`.
    pub params: [f64; 3],
    pub iterations: usize,
    pub residual: f64,
}

/// Newton iteration on the chart parameters of [`dilation_chart`] so that
/// `f ∘ T` has vanishing α-center of mass (to `tol`).
///
/// `f ∘ T` is resampled from the interpolant of `f`; the Jacobian is a
/// central difference.
pub fn recenter_with_tol(map: &SphereMap, alpha: f64, tol: f64) -> Result<Recentered> {
    if dirichlet_energy(map) < 1e-12 {
        return Err(precondition("cannot recenter a constant map"));
    }
    let com_at = |t: &[f64; 3]| -> Result<(SphereMap, Vector3<f64>)> {
        let m = map.precompose(|x| dilation_chart(t, x))?;
        let c = center_of_mass(&m, alpha)?;
        Ok((m, c))
    };
    let mut t = [0.0; 3];
    let mut current = (map.clone(), center_of_mass(map, alpha)?);
    let h = 1e-5;
    for it in 0..50 {
        let r = current.1.norm();
        if r <= tol {
            return Ok(Recentered { map: current.0, params: t, iterations: it, residual: r });
        }
        let mut jac = Matrix3::zeros();
        for k in 0..3 {
            let mut tp = t;
            let mut tm = t;
            tp[k] += h;
            tm[k] -= h;
            let col = (com_at(&tp)?.1 - com_at(&tm)?.1) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let step = jac
            .lu()
            .solve(&(-current.1))
            .ok_or_else(|| Error::Numeric("singular center-of-mass Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial = [t[0] + lambda * step[0], t[1] + lambda * step[1], t[2] + lambda * step[2]];
            let cand = com_at(&trial)?;
            if cand.1.norm() < r || lambda < 1e-4 {
                t = trial;
                current = cand;
                break;
            }
            lambda *= 0.5;
        }
    }
    let r = current.1.norm();
    if r <= tol {
        return Ok(Recentered { map: current.0, params: t, iterations: 50, residual: r });
    }
    Err(Error::Convergence { what: "recentering".into(), residual: r })
}

/// [`recenter_with_tol`] at tolerance `1e-8`.
pub fn recenter(map: &SphereMap, alpha: f64) -> Result<Recentered> {
    recenter_with_tol(map, alpha, 1e-8)
}

/// `π∫_{−U}^{U} [1 + (cosh u · c(u))²]^α sech²u du` for an axisymmetric
/// map with speed profile `c` in the `u = artanh z` coordinate. The
/// constant `−½` of the α-energy is not included.
pub fn axisymmetric_alpha_energy(speed: impl Fn(f64) -> f64, alpha: f64, u_max: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(precondition("the axisymmetric formula needs alpha > 1"));
    }
    if !(u_max > 0.0) {
        return Err(precondition("truncation U must be positive"));
    }
    let integrand = |u: f64| {
        let ch = u.cosh();
        let s = ch * speed(u);
        (1.0 + s * s).powf(alpha) / (ch * ch)
    };
    let v = integrate(integrand, -u_max, u_max, 1e-12, 1e-11)?;
    Ok(std::f64::consts::PI * v)
}
