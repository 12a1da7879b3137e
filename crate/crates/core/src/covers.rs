//! Rational self-maps of the Riemann sphere, branched covers `h ∘ g` of a
//! map `h`, and the spectra of their pulled-back metrics.

use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{element_states, SphereMap};
use crate::error::{precondition, Error, Result};
use crate::linalg::{symmetric_smallest, EigenOptions, TripletBuilder};
use crate::mesh::{assemble_pencil, SphereMesh};

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Finite([f64; 2]),
    /// Serialized as the string `"inf"`.
    Infinity(Inf),
}

/// Marker for the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inf;

impl Serialize for Inf {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }
}

impl<'de> Deserialize<'de> for Inf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" {
            Ok(Inf)
        } else {
            Err(serde::de::Error::custom(format!("expected \"inf\", got {s:?}")))
        }
    }
}

pub const INFINITY: Point = Point::Infinity(Inf);

impl Point {
    pub fn finite(z: Complex64) -> Self {
        Point::Finite([z.re, z.im])
    }

    pub fn value(&self) -> Option<Complex64> {
        match self {
            Point::Finite([re, im]) => Some(Complex64::new(*re, *im)),
            Point::Infinity(_) => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Point::Infinity(_))
    }

    /// Inverse stereographic projection from the north pole: `∞ ↦ (0,0,1)`,
    /// `0 ↦ (0,0,−1)`.
    pub fn to_sphere(&self) -> Vector3<f64> {
        match self.value() {
            None => Vector3::new(0.0, 0.0, 1.0),
            Some(z) => {
                let r2 = z.norm_sqr();
                if !r2.is_finite() {
                    return Vector3::new(0.0, 0.0, 1.0);
                }
                Vector3::new(2.0 * z.re, 2.0 * z.im, r2 - 1.0) / (r2 + 1.0)
            }
        }
    }

    /// Stereographic projection of a unit vector.
    pub fn from_sphere(x: &Vector3<f64>) -> Self {
        let rho2 = x.x * x.x + x.y * x.y;
        if rho2 == 0.0 && x.z > 0.0 {
            return INFINITY;
        }
        // 1 − z written without cancellation near the north pole
        let denom = if x.z > 0.0 { rho2 / (1.0 + x.z) } else { 1.0 - x.z };
        Point::finite(Complex64::new(x.x, x.y) / denom)
    }

    /// Chordal distance (Euclidean distance of the sphere images).
    pub fn chordal(&self, other: &Point) -> f64 {
        (self.to_sphere() - other.to_sphere()).norm()
    }
}

impl From<Complex64> for Point {
    fn from(z: Complex64) -> Self {
        Point::finite(z)
    }
}

/// `z ↦ (az + b)/(cz + d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub fn identity() -> Self {
        let (one, zero) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Self { a: one, b: zero, c: zero, d: one }
    }

    /// The unique map sending `0, 1, ∞` to `p0, p1, p_inf`.
    pub fn from_three(p0: Point, p1: Point, p_inf: Point) -> Result<Self> {
        // cross-ratio form with every special case of ∞ spelled out
        let one = Complex64::new(1.0, 0.0);
        let m = match (p0.value(), p1.value(), p_inf.value()) {
            (Some(z0), Some(z1), Some(zi)) => {
                // w = (zi (z1 − z0) z + z0 (zi − z1)) / ((z1 − z0) z + (zi − z1))
                Self { a: zi * (z1 - z0), b: z0 * (zi - z1), c: z1 - z0, d: zi - z1 }
            }
            (Some(z0), Some(z1), None) => Self { a: z1 - z0, b: z0, c: Complex64::new(0.0, 0.0), d: one },
            (Some(z0), None, Some(zi)) => Self { a: zi, b: -z0, c: one, d: -one },
            (None, Some(z1), Some(zi)) => Self { a: zi, b: z1 - zi, c: one, d: Complex64::new(0.0, 0.0) },
            _ => return Err(precondition("the three image points must be distinct")),
        };
        if (m.a * m.d - m.b * m.c).norm() < 1e-300 {
            return Err(precondition("the three image points must be distinct"));
        }
        Ok(m)
    }

    pub fn apply(&self, p: Point) -> Point {
        match p.value() {
            None => {
                if self.c == Complex64::new(0.0, 0.0) {
                    INFINITY
                } else {
                    Point::finite(self.a / self.c)
                }
            }
            Some(z) => {
                let den = self.c * z + self.d;
                if den == Complex64::new(0.0, 0.0) {
                    INFINITY
                } else {
                    Point::finite((self.a * z + self.b) / den)
                }
            }
        }
    }

    pub fn inverse(&self) -> Self {
        Self { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Self {
        Self {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }
}

/// `g(z) = c ∏(z − p_i) / ∏(z − q_i)`; a zero or pole at `∞` drops its
/// factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RationalMapJson", into = "RationalMapJson")]
pub struct RationalMap {
    zeros: Vec<Point>,
    poles: Vec<Point>,
    scale: Complex64,
}

#[derive(Serialize, Deserialize)]
struct RationalMapJson {
    zeros: Vec<Point>,
    poles: Vec<Point>,
    scale_re: f64,
    scale_im: f64,
}

impl TryFrom<RationalMapJson> for RationalMap {
    type Error = Error;

    fn try_from(j: RationalMapJson) -> Result<Self> {
        RationalMap::new(j.zeros, j.poles, Complex64::new(j.scale_re, j.scale_im))
    }
}

impl From<RationalMap> for RationalMapJson {
    fn from(g: RationalMap) -> Self {
        Self { zeros: g.zeros, poles: g.poles, scale_re: g.scale.re, scale_im: g.scale.im }
    }
}

/// Polynomial coefficients, lowest degree first.
type Poly = Vec<Complex64>;

fn poly_from_roots<'a>(roots: impl Iterator<Item = &'a Complex64>) -> Poly {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (k, c) in p.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        p = next;
    }
    p
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(a: &Poly) -> Poly {
    if a.len() <= 1 {
        return vec![Complex64::new(0.0, 0.0)];
    }
    a.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
}

/// Roots of a polynomial as eigenvalues of its companion matrix.
fn poly_roots(p: &Poly) -> Result<Vec<Complex64>> {
    let scale = p.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let mut p = p.clone();
    while p.len() > 1 && p.last().is_some_and(|c| c.norm() <= 1e-13 * scale) {
        p.pop();
    }
    let deg = p.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = p[deg];
    let companion = faer::Mat::<faer::c64>::from_fn(deg, deg, |i, j| {
        let v = if j == deg - 1 {
            -p[i] / lead
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        faer::c64::new(v.re, v.im)
    });
    let roots = companion
        .eigenvalues()
        .map_err(|e| Error::Numeric(format!("polynomial root finder failed: {e:?}")))?;
    Ok(roots.into_iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

impl RationalMap {
    pub fn new(zeros: Vec<Point>, poles: Vec<Point>, scale: Complex64) -> Result<Self> {
        if zeros.is_empty() || zeros.len() != poles.len() {
            return Err(precondition(format!(
                "a rational map needs as many zeros as poles and at least one of each ({} zeros, {} poles)",
                zeros.len(),
                poles.len()
            )));
        }
        if !(scale.norm() > 0.0 && scale.re.is_finite() && scale.im.is_finite()) {
            return Err(precondition("scale must be a nonzero finite complex number"));
        }
        for p in &zeros {
            if poles.iter().any(|q| p.chordal(q) < 1e-12) {
                return Err(precondition(format!("zero {p:?} coincides with a pole")));
            }
        }
        Ok(Self { zeros, poles, scale })
    }

    /// `z^d`.
    pub fn power(d: usize) -> Result<Self> {
        Self::new(vec![Point::finite(Complex64::new(0.0, 0.0)); d], vec![INFINITY; d], Complex64::new(1.0, 0.0))
    }

    pub fn identity() -> Self {
        Self::power(1).expect("degree one")
    }

    pub fn zeros(&self) -> &[Point] {
        &self.zeros
    }

    pub fn poles(&self) -> &[Point] {
        &self.poles
    }

    pub fn scale(&self) -> Complex64 {
        self.scale
    }

    pub fn degree(&self) -> usize {
        self.zeros.len()
    }

    fn finite(points: &[Point]) -> Vec<Complex64> {
        points.iter().filter_map(Point::value).collect()
    }

    pub fn evaluate(&self, z: Point) -> Result<Point> {
        let zs = Self::finite(&self.zeros);
        let ps = Self::finite(&self.poles);
        match z.value() {
            None => Ok(match zs.len().cmp(&ps.len()) {
                std::cmp::Ordering::Greater => INFINITY,
                std::cmp::Ordering::Less => Point::finite(Complex64::new(0.0, 0.0)),
                std::cmp::Ordering::Equal => Point::finite(self.scale),
            }),
            Some(z) => {
                let num: Complex64 = self.scale * zs.iter().map(|p| z - p).product::<Complex64>();
                let den: Complex64 = ps.iter().map(|q| z - q).product();
                let zero = Complex64::new(0.0, 0.0);
                match (num == zero, den == zero) {
                    (true, true) => Err(Error::Numeric("0/0 in rational map evaluation".into())),
                    (false, true) => Ok(INFINITY),
                    _ => {
                        let w = num / den;
                        if w.re.is_finite() && w.im.is_finite() {
                            Ok(Point::finite(w))
                        } else {
                            Ok(INFINITY)
                        }
                    }
                }
            }
        }
    }

    /// `g` acting on the unit sphere through stereographic projection.
    pub fn on_sphere(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.evaluate(Point::from_sphere(x))?.to_sphere())
    }

    /// `g ∘ m` for a Möbius transformation `m`.
    pub fn precompose(&self, m: &Mobius) -> Result<Self> {
        let inv = m.inverse();
        let zeros = self.zeros.iter().map(|&p| inv.apply(p)).collect();
        let poles = self.poles.iter().map(|&p| inv.apply(p)).collect();
        let probe = Point::finite(Complex64::new(0.318, 0.577));
        let unit = Self::new(zeros, poles, Complex64::new(1.0, 0.0))?;
        let (Some(want), Some(have)) = (self.evaluate(m.apply(probe))?.value(), unit.evaluate(probe)?.value()) else {
            return Err(Error::Numeric("probe point hit a pole".into()));
        };
        Self::new(unit.zeros, unit.poles, want / have)
    }

    /// Critical points with multiplicity (ramification index minus one).
    /// The multiplicities add up to `2d − 2`.
    pub fn branch_points(&self) -> Result<Vec<(Point, usize)>> {
        let d = self.degree();
        let p = poly_from_roots(Self::finite(&self.zeros).iter());
        let q = poly_from_roots(Self::finite(&self.poles).iter());
        let w: Poly = {
            let a = poly_mul(&poly_derivative(&p), &q);
            let b = poly_mul(&p, &poly_derivative(&q));
            (0..a.len().max(b.len()))
                .map(|k| a.get(k).copied().unwrap_or_default() - b.get(k).copied().unwrap_or_default())
                .collect()
        };
        let roots = poly_roots(&w)?;
        let finite = roots.len();
        if finite > 2 * d - 2 {
            return Err(Error::Numeric(format!("{finite} critical points for degree {d}")));
        }
        // multiple roots come back as clusters of radius ~ ε^{1/m}
        let scale = roots.iter().fold(1.0f64, |m, r| m.max(r.norm()));
        let tol = 1e-4 * scale;
        let mut groups: Vec<(Complex64, usize)> = Vec::new();
        for r in roots {
            match groups.iter_mut().find(|(c, k)| (*c / *k as f64 - r).norm() <= tol) {
                Some((c, k)) => {
                    *c += r;
                    *k += 1;
                }
                None => groups.push((r, 1)),
            }
        }
        let mut out: Vec<(Point, usize)> = groups.into_iter().map(|(c, k)| (Point::finite(c / k as f64), k)).collect();
        out.sort_by(|a, b| {
            let (x, y) = (a.0.value().unwrap_or_default(), b.0.value().unwrap_or_default());
            x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
        });
        if finite < 2 * d - 2 {
            out.push((INFINITY, 2 * d - 2 - finite));
        }
        Ok(out)
    }
}

/// Dimensions attached to the space of degree-`d` rational maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolDimension {
    /// Complex dimension `2d + 1` of the space of rational maps.
    pub complex_dim: usize,
    /// Real dimension `4d + 2` of the family of covers of one sphere.
    pub real_dim_orbit_family: usize,
}

pub fn hol_space_dimension(d: usize) -> Result<HolDimension> {
    if d == 0 {
        return Err(precondition("degree must be at least 1"));
    }
    Ok(HolDimension { complex_dim: 2 * d + 1, real_dim_orbit_family: 4 * d + 2 })
}

/// `h ∘ g` sampled at the mesh vertices, with `h` read through its
/// piecewise linear interpolant.
///
/// Fails when the interpolant of `h` collapses somewhere (norm below 1/2
/// before renormalization), which means `h` is too coarse to resolve.
pub fn compose_cover(h: &SphereMap, g: &RationalMap) -> Result<SphereMap> {
    let mesh = h.mesh();
    let mut values = Vec::with_capacity(h.values().len());
    for x in mesh.vertices() {
        let y = g.on_sphere(x)?;
        let (f, w) = mesh.locate(&y);
        let tri = mesh.faces()[f];
        let mut v = vec![0.0; h.dim()];
        for (k, &i) in tri.iter().enumerate() {
            v.iter_mut().zip(h.value(i)).for_each(|(a, b)| *a += w[k] * b);
        }
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(r >= 0.5) {
            return Err(Error::Numeric(format!("interpolant of h has norm {r} at {y:?}")));
        }
        values.extend(v.into_iter().map(|a| a / r));
    }
    SphereMap::new(mesh.clone(), h.n(), values)
}

/// `h ∘ g` with `h` given in closed form.
pub fn compose_formula(
    mesh: Arc<SphereMesh>,
    n: usize,
    h: impl Fn(&Vector3<f64>) -> Vec<f64>,
    g: &RationalMap,
) -> Result<SphereMap> {
    let mut images = Vec::with_capacity(mesh.vertex_count());
    for x in mesh.vertices() {
        images.push(g.on_sphere(x)?);
    }
    let values = images.iter().flat_map(&h).collect();
    SphereMap::new(mesh, n, values)
}

/// The totally geodesic equator into `Sⁿ` composed with `g`.
pub fn equator_cover(mesh: Arc<SphereMesh>, n: usize, g: &RationalMap) -> Result<SphereMap> {
    compose_formula(mesh, n, |y| (0..=n).map(|c| if c < 3 { y[c] } else { 0.0 }).collect(), g)
}

/// Möbius maps `S`, `T` with `g = S⁻¹ ∘ π₂ ∘ T`, `π₂(z) = z²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleCoverNormalization {
    pub s: Mobius,
    pub t: Mobius,
    /// Largest chordal mismatch over the sample points.
    pub residual: f64,
}

/// Writes a degree-2 map as a standard double cover between Möbius
/// changes of coordinates. `T` sends the branch points to `0` and `∞`.
pub fn normalize_double_cover(g: &RationalMap) -> Result<DoubleCoverNormalization> {
    if g.degree() != 2 {
        return Err(precondition(format!("degree {} is not 2", g.degree())));
    }
    let branch = g.branch_points()?;
    if branch.len() != 2 {
        return Err(Error::Numeric(format!("expected two simple branch points, found {branch:?}")));
    }
    let (b0, b1) = (branch[0].0, branch[1].0);
    if b0.chordal(&b1) < 1e-8 {
        return Err(Error::Numeric("branch points coincide".into()));
    }
    // T⁻¹ sends 0 ↦ b0, ∞ ↦ b1, and 1 to a third point
    let third = [Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.7), Complex64::new(-1.1, 0.2), Complex64::new(2.0, -0.5)]
        .into_iter()
        .map(Point::finite)
        .find(|p| p.chordal(&b0) > 1e-3 && p.chordal(&b1) > 1e-3)
        .expect("one of three points avoids two others");
    let t_inv = Mobius::from_three(b0, third, b1)?;
    let t = t_inv.inverse();
    // S⁻¹(w²) = g(T⁻¹(w)) at w = 0, 1, ∞
    let s_inv = Mobius::from_three(g.evaluate(b0)?, g.evaluate(third)?, g.evaluate(b1)?)?;
    let s = s_inv.inverse();

    let mut residual = 0.0f64;
    for k in 0..20 {
        let angle = 0.7 + 2.0 * std::f64::consts::PI * k as f64 / 20.0;
        let radius = 0.3 + 0.25 * k as f64;
        let z = Point::finite(Complex64::from_polar(radius, angle));
        let lhs = g.evaluate(z)?;
        let rhs = match t.apply(z).value() {
            Some(w) => s_inv.apply(Point::finite(w * w)),
            None => s_inv.apply(INFINITY),
        };
        residual = residual.max(lhs.chordal(&rhs));
    }
    if residual > 1e-8 {
        return Err(Error::Numeric(format!("double cover normalization residual {residual:e}")));
    }
    Ok(DoubleCoverNormalization { s, t, residual })
}

/// First nonzero eigenvalue of the Laplacian of a pulled-back metric.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InducedSpectrum {
    pub lambda1: f64,
    /// Smallest eigenvalues of the pencil, ascending (the first is zero).
    pub eigenvalues: Vec<f64>,
    /// Area of the pulled-back metric, `E(f)` for a conformal map.
    pub area: f64,
    /// Elements whose conformal factor was raised to the floor.
    pub floored: usize,
    /// More than 1% of the elements were floored.
    pub degenerate: bool,
}

/// Mass matrix of the metric `λ g₀` with `λ = |df|²/2` per element, floored
/// at `eps_reg` times its mean. The stiffness of a conformal metric is the
/// round one.
fn induced_pencil(f: &SphereMap, eps_reg: f64) -> Result<(crate::linalg::CsrMatrix, crate::linalg::CsrMatrix, f64, usize)> {
    if !(eps_reg >= 0.0) {
        return Err(precondition("regularization floor must be nonnegative"));
    }
    let mesh = f.mesh();
    let states = element_states(f);
    let area: f64 = mesh.elements().iter().zip(&states).map(|(e, s)| 0.5 * s.q * e.area).sum();
    let mean = area / mesh.area();
    let floor = eps_reg * mean;
    let mut floored = 0;
    let mut m = TripletBuilder::with_capacity(mesh.vertex_count(), 9 * mesh.face_count());
    for ((tri, e), s) in mesh.faces().iter().zip(mesh.elements()).zip(&states) {
        let mut factor = 0.5 * s.q;
        if factor < floor {
            factor = floor;
            floored += 1;
        }
        for i in 0..3 {
            for j in 0..3 {
                m.push(tri[i], tri[j], factor * e.area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 });
            }
        }
    }
    let k = assemble_pencil(mesh)?.stiffness;
    Ok((k, m.build(), area, floored))
}

fn cover_options(count: usize) -> EigenOptions {
    // the stiffness is semidefinite, so any negative shift factors; the
    // automatic search would be thrown far off by the floored elements
    let mut opts = EigenOptions::new(count).with_tol(1e-8).with_shift(-0.5);
    opts.guard = count.max(12);
    opts
}

/// `λ₁` of the pulled-back metric `f*g_{Sⁿ}` for a conformal map `f`.
pub fn induced_metric_lambda1(f: &SphereMap, eps_reg: f64) -> Result<InducedSpectrum> {
    let (k, m, area, floored) = induced_pencil(f, eps_reg)?;
    if area <= 0.0 {
        return Err(precondition("the map has no energy"));
    }
    let pairs = symmetric_smallest(&k, &m, &cover_options(6))?;
    if !pairs.converged {
        return Err(Error::Convergence { what: "induced Laplacian".into(), residual: pairs.residuals.iter().fold(0.0, |a: f64, &b| a.max(b)) });
    }
    Ok(InducedSpectrum {
        lambda1: pairs.values[1],
        eigenvalues: pairs.values,
        area,
        floored,
        degenerate: floored * 100 > f.mesh().face_count(),
    })
}

/// Eigenvalues below `2 − margin` are counted as strictly below 2.
pub const NORMAL_INDEX_MARGIN: f64 = 0.05;

/// `(n − 2)` times the number of eigenvalues of the pulled-back Laplacian
/// strictly below 2: the normal Morse index of a cover of a totally
/// geodesic sphere, whose normal Jacobi operator is `Δ − 2` in each of the
/// `n − 2` normal directions.
pub fn double_cover_normal_index(f: &SphereMap, n: usize) -> Result<usize> {
    if n < 3 {
        return Err(precondition("the target must have dimension at least 3"));
    }
    let (k, m, _, _) = induced_pencil(f, 1e-3)?;
    let mut count = 8;
    loop {
        let pairs = symmetric_smallest(&k, &m, &cover_options(count))?;
        let below = pairs.values.iter().filter(|&&l| l < 2.0 - NORMAL_INDEX_MARGIN).count();
        if below < pairs.values.len() || count >= k.dim() {
            return Ok(below * (n - 2));
        }
        count *= 2;
    }
}
