//! Pointwise curvature algebra: complex sectional curvatures, isotropic
//! planes and the pinching relations between real and half-isotropic
//! curvatures.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

/// Components `R_ijkl` of a curvature operator in an orthonormal frame,
/// normalized so that `R(x,y,x,y)` is the sectional curvature of an
/// orthonormal pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    n: usize,
    r: Vec<f64>,
}

impl CurvatureOperator {
    pub fn zeros(n: usize) -> Self {
        Self { n, r: vec![0.0; n.pow(4)] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = f(i, j, k, l);
                        out.set(i, j, k, l, v);
                    }
                }
            }
        }
        out
    }

    /// Space form of sectional curvature `c`.
    pub fn constant(n: usize, c: f64) -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Self::from_fn(n, |i, j, k, l| c * (d(i, k) * d(j, l) - d(i, l) * d(j, k)))
    }

    /// Product of two unit round 2-spheres spanned by `e0,e1` and `e2,e3`.
    pub fn product_s2xs2() -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let block = |a: usize| a / 2;
        Self::from_fn(4, |i, j, k, l| {
            if block(i) == block(j) && block(j) == block(k) && block(k) == block(l) {
                d(i, k) * d(j, l) - d(i, l) * d(j, k)
            } else {
                0.0
            }
        })
    }

    /// Projects an arbitrary 4-tensor onto algebraic curvature tensors:
    /// pair antisymmetries, pair exchange, then removal of the Bianchi part.
    pub fn project(n: usize, t: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let a = Self::from_fn(n, |i, j, k, l| {
            let anti = |i, j, k, l| t(i, j, k, l) - t(j, i, k, l) - t(i, j, l, k) + t(j, i, l, k);
            (anti(i, j, k, l) + anti(k, l, i, j)) / 8.0
        });
        Self::from_fn(n, |i, j, k, l| {
            let b = (a.get(i, j, k, l) + a.get(i, k, l, j) + a.get(i, l, j, k)) / 3.0;
            a.get(i, j, k, l) - b
        })
    }

    /// `λ·(space form c₁) + (1 − λ)·(space form c₂)` plus a random
    /// algebraic curvature tensor with entries of size about `noise`.
    pub fn pinched_mixture(n: usize, c1: f64, c2: f64, lambda: f64, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..n.pow(4)).map(|_| StandardNormal.sample(&mut rng)).collect();
        let idx = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
        let random = Self::project(n, |i, j, k, l| raw[idx(i, j, k, l)]);
        let base = Self::constant(n, lambda * c1 + (1.0 - lambda) * c2);
        Self::from_fn(n, |i, j, k, l| base.get(i, j, k, l) + noise * random.get(i, j, k, l))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.r[((i * self.n + j) * self.n + k) * self.n + l]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        let n = self.n;
        self.r[((i * n + j) * n + k) * n + l] = v;
    }

    /// Largest violation of the curvature symmetries and the first Bianchi
    /// identity.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r + self.get(j, i, k, l)).abs())
                            .max((r + self.get(i, j, l, k)).abs())
                            .max((r - self.get(k, l, i, j)).abs())
                            .max((r + self.get(i, k, l, j) + self.get(i, l, j, k)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `R(x, y, z, w)` for real vectors.
    pub fn eval(&self, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if y[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let xyz = x[i] * y[j] * z[k];
                    if xyz == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        s += self.get(i, j, k, l) * xyz * w[l];
                    }
                }
            }
        }
        s
    }

    /// Sectional curvature of the real plane spanned by `x, y`.
    pub fn sectional(&self, x: &[f64], y: &[f64]) -> f64 {
        let xx: f64 = x.iter().map(|a| a * a).sum();
        let yy: f64 = y.iter().map(|a| a * a).sum();
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        self.eval(x, y, x, y) / (xx * yy - xy * xy)
    }
}

/// Complex two-plane spanned by `z` and `w` in `ℂⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlane {
    pub z: Vec<Complex64>,
    pub w: Vec<Complex64>,
}

/// Complex-bilinear pairing (no conjugation).
pub fn bilinear(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hermitian(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

impl ComplexPlane {
    pub fn new(z: Vec<Complex64>, w: Vec<Complex64>) -> Self {
        Self { z, w }
    }

    pub fn real(x: &[f64], y: &[f64]) -> Self {
        Self {
            z: x.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            w: y.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// `⟨z∧w, z̄∧w̄⟩ = |z|²|w|² − |⟨z, w̄⟩|²`, the Hermitian Gram determinant.
    pub fn gram(&self) -> f64 {
        let zz = hermitian(&self.z, &self.z).re;
        let ww = hermitian(&self.w, &self.w).re;
        let zw = hermitian(&self.z, &self.w);
        zz * ww - zw.norm_sqr()
    }
}

pub fn complex_sectional_curvature(r: &CurvatureOperator, p: &ComplexPlane) -> Result<f64> {
    let n = r.dim();
    if p.z.len() != n || p.w.len() != n {
        return Err(precondition("plane dimension differs from the operator"));
    }
    let g = p.gram();
    if !(g > 1e-12) {
        return Err(precondition(format!("degenerate plane (Gram determinant {g:e})")));
    }
    let zc: Vec<Complex64> = p.z.iter().map(|c| c.conj()).collect();
    let wc: Vec<Complex64> = p.w.iter().map(|c| c.conj()).collect();
    let mut num = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let zw = p.z[i] * p.w[j];
            if zw == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..n {
                let zwz = zw * zc[k];
                for l in 0..n {
                    let rv = r.get(i, j, k, l);
                    if rv != 0.0 {
                        num += zwz * wc[l] * rv;
                    }
                }
            }
        }
    }
    Ok(num.re / g)
}

pub fn is_half_isotropic(p: &ComplexPlane, tol: f64) -> bool {
    bilinear(&p.z, &p.z).norm() <= tol && bilinear(&p.z, &p.w).norm() <= tol
}

pub fn is_isotropic(p: &ComplexPlane, tol: f64) -> bool {
    is_half_isotropic(p, tol) && bilinear(&p.w, &p.w).norm() <= tol
}

/// Splits an isotropic vector `v = x + iy` into its orthogonal,
/// equal-length real and imaginary parts.
pub fn associated_real_plane(v: &[Complex64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = hermitian(v, v).re;
    if scale == 0.0 {
        return Err(precondition("zero vector"));
    }
    let vv = bilinear(v, v).norm();
    if vv > 1e-9 * scale.max(1.0) {
        return Err(precondition(format!("vector is not isotropic (⟨v,v⟩ = {vv:e})")));
    }
    Ok((v.iter().map(|c| c.re).collect(), v.iter().map(|c| c.im).collect()))
}

/// Range of half-isotropic curvatures forced by `δ < K_r ≤ 1`.
pub fn pinch_bounds(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(precondition(format!("pinching constant {delta} outside (0, 1]")));
    }
    Ok(((4.0 * delta - 1.0) / 3.0, (4.0 - delta) / 3.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchReport {
    pub delta: f64,
    pub samples: usize,
    /// `None` when the operator failed the pinching or Berger pretests and
    /// no half-isotropic planes were sampled.
    pub violations: Option<usize>,
    /// Smallest distance of a sampled `K_i` inside the bounds (negative on
    /// violation).
    pub worst_margin: Option<f64>,
    pub hypothesis_satisfied: bool,
    pub seed: u64,
}

/// `k` orthonormal vectors in `ℝⁿ`, Haar distributed.
pub fn random_frame(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let g = DMatrix::<f64>::from_fn(n, k, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    (0..k)
        .map(|j| {
            let s = r[(j, j)].signum();
            q.column(j).iter().map(|v| v * s).collect()
        })
        .collect()
}

fn complexify(x: &[f64], y: &[f64], a: f64, b: f64) -> Vec<Complex64> {
    x.iter().zip(y).map(|(&p, &q)| Complex64::new(a * p, b * q)).collect()
}

/// Samples real planes and orthonormal 4-frames to test `δ < K_r ≤ 1` and
/// the Berger bound `|R_1243| ≤ 2(1 − δ)/3`, then samples half-isotropic
/// planes spanned by `e₁ + ie₂` and `a e₃ + ib e₄` and counts curvatures
/// outside [`pinch_bounds`].
///
/// `a` and `b` are drawn log-uniformly from `[10⁻², 10²]`.
pub fn verify_pinch_implication(
    r: &CurvatureOperator,
    delta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PinchReport> {
    let n = r.dim();
    if n < 4 {
        return Err(precondition("need n ≥ 4 for orthonormal 4-frames"));
    }
    let (lower, upper) = pinch_bounds(delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pretests = sample_count.clamp(1, 20_000);
    let berger = 2.0 * (1.0 - delta) / 3.0;
    let slack = 1e-12;
    let mut hypothesis = true;
    for _ in 0..pretests {
        let e = random_frame(n, 4, &mut rng);
        let k = r.sectional(&e[0], &e[1]);
        let mixed = r.eval(&e[0], &e[1], &e[3], &e[2]);
        if !(k > delta - slack && k <= 1.0 + slack) || mixed.abs() > berger + slack {
            hypothesis = false;
            break;
        }
    }
    if !hypothesis {
        return Ok(PinchReport {
            delta,
            samples: 0,
            violations: None,
            worst_margin: None,
            hypothesis_satisfied: false,
            seed,
        });
    }
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..sample_count {
        let e = random_frame(n, 4, &mut rng);
        let a = 10f64.powf(rng.random_range(-2.0..2.0));
        let b = 10f64.powf(rng.random_range(-2.0..2.0));
        let plane = ComplexPlane::new(complexify(&e[0], &e[1], 1.0, 1.0), complexify(&e[2], &e[3], a, b));
        let ki = complex_sectional_curvature(r, &plane)?;
        let margin = (ki - lower).min(upper - ki);
        // the lower bound is strict, the upper one is not
        if ki <= lower - slack || ki > upper + slack {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok(PinchReport {
        delta,
        samples: sample_count,
        violations: Some(violations),
        worst_margin: Some(worst),
        hypothesis_satisfied: true,
        seed,
    })
}

/// Checks `K_i(σ) > K_r(σ̂)/d > 0` for one isotropic plane `σ = span{z, w}`
/// and the real plane associated to the isotropic vector `v ∈ σ`.
pub fn condition_d_holds(r: &CurvatureOperator, plane: &ComplexPlane, v: &[Complex64], d: usize) -> Result<bool> {
    let ki = complex_sectional_curvature(r, plane)?;
    let (x, y) = associated_real_plane(v)?;
    let kr = r.sectional(&x, &y);
    Ok(kr > 0.0 && ki > kr / d as f64)
}

/// Samples isotropic planes `span{e₁ + ie₂, e₃ + ie₄}` over random
/// orthonormal 4-frames together with a random isotropic vector in each.
pub fn curvature_condition_d(r: &CurvatureOperator, d: usize, sample_count: usize, seed: u64) -> Result<bool> {
    let n = r.dim();
    if n < 4 {
        return Err(precondition("need n ≥ 4 for isotropic planes"));
    }
    if d < 1 {
        return Err(precondition("d must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..sample_count {
        let e = random_frame(n, 4, &mut rng);
        let z = complexify(&e[0], &e[1], 1.0, 1.0);
        let w = complexify(&e[2], &e[3], 1.0, 1.0);
        let s = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let t = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
        let v: Vec<Complex64> = z.iter().zip(&w).map(|(a, b)| a * t.cos() + b * s * t.sin()).collect();
        if !condition_d_holds(r, &ComplexPlane::new(z, w), &v, d)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn space_form_symmetries() {
        assert!(CurvatureOperator::constant(5, 0.7).symmetry_defect() < 1e-14);
        assert!(CurvatureOperator::product_s2xs2().symmetry_defect() < 1e-14);
        let r = CurvatureOperator::pinched_mixture(5, 1.0, 0.6, 0.5, 0.05, 3);
        assert!(r.symmetry_defect() < 1e-12);
    }

    #[test]
    fn half_isotropic_frame_plane() {
        let n = 4;
        let p = ComplexPlane::new(complexify(&e(n, 0), &e(n, 1), 1.0, 1.0), complexify(&e(n, 2), &e(n, 3), 2.0, 0.5));
        assert!(is_half_isotropic(&p, 1e-9));
        assert!(!is_isotropic(&p, 1e-9));
        let q = ComplexPlane::real(&e(n, 0), &e(n, 1));
        assert!(!is_half_isotropic(&q, 1e-9));
    }

    #[test]
    fn associated_plane_of_rotated_vector() {
        let n = 3;
        let th = 0.8;
        let v: Vec<Complex64> = complexify(&e(n, 0), &e(n, 1), 1.0, 1.0)
            .into_iter()
            .map(|c| c * Complex64::from_polar(1.0, th))
            .collect();
        let (x, y) = associated_real_plane(&v).unwrap();
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-15);
        assert!(x[2].abs() < 1e-15 && y[2].abs() < 1e-15);
        let bad: Vec<Complex64> = complexify(&e(n, 0), &e(n, 0), 1.0, 1.0);
        assert!(associated_real_plane(&bad).is_err());
    }

    #[test]
    fn pinch_bound_values() {
        let (l, u) = pinch_bounds(0.5).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15 && (u - 7.0 / 6.0).abs() < 1e-15);
        assert_eq!(pinch_bounds(1.0).unwrap(), (1.0, 1.0));
        assert!(pinch_bounds(0.0).is_err());
        assert!(pinch_bounds(1.5).is_err());
    }
}
