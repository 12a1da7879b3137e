//! Smallest eigenpairs of sparse pencils `A x = λ B x` (`B` symmetric
//! positive definite) by shift-invert block Krylov iteration with
//! Rayleigh–Ritz restarts.
//!
//! Blocks make exactly repeated eigenvalues (icosahedral symmetry, uncoupled
//! normal directions) visible, which single-vector Lanczos would miss.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::profile::{SkylineCholesky, SkylineLu};
use super::sparse::{axpy, dot, norm, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Number of wanted eigenpairs.
    pub count: usize,
    /// Extra block vectors carried along to speed up convergence.
    pub guard: usize,
    /// Krylov blocks generated per cycle.
    pub depth: usize,
    pub tol: f64,
    pub max_cycles: usize,
    pub seed: u64,
    /// Shift below the spectrum; searched for when `None`.
    pub shift: Option<f64>,
}

impl EigenOptions {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            guard: (count / 2).max(6),
            depth: 3,
            tol: 1e-9,
            max_cycles: 40,
            seed: 0x5eed,
            shift: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub cycles: usize,
    pub shift: f64,
}

fn random_block(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Basis orthonormal in the inner product of `gram` (Euclidean when `None`).
struct Basis<'a> {
    gram: Option<&'a CsrMatrix>,
    q: Vec<Vec<f64>>,
    gq: Vec<Vec<f64>>,
}

impl<'a> Basis<'a> {
    fn new(gram: Option<&'a CsrMatrix>) -> Self {
        Self { gram, q: Vec::new(), gq: Vec::new() }
    }

    fn apply_gram(&self, v: &[f64]) -> Vec<f64> {
        match self.gram {
            Some(g) => g.mul_vec(v),
            None => v.to_vec(),
        }
    }

    /// Orthogonalizes `v` against the basis (two passes) and appends it
    /// unless it is numerically dependent. Returns the index when added.
    fn push(&mut self, mut v: Vec<f64>) -> Option<usize> {
        let original = self.apply_gram(&v);
        let norm0 = dot(&v, &original).max(0.0).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            return None;
        }
        for _ in 0..2 {
            for (q, gq) in self.q.iter().zip(&self.gq) {
                let c = dot(gq, &v);
                axpy(-c, q, &mut v);
            }
        }
        let mut gv = self.apply_gram(&v);
        let nv = dot(&v, &gv).max(0.0).sqrt();
        if nv <= 1e-10 * norm0 {
            return None;
        }
        let inv = 1.0 / nv;
        v.iter_mut().for_each(|x| *x *= inv);
        gv.iter_mut().for_each(|x| *x *= inv);
        self.q.push(v);
        self.gq.push(gv);
        Some(self.q.len() - 1)
    }

    fn len(&self) -> usize {
        self.q.len()
    }
}

fn combine(vectors: &[Vec<f64>], coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (v, c) in vectors.iter().zip(coeffs) {
        if c != 0.0 {
            axpy(c, v, &mut out);
        }
    }
    out
}

/// Finds a shift strictly below the spectrum of the symmetric pencil by
/// attempting Cholesky factorizations of `A - σB`.
pub fn shift_below_spectrum(a: &CsrMatrix, b: &CsrMatrix, start: Option<f64>) -> Result<(f64, SkylineCholesky)> {
    let da = a.diagonal();
    let db = b.diagonal();
    let scale = da
        .iter()
        .zip(&db)
        .map(|(x, y)| (x / y).abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut sigma = start.unwrap_or(-1e-3 * scale);
    let mut step = (1e-3 * scale).max(sigma.abs());
    for _ in 0..80 {
        match SkylineCholesky::factor(&a.linear_combination(1.0, b, -sigma)) {
            Ok(chol) => return Ok((sigma, chol)),
            Err(Error::NotPositiveDefinite { .. }) => {
                sigma -= step;
                step *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numeric("no shift below the spectrum found".into()))
}

/// The `opts.count` smallest eigenpairs of the symmetric pencil `(a, b)`.
/// Eigenvectors are `b`-orthonormal.
pub fn symmetric_smallest(a: &CsrMatrix, b: &CsrMatrix, opts: &EigenOptions) -> Result<EigenPairs> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Precondition("pencil dimension mismatch".into()));
    }
    let count = opts.count.min(n);
    let p = (count + opts.guard).min(n);
    let (shift, chol) = shift_below_spectrum(a, b, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block = random_block(n, p, &mut rng);

    let mut last = None;
    for cycle in 1..=opts.max_cycles {
        let mut basis = Basis::new(Some(b));
        let mut current: Vec<usize> = block.drain(..).filter_map(|v| basis.push(v)).collect();
        while current.len() < p {
            let v = random_block(n, 1, &mut rng).pop().unwrap();
            if let Some(k) = basis.push(v) {
                current.push(k);
            }
        }
        for _ in 0..opts.depth {
            if basis.len() + current.len() > n {
                break;
            }
            let next: Vec<Vec<f64>> = current.iter().map(|&k| chol.solve(&basis.gq[k])).collect();
            current = next.into_iter().filter_map(|v| basis.push(v)).collect();
            if current.is_empty() {
                break;
            }
        }

        let m = basis.len();
        let aq: Vec<Vec<f64>> = basis.q.iter().map(|q| a.mul_vec(q)).collect();
        let mut reduced = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = 0.5 * (dot(&basis.q[i], &aq[j]) + dot(&basis.q[j], &aq[i]));
                reduced[(i, j)] = v;
                reduced[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(reduced);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let keep = p.min(m);
        let mut values = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        let mut residuals = Vec::with_capacity(keep);
        for &k in order.iter().take(keep) {
            let lambda = eig.eigenvalues[k];
            let y = eig.eigenvectors.column(k);
            let x = combine(&basis.q, y.iter().copied());
            let ax = combine(&aq, y.iter().copied());
            let bx = combine(&basis.gq, y.iter().copied());
            let mut r = ax;
            axpy(-lambda, &bx, &mut r);
            let denom = norm(&bx) * lambda.abs().max(1.0);
            residuals.push(norm(&r) / denom);
            values.push(lambda);
            vectors.push(x);
        }
        let converged = residuals.iter().take(count).all(|&r| r <= opts.tol);
        if converged || cycle == opts.max_cycles {
            values.truncate(count);
            vectors.truncate(count);
            residuals.truncate(count);
            return Ok(EigenPairs { values, vectors, residuals, converged, cycles: cycle, shift });
        }
        block = vectors;
        last = Some(cycle);
    }
    Err(Error::Convergence { what: format!("eigensolver after {last:?} cycles"), residual: f64::NAN })
}

#[derive(Debug, Clone)]
pub struct GeneralEigenValues {
    /// Real parts, ascending.
    pub values: Vec<f64>,
    /// Imaginary parts matching `values`.
    pub imag: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub cycles: usize,
}

/// Smallest eigenvalues of a nonsymmetric pencil `A x = λ B x` whose
/// spectrum is (close to) real and lies above `shift`.
pub fn general_smallest(a: &CsrMatrix, b: &CsrMatrix, shift: f64, opts: &EigenOptions) -> Result<GeneralEigenValues> {
    let n = a.dim();
    let count = opts.count.min(n);
    let p = (count + opts.guard).min(n);
    let lu = SkylineLu::factor(&a.linear_combination(1.0, b, -shift))?;
    let op = |v: &[f64]| lu.solve(&b.mul_vec(v));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block = random_block(n, p, &mut rng);

    for cycle in 1..=opts.max_cycles {
        let mut basis = Basis::new(None);
        let mut current: Vec<usize> = block.drain(..).filter_map(|v| basis.push(v)).collect();
        while current.len() < p {
            let v = random_block(n, 1, &mut rng).pop().unwrap();
            if let Some(k) = basis.push(v) {
                current.push(k);
            }
        }
        for _ in 0..opts.depth {
            if basis.len() + current.len() > n {
                break;
            }
            let next: Vec<Vec<f64>> = current.iter().map(|&k| op(&basis.q[k])).collect();
            current = next.into_iter().filter_map(|v| basis.push(v)).collect();
            if current.is_empty() {
                break;
            }
        }
        let m = basis.len();
        let tq: Vec<Vec<f64>> = basis.q.iter().map(|q| op(q)).collect();
        let h = DMatrix::from_fn(m, m, |i, j| dot(&basis.q[i], &tq[j]));
        let thetas = ritz_values(&h)?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| thetas[j].re.total_cmp(&thetas[i].re));

        let keep = p.min(m);
        let mut values = Vec::with_capacity(keep);
        let mut imag = Vec::with_capacity(keep);
        let mut residuals = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        for &k in order.iter().take(keep) {
            let theta = thetas[k];
            let y = inverse_iteration(&h, theta.re, &mut rng);
            let x = combine(&basis.q, y.iter().copied());
            let mut r = combine(&tq, y.iter().copied());
            axpy(-theta.re, &x, &mut r);
            residuals.push(norm(&r) / (theta.re.abs() * norm(&x)).max(1e-300));
            // 1/θ = conj(θ)/|θ|²
            values.push(shift + theta.re / theta.norm_sqr());
            imag.push(-theta.im / theta.norm_sqr());
            vectors.push(x);
        }
        let converged = residuals.iter().take(count).all(|&r| r <= opts.tol);
        if converged || cycle == opts.max_cycles {
            let mut idx: Vec<usize> = (0..count.min(values.len())).collect();
            idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
            return Ok(GeneralEigenValues {
                values: idx.iter().map(|&i| values[i]).collect(),
                imag: idx.iter().map(|&i| imag[i]).collect(),
                residuals: idx.iter().map(|&i| residuals[i]).collect(),
                converged,
                cycles: cycle,
            });
        }
        block = vectors;
    }
    unreachable!("max_cycles is at least one iteration")
}

/// Eigenvalues of a small dense nonsymmetric matrix. nalgebra's Schur
/// iteration can cycle forever on clustered spectra, so this goes through
/// faer.
fn ritz_values(h: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let m = faer::Mat::<f64>::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)]);
    let values = m
        .eigenvalues()
        .map_err(|e| Error::Numeric(format!("dense eigenvalue iteration failed: {e:?}")))?;
    Ok(values.into_iter().map(|z| Complex64::new(z.re, z.im)).collect())
}

fn inverse_iteration(h: &DMatrix<f64>, theta: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let m = h.nrows();
    let scale = h.norm().max(1e-300);
    let shifted = h - DMatrix::identity(m, m) * (theta + 1e-10 * scale);
    let lu = shifted.lu();
    let mut y = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
    for _ in 0..3 {
        match lu.solve(&y) {
            Some(z) if z.iter().all(|v| v.is_finite()) => {
                let nz = z.norm();
                if nz == 0.0 {
                    break;
                }
                y = z / nz;
            }
            _ => break,
        }
    }
    y
}
