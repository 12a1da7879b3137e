//! Profile (skyline) direct solvers with reverse Cuthill–McKee ordering.
//!
//! Meshes on the sphere give matrices whose RCM profile is roughly the
//! number of vertices on a latitude ring, so an envelope factorization is
//! small enough for every level this crate allows and keeps the arithmetic
//! strictly sequential and reproducible.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill–McKee permutation (`perm[new] = old`) of a symmetric
/// adjacency structure. Disconnected components are ordered one after the
/// other.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut ecc = bfs_levels(adj, current).len();
    for _ in 0..8 {
        let levels = bfs_levels(adj, current);
        let candidate = *levels
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .unwrap();
        let cand_ecc = bfs_levels(adj, candidate).len();
        if cand_ecc <= ecc {
            break;
        }
        ecc = cand_ecc;
        current = candidate;
    }
    current
}

/// Row envelope of a permuted symmetric pattern: `first[i]` is the smallest
/// column index (in the new ordering) with a nonzero in row `i`.
fn envelope(a: &CsrMatrix, perm: &[usize], inv: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = a.dim();
    let mut first = vec![0usize; n];
    for (new_i, &old_i) in perm.iter().enumerate() {
        let mut f = new_i;
        for (old_j, _) in a.row(old_i) {
            f = f.min(inv[old_j]);
        }
        first[new_i] = f;
    }
    let mut ptr = vec![0usize; n + 1];
    for i in 0..n {
        ptr[i + 1] = ptr[i] + (i - first[i] + 1);
    }
    (first, ptr)
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` in row-envelope storage.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    ptr: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors a symmetric matrix; fails with [`Error::NotPositiveDefinite`]
    /// at the first nonpositive pivot.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(&a.adjacency());
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        let inv = invert(&perm);
        let (first, ptr) = envelope(a, &perm, &inv);
        let mut data = vec![0.0; ptr[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    data[ptr[new_i] + new_j - first[new_i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = ptr[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, tail) = data.split_at_mut(row_i);
                let lj = &head[ptr[j]..ptr[j + 1]];
                let li = &tail[..i - fi + 1];
                let s = dot(&li[k0 - fi..j - fi], &lj[k0 - fj..j - fj]);
                let ljj = lj[j - fj];
                tail[j - fi] = (tail[j - fi] - s) / ljj;
            }
            let li = &data[row_i..row_i + (i - fi)];
            let s = dot(li, li);
            let d = data[row_i + i - fi] - s;
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            data[row_i + i - fi] = d.sqrt();
        }
        Ok(Self { perm, first, ptr, data })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn fill(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.ptr[i]..self.ptr[i + 1]];
            let s = dot(&row[..i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.ptr[i]..self.ptr[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (k, l) in (fi..i).zip(row) {
                y[k] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// LU factor without pivoting of a matrix with symmetric sparsity pattern:
/// unit-lower `L` stored by rows, `U` stored by columns, sharing one envelope.
#[derive(Debug, Clone)]
pub struct SkylineLu {
    perm: Vec<usize>,
    first: Vec<usize>,
    ptr: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SkylineLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        // symmetrized pattern for the ordering
        let mut adj = a.adjacency();
        for i in 0..n {
            for (j, _) in a.row(i) {
                if j != i {
                    adj[j].push(i);
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let inv = invert(&perm);
        let mut first = vec![0usize; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            let mut f = new_i;
            for &old_j in &adj[old_i] {
                f = f.min(inv[old_j]);
            }
            first[new_i] = f;
        }
        let mut ptr = vec![0usize; n + 1];
        for i in 0..n {
            ptr[i + 1] = ptr[i] + (i - first[i] + 1);
        }
        let mut lower = vec![0.0; ptr[n]];
        let mut upper = vec![0.0; ptr[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in a.row(old_i) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    // row new_i of the lower part (diagonal lives in upper)
                    if new_j == new_i {
                        upper[ptr[new_i] + new_i - first[new_i]] = v;
                    } else {
                        lower[ptr[new_i] + new_j - first[new_i]] = v;
                    }
                } else {
                    // entry (new_i, new_j) above the diagonal: column new_j
                    upper[ptr[new_j] + new_i - first[new_j]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            // row i of L
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = dot(
                    &lower[ptr[i] + k0 - fi..ptr[i] + j - fi],
                    &upper[ptr[j] + k0 - fj..ptr[j] + j - fj],
                );
                let ujj = upper[ptr[j] + j - fj];
                let idx = ptr[i] + j - fi;
                lower[idx] = (lower[idx] - s) / ujj;
            }
            // column i of U
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = dot(
                    &lower[ptr[j] + k0 - fj..ptr[j] + j - fj],
                    &upper[ptr[i] + k0 - fi..ptr[i] + j - fi],
                );
                upper[ptr[i] + j - fi] -= s;
            }
            let d = upper[ptr[i] + i - fi];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Numeric(format!("zero pivot at row {}", perm[i])));
            }
        }
        Ok(Self { perm, first, ptr, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let s = dot(&self.lower[self.ptr[i]..self.ptr[i] + i - fi], &y[fi..i]);
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let col = &self.upper[self.ptr[i]..self.ptr[i + 1]];
            let xi = y[i] / col[i - fi];
            y[i] = xi;
            for (k, u) in (fi..i).zip(col) {
                y[k] -= u * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::TripletBuilder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring_laplacian(n: usize, shift: f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            let j = (i + 1) % n;
            t.push(i, i, 2.0 + shift);
            t.push(i, j, -1.0);
            t.push(j, i, -1.0);
        }
        t.build()
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = ring_laplacian(17, 0.1);
        let mut p = reverse_cuthill_mckee(&a.adjacency());
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves_ring() {
        let a = ring_laplacian(40, 0.3);
        let chol = SkylineCholesky::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = chol.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = ring_laplacian(10, -0.5);
        assert!(matches!(SkylineCholesky::factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.push(i, i, 4.0);
            let j = (i * 7 + 3) % n;
            if j != i {
                t.push(i, j, rng.random_range(-1.0..1.0));
                t.push(j, i, rng.random_range(-1.0..1.0));
            }
        }
        let a = t.build();
        let lu = SkylineLu::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = lu.solve(&a.mul_vec(&x_true));
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
