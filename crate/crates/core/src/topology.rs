//! Schubert cell counts of real Grassmannians and a mod-2 Morse complex
//! built from supplied critical points and trajectory counts.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};

/// Largest ambient dimension for which cell counts are computed; the
/// middle binomial coefficient C(40, 20) still fits comfortably in `u64`.
pub const MAX_AMBIENT: usize = 40;

/// Number of Schubert cells of `G_m(ℝᴺ)` in each dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchubertCensus {
    pub m: usize,
    #[serde(rename = "N")]
    pub ambient: usize,
    /// `counts[k]` cells of dimension `k`, for `k = 0..=m(N−m)`.
    pub counts: Vec<u64>,
}

impl SchubertCensus {
    pub fn dimension(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_palindromic(&self) -> bool {
        self.counts.iter().eq(self.counts.iter().rev())
    }

    /// `k,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

fn check_range(m: usize, ambient: usize) -> Result<()> {
    if ambient > MAX_AMBIENT {
        return Err(Error::Resource(format!("N = {ambient} exceeds the guard {MAX_AMBIENT}")));
    }
    if m < 1 || m >= ambient {
        return Err(precondition(format!("need 1 ≤ m < N, got m = {m}, N = {ambient}")));
    }
    Ok(())
}

/// Cells of `G_m(ℝᴺ)` correspond to partitions with at most `m` parts, each
/// at most `N − m`; the cell dimension is the size of the partition.
///
/// Partitions are enumerated by their largest part, with the suffix counts
/// memoized on (parts left, bound).
pub fn schubert_cell_counts(m: usize, ambient: usize) -> Result<SchubertCensus> {
    check_range(m, ambient)?;
    let width = ambient - m;
    let mut memo: HashMap<(usize, usize), Vec<u64>> = HashMap::new();
    let counts = partitions_in_box(m, width, &mut memo);
    Ok(SchubertCensus { m, ambient, counts })
}

/// Size distribution of nonincreasing sequences of `parts` entries in `0..=bound`.
fn partitions_in_box(parts: usize, bound: usize, memo: &mut HashMap<(usize, usize), Vec<u64>>) -> Vec<u64> {
    if parts == 0 {
        return vec![1];
    }
    if let Some(v) = memo.get(&(parts, bound)) {
        return v.clone();
    }
    let mut out = vec![0u64; parts * bound + 1];
    for first in 0..=bound {
        let rest = partitions_in_box(parts - 1, first, memo);
        for (k, c) in rest.iter().enumerate() {
            out[first + k] += c;
        }
    }
    memo.insert((parts, bound), out.clone());
    out
}

/// Coefficients of the Gaussian binomial `[N choose m]_q`, lowest degree
/// first, from `[N, m] = [N−1, m−1] + q^m [N−1, m]`.
pub fn gaussian_binomial(m: usize, ambient: usize) -> Result<Vec<u64>> {
    check_range(m, ambient)?;
    // row[j] holds [r choose j] for the current r
    let mut row: Vec<Vec<u64>> = vec![vec![1]];
    for r in 1..=ambient {
        let mut next = Vec::with_capacity(r + 1);
        for j in 0..=r {
            let mut poly = vec![0u64; j * (r - j) + 1];
            if j >= 1 {
                for (k, c) in row[j - 1].iter().enumerate() {
                    poly[k] += c;
                }
            }
            if j < r {
                for (k, c) in row[j].iter().enumerate() {
                    poly[k + j] = poly[k + j].checked_add(*c).ok_or_else(|| Error::Resource("q-binomial overflow".into()))?;
                }
            }
            next.push(poly);
        }
        row = next;
    }
    Ok(row.swap_remove(m))
}

/// Lower bounds on the number of critical points of each Morse index:
/// `λ ↦ p₃(λ − n + 2)` for `n − 2 ≤ λ ≤ 2n − 5`, with `p₃` the cell counts of
/// `G₃(ℝⁿ⁺¹)`.
pub fn predicted_minimum_counts(n: usize) -> Result<BTreeMap<usize, u64>> {
    if n < 4 {
        return Err(precondition(format!("predicted counts need n ≥ 4, got {n}")));
    }
    let census = schubert_cell_counts(3, n + 1)?;
    Ok((n - 2..=2 * n - 5).map(|lambda| (lambda, census.counts[lambda + 2 - n])).collect())
}

/// How the cohomology of `BO(3)` acts on a critical orbit: `A` for prime
/// two-sided orbits, `B` for projective planes and double covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub degree: usize,
    pub label: Label,
}

impl Generator {
    pub fn new(id: impl Into<String>, degree: usize, label: Label) -> Self {
        Self { id: id.into(), degree, label }
    }
}

/// Signed or unsigned count of flow lines from `from` down to `to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub from: String,
    pub to: String,
    #[serde(rename = "count_mod2")]
    pub count: i64,
}

impl Trajectory {
    pub fn new(from: impl Into<String>, to: impl Into<String>, count: i64) -> Self {
        Self { from: from.into(), to: to.into(), count }
    }
}

#[derive(Serialize, Deserialize)]
struct ComplexJson {
    generators: Vec<Generator>,
    boundaries: Vec<Trajectory>,
}

/// Chain complex over ℤ₂. The boundary in degree `λ` is stored as a 0/1
/// matrix with a row per generator of degree `λ − 1` and a column per
/// generator of degree `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexJson", into = "ComplexJson")]
pub struct MorseComplexZ2 {
    generators: Vec<Generator>,
    by_degree: Vec<Vec<usize>>,
    boundaries: Vec<Vec<Vec<bool>>>,
}

impl TryFrom<ComplexJson> for MorseComplexZ2 {
    type Error = Error;

    fn try_from(j: ComplexJson) -> Result<Self> {
        build_complex(j.generators, &j.boundaries)
    }
}

impl From<MorseComplexZ2> for ComplexJson {
    fn from(c: MorseComplexZ2) -> Self {
        let boundaries = c.trajectories();
        ComplexJson { generators: c.generators, boundaries }
    }
}

impl MorseComplexZ2 {
    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn top_degree(&self) -> Option<usize> {
        self.by_degree.len().checked_sub(1)
    }

    /// Generators of degree `lambda`, in input order.
    pub fn generators_in(&self, lambda: usize) -> impl Iterator<Item = &Generator> {
        self.by_degree.get(lambda).into_iter().flatten().map(|&i| &self.generators[i])
    }

    pub fn count_in(&self, lambda: usize) -> usize {
        self.by_degree.get(lambda).map_or(0, Vec::len)
    }

    /// Boundary matrix of degree `lambda` (empty below degree 1).
    pub fn boundary(&self, lambda: usize) -> &[Vec<bool>] {
        self.boundaries.get(lambda).map_or(&[], Vec::as_slice)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.by_degree.iter().enumerate().map(|(l, g)| if l % 2 == 0 { g.len() as i64 } else { -(g.len() as i64) }).sum()
    }

    /// Nonzero boundary coefficients as trajectory records with count 1.
    pub fn trajectories(&self) -> Vec<Trajectory> {
        let mut out = Vec::new();
        for (lambda, mat) in self.boundaries.iter().enumerate().skip(1) {
            for (r, row) in mat.iter().enumerate() {
                for (c, &bit) in row.iter().enumerate() {
                    if bit {
                        let from = &self.generators[self.by_degree[lambda][c]].id;
                        let to = &self.generators[self.by_degree[lambda - 1][r]].id;
                        out.push(Trajectory::new(from.clone(), to.clone(), 1));
                    }
                }
            }
        }
        out
    }

    fn restricted(&self, keep: Label) -> Result<Self> {
        let generators: Vec<Generator> = self.generators.iter().filter(|g| g.label == keep).cloned().collect();
        let traj: Vec<Trajectory> = self
            .trajectories()
            .into_iter()
            .filter(|t| self.label_of(&t.from) == Some(keep) && self.label_of(&t.to) == Some(keep))
            .collect();
        build_complex(generators, &traj)
    }

    fn label_of(&self, id: &str) -> Option<Label> {
        self.generators.iter().find(|g| g.id == id).map(|g| g.label)
    }
}

/// Reduces trajectory counts mod 2 into boundary matrices and checks that
/// consecutive boundaries compose to zero.
pub fn build_complex(generators: Vec<Generator>, trajectory_counts: &[Trajectory]) -> Result<MorseComplexZ2> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, g) in generators.iter().enumerate() {
        if index.insert(g.id.as_str(), i).is_some() {
            return Err(precondition(format!("duplicate generator id `{}`", g.id)));
        }
    }
    let top = generators.iter().map(|g| g.degree).max();
    let mut by_degree: Vec<Vec<usize>> = vec![Vec::new(); top.map_or(0, |t| t + 1)];
    let mut position = vec![0; generators.len()];
    for (i, g) in generators.iter().enumerate() {
        position[i] = by_degree[g.degree].len();
        by_degree[g.degree].push(i);
    }
    let mut boundaries: Vec<Vec<Vec<bool>>> = (0..by_degree.len())
        .map(|l| if l == 0 { Vec::new() } else { vec![vec![false; by_degree[l].len()]; by_degree[l - 1].len()] })
        .collect();

    for t in trajectory_counts {
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| precondition(format!("unknown generator `{id}`")));
        let (p, q) = (lookup(&t.from)?, lookup(&t.to)?);
        let (dp, dq) = (generators[p].degree, generators[q].degree);
        if dp != dq + 1 {
            return Err(precondition(format!(
                "trajectory {} → {} joins degrees {dp} and {dq}, which do not differ by one",
                t.from, t.to
            )));
        }
        if t.count.rem_euclid(2) == 1 {
            let cell = &mut boundaries[dp][position[q]][position[p]];
            *cell = !*cell;
        }
    }

    for lambda in 2..boundaries.len() {
        let (upper, lower) = (&boundaries[lambda], &boundaries[lambda - 1]);
        for c in 0..by_degree[lambda].len() {
            for r in 0..by_degree[lambda - 2].len() {
                let parity = (0..by_degree[lambda - 1].len()).filter(|&m| upper[m][c] && lower[r][m]).count() % 2;
                if parity == 1 {
                    return Err(Error::Inconsistent { degree: lambda });
                }
            }
        }
    }
    Ok(MorseComplexZ2 { generators, by_degree, boundaries })
}

/// Rank over ℤ₂ by row reduction.
pub fn rank_z2(matrix: &[Vec<bool>]) -> usize {
    let mut rows: Vec<Vec<bool>> = matrix.to_vec();
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c]) else { continue };
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank && rows[r][c] {
                let (pivot, other) = if r < rank {
                    let (a, b) = rows.split_at_mut(rank);
                    (&b[0], &mut a[r])
                } else {
                    let (a, b) = rows.split_at_mut(r);
                    (&a[rank], &mut b[0])
                };
                for (x, y) in other.iter_mut().zip(pivot) {
                    *x ^= *y;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Betti numbers in degrees `0..=top`.
pub fn homology_z2(complex: &MorseComplexZ2) -> Vec<usize> {
    let n = complex.by_degree.len();
    let ranks: Vec<usize> = (0..=n).map(|l| if l == 0 || l >= n { 0 } else { rank_z2(&complex.boundaries[l]) }).collect();
    (0..n).map(|l| complex.by_degree[l].len() - ranks[l] - ranks[l + 1]).collect()
}

/// Model complex for the range below the excluded orbits: `p₃(k)` generators
/// of degree `n − 2 + k` for `k ≤ n − 3`, all labeled `A`, zero differential.
pub fn desk_model(n: usize) -> Result<MorseComplexZ2> {
    let predicted = predicted_minimum_counts(n)?;
    let mut generators = Vec::new();
    for (&lambda, &count) in &predicted {
        for j in 0..count {
            generators.push(Generator::new(format!("a{lambda}_{j}"), lambda, Label::A));
        }
    }
    build_complex(generators, &[])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexCount {
    pub degree: usize,
    pub a_generators: usize,
    pub predicted: u64,
    pub holds: bool,
}

/// The `A`-subcomplex and the quotient complex on the `B` generators.
#[derive(Debug, Clone)]
pub struct ActionSplit {
    pub a_complex: MorseComplexZ2,
    pub b_quotient: MorseComplexZ2,
    pub verified: bool,
}

impl ActionSplit {
    /// Per index, the number of `A` generators against the predicted lower bound.
    pub fn morse_inequalities(&self, n: usize) -> Result<Vec<IndexCount>> {
        Ok(predicted_minimum_counts(n)?
            .into_iter()
            .map(|(degree, predicted)| {
                let a = self.a_complex.count_in(degree);
                IndexCount { degree, a_generators: a, predicted, holds: a as u64 >= predicted }
            })
            .collect())
    }
}

/// Checks that the boundary never carries an `A` generator onto a `B`
/// generator, then splits the complex accordingly.
pub fn split_by_action(complex: &MorseComplexZ2) -> Result<ActionSplit> {
    for t in complex.trajectories() {
        if complex.label_of(&t.from) == Some(Label::A) && complex.label_of(&t.to) == Some(Label::B) {
            return Err(Error::ClosureViolation { from: t.from, to: t.to });
        }
    }
    Ok(ActionSplit { a_complex: complex.restricted(Label::A)?, b_quotient: complex.restricted(Label::B)?, verified: true })
}
