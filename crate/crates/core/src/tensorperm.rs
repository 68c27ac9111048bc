//! Permutation operators on `(ℂ^d)^{⊗n}`, symmetrizers and the sector
//! decomposition of `𝔖(A ⊔ B)` by crossing number.
//!
//! Basis index convention: slot 0 is the most significant digit. `U_σ` moves
//! the content of slot `j` to slot `σ(j)`, so `U_σ U_τ = U_{σ∘τ}`.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::error::{check_side, Error, Result};
use crate::linalg::{c, frobenius, hermiticity_defect, CMat};

/// A permutation of `0..n`, `σ(j) = images[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Perm(Vec<usize>);

impl Perm {
    pub fn identity(n: usize) -> Self {
        Perm((0..n).collect())
    }

    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(format!("{images:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(Perm(images))
    }

    /// Product of disjoint transpositions `(x_i y_i)`.
    pub fn swaps(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut p: Vec<usize> = (0..n).collect();
        for &(x, y) in pairs {
            p.swap(x, y);
        }
        Perm(p)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn apply(&self, j: usize) -> usize {
        self.0[j]
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm(other.0.iter().map(|&j| self.0[j]).collect())
    }

    pub fn inverse(&self) -> Perm {
        let mut inv = vec![0; self.n()];
        for (j, &i) in self.0.iter().enumerate() {
            inv[i] = j;
        }
        Perm(inv)
    }

    pub fn cycle_count(&self) -> usize {
        let mut seen = vec![false; self.n()];
        let mut cycles = 0;
        for start in 0..self.n() {
            if !seen[start] {
                cycles += 1;
                let mut j = start;
                while !seen[j] {
                    seen[j] = true;
                    j = self.0[j];
                }
            }
        }
        cycles
    }

    /// All of `𝔖_n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Perm> {
        (0..n).permutations(n).map(Perm).collect()
    }

    /// Every permutation of `0..n` that only moves slots within `blocks`
    /// (each block permuted internally; other slots fixed).
    pub fn young_subgroup(n: usize, blocks: &[Vec<usize>]) -> Vec<Perm> {
        if blocks.is_empty() {
            return vec![Perm::identity(n)];
        }
        let per_block: Vec<Vec<Vec<usize>>> = blocks
            .iter()
            .map(|b| b.iter().copied().permutations(b.len()).collect())
            .collect();
        per_block
            .iter()
            .map(|v| v.iter())
            .multi_cartesian_product()
            .map(|choice| {
                let mut p: Vec<usize> = (0..n).collect();
                for (block, image) in blocks.iter().zip(choice) {
                    for (&from, &to) in block.iter().zip(image) {
                        p[from] = to;
                    }
                }
                Perm(p)
            })
            .collect()
    }
}

/// Basis-index map `x ↦ π(x)` of `U_σ`.
pub fn perm_index_map(sigma: &Perm, d: usize) -> Vec<usize> {
    let n = sigma.n();
    let side = d.pow(n as u32);
    // weight of slot j in the flat index
    let weight: Vec<usize> = (0..n).map(|j| d.pow((n - 1 - j) as u32)).collect();
    (0..side)
        .map(|x| {
            let mut y = 0;
            for j in 0..n {
                let digit = (x / weight[j]) % d;
                y += digit * weight[sigma.apply(j)];
            }
            y
        })
        .collect()
}

/// A dense operator on `(ℂ^d)^{⊗n}`.
#[derive(Debug, Clone)]
pub struct TensorOperator {
    pub d: usize,
    pub slots: Vec<usize>,
    pub matrix: CMat,
}

impl TensorOperator {
    pub fn side(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_defect(&self.matrix) <= tol
    }

    pub fn trace(&self) -> f64 {
        crate::linalg::trace(&self.matrix).re
    }

    fn zero(d: usize, n: usize) -> Result<Self> {
        let side = check_side(d, n)?;
        Ok(Self {
            d,
            slots: (0..n).collect(),
            matrix: CMat::zeros(side, side),
        })
    }

    fn add_perm(&mut self, sigma: &Perm, weight: f64) {
        for (x, y) in perm_index_map(sigma, self.d).into_iter().enumerate() {
            self.matrix[(y, x)] += c(weight);
        }
    }
}

/// `U_σ` as a 0/1 matrix.
pub fn perm_operator(sigma: &Perm, d: usize) -> Result<TensorOperator> {
    let mut op = TensorOperator::zero(d, sigma.n())?;
    op.add_perm(sigma, 1.0);
    Ok(op)
}

/// `Σ_σ U_σ` over a list of permutations of `n` slots.
pub fn perm_sum(perms: &[Perm], n: usize, d: usize) -> Result<TensorOperator> {
    let mut op = TensorOperator::zero(d, n)?;
    for p in perms {
        op.add_perm(p, 1.0);
    }
    Ok(op)
}

/// `S^I` on `n` slots (identity outside `I`).
pub fn symmetrizer(slots: &[usize], n: usize, d: usize) -> Result<TensorOperator> {
    young_symmetrizer(&[slots.to_vec()], n, d)
}

/// `⊗_b S^{block_b}` for disjoint blocks of `0..n`.
pub fn young_symmetrizer(blocks: &[Vec<usize>], n: usize, d: usize) -> Result<TensorOperator> {
    check_side(d, n)?;
    perm_sum(&Perm::young_subgroup(n, blocks), n, d)
}

/// `d^{↑r} = d(d+1)⋯(d+r−1)`.
pub fn rising_factorial(d: u64, r: u32) -> BigInt {
    (0..u64::from(r)).fold(BigInt::one(), |acc, i| acc * BigInt::from(d + i))
}

pub fn rising_factorial_f64(d: u64, r: u32) -> f64 {
    rising_factorial(d, r).to_f64().unwrap_or(f64::INFINITY)
}

/// Monte Carlo deviation of an operator average from its exact value.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorMcCheck {
    pub deviation: f64,
    pub bound: f64,
    pub trials: u64,
    pub seed: u64,
}

impl OperatorMcCheck {
    pub fn passes(&self) -> bool {
        self.deviation < self.bound
    }
}

/// `‖avg ψ^{⊗r} − S/d^{↑r}‖_∞` over `trials` Haar states.
pub fn haar_identity_check(d: usize, r: usize, trials: usize, seed: u64) -> Result<OperatorMcCheck> {
    let side = check_side(d, r)?;
    let exact = symmetrizer(&(0..r).collect::<Vec<_>>(), r, d)?.matrix
        / c(rising_factorial_f64(d as u64, r as u32));
    let partials = crate::mc::run_chunks(trials, seed, |rng, n| {
        let mut acc = CMat::zeros(side, side);
        for _ in 0..n {
            let psi = crate::linalg::haar_state(d, rng);
            let mut v = psi.clone();
            for _ in 1..r {
                v = v.kronecker(&psi);
            }
            acc += crate::linalg::outer(&v);
        }
        acc
    });
    let total = partials
        .into_iter()
        .fold(CMat::zeros(side, side), |a, b| a + b);
    let avg = total / c(trials as f64);
    Ok(OperatorMcCheck {
        deviation: crate::linalg::op_norm_hermitian(&(avg - exact)),
        bound: 5.0 / (trials as f64).sqrt(),
        trials: trials as u64,
        seed,
    })
}

fn check_split(a: &[usize], b: &[usize]) -> Result<usize> {
    let n = a.len() + b.len();
    let all: BTreeSet<usize> = a.iter().chain(b).copied().collect();
    if all.len() != n || all.iter().next_back().is_some_and(|&x| x >= n) {
        return Err(Error::InvalidInput(
            "A and B must be disjoint and cover 0..|A|+|B|".into(),
        ));
    }
    Ok(n)
}

/// `j(σ) = |σ(A) ∩ B|`.
pub fn crossing_number(sigma: &Perm, a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|&&x| b.contains(&sigma.apply(x))).count()
}

#[derive(Debug, Clone)]
pub struct Sector {
    pub j: usize,
    pub perms: Vec<Perm>,
    pub operator: TensorOperator,
}

/// `S_j = Σ_{j(σ)=j} U_σ` for every `j`.
pub fn sector_decompose(a: &[usize], b: &[usize], d: usize) -> Result<Vec<Sector>> {
    let n = check_split(a, b)?;
    check_side(d, n)?;
    let mut by_j: BTreeMap<usize, Vec<Perm>> = BTreeMap::new();
    for p in Perm::all(n) {
        by_j.entry(crossing_number(&p, a, b)).or_default().push(p);
    }
    by_j.into_iter()
        .map(|(j, perms)| {
            let operator = perm_sum(&perms, n, d)?;
            Ok(Sector { j, perms, operator })
        })
        .collect()
}

/// The fixed representative `π_j`: swap the first `j` sorted slots of `A`
/// with the first `j` sorted slots of `B`.
pub fn standard_crossing(a: &[usize], b: &[usize], j: usize) -> Perm {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let pairs: Vec<(usize, usize)> = a.iter().copied().zip(b.iter().copied()).take(j).collect();
    Perm::swaps(a.len() + b.len(), &pairs)
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorIdentity {
    pub a_len: usize,
    pub b_len: usize,
    pub j: usize,
    pub d: usize,
    /// Integer recovered from the matrix route.
    pub multiplicity: i64,
    /// `|H|² / |HπH|` from counting fibers of `(h₁, h₂) ↦ h₁πh₂`.
    pub fiber_multiplicity: i64,
    /// `‖LHS − m·S_j‖_F`.
    pub residual: f64,
    /// The double coset equals the set of permutations with crossing `j`.
    pub coset_is_sector: bool,
}

impl SectorIdentity {
    pub fn holds(&self, tol: f64) -> bool {
        self.multiplicity == self.fiber_multiplicity && self.residual <= tol && self.coset_is_sector
    }
}

/// Verify `(S^A⊗S^B) U_{π_j} (S^A⊗S^B) = m·S_j` by dense matrix products and
/// by an independent fiber count over `𝔖(A)×𝔖(B)`.
pub fn sector_identity_check(a: &[usize], b: &[usize], j: usize, d: usize) -> Result<SectorIdentity> {
    let n = check_split(a, b)?;
    if j > a.len().min(b.len()) {
        return Err(Error::InvalidInput(format!("crossing number {j} out of range")));
    }
    let blocks = [a.to_vec(), b.to_vec()];
    let h_sym = young_symmetrizer(&blocks, n, d)?;
    let pi = standard_crossing(a, b, j);
    let u_pi = perm_operator(&pi, d)?;
    let lhs = &h_sym.matrix * &u_pi.matrix * &h_sym.matrix;
    let sectors = sector_decompose(a, b, d)?;
    let sector = sectors
        .iter()
        .find(|s| s.j == j)
        .ok_or_else(|| Error::IdentityViolated(format!("empty sector {j}")))?;
    let s_j = &sector.operator.matrix;

    // integer ratio read off the largest entry of S_j
    let (idx, _) = s_j
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.re.total_cmp(&y.1.re))
        .unwrap();
    let ratio = lhs.as_slice()[idx].re / s_j.as_slice()[idx].re;
    let multiplicity = ratio.round() as i64;
    if (ratio - multiplicity as f64).abs() > 1e-9 {
        return Err(Error::IdentityViolated(format!(
            "non-integer sector multiplicity {ratio}"
        )));
    }
    let residual = frobenius(&(lhs - s_j * c(multiplicity as f64)));

    let h = Perm::young_subgroup(n, &blocks);
    let mut fibers: BTreeMap<Perm, i64> = BTreeMap::new();
    for h1 in &h {
        let left = h1.compose(&pi);
        for h2 in &h {
            *fibers.entry(left.compose(h2)).or_default() += 1;
        }
    }
    let sizes: BTreeSet<i64> = fibers.values().copied().collect();
    if sizes.len() != 1 {
        return Err(Error::IdentityViolated("unequal double-coset fibers".into()));
    }
    let fiber_multiplicity = (h.len() * h.len()) as i64 / fibers.len() as i64;
    let coset: BTreeSet<&Perm> = fibers.keys().collect();
    let sector_set: BTreeSet<&Perm> = sector.perms.iter().collect();

    Ok(SectorIdentity {
        a_len: a.len(),
        b_len: b.len(),
        j,
        d,
        multiplicity,
        fiber_multiplicity,
        residual,
        coset_is_sector: coset == sector_set,
    })
}

/// Label placements for `T` rounds of `k` slots: `rounds[t][r]` lists the
/// round-local slots carrying label `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placements {
    pub k: usize,
    pub rounds: Vec<Vec<Vec<usize>>>,
}

impl Placements {
    pub fn new(k: usize, rounds: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let labels = rounds.first().map_or(0, Vec::len);
        for round in &rounds {
            if round.len() != labels {
                return Err(Error::InvalidInput("rounds disagree on label count".into()));
            }
            let mut all: Vec<usize> = round.iter().flatten().copied().collect();
            all.sort_unstable();
            if all != (0..k).collect::<Vec<_>>() {
                return Err(Error::InvalidInput(format!(
                    "round placement {round:?} is not a partition of 0..{k}"
                )));
            }
        }
        Ok(Self { k, rounds })
    }

    pub fn rounds_count(&self) -> usize {
        self.rounds.len()
    }

    pub fn labels(&self) -> usize {
        self.rounds.first().map_or(0, Vec::len)
    }

    pub fn total_slots(&self) -> usize {
        self.k * self.rounds.len()
    }

    /// `b_r^{(t)}`.
    pub fn counts(&self) -> Vec<Vec<usize>> {
        self.rounds
            .iter()
            .map(|round| round.iter().map(Vec::len).collect())
            .collect()
    }

    /// `A_r = Σ_t b_r^{(t)}`.
    pub fn totals(&self) -> Vec<usize> {
        (0..self.labels())
            .map(|r| self.rounds.iter().map(|round| round[r].len()).sum())
            .collect()
    }

    /// Nonempty `I_{t,r}` in global slot numbering.
    pub fn round_blocks(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for (t, round) in self.rounds.iter().enumerate() {
            for block in round {
                if !block.is_empty() {
                    out.push(block.iter().map(|&x| t * self.k + x).collect());
                }
            }
        }
        out
    }

    /// Nonempty `Q_r = ⊔_t I_{t,r}` in global slot numbering.
    pub fn merged_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.labels())
            .map(|r| {
                self.rounds
                    .iter()
                    .enumerate()
                    .flat_map(|(t, round)| round[r].iter().map(move |&x| t * self.k + x))
                    .collect::<Vec<_>>()
            })
            .filter(|b| !b.is_empty())
            .collect()
    }
}

/// Each of the `k` slots of every round gets a uniform label in `0..labels`.
pub fn random_placements<R: rand::Rng + ?Sized>(
    k: usize,
    rounds: usize,
    labels: usize,
    rng: &mut R,
) -> Result<Placements> {
    if labels == 0 {
        return Err(Error::InvalidInput("at least one label required".into()));
    }
    let rounds = (0..rounds)
        .map(|_| {
            let mut round = vec![Vec::new(); labels];
            for slot in 0..k {
                round[rng.random_range(0..labels)].push(slot);
            }
            round
        })
        .collect();
    Placements::new(k, rounds)
}

/// `tr(G U_σ) = Σ_x G[x, π(x)]` with `G = ⊗_t G_t` evaluated entrywise.
fn trace_product_with_perm(factors: &[CMat], d: usize, k: usize, sigma: &Perm) -> f64 {
    let block = d.pow(k as u32);
    let rounds = factors.len();
    let map = perm_index_map(sigma, d);
    let mut acc = c(0.0);
    for (x, &y) in map.iter().enumerate() {
        let mut entry = c(1.0);
        let (mut xr, mut yr) = (x, y);
        for t in (0..rounds).rev() {
            entry *= factors[t][(xr % block, yr % block)];
            xr /= block;
            yr /= block;
        }
        acc += entry;
    }
    acc.re
}

#[derive(Debug, Clone, Serialize)]
pub struct PermutationInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl PermutationInequality {
    pub fn holds(&self) -> bool {
        self.margin >= -1e-9 * self.lhs.abs()
    }
}

/// `tr(G ⊗_r S^{Q_r})` against `tr(G ⊗_t ⊗_r S^{I_{t,r}})` for
/// `G = G₁ ⊗ ⋯ ⊗ G_T`.
pub fn permutation_inequality_check(
    placements: &Placements,
    d: usize,
    factors: &[CMat],
) -> Result<PermutationInequality> {
    let n = placements.total_slots();
    check_side(d, n)?;
    let block = d.pow(placements.k as u32);
    if factors.len() != placements.rounds_count()
        || factors.iter().any(|g| g.nrows() != block || g.ncols() != block)
    {
        return Err(Error::DimensionMismatch(
            "one d^k × d^k factor per round required".into(),
        ));
    }
    let sum_over = |blocks: &[Vec<usize>]| -> f64 {
        Perm::young_subgroup(n, blocks)
            .iter()
            .map(|p| trace_product_with_perm(factors, d, placements.k, p))
            .sum()
    };
    let lhs = sum_over(&placements.merged_blocks());
    let rhs = sum_over(&placements.round_blocks());
    Ok(PermutationInequality {
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::linalg::random_psd;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn placements() -> impl Strategy<Value = Placements> {
        (1usize..=3, 1usize..=3, 1usize..=3)
            .prop_filter("at most six slots", |(k, t, _)| k * t <= 6)
            .prop_flat_map(|(k, t, m)| {
                proptest::collection::vec(proptest::collection::vec(0..m, k), t).prop_map(
                    move |labels| {
                        let rounds = labels
                            .iter()
                            .map(|round| {
                                (0..m)
                                    .map(|r| (0..k).filter(|&x| round[x] == r).collect())
                                    .collect()
                            })
                            .collect();
                        Placements::new(k, rounds).unwrap()
                    },
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn inverse_and_cycles(images in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle()) {
            let p = Perm::new(images).unwrap();
            prop_assert_eq!(p.compose(&p.inverse()), Perm::identity(5));
            let op = perm_operator(&p, 2).unwrap();
            prop_assert_eq!(op.trace(), 2f64.powi(p.cycle_count() as i32));
        }

        #[test]
        fn merging_labels_never_decreases_trace(pl in placements(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let block = 2usize.pow(pl.k as u32);
            let g: Vec<CMat> = (0..pl.rounds_count()).map(|_| random_psd(block, &mut rng)).collect();
            let res = permutation_inequality_check(&pl, 2, &g).unwrap();
            prop_assert!(res.holds(), "{:?}", res);
        }
    }
}
