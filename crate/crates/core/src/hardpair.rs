//! Certified construction of the moment-matched hard pair `(p, q)`.
//!
//! The reference spectrum `a_i = 2i/(m(m+1))` fixes `e₁ … e_{m−1}`; varying
//! only the constant term `c` of
//! `F_c(λ) = λ^m − e₁λ^{m−1} + ⋯ + (−1)^m c` moves the roots while freezing
//! the first `s = m − 1` power sums. Root certification is exact: `F_c` is
//! evaluated in rational arithmetic at `m + 1` separators, and `m` strict sign
//! alternations of a degree-`m` polynomial pin down `m` simple roots, one per
//! bracket.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::symfun::{
    complete_homogeneous_from_elementary, elementary_from_points, from_f64, pow,
    power_sums_from_elementary, rat, rat_int, to_f64, ElemSymVector, Rational,
};

/// Number of points in the certification grid over `[c_* − η₀, c_* + η₀]`.
pub const GRID_POINTS: usize = 65;
/// Safety factor applied to the grid minimum of `h_{t−s−1}` when it varies
/// with `c`.
pub const MU_SAFETY: f64 = 0.99;
/// Smallest `|F'_c(x)|` accepted at a certified root.
pub const DERIVATIVE_MARGIN: f64 = 1e-12;
/// Bracket width, in bits, for the exact refinement of the final spectra.
pub const REFINE_BITS: u32 = 100;

/// A probability vector with exact rational weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    weights: Vec<Rational>,
}

impl Spectrum {
    pub fn new(weights: Vec<Rational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty spectrum".into()));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidInput("negative spectral weight".into()));
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.weights.iter().map(to_f64).collect()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn power_sum(&self, r: u32) -> Rational {
        self.weights.iter().map(|w| pow(w, r)).sum()
    }
}

impl Serialize for Spectrum {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("Spectrum", 2)?;
        st.serialize_field("weights", &self.to_f64())?;
        let exact: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        st.serialize_field("exact", &exact)?;
        st.end()
    }
}

/// A rational with its float rendering, for reports.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExactValue {
    pub value: f64,
    pub exact: String,
}

impl From<&Rational> for ExactValue {
    fn from(x: &Rational) -> Self {
        Self {
            value: to_f64(x),
            exact: x.to_string(),
        }
    }
}

/// `s = ⌈t/2⌉ − 1`, `m = s + 1` and the reference points `a_i = 2i/(m(m+1))`.
pub fn reference_points(t: u32) -> Result<(u32, u32, Spectrum)> {
    if t < 3 {
        return Err(Error::InvalidInput(format!("moment order t = {t} < 3")));
    }
    let s = t.div_ceil(2) - 1;
    let m = s + 1;
    let den = i64::from(m * (m + 1));
    let a = (1..=m).map(|i| rat(2 * i64::from(i), den)).collect();
    Ok((s, m, Spectrum::new(a)?))
}

/// `F_c` with frozen `e₁ … e_{m−1}`; stored as `[1, −e₁, e₂, …, (−1)^m c]`
/// (descending powers).
#[derive(Debug, Clone)]
pub struct FcPolynomial {
    coeffs: Vec<Rational>,
    coeffs_f64: Vec<f64>,
}

impl FcPolynomial {
    pub fn new(e: &ElemSymVector, c: &Rational) -> Self {
        let e = e.with_last(c.clone());
        let m = e.len();
        let coeffs: Vec<Rational> = (0..=m)
            .map(|j| {
                let ej = e.get(j);
                if j % 2 == 0 {
                    ej
                } else {
                    -ej
                }
            })
            .collect();
        let coeffs_f64 = coeffs.iter().map(to_f64).collect();
        Self { coeffs, coeffs_f64 }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for c in &self.coeffs {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs_f64.iter().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative_f64(&self, x: f64) -> f64 {
        let n = self.degree();
        let mut acc = 0.0;
        for (j, c) in self.coeffs_f64.iter().take(n).enumerate() {
            acc = acc * x + c * (n - j) as f64;
        }
        acc
    }

    fn sign(&self, x: &Rational) -> i32 {
        let v = self.eval(x);
        if v.is_zero() {
            0
        } else if v.is_positive() {
            1
        } else {
            -1
        }
    }
}

/// Certified simple positive roots of `F_c`.
#[derive(Debug, Clone)]
pub struct CertifiedRoots {
    pub c: Rational,
    /// Ascending.
    pub roots: Vec<f64>,
    /// Disjoint brackets with exact opposite signs at the endpoints.
    pub brackets: Vec<(Rational, Rational)>,
    pub min_abs_derivative: f64,
}

fn bisect_f64(poly: &FcPolynomial, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = poly.eval_f64(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = poly.eval_f64(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn certify_brackets(
    poly: &FcPolynomial,
    c: &Rational,
    brackets: Vec<(Rational, Rational)>,
) -> Result<CertifiedRoots> {
    let m = poly.degree();
    if brackets.len() != m {
        return Err(Error::CertificationFailed(format!(
            "found {} sign changes for a degree-{m} polynomial at c = {}",
            brackets.len(),
            to_f64(c)
        )));
    }
    let mut roots = Vec::with_capacity(m);
    let mut min_abs_derivative = f64::INFINITY;
    for (i, (lo, hi)) in brackets.iter().enumerate() {
        if lo.is_negative() || lo >= hi {
            return Err(Error::CertificationFailed("malformed bracket".into()));
        }
        if i > 0 && &brackets[i - 1].1 > lo {
            return Err(Error::CertificationFailed("overlapping brackets".into()));
        }
        let (sl, sh) = (poly.sign(lo), poly.sign(hi));
        if sl == 0 || sh == 0 || sl == sh {
            return Err(Error::CertificationFailed(format!(
                "no strict sign change on bracket {i} at c = {}",
                to_f64(c)
            )));
        }
        let x = bisect_f64(poly, to_f64(lo), to_f64(hi));
        min_abs_derivative = min_abs_derivative.min(poly.derivative_f64(x).abs());
        roots.push(x);
    }
    if !(min_abs_derivative > DERIVATIVE_MARGIN) {
        return Err(Error::CertificationFailed(format!(
            "|F'_c| = {min_abs_derivative:e} at a root is below the simplicity margin"
        )));
    }
    Ok(CertifiedRoots {
        c: c.clone(),
        roots,
        brackets,
        min_abs_derivative,
    })
}

/// Certify using separators `0 < mid(x₁,x₂) < ⋯ < 1` built from nearby roots.
pub fn certify_with_seeds(e: &ElemSymVector, c: &Rational, seeds: &[f64]) -> Result<CertifiedRoots> {
    let poly = FcPolynomial::new(e, c);
    let mut seps = vec![Rational::zero()];
    for w in seeds.windows(2) {
        seps.push(from_f64(0.5 * (w[0] + w[1])));
    }
    seps.push(Rational::one());
    let brackets = seps.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    certify_brackets(&poly, c, brackets)
}

/// Certify by scanning `[0, 1]` on successively finer uniform grids.
pub fn roots_of_fc(e: &ElemSymVector, c: &Rational) -> Result<CertifiedRoots> {
    let poly = FcPolynomial::new(e, c);
    let mut last_err = None;
    for level in 6..=14u32 {
        let n = 1usize << level;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| poly.eval_f64(x)).collect();
        let mut brackets = Vec::new();
        for i in 0..n {
            if vals[i] != 0.0 && vals[i + 1] != 0.0 && (vals[i] > 0.0) != (vals[i + 1] > 0.0) {
                brackets.push((from_f64(grid[i]), from_f64(grid[i + 1])));
            }
        }
        if brackets.len() == poly.degree() {
            match certify_brackets(&poly, c, brackets) {
                Ok(r) => return Ok(r),
                Err(e) => last_err = Some(e),
            }
        }
    }
    Err(last_err.unwrap_or_else(|| {
        Error::CertificationFailed(format!(
            "F_c does not have {} simple roots in (0, 1) at c = {}",
            poly.degree(),
            to_f64(c)
        ))
    }))
}

fn certify_continued(e: &ElemSymVector, c: &Rational, seeds: &[f64]) -> Result<CertifiedRoots> {
    certify_with_seeds(e, c, seeds).or_else(|_| roots_of_fc(e, c))
}

/// Exact bisection of every bracket down to width `2^{-bits}`; returns the
/// bracket midpoints.
pub fn refine_exact(e: &ElemSymVector, roots: &CertifiedRoots, bits: u32) -> Vec<Rational> {
    let poly = FcPolynomial::new(e, &roots.c);
    let width = Rational::new(One::one(), num_bigint::BigInt::one() << bits);
    let half = rat(1, 2);
    roots
        .brackets
        .iter()
        .zip(&roots.roots)
        .map(|((lo0, hi0), &guess)| {
            // tighten around the float estimate first when it still brackets
            let eps = from_f64(1e-13);
            let g = from_f64(guess);
            let (lo_try, hi_try) = (&g - &eps, &g + &eps);
            let (mut lo, mut hi) = if lo_try > *lo0
                && hi_try < *hi0
                && poly.sign(&lo_try) * poly.sign(&hi_try) < 0
            {
                (lo_try, hi_try)
            } else {
                (lo0.clone(), hi0.clone())
            };
            let s_lo = poly.sign(&lo);
            while &hi - &lo > width {
                let mid = (&lo + &hi) * &half;
                let s = poly.sign(&mid);
                if s == 0 {
                    return mid;
                }
                if s == s_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo + hi) * &half
        })
        .collect()
}

/// Outcome of the η₀ search.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleInterval {
    pub eta0: ExactValue,
    pub initial_guess: ExactValue,
    pub halvings: u32,
    pub grid_points: usize,
    pub min_abs_derivative: f64,
    #[serde(skip)]
    pub eta0_exact: Rational,
    #[serde(skip)]
    pub grid: Vec<Rational>,
    #[serde(skip)]
    pub grid_roots: Vec<Vec<f64>>,
}

fn certify_grid(
    e: &ElemSymVector,
    a: &[f64],
    c_star: &Rational,
    eta: &Rational,
) -> Result<(Vec<Rational>, Vec<Vec<f64>>, f64)> {
    let n = GRID_POINTS - 1;
    let grid: Vec<Rational> = (0..=n)
        .map(|i| c_star - eta + eta * rat(2 * i as i64, n as i64))
        .collect();
    let center = n / 2;
    let mut roots: Vec<Option<CertifiedRoots>> = vec![None; GRID_POINTS];
    roots[center] = Some(certify_continued(e, &grid[center], a)?);
    for i in center + 1..=n {
        let seeds = roots[i - 1].as_ref().unwrap().roots.clone();
        roots[i] = Some(certify_continued(e, &grid[i], &seeds)?);
    }
    for i in (0..center).rev() {
        let seeds = roots[i + 1].as_ref().unwrap().roots.clone();
        roots[i] = Some(certify_continued(e, &grid[i], &seeds)?);
    }
    let roots: Vec<CertifiedRoots> = roots.into_iter().map(Option::unwrap).collect();
    let min_der = roots
        .iter()
        .map(|r| r.min_abs_derivative)
        .fold(f64::INFINITY, f64::min);
    Ok((grid, roots.into_iter().map(|r| r.roots).collect(), min_der))
}

/// Find `η₀ > 0` such that `F_c` certifies on a 65-point grid over
/// `[c_* − η₀, c_* + η₀]`, halving from `c_*/2`.
pub fn admissible_interval(t: u32) -> Result<AdmissibleInterval> {
    let (_, _, a) = reference_points(t)?;
    let e = elementary_from_points(a.weights());
    let c_star = e.get(e.len());
    let a_f64 = a.to_f64();
    let initial = &c_star * rat(1, 2);
    let mut eta = initial.clone();
    for halvings in 0..64u32 {
        if let Ok((grid, grid_roots, min_der)) = certify_grid(&e, &a_f64, &c_star, &eta) {
            return Ok(AdmissibleInterval {
                eta0: (&eta).into(),
                initial_guess: (&initial).into(),
                halvings,
                grid_points: GRID_POINTS,
                min_abs_derivative: min_der,
                eta0_exact: eta,
                grid,
                grid_roots,
            });
        }
        eta *= rat(1, 2);
    }
    Err(Error::CertificationFailed(format!(
        "no admissible interval found for t = {t}"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerSumLedgerRow {
    pub r: u32,
    pub p: f64,
    pub q: f64,
    /// Exact value from Newton's identities; independent of `c` for `r ≤ s`.
    pub frozen: ExactValue,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HardPair {
    pub t: u32,
    pub s: u32,
    pub m: u32,
    pub a: Spectrum,
    pub c_star: ExactValue,
    pub c0: ExactValue,
    pub c1: ExactValue,
    pub eta0: ExactValue,
    pub p: Spectrum,
    pub q: Spectrum,
    pub mu_t: f64,
    /// 1 when `h_{t−s−1}` is frozen on the interval, [`MU_SAFETY`] otherwise.
    pub mu_safety_factor: f64,
    pub mu_grid_min: f64,
    pub delta_t: f64,
    pub gap: f64,
    /// `|gap from Newton's identities − gap from the refined roots|`.
    pub gap_root_residual: f64,
    pub moment_t_p: f64,
    pub moment_t_q: f64,
    pub powersum_ledger: Vec<PowerSumLedgerRow>,
    pub certification: AdmissibleInterval,
}

impl HardPair {
    pub fn max_ledger_diff(&self) -> f64 {
        self.powersum_ledger
            .iter()
            .map(|r| r.abs_diff)
            .fold(0.0, f64::max)
    }
}

/// `p = x(c_*)`, `q = x(c_* + η₀/2)` with `δ_t = t·μ_t·η₀/2`.
pub fn build_hard_pair(t: u32) -> Result<HardPair> {
    let (s, m, a) = reference_points(t)?;
    let e = elementary_from_points(a.weights());
    let c_star = e.get(m as usize);
    let interval = admissible_interval(t)?;
    let eta = interval.eta0_exact.clone();
    let c0 = c_star.clone();
    let c1 = &c_star + &eta * rat(1, 2);

    // p: F_{c_*} has the reference points as exact roots
    let roots0 = certify_with_seeds(&e, &c0, &a.to_f64())?;
    let poly0 = FcPolynomial::new(&e, &c0);
    for (ai, (lo, hi)) in a.weights().iter().zip(&roots0.brackets) {
        if !poly0.eval(ai).is_zero() || ai <= lo || ai >= hi {
            return Err(Error::IdentityViolated(
                "reference point is not the certified root at c_*".into(),
            ));
        }
    }
    let p = a.clone();

    let roots1 = certify_continued(&e, &c1, &a.to_f64())?;
    let mut q_weights = refine_exact(&e, &roots1, REFINE_BITS);
    let head: Rational = q_weights[..q_weights.len() - 1].iter().sum();
    *q_weights.last_mut().unwrap() = Rational::one() - head;
    let q = Spectrum::new(q_weights)?;

    let frozen = power_sums_from_elementary(&e, s as usize);
    let powersum_ledger = (1..=s)
        .map(|r| {
            let ps = p.power_sum(r);
            let qs = q.power_sum(r);
            PowerSumLedgerRow {
                r,
                p: to_f64(&ps),
                q: to_f64(&qs),
                frozen: frozen.get(r as usize).into(),
                abs_diff: to_f64(&(ps - qs).abs()),
            }
        })
        .collect();

    let moment_t = |c: &Rational| {
        power_sums_from_elementary(&e.with_last(c.clone()), t as usize)
            .0
            .pop()
            .unwrap()
    };
    let gap_exact = (moment_t(&c1) - moment_t(&c0)).abs();
    let gap_roots = (q.power_sum(t) - p.power_sum(t)).abs();
    let gap_root_residual = to_f64(&(&gap_exact - gap_roots).abs());

    let j = (t - s - 1) as usize;
    let h_on_grid: Vec<Rational> = interval
        .grid
        .iter()
        .map(|c| complete_homogeneous_from_elementary(&e.with_last(c.clone()), j)[j].clone())
        .collect();
    let h_min = h_on_grid.iter().min().unwrap().clone();
    // h_j only involves e₁..e_j, all frozen when j ≤ s
    let frozen_h = j <= s as usize;
    let mu_safety_factor = if frozen_h { 1.0 } else { MU_SAFETY };
    let mu_exact = if frozen_h {
        h_min.clone()
    } else {
        &h_min * rat(99, 100)
    };
    let delta_exact = &mu_exact * rat_int(i64::from(t)) * &eta * rat(1, 2);
    let delta_t = to_f64(&delta_exact);
    let gap = to_f64(&gap_exact);
    if !(delta_t > 0.0 && gap_exact >= delta_exact) {
        return Err(Error::IdentityViolated(format!(
            "gap {gap} below certified lower bound {delta_t}"
        )));
    }

    Ok(HardPair {
        t,
        s,
        m,
        moment_t_p: to_f64(&p.power_sum(t)),
        moment_t_q: to_f64(&q.power_sum(t)),
        a,
        c_star: (&c_star).into(),
        c0: (&c0).into(),
        c1: (&c1).into(),
        eta0: (&eta).into(),
        p,
        q,
        mu_t: to_f64(&mu_exact),
        mu_safety_factor,
        mu_grid_min: to_f64(&h_min),
        delta_t,
        gap,
        gap_root_residual,
        powersum_ledger,
        certification: interval,
    })
}

/// `m_r(c)` from exactly refined roots.
fn moment_from_roots(e: &ElemSymVector, c: &Rational, r: u32) -> Result<Rational> {
    let roots = roots_of_fc(e, c)?;
    let refined = refine_exact(e, &roots, 80);
    Ok(refined.iter().map(|x| pow(x, r)).sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub t: u32,
    pub r: u32,
    pub c: f64,
    pub step: f64,
    pub finite_difference: f64,
    pub formula: f64,
    pub residual: f64,
}

/// Central difference of `m_r(c)` computed from certified roots, against
/// `(−1)^s r h_{r−s−1}(c)` from the elementary recurrence.
pub fn derivative_formula_check(t: u32, c: f64, r: u32, step: f64) -> Result<DerivativeCheck> {
    let (s, m, a) = reference_points(t)?;
    if r < s + 1 {
        return Err(Error::Precondition(format!("r = {r} < s + 1 = {}", s + 1)));
    }
    let e = elementary_from_points(a.weights());
    let c_exact = from_f64(c);
    let h = from_f64(step);
    let plus = moment_from_roots(&e, &(&c_exact + &h), r)?;
    let minus = moment_from_roots(&e, &(&c_exact - &h), r)?;
    let fd = (plus - minus) / (&h * rat_int(2));
    let j = (r - s - 1) as usize;
    let hj = complete_homogeneous_from_elementary(&e.with_last(c_exact), j)[j].clone();
    let mut formula = hj * rat_int(i64::from(r));
    if s % 2 == 1 {
        formula = -formula;
    }
    let _ = m;
    Ok(DerivativeCheck {
        t,
        r,
        c,
        step,
        finite_difference: to_f64(&fd),
        formula: to_f64(&formula),
        residual: to_f64(&(fd - formula).abs()),
    })
}


#[cfg(test)]
mod invariants {
    use super::*;

    #[test]
    fn all_orders_up_to_ten() {
        for t in 3..=10 {
            let hp = build_hard_pair(t).unwrap();
            assert!(hp.max_ledger_diff() <= 1e-12, "t = {t}");
            assert!(hp.gap >= hp.delta_t && hp.delta_t > 0.0, "t = {t}");
        }
    }

    #[test]
    fn frozen_moments_and_positive_h_on_grid() {
        for t in [3, 5, 6, 8] {
            let (s, _, a) = reference_points(t).unwrap();
            let e = elementary_from_points(a.weights());
            let iv = admissible_interval(t).unwrap();
            for r in 1..=s {
                let vals: Vec<f64> = (0..5)
                    .map(|i| {
                        let (c, seeds) = (&iv.grid[i * 16], &iv.grid_roots[i * 16]);
                        let roots = certify_with_seeds(&e, c, seeds).unwrap();
                        refine_exact(&e, &roots, 80).iter().map(|x| to_f64(&pow(x, r))).sum()
                    })
                    .collect();
                let spread = vals.iter().cloned().fold(f64::MIN, f64::max)
                    - vals.iter().cloned().fold(f64::MAX, f64::min);
                assert!(spread <= 1e-12, "t = {t}, r = {r}: {spread:e}");
            }
            for c in &iv.grid {
                let h = complete_homogeneous_from_elementary(&e.with_last(c.clone()), t as usize);
                assert!(h.iter().all(|x| x.is_positive()), "t = {t}");
            }
        }
    }
}
