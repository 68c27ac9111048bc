//! Exact symmetric-function algebra over arbitrary-precision rationals.
//!
//! Four bases appear in the hard-pair and matching arguments: elementary
//! `e_j`, power sums `s_u`, complete homogeneous `h_j` and the monomial
//! functions `m_λ`. The monomial convention here sums over *ordered* tuples of
//! distinct indices, `m_λ(x) = Σ_{i₁..i_ℓ distinct} x_{i₁}^{λ₁}⋯x_{i_ℓ}^{λ_ℓ}`,
//! which is the coefficient that multiplies a set-partition term when
//! `ρ^{⊗k}` is expanded.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational from a finite float (dyadic, no rounding).
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

pub fn pow(x: &Rational, e: u32) -> Rational {
    num_traits::pow(x.clone(), e as usize)
}

/// Integer partition with parts sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn new(mut parts: Vec<u32>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("empty partition".into()));
        }
        if parts.contains(&0) {
            return Err(Error::InvalidInput("partition parts must be positive".into()));
        }
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn weight(&self) -> u32 {
        self.parts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// All partitions of `n`, in reverse lexicographic order.
    pub fn all_of(n: u32) -> Vec<Partition> {
        fn rec(rest: u32, max: u32, acc: &mut Vec<u32>, out: &mut Vec<Partition>) {
            if rest == 0 {
                out.push(Partition { parts: acc.clone() });
                return;
            }
            for p in (1..=rest.min(max)).rev() {
                acc.push(p);
                rec(rest - p, p, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        if n > 0 {
            rec(n, n, &mut Vec::new(), &mut out);
        }
        out
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts.iter().map(u32::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// `e₁ … e_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElemSymVector(pub Vec<Rational>);

impl ElemSymVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `e_j` with the conventions `e₀ = 1` and `e_j = 0` for `j > m`.
    pub fn get(&self, j: usize) -> Rational {
        if j == 0 {
            Rational::one()
        } else {
            self.0.get(j - 1).cloned().unwrap_or_else(Rational::zero)
        }
    }

    /// Copy with `e_m` replaced by `c`.
    pub fn with_last(&self, c: Rational) -> Self {
        let mut v = self.0.clone();
        if let Some(last) = v.last_mut() {
            *last = c;
        }
        Self(v)
    }
}

/// `s₁ … s_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerSumVector(pub Vec<Rational>);

impl PowerSumVector {
    /// `s_u`, 1-based.
    pub fn get(&self, u: usize) -> &Rational {
        &self.0[u - 1]
    }
}

pub fn elementary_from_points(points: &[Rational]) -> ElemSymVector {
    // coefficients of ∏(1 + x_i z), index = degree
    let mut coeffs = vec![Rational::one()];
    for x in points {
        let mut next = vec![Rational::zero(); coeffs.len() + 1];
        for (j, cj) in coeffs.iter().enumerate() {
            next[j] += cj;
            next[j + 1] += cj * x;
        }
        coeffs = next;
    }
    ElemSymVector(coeffs.into_iter().skip(1).collect())
}

/// Newton's identities:
/// `s_r = Σ_{i=1}^{r−1} (−1)^{i−1} e_i s_{r−i} + (−1)^{r−1} r e_r`.
pub fn power_sums_from_elementary(e: &ElemSymVector, r_max: usize) -> PowerSumVector {
    let mut s: Vec<Rational> = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let mut acc = Rational::zero();
        for i in 1..r {
            let term = e.get(i) * &s[r - i - 1];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        let last = e.get(r) * rat_int(r as i64);
        if r % 2 == 1 {
            acc += last;
        } else {
            acc -= last;
        }
        s.push(acc);
    }
    PowerSumVector(s)
}

/// `h₀ … h_{j_max}` from `h_j = Σ_{i=1}^{min(j,m)} (−1)^{i−1} e_i h_{j−i}`.
pub fn complete_homogeneous_from_elementary(e: &ElemSymVector, j_max: usize) -> Vec<Rational> {
    let mut h = vec![Rational::one()];
    for j in 1..=j_max {
        let mut acc = Rational::zero();
        for i in 1..=j.min(e.len()) {
            let term = e.get(i) * &h[j - i];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        h.push(acc);
    }
    h
}

pub fn complete_homogeneous(points: &[Rational], j: usize) -> Rational {
    let e = elementary_from_points(points);
    complete_homogeneous_from_elementary(&e, j).pop().unwrap()
}

pub fn power_sum(points: &[Rational], u: u32) -> Rational {
    points.iter().map(|x| pow(x, u)).sum()
}

/// Direct enumeration over ordered tuples of distinct indices.
pub fn monomial_symmetric(lambda: &Partition, points: &[Rational]) -> Rational {
    fn rec(parts: &[u32], points: &[Rational], used: &mut Vec<bool>) -> Rational {
        let Some((&first, rest)) = parts.split_first() else {
            return Rational::one();
        };
        let mut acc = Rational::zero();
        for i in 0..points.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            acc += pow(&points[i], first) * rec(rest, points, used);
            used[i] = false;
        }
        acc
    }
    if lambda.len() > points.len() {
        return Rational::zero();
    }
    rec(lambda.parts(), points, &mut vec![false; points.len()])
}

/// Polynomial in the power sums: each key is a multiset of power-sum indices
/// (sorted non-increasing), mapped to its rational coefficient.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PowerSumPolynomial {
    pub terms: BTreeMap<Vec<u32>, Rational>,
}

impl PowerSumPolynomial {
    fn single(u: u32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![u], Rational::one());
        Self { terms }
    }

    fn add_scaled(&mut self, other: &Self, scale: &Rational) {
        for (k, v) in &other.terms {
            let entry = self.terms.entry(k.clone()).or_insert_with(Rational::zero);
            *entry += v * scale;
            if entry.is_zero() {
                self.terms.remove(k);
            }
        }
    }

    fn times_power_sum(&self, u: u32) -> Self {
        let mut terms = BTreeMap::new();
        for (k, v) in &self.terms {
            let mut key = k.clone();
            key.push(u);
            key.sort_unstable_by(|a, b| b.cmp(a));
            *terms.entry(key).or_insert_with(Rational::zero) += v;
        }
        Self { terms }
    }

    pub fn coefficient(&self, key: &[u32]) -> Rational {
        self.terms.get(key).cloned().unwrap_or_else(Rational::zero)
    }

    /// Evaluate with `s_u` supplied by `power_sum(u)`.
    pub fn evaluate(&self, power_sum: impl Fn(u32) -> Rational) -> Rational {
        let mut cache: HashMap<u32, Rational> = HashMap::new();
        let mut acc = Rational::zero();
        for (key, coeff) in &self.terms {
            let mut term = coeff.clone();
            for u in key {
                let su = cache.entry(*u).or_insert_with(|| power_sum(*u));
                term *= &*su;
            }
            acc += term;
        }
        acc
    }

    /// Largest power-sum index appearing in any term.
    pub fn max_index(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|k| k.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Memoized monomial-to-power-sum expansion via the collision recursion
/// `m_λ = m_{λ'}·s_{λ_ℓ} − Σ_{j<ℓ} m_{λ'^{(j += λ_ℓ)}}`, where `λ'` drops
/// the last part.
#[derive(Debug, Default)]
pub struct MonomialReducer {
    memo: HashMap<Vec<u32>, PowerSumPolynomial>,
}

impl MonomialReducer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn expand(&mut self, lambda: &Partition) -> PowerSumPolynomial {
        self.expand_parts(lambda.parts())
    }

    fn expand_parts(&mut self, parts: &[u32]) -> PowerSumPolynomial {
        let mut key = parts.to_vec();
        key.sort_unstable_by(|a, b| b.cmp(a));
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let result = if key.len() == 1 {
            PowerSumPolynomial::single(key[0])
        } else {
            let (&last, head) = key.split_last().unwrap();
            let mut out = self.expand_parts(head).times_power_sum(last);
            let minus_one = -Rational::one();
            for j in 0..head.len() {
                let mut merged = head.to_vec();
                merged[j] += last;
                let collision = self.expand_parts(&merged);
                out.add_scaled(&collision, &minus_one);
            }
            out
        };
        self.memo.insert(key, result.clone());
        result
    }
}

pub fn monomial_expansion(lambda: &Partition) -> PowerSumPolynomial {
    MonomialReducer::new().expand(lambda)
}

/// Outcome of checking `m_λ = (−1)^{ℓ−1}(ℓ−1)!·s_t + g_λ(s₁,…,s_{t−1})`.
#[derive(Debug, Clone)]
pub struct ReductionCheck {
    pub leading: Rational,
    pub expected_leading: Rational,
    /// `g_λ`: every term of the expansion other than `s_t`.
    pub g: PowerSumPolynomial,
    pub direct: Rational,
    pub residual: Rational,
}

impl ReductionCheck {
    /// Residual is exactly zero, the `s_t` coefficient is `(−1)^{ℓ−1}(ℓ−1)!`
    /// and every term of `g_λ` is a product of at least two power sums, so
    /// it only involves `s₁ … s_{t−1}`.
    pub fn holds(&self) -> bool {
        self.residual.is_zero()
            && self.leading == self.expected_leading
            && self.g.terms.keys().all(|k| k.len() >= 2)
    }
}

pub fn monomial_reduction_check(lambda: &Partition, points: &[Rational]) -> ReductionCheck {
    let t = lambda.weight();
    let ell = lambda.len() as u32;
    let expansion = monomial_expansion(lambda);
    let leading = expansion.coefficient(&[t]);
    let mut factorial = BigInt::one();
    for i in 1..ell {
        factorial *= BigInt::from(i);
    }
    let mut expected_leading = Rational::from_integer(factorial);
    if ell % 2 == 0 {
        expected_leading = -expected_leading;
    }
    let mut g = expansion.clone();
    g.terms.remove(&vec![t]);
    let ps = |u: u32| power_sum(points, u);
    let rhs = &leading * power_sum(points, t) + g.evaluate(ps);
    let direct = monomial_symmetric(lambda, points);
    let residual = &direct - rhs;
    ReductionCheck {
        leading,
        expected_leading,
        g,
        direct,
        residual,
    }
}

/// `|x|` for rationals, re-exported for callers comparing exact values.
pub fn abs(x: &Rational) -> Rational {
    x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(n, d)| rat(n, d)).collect()
    }

    #[test]
    fn elementary_examples() {
        assert_eq!(
            elementary_from_points(&pts(&[(1, 3), (2, 3)])).0,
            vec![rat(1, 1), rat(2, 9)]
        );
        assert_eq!(elementary_from_points(&pts(&[(1, 1)])).0, vec![rat(1, 1)]);
        assert_eq!(
            elementary_from_points(&pts(&[(1, 2), (1, 2)])).0,
            vec![rat(1, 1), rat(1, 4)]
        );
    }

    #[test]
    fn newton_examples() {
        let c = rat(3, 17);
        let e = ElemSymVector(vec![rat(1, 1), c.clone()]);
        let s = power_sums_from_elementary(&e, 3);
        assert_eq!(
            s.0,
            vec![
                rat(1, 1),
                rat(1, 1) - rat(2, 1) * &c,
                rat(1, 1) - rat(3, 1) * &c
            ]
        );
        let s = power_sums_from_elementary(&ElemSymVector(vec![rat(1, 1)]), 4);
        assert_eq!(s.0, vec![rat(1, 1); 4]);
        let s = power_sums_from_elementary(&ElemSymVector(vec![rat(1, 1), rat(2, 9)]), 2);
        assert_eq!(s.0, vec![rat(1, 1), rat(5, 9)]);
    }

    #[test]
    fn complete_homogeneous_examples() {
        let x = pts(&[(1, 3), (2, 3)]);
        assert_eq!(complete_homogeneous(&x, 0), rat(1, 1));
        assert_eq!(complete_homogeneous(&x, 1), rat(1, 1));
        assert_eq!(complete_homogeneous(&x, 2), rat(7, 9));
        let y = pts(&[(2, 5), (-1, 7)]);
        assert_eq!(complete_homogeneous(&y, 1), rat(2, 5) + rat(-1, 7));
    }

    #[test]
    fn monomial_examples() {
        let x = pts(&[(1, 3), (2, 3)]);
        let single = Partition::new(vec![4]).unwrap();
        assert_eq!(monomial_symmetric(&single, &x), power_sum(&x, 4));
        let pair = Partition::new(vec![1, 1]).unwrap();
        assert_eq!(monomial_symmetric(&pair, &x), rat(4, 9));
        let half = pts(&[(1, 2), (1, 2)]);
        let two_one = Partition::new(vec![1, 2]).unwrap();
        assert_eq!(monomial_symmetric(&two_one, &half), rat(1, 4));
        // more parts than points
        let three = Partition::new(vec![1, 1, 1]).unwrap();
        assert_eq!(monomial_symmetric(&three, &x), rat(0, 1));
    }

    #[test]
    fn reduction_examples() {
        let pair = Partition::new(vec![1, 1]).unwrap();
        let exp = monomial_expansion(&pair);
        assert_eq!(exp.coefficient(&[2]), rat(-1, 1));
        assert_eq!(exp.coefficient(&[1, 1]), rat(1, 1));
        assert_eq!(exp.terms.len(), 2);

        let two_one = Partition::new(vec![2, 1]).unwrap();
        let exp = monomial_expansion(&two_one);
        assert_eq!(exp.coefficient(&[2, 1]), rat(1, 1));
        assert_eq!(exp.coefficient(&[3]), rat(-1, 1));
        let x = pts(&[(1, 3), (2, 3)]);
        let check = monomial_reduction_check(&two_one, &x);
        assert!(check.residual.is_zero());
        assert!(check.holds());

        for t in 1..6 {
            let single = Partition::new(vec![t]).unwrap();
            let check = monomial_reduction_check(&single, &x);
            assert!(check.g.terms.is_empty());
            assert!(check.residual.is_zero());
        }
    }

    #[test]
    fn leading_coefficient_sign_and_factorial() {
        let lambda = Partition::new(vec![1, 1, 1, 1]).unwrap();
        let check = monomial_reduction_check(&lambda, &pts(&[(1, 5), (1, 5), (3, 5)]));
        assert_eq!(check.leading, rat(-6, 1));
        assert!(check.holds());
    }

    #[test]
    fn partitions_enumerated() {
        let counts: Vec<usize> = (1..=7).map(|n| Partition::all_of(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 3, 5, 7, 11, 15]);
        assert!(Partition::new(vec![2, 0]).is_err());
        assert_eq!(Partition::new(vec![1, 3, 2]).unwrap().parts(), &[3, 2, 1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rational_points(max_len: usize) -> impl Strategy<Value = Vec<Rational>> {
            prop::collection::vec((-20i64..=20, 1i64..=20), 1..=max_len)
                .prop_map(|v| v.into_iter().map(|(n, d)| rat(n, d)).collect())
        }

        /// Power series helpers for the generating-function oracle.
        fn series_mul(a: &[Rational], b: &[Rational], n: usize) -> Vec<Rational> {
            let mut out = vec![Rational::zero(); n];
            for (i, ai) in a.iter().enumerate().take(n) {
                for (j, bj) in b.iter().enumerate().take(n - i) {
                    out[i + j] += ai * bj;
                }
            }
            out
        }

        fn series_div(a: &[Rational], b: &[Rational], n: usize) -> Vec<Rational> {
            // b[0] = 1
            let mut q = vec![Rational::zero(); n];
            for k in 0..n {
                let mut acc = a.get(k).cloned().unwrap_or_else(Rational::zero);
                for j in 1..=k {
                    acc -= &b[j] * &q[k - j];
                }
                q[k] = acc / &b[0];
            }
            q
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn newton_round_trip(points in rational_points(6)) {
                let e = elementary_from_points(&points);
                let s = power_sums_from_elementary(&e, 8);
                for r in 1..=8u32 {
                    prop_assert_eq!(s.get(r as usize), &power_sum(&points, r));
                }
            }

            #[test]
            fn log_derivative_of_h_gives_power_sums(points in rational_points(5)) {
                // H(z) = ∏ (1 − x_i z)^{-1}; z ∂_z log H = z H'/H
                const ORDER: usize = 9;
                let mut h = vec![Rational::one()];
                for x in &points {
                    let geometric: Vec<Rational> = (0..ORDER).map(|j| pow(x, j as u32)).collect();
                    h = series_mul(&h, &geometric, ORDER);
                }
                let z_dh: Vec<Rational> = (0..ORDER)
                    .map(|j| &h[j] * rat_int(j as i64))
                    .collect();
                let lhs = series_div(&z_dh, &h, ORDER);
                for r in 1..ORDER {
                    prop_assert_eq!(&lhs[r], &power_sum(&points, r as u32));
                }
                let from_e = complete_homogeneous_from_elementary(&elementary_from_points(&points), ORDER - 1);
                prop_assert_eq!(from_e, h);
            }

            #[test]
            fn reduction_residual_vanishes(points in rational_points(5), weight in 1u32..=7) {
                let mut reducer = MonomialReducer::new();
                for lambda in Partition::all_of(weight) {
                    let exp = reducer.expand(&lambda);
                    let value = exp.evaluate(|u| power_sum(&points, u));
                    prop_assert_eq!(value, monomial_symmetric(&lambda, &points));
                }
                let lambda = Partition::all_of(weight).pop().unwrap();
                prop_assert!(monomial_reduction_check(&lambda, &points).holds());
            }
        }
    }
}
