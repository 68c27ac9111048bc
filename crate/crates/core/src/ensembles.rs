//! Haar-assembled ensembles `ρ = Σ_r a_r ψ_r`, their exact k-copy averages,
//! and Gram-matrix rounding of `ρ` to a state with spectrum exactly `a`.

use rand::Rng;
use serde::Serialize;

use crate::error::{check_side, Error, Result};
use crate::hardpair::Spectrum;
use crate::linalg::{
    c, hermitian_eigen, hermitian_eigenvalues, hermitian_function, hermiticity_defect, kron,
    op_norm_hermitian, real_diag, trace, trace_norm_hermitian, CMat, CVec,
};
use crate::mc::{derive_seed, quantile, run_chunks, McEstimate, RunningStats};
use crate::symfun::{monomial_symmetric, to_f64, Partition, Rational};
use crate::tensorperm::{rising_factorial_f64, young_symmetrizer, TensorOperator};

/// Largest `k` for the exact k-copy average.
pub const MAX_COPIES: usize = 5;

/// A validated density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub d: usize,
    pub matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if matrix.ncols() != d {
            return Err(Error::DimensionMismatch("density matrix must be square".into()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > 1e-12 {
            return Err(Error::InvalidInput(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("trace {tr} ≠ 1")));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -1e-10 {
            return Err(Error::InvalidInput(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { d, matrix })
    }
}

/// Haar-random pure state in `ℂ^d`.
pub fn sample_haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    crate::linalg::haar_state(d, rng)
}

/// `ρ = Σ_r a_r ψ_r ψ_r†`.
pub fn assemble_state(a: &[f64], states: &[CVec]) -> Result<DensityMatrix> {
    if a.len() != states.len() || states.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} states",
            a.len(),
            states.len()
        )));
    }
    let d = states[0].len();
    if states.iter().any(|s| s.len() != d) {
        return Err(Error::DimensionMismatch("states of different dimension".into()));
    }
    let mut rho = CMat::zeros(d, d);
    for (w, psi) in a.iter().zip(states) {
        rho += crate::linalg::outer(psi) * c(*w);
    }
    DensityMatrix::new(rho)
}

/// All set partitions of `0..k`, blocks in order of their smallest element.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, k, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, k, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

/// `𝔼[ρ^{⊗k}] = Σ_π m_{type(π)}(a) ⊗_{B∈π} S^B/d^{↑|B|}`, the sum running
/// over set partitions of the `k` slots and `m_λ` counting ordered tuples of
/// distinct labels.
pub fn exact_k_copy_average(a: &[Rational], d: usize, k: usize) -> Result<TensorOperator> {
    if k == 0 || k > MAX_COPIES {
        return Err(Error::InvalidInput(format!("k = {k} outside 1..={MAX_COPIES}")));
    }
    let side = check_side(d, k)?;
    let mut total = CMat::zeros(side, side);
    for pi in set_partitions(k) {
        let lambda = Partition::new(pi.iter().map(|b| b.len() as u32).collect())?;
        let coef = to_f64(&monomial_symmetric(&lambda, a));
        if coef == 0.0 {
            continue;
        }
        let norm: f64 = pi
            .iter()
            .map(|b| rising_factorial_f64(d as u64, b.len() as u32))
            .product();
        let op = young_symmetrizer(&pi, k, d)?;
        total += op.matrix * c(coef / norm);
    }
    Ok(TensorOperator {
        d,
        slots: (0..k).collect(),
        matrix: total,
    })
}

/// Monte Carlo average of `ρ^{⊗k}` over the Haar-assembled ensemble.
pub fn mc_k_copy_average(a: &[f64], d: usize, k: usize, trials: usize, seed: u64) -> Result<CMat> {
    let side = check_side(d, k)?;
    let partials = run_chunks(trials, seed, |rng, n| {
        let mut acc = CMat::zeros(side, side);
        for _ in 0..n {
            let states: Vec<CVec> = a.iter().map(|_| sample_haar_state(d, rng)).collect();
            let mut rho = CMat::zeros(d, d);
            for (w, psi) in a.iter().zip(&states) {
                rho += crate::linalg::outer(psi) * c(*w);
            }
            let mut power = rho.clone();
            for _ in 1..k {
                power = kron(&power, &rho);
            }
            acc += power;
        }
        acc
    });
    let total = partials.into_iter().fold(CMat::zeros(side, side), |x, y| x + y);
    Ok(total / c(trials as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchingReport {
    pub d: usize,
    pub k: usize,
    /// `max_{r≤k} |Σp^r − Σq^r|`.
    pub power_sum_gap: f64,
    pub precondition_met: bool,
    /// `‖𝔼_p ρ^{⊗k} − 𝔼_q ρ^{⊗k}‖_∞`.
    pub deviation: f64,
}

impl MatchingReport {
    pub fn matches(&self, tol: f64) -> bool {
        self.precondition_met && self.deviation <= tol
    }
}

/// Compare the exact k-copy averages of two spectra.
pub fn verify_matching(p: &Spectrum, q: &Spectrum, d: usize, k: usize) -> Result<MatchingReport> {
    let power_sum_gap = (1..=k as u32)
        .map(|r| to_f64(&(p.power_sum(r) - q.power_sum(r))).abs())
        .fold(0.0, f64::max);
    let ep = exact_k_copy_average(p.weights(), d, k)?;
    let eq = exact_k_copy_average(q.weights(), d, k)?;
    Ok(MatchingReport {
        d,
        k,
        power_sum_gap,
        precondition_met: power_sum_gap <= 1e-12,
        deviation: op_norm_hermitian(&(ep.matrix - eq.matrix)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GramData {
    #[serde(skip)]
    pub g: CMat,
    pub frobenius_dev: f64,
    pub op_dev: f64,
    pub eigen_range: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct GramRounding {
    /// `σ = ΦAΦ†` with `Φ = ΨG^{−1/2}`.
    pub sigma: DensityMatrix,
    pub rho: DensityMatrix,
    pub trace_distance: f64,
    /// `‖H‖₂` for `H = G^{1/2} − I`.
    pub h_norm: f64,
    pub bound: f64,
    pub gram: GramData,
}

struct GramCore {
    inv_sqrt_g: CMat,
    trace_distance: f64,
    h_norm: f64,
    gram: GramData,
}

fn gram_core(a: &[f64], psi: &CMat) -> Result<GramCore> {
    let m = a.len();
    let g = psi.adjoint() * psi;
    let dev = &g - CMat::identity(m, m);
    let op_dev = op_norm_hermitian(&dev);
    if op_dev >= 0.5 {
        return Err(Error::GramTooFar(op_dev));
    }
    let eig = hermitian_eigen(&g);
    let sqrt_g = hermitian_function(&g, f64::sqrt);
    let inv_sqrt_g = hermitian_function(&g, |x| 1.0 / x.sqrt());
    let h_norm = op_norm_hermitian(&(&sqrt_g - CMat::identity(m, m)));
    // Φ†ρΦ = G^{1/2} A G^{1/2}, Φ†σΦ = A; both live on span(Ψ)
    let amat = real_diag(a);
    let compressed = &sqrt_g * &amat * &sqrt_g - &amat;
    let gram = GramData {
        frobenius_dev: crate::linalg::frobenius(&dev),
        op_dev,
        eigen_range: (eig.values[0], eig.values[m - 1]),
        g,
    };
    Ok(GramCore {
        trace_distance: trace_norm_hermitian(&compressed),
        inv_sqrt_g,
        h_norm,
        gram,
    })
}

fn stack(states: &[CVec]) -> Result<CMat> {
    let d = states.first().map_or(0, |s| s.len());
    if states.iter().any(|s| s.len() != d) || states.is_empty() {
        return Err(Error::DimensionMismatch("states of different dimension".into()));
    }
    Ok(CMat::from_columns(states))
}

/// Round `ρ = Σ a_r ψ_r` to `σ` with spectrum exactly `a`.
pub fn gram_round(a: &[f64], states: &[CVec]) -> Result<GramRounding> {
    if a.len() != states.len() {
        return Err(Error::DimensionMismatch("one weight per state".into()));
    }
    let psi = stack(states)?;
    let core = gram_core(a, &psi)?;
    let phi = &psi * &core.inv_sqrt_g;
    let amat = real_diag(a);
    let sigma = DensityMatrix::new(&phi * &amat * phi.adjoint())?;
    let rho = DensityMatrix::new(&psi * &amat * psi.adjoint())?;
    Ok(GramRounding {
        sigma,
        rho,
        trace_distance: core.trace_distance,
        bound: 2.0 * core.h_norm + core.h_norm * core.h_norm,
        h_norm: core.h_norm,
        gram: core.gram,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub d: usize,
    pub trials: usize,
    pub quantile99: f64,
    pub mean: McEstimate,
    pub gram_fail_rate: f64,
    pub bound_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub m: usize,
    pub seed: u64,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln quantile99` against `ln d`.
    pub slope: f64,
    pub intercept: f64,
    /// Mean of `quantile99·√d/(m√ln m)` over the rows; empirical.
    pub c_emp: f64,
}

impl ScalingReport {
    pub fn slope_in_range(&self) -> bool {
        (-0.65..=-0.35).contains(&self.slope)
    }

    pub fn bound_never_violated(&self) -> bool {
        self.rows.iter().all(|r| r.bound_violations == 0)
    }
}

/// Empirical 0.99-quantile of `‖ρ−σ‖₁` across `d_list`.
pub fn rounding_scaling_experiment(
    a: &[f64],
    d_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ScalingReport> {
    let m = a.len();
    if m < 2 {
        return Err(Error::InvalidInput("need at least two spectral weights".into()));
    }
    if trials == 0 || d_list.is_empty() {
        return Err(Error::InvalidInput("empty experiment".into()));
    }
    if d_list.windows(2).any(|w| w[0] >= w[1]) || d_list[0] < 4 * m {
        return Err(Error::InvalidInput(format!(
            "d list must be increasing with every d ≥ 4m = {}",
            4 * m
        )));
    }
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let partials = run_chunks(trials, derive_seed(seed, d as u64), |rng, n| {
            let mut dist = Vec::with_capacity(n);
            let (mut fails, mut violations) = (0usize, 0usize);
            for _ in 0..n {
                let states: Vec<CVec> = (0..m).map(|_| sample_haar_state(d, rng)).collect();
                let psi = CMat::from_columns(&states);
                match gram_core(a, &psi) {
                    Ok(core) => {
                        let bound = 2.0 * core.h_norm + core.h_norm * core.h_norm;
                        if core.trace_distance > bound + 1e-12 {
                            violations += 1;
                        }
                        dist.push(core.trace_distance);
                    }
                    Err(Error::GramTooFar(_)) => fails += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((dist, fails, violations))
        });
        let mut dist = Vec::with_capacity(trials);
        let (mut fails, mut violations) = (0, 0);
        for part in partials {
            let (dd, f, v) = part?;
            dist.extend(dd);
            fails += f;
            violations += v;
        }
        let mut stats = RunningStats::default();
        dist.iter().for_each(|x| stats.push(*x));
        dist.sort_by(f64::total_cmp);
        if dist.is_empty() {
            return Err(Error::GramTooFar(f64::NAN));
        }
        rows.push(ScalingRow {
            d,
            trials,
            quantile99: quantile(&dist, 0.99),
            mean: stats.estimate(),
            gram_fail_rate: fails as f64 / trials as f64,
            bound_violations: violations,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.d as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.quantile99.ln()).collect();
    let (intercept, slope) = if rows.len() >= 2 {
        crate::mc::linear_fit(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN)
    };
    let mf = m as f64;
    let c_emp = rows
        .iter()
        .map(|r| r.quantile99 * (r.d as f64).sqrt() / (mf * mf.ln().sqrt()))
        .sum::<f64>()
        / rows.len() as f64;
    Ok(ScalingReport {
        m,
        seed,
        rows,
        slope,
        intercept,
        c_emp,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub d: usize,
    pub u: f64,
    pub empirical: f64,
    /// `(1−u)^{d−1}`, the exact tail of `|⟨ψ,φ⟩|²`.
    pub exact: f64,
    /// `e^{−(d−1)u}`.
    pub bound: f64,
    pub samples: usize,
}

impl TailRow {
    pub fn within_bound(&self) -> bool {
        self.empirical <= 1.05 * self.bound && self.exact <= self.bound
    }
}

/// Empirical `Pr(|⟨ψ,φ⟩|² ≥ u)` for independent Haar states.
pub fn overlap_tail_check(d: usize, us: &[f64], samples: usize, seed: u64) -> Vec<TailRow> {
    let partials = run_chunks(samples, seed, |rng, n| {
        (0..n)
            .map(|_| {
                let psi = sample_haar_state(d, rng);
                let phi = sample_haar_state(d, rng);
                psi.dotc(&phi).norm_sqr()
            })
            .collect::<Vec<f64>>()
    });
    let overlaps: Vec<f64> = partials.into_iter().flatten().collect();
    us.iter()
        .map(|&u| TailRow {
            d,
            u,
            empirical: overlaps.iter().filter(|&&x| x >= u).count() as f64 / samples as f64,
            exact: (1.0 - u).powi(d as i32 - 1),
            bound: (-(d as f64 - 1.0) * u).exp(),
            samples,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorPowerTrace {
    pub n: usize,
    /// `‖ρ^{⊗n} − σ^{⊗n}‖₁`.
    pub lhs: f64,
    /// `n‖ρ − σ‖₁`.
    pub rhs: f64,
}

impl TensorPowerTrace {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9
    }
}

pub fn tensor_power_trace_check(rho: &CMat, sigma: &CMat, n: usize) -> Result<TensorPowerTrace> {
    if rho.shape() != sigma.shape() || n == 0 {
        return Err(Error::DimensionMismatch("ρ and σ must share a shape, n ≥ 1".into()));
    }
    check_side(rho.nrows(), n)?;
    let power = |x: &CMat| {
        let mut acc = x.clone();
        for _ in 1..n {
            acc = kron(&acc, x);
        }
        acc
    };
    Ok(TensorPowerTrace {
        n,
        lhs: trace_norm_hermitian(&(power(rho) - power(sigma))),
        rhs: n as f64 * trace_norm_hermitian(&(rho - sigma)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardpair::build_hard_pair;
    use crate::linalg::random_psd;
    use crate::symfun::rat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize, i: usize) -> CVec {
        let mut v = CVec::zeros(d);
        v[i] = c(1.0);
        v
    }

    fn random_state(d: usize, rng: &mut ChaCha8Rng) -> CMat {
        let m = random_psd(d, rng);
        let tr = trace(&m);
        m / tr
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52];
        for k in 0..=5 {
            assert_eq!(set_partitions(k).len(), bell[k]);
        }
    }

    #[test]
    fn haar_state_norm_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!((sample_haar_state(5, &mut rng).norm() - 1.0).abs() < 1e-12);
        }
        let avg = mc_k_copy_average(&[1.0], 2, 1, 100_000, 2).unwrap();
        assert!(op_norm_hermitian(&(avg.clone() - CMat::identity(2, 2) * c(0.5))) < 0.02);
        assert!((avg[(0, 0)].re - 0.5).abs() < 0.01);
    }

    #[test]
    fn assemble_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = sample_haar_state(3, &mut rng);
        let rho = assemble_state(&[1.0], &[psi.clone()]).unwrap();
        assert!(crate::linalg::frobenius(&(&rho.matrix * &rho.matrix - &rho.matrix)) < 1e-12);
        let rho = assemble_state(&[0.5, 0.5], &[basis(3, 0), basis(3, 2)]).unwrap();
        let ev = hermitian_eigenvalues(&rho.matrix);
        assert!(ev[0].abs() < 1e-15 && (ev[1] - 0.5).abs() < 1e-15 && (ev[2] - 0.5).abs() < 1e-15);
        let phi = sample_haar_state(3, &mut rng);
        let rho = assemble_state(&[1.0 / 3.0, 2.0 / 3.0], &[psi, phi]).unwrap();
        assert!(hermitian_eigenvalues(&rho.matrix)[0].abs() < 1e-12);
        assert!(assemble_state(&[1.0], &[]).is_err());
    }

    #[test]
    fn k_copy_examples() {
        let one = exact_k_copy_average(&[rat(1, 3), rat(2, 3)], 3, 1).unwrap();
        assert!(crate::linalg::frobenius(&(one.matrix - CMat::identity(3, 3) / c(3.0))) < 1e-15);
        let pure = exact_k_copy_average(&[rat(1, 1)], 2, 2).unwrap();
        let s = young_symmetrizer(&[vec![0, 1]], 2, 2).unwrap().matrix / c(6.0);
        assert!(crate::linalg::frobenius(&(pure.matrix - s)) < 1e-15);
        for (d, k, a) in [(2usize, 2usize, vec![0.5, 0.5]), (2, 3, vec![0.3, 0.7]), (3, 2, vec![0.2, 0.3, 0.5])] {
            let exact_a: Vec<Rational> = a.iter().map(|x| crate::symfun::from_f64(*x)).collect();
            let exact = exact_k_copy_average(&exact_a, d, k).unwrap();
            assert!((exact.trace() - 1.0).abs() < 1e-12);
            let trials = 40_000;
            let mc = mc_k_copy_average(&a, d, k, trials, 17).unwrap();
            let dev = op_norm_hermitian(&(mc - exact.matrix));
            assert!(dev < 5.0 / (trials as f64).sqrt(), "(d,k)=({d},{k}): {dev}");
        }
    }

    #[test]
    fn matching_for_hard_pairs() {
        let hp = build_hard_pair(3).unwrap();
        let r = verify_matching(&hp.p, &hp.q, 2, 1).unwrap();
        assert!(r.matches(1e-10), "{r:?}");
        let hp = build_hard_pair(5).unwrap();
        let r = verify_matching(&hp.p, &hp.q, 3, 2).unwrap();
        assert!(r.matches(1e-10), "{r:?}");
        // one order beyond s the averages separate, once d is large enough
        // for the antisymmetric part that carries e₃
        let r = verify_matching(&hp.p, &hp.q, 2, 3).unwrap();
        assert!(r.deviation < 1e-15);
        let r = verify_matching(&hp.p, &hp.q, 3, 3).unwrap();
        assert!(!r.precondition_met && r.deviation > 1e-6, "{r:?}");
        let r = verify_matching(&hp.p, &hp.p, 2, 3).unwrap();
        assert_eq!(r.deviation, 0.0);
    }

    #[test]
    fn gram_round_orthonormal_is_identity() {
        let states = vec![basis(4, 1), basis(4, 3)];
        let r = gram_round(&[0.25, 0.75], &states).unwrap();
        assert!(r.trace_distance < 1e-15);
        assert!(crate::linalg::frobenius(&(r.sigma.matrix - r.rho.matrix)) < 1e-15);
    }

    #[test]
    fn gram_round_two_states_at_angle() {
        for eps in [0.05f64, 0.2, 0.4] {
            let mut second = basis(3, 0) * c(eps.sin());
            second[1] = c(eps.cos());
            let states = vec![basis(3, 0), second];
            let a = [0.4, 0.6];
            let r = gram_round(&a, &states).unwrap();
            // compressed trace distance agrees with the ambient d×d route
            let ambient = trace_norm_hermitian(&(&r.rho.matrix - &r.sigma.matrix));
            assert!((ambient - r.trace_distance).abs() < 1e-12);
            assert!(r.trace_distance <= r.bound + 1e-12);
            let mut ev = hermitian_eigenvalues(&r.sigma.matrix);
            ev.retain(|x| x.abs() > 1e-9);
            assert!((ev[0] - 0.4).abs() < 1e-10 && (ev[1] - 0.6).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_too_far_rejected() {
        let states = vec![basis(3, 0), basis(3, 0)];
        assert!(matches!(gram_round(&[0.5, 0.5], &states), Err(Error::GramTooFar(_))));
    }

    #[test]
    fn tensor_power_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho = random_state(2, &mut rng);
        let same = tensor_power_trace_check(&rho, &rho, 3).unwrap();
        assert_eq!(same.lhs, 0.0);
        let sigma = random_state(2, &mut rng);
        let one = tensor_power_trace_check(&rho, &sigma, 1).unwrap();
        assert!((one.lhs - one.rhs).abs() < 1e-15);
        for _ in 0..100 {
            let rho = random_state(2, &mut rng);
            let sigma = random_state(2, &mut rng);
            assert!(tensor_power_trace_check(&rho, &sigma, 3).unwrap().holds());
        }
    }

    #[test]
    fn overlap_tail_small() {
        for row in overlap_tail_check(16, &[0.05, 0.1, 0.2], 20_000, 5) {
            assert!(row.within_bound(), "{row:?}");
        }
    }
}
