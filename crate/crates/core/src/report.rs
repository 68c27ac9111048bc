//! Closure-inequality bookkeeping and the aggregate threshold report.
//!
//! Terms are tagged by provenance: `proven` terms follow from exact
//! identities, `fixed` terms are good-event budgets kept constant, and
//! `empirical` terms use a constant fitted by the rounding experiment. Nothing
//! here claims the asymptotic bound; it only checks finite-d consistency.

use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensembles::{rounding_scaling_experiment, verify_matching, MatchingReport, ScalingReport};
use crate::error::{Error, Result};
use crate::haarmoments::{haar_mean_var_mc, twirl1_mc_check, twirl2_mc_check, HaarMc};
use crate::hardpair::{build_hard_pair, HardPair, Spectrum};
use crate::linalg::{random_hermitian, random_psd, CMat};
use crate::mc::{derive_seed, linear_fit};
use crate::observable::{embedded_gap_with_pair, midpoint_threshold, GapReport, MidpointThreshold, Observable};
use crate::symfun::{rat, to_f64};
use crate::tensorperm::{
    permutation_inequality_check, random_placements, sector_identity_check, OperatorMcCheck,
    Placements,
};
use crate::testersim::{indistinguishability_with_spectra, nonincreasing_within_noise, IndistTable};
use crate::MAX_OPERATOR_SIDE;

/// Good-event budget on the left of the closure chain.
pub const GOOD_EVENT_BUDGET: f64 = 0.02;
/// Equal-prior success 2/3 needs `d_M ≥ 1/3`.
pub const DM_REQUIRED: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Proven,
    Fixed,
    Empirical,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Term {
    pub value: f64,
    pub provenance: Provenance,
}

/// A fitted constant together with the run that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalConstant {
    pub value: f64,
    pub source: String,
    pub provenance: Provenance,
}

impl EmpiricalConstant {
    pub fn new(value: f64, source: impl Into<String>) -> Self {
        Self {
            value,
            source: source.into(),
            provenance: Provenance::Empirical,
        }
    }

    pub fn from_scaling(r: &ScalingReport) -> Self {
        let ds: Vec<String> = r.rows.iter().map(|row| row.d.to_string()).collect();
        let trials = r.rows.first().map_or(0, |row| row.trials);
        Self::new(
            r.c_emp,
            format!(
                "rounding experiment m={} d=[{}] trials={} seed={}",
                r.m,
                ds.join(","),
                trials,
                r.seed
            ),
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosureEvaluation {
    pub d: f64,
    pub k: u64,
    #[serde(rename = "T")]
    pub rounds: u64,
    pub m: u64,
    pub term_const: Term,
    /// `4(kT)²/d`.
    pub term_match: Term,
    /// `C′·kT·m√(ln m)/√d`.
    pub term_round: Term,
    pub c_prime: EmpiricalConstant,
    pub total: f64,
    /// `total < 1/3`: no test with `T` rounds of `k` copies reaches 2/3.
    pub excluded: bool,
}

fn closure_total(d: f64, kt: f64, m: u64, c: f64) -> (f64, f64, f64) {
    let mf = m as f64;
    let term_match = 4.0 * kt * kt / d;
    let term_round = c * kt * mf * mf.ln().sqrt() / d.sqrt();
    (term_match, term_round, GOOD_EVENT_BUDGET + term_match + term_round)
}

fn check_m(m: u64) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("m = {m} < 2")));
    }
    Ok(())
}

pub fn closure_evaluate(
    d: f64,
    k: u64,
    rounds: u64,
    m: u64,
    c_prime: &EmpiricalConstant,
) -> Result<ClosureEvaluation> {
    check_m(m)?;
    if !(d > 0.0) {
        return Err(Error::InvalidInput(format!("d = {d} must be positive")));
    }
    let (tm, tr, total) = closure_total(d, (k * rounds) as f64, m, c_prime.value);
    Ok(ClosureEvaluation {
        d,
        k,
        rounds,
        m,
        term_const: Term {
            value: GOOD_EVENT_BUDGET,
            provenance: Provenance::Fixed,
        },
        term_match: Term {
            value: tm,
            provenance: Provenance::Proven,
        },
        term_round: Term {
            value: tr,
            provenance: c_prime.provenance,
        },
        c_prime: c_prime.clone(),
        total,
        excluded: total < DM_REQUIRED,
    })
}

/// Smallest `kT` with closure total `≥ 1/3`. An empirical finite-d
/// analogue of the `√d/(m√ln m)` sample bound, not a proof of it.
pub fn sample_bound(d: f64, m: u64, c_prime: f64) -> Result<u64> {
    check_m(m)?;
    if !(d > 0.0) || c_prime < 0.0 {
        return Err(Error::InvalidInput("d > 0 and C′ ≥ 0 required".into()));
    }
    let total = |n: u64| closure_total(d, n as f64, m, c_prime).2;
    // 4x² + bx = 1/3 − 0.02 with x = kT/√d
    let mf = m as f64;
    let b = c_prime * mf * mf.ln().sqrt();
    let rhs = DM_REQUIRED - GOOD_EVENT_BUDGET;
    let x = (-b + (b * b + 16.0 * rhs).sqrt()) / 8.0;
    let mut n = (x * d.sqrt()).ceil().max(1.0) as u64;
    while n > 1 && total(n - 1) >= DM_REQUIRED {
        n -= 1;
    }
    while total(n) < DM_REQUIRED {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleBoundRow {
    pub d: f64,
    pub kt: u64,
    /// `kT·m√(ln m)/√d`.
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleBoundSweep {
    pub m: u64,
    pub c_prime: EmpiricalConstant,
    pub rows: Vec<SampleBoundRow>,
    /// Log-log slope of `kT` against `d`.
    pub exponent: f64,
    pub tolerance: f64,
}

impl SampleBoundSweep {
    pub fn grows_like_sqrt_d(&self) -> bool {
        (self.exponent - 0.5).abs() <= self.tolerance * 0.5
    }
}

pub fn sample_bound_sweep(ds: &[f64], m: u64, c_prime: &EmpiricalConstant) -> Result<SampleBoundSweep> {
    if ds.len() < 2 {
        return Err(Error::InvalidInput("at least two dimensions required".into()));
    }
    let mf = m as f64;
    let rows = ds
        .iter()
        .map(|&d| {
            let kt = sample_bound(d, m, c_prime.value)?;
            Ok(SampleBoundRow {
                d,
                kt,
                normalized: kt as f64 * mf * mf.ln().sqrt() / d.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.d.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| (r.kt as f64).ln()).collect();
    let (_, exponent) = linear_fit(&xs, &ys);
    Ok(SampleBoundSweep {
        m,
        c_prime: c_prime.clone(),
        rows,
        exponent,
        tolerance: 0.15,
    })
}

/// Success bookkeeping for the estimator-to-tester reduction.
#[derive(Debug, Clone, Serialize)]
pub struct Amplification {
    pub interval_hit: String,
    pub estimator_success: String,
    /// `hit + success − 1`.
    pub single_shot: String,
    pub single_shot_f64: f64,
    /// Smallest odd repetition count whose majority vote reaches 2/3.
    pub repetitions: u64,
    pub amplified: f64,
}

/// Exact probability that a strict majority of `r` (odd) independent trials
/// with success `p` succeed.
pub fn majority_success(p: &BigRational, r: u64) -> Result<BigRational> {
    if r % 2 == 0 {
        return Err(Error::InvalidInput("majority vote needs an odd count".into()));
    }
    let q = rat(1, 1) - p;
    let mut total = rat(0, 1);
    let mut binom = rat(1, 1);
    for j in 0..=r {
        if j > r / 2 {
            total += &binom * crate::symfun::pow(p, j as u32) * crate::symfun::pow(&q, (r - j) as u32);
        }
        binom = binom * rat((r - j) as i64, (j + 1) as i64);
    }
    Ok(total)
}

pub fn amplification(interval_hit: &BigRational, estimator_success: &BigRational) -> Result<Amplification> {
    let single = interval_hit + estimator_success - rat(1, 1);
    if single <= rat(1, 2) {
        return Err(Error::Precondition(format!(
            "single-shot success {single} is not above 1/2"
        )));
    }
    let target = rat(2, 3);
    let mut r = 1;
    let mut ok = majority_success(&single, r)?;
    while ok < target {
        r += 2;
        ok = majority_success(&single, r)?;
    }
    Ok(Amplification {
        interval_hit: interval_hit.to_string(),
        estimator_success: estimator_success.to_string(),
        single_shot_f64: to_f64(&single),
        single_shot: single.to_string(),
        repetitions: r,
        amplified: to_f64(&ok),
    })
}

/// A report section that either ran or says why it did not.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Section<T> {
    Done(T),
    Skipped { reason: String },
}

impl<T> Section<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        Section::Skipped {
            reason: reason.into(),
        }
    }

    pub fn done(&self) -> Option<&T> {
        match self {
            Section::Done(v) => Some(v),
            Section::Skipped { .. } => None,
        }
    }

    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Done(v),
            Err(e) => Section::skipped(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HardPairSummary {
    pub p: Spectrum,
    pub q: Spectrum,
    pub eta0: String,
    pub mu_t: f64,
    pub delta_t: f64,
    pub gap: f64,
    pub max_powersum_diff: f64,
}

impl HardPairSummary {
    pub fn new(hp: &HardPair) -> Self {
        Self {
            p: hp.p.clone(),
            q: hp.q.clone(),
            eta0: hp.eta0.exact.clone(),
            mu_t: hp.mu_t,
            delta_t: hp.delta_t,
            gap: hp.gap,
            max_powersum_diff: hp.max_ledger_diff(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorSuite {
    pub max_slots: usize,
    pub dims: Vec<usize>,
    pub checked: usize,
    pub passed: usize,
    pub max_residual: f64,
}

/// Every `(|A|, |B|, j)` with `1 ≤ |A|, |B|` and `|A|+|B| ≤ max_slots`.
pub fn sector_suite(max_slots: usize, dims: &[usize]) -> Result<SectorSuite> {
    let mut suite = SectorSuite {
        max_slots,
        dims: dims.to_vec(),
        checked: 0,
        passed: 0,
        max_residual: 0.0,
    };
    for &d in dims {
        for na in 1..max_slots {
            for nb in 1..=(max_slots - na) {
                let a: Vec<usize> = (0..na).collect();
                let b: Vec<usize> = (na..na + nb).collect();
                for j in 0..=na.min(nb) {
                    let r = sector_identity_check(&a, &b, j, d)?;
                    suite.checked += 1;
                    suite.max_residual = suite.max_residual.max(r.residual);
                    if r.holds(1e-10) {
                        suite.passed += 1;
                    }
                }
            }
        }
    }
    Ok(suite)
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalitySuite {
    pub instances: usize,
    pub passed: usize,
    /// `min margin/|lhs|`.
    pub min_relative_margin: f64,
    /// `lhs/rhs` at `G = I`, which equals a ratio of rising factorials.
    pub identity_ratios: Vec<f64>,
    pub seed: u64,
}

impl InequalitySuite {
    pub fn all_hold(&self) -> bool {
        self.passed == self.instances && self.identity_ratios.iter().all(|&r| r >= 1.0 - 1e-12)
    }
}

/// Seeded random placements with `k·T ≤ 6` at `d = 2` and Wishart factors.
pub fn inequality_suite(instances: usize, seed: u64) -> Result<InequalitySuite> {
    let shapes = [(1, 2, 2), (2, 2, 2), (2, 3, 2), (3, 2, 2), (2, 2, 3), (3, 2, 3), (1, 4, 2)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = InequalitySuite {
        instances,
        passed: 0,
        min_relative_margin: f64::INFINITY,
        identity_ratios: Vec::new(),
        seed,
    };
    for i in 0..instances {
        let (k, rounds, labels) = shapes[i % shapes.len()];
        let pl = random_placements(k, rounds, labels, &mut rng)?;
        let block = 2usize.pow(k as u32);
        let g: Vec<CMat> = (0..rounds).map(|_| random_psd(block, &mut rng)).collect();
        let r = permutation_inequality_check(&pl, 2, &g)?;
        suite.min_relative_margin = suite.min_relative_margin.min(r.margin / r.lhs.abs());
        if r.holds() {
            suite.passed += 1;
        }
    }
    // G = I on fixed placements: merged symmetrizers against per-round ones
    let fixed = [
        Placements::new(1, vec![vec![vec![0]], vec![vec![0]]])?,
        Placements::new(2, vec![vec![vec![0, 1], vec![]], vec![vec![0], vec![1]]])?,
        Placements::new(2, vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]])?,
        Placements::new(3, vec![vec![vec![0, 1, 2]], vec![vec![0, 1, 2]]])?,
    ];
    for pl in &fixed {
        let block = 2usize.pow(pl.k as u32);
        let g = vec![CMat::identity(block, block); pl.rounds_count()];
        let r = permutation_inequality_check(pl, 2, &g)?;
        suite.identity_ratios.push(r.lhs / r.rhs);
    }
    Ok(suite)
}

#[derive(Debug, Clone, Serialize)]
pub struct TwirlRow {
    #[serde(rename = "D")]
    pub dim: usize,
    pub first: OperatorMcCheck,
    pub second: OperatorMcCheck,
    pub mean_var: HaarMc,
}

impl TwirlRow {
    pub fn passes(&self) -> bool {
        self.first.passes() && self.second.passes() && self.mean_var.mean_ok() && self.mean_var.variance_ok()
    }
}

/// Twirl and `X_A` moment checks on seeded random Hermitian `A`, `B`.
pub fn twirl_suite(dims: &[usize], trials: usize, seed: u64) -> Result<Vec<TwirlRow>> {
    dims.iter()
        .map(|&dim| {
            let s = derive_seed(seed, dim as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let a = random_hermitian(dim, &mut rng);
            let b = random_hermitian(dim, &mut rng);
            Ok(TwirlRow {
                dim,
                first: twirl1_mc_check(&a, trials, derive_seed(s, 1))?,
                second: twirl2_mc_check(&a, trials, derive_seed(s, 2))?,
                mean_var: haar_mean_var_mc(&a, &b, trials, derive_seed(s, 3))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct IndistSummary {
    pub tables: Vec<Section<IndistTable>>,
    /// Mean `d_M(Γ,Π)` nonincreasing in `d` within 4 combined SE.
    pub nonincreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapSummary {
    pub observable: String,
    pub report: GapReport,
    pub threshold: MidpointThreshold,
    /// `Σp^t`, `Σq^t`; for `O = I` these are the formula means.
    pub pure_moments: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportConfig {
    pub t: u32,
    pub d_list: Vec<usize>,
    pub k: usize,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub n_povms: usize,
    pub rounding_d_list: Vec<usize>,
    pub sweep_d_list: Vec<f64>,
}

impl ReportConfig {
    pub fn new(t: u32, d_list: Vec<usize>, k: usize, rounds: usize, trials: usize, seed: u64) -> Self {
        Self {
            t,
            d_list,
            k,
            rounds,
            trials,
            seed,
            n_povms: 8,
            rounding_d_list: vec![64, 128, 256, 512],
            sweep_d_list: vec![1e3, 1e4, 1e5, 1e6],
        }
    }
}

/// What the observable section should run on.
pub struct GapInput<'a> {
    pub label: String,
    pub observable: &'a Observable,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub config: ReportConfig,
    pub t: u32,
    pub s: u32,
    pub m: u32,
    pub delta_t: f64,
    pub hard_pair: HardPairSummary,
    pub matching: Vec<Section<MatchingReport>>,
    pub sectors: Section<SectorSuite>,
    pub inequality: Section<InequalitySuite>,
    pub rounding: Section<ScalingReport>,
    pub twirls: Section<Vec<TwirlRow>>,
    pub indistinguishability: IndistSummary,
    pub gap: Section<GapSummary>,
    pub amplification: Amplification,
    pub closure: Vec<Section<ClosureEvaluation>>,
    pub sample_bound: Section<SampleBoundSweep>,
    pub notes: Vec<String>,
}

fn cap_reason(d: usize, n: usize) -> Option<String> {
    let side = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    (side > MAX_OPERATOR_SIDE as u128).then(|| format!("d^{n} = {side} exceeds cap {MAX_OPERATOR_SIDE}"))
}

pub fn threshold_report(cfg: &ReportConfig, gap: Option<GapInput<'_>>) -> Result<ThresholdReport> {
    if cfg.d_list.is_empty() || cfg.k == 0 || cfg.rounds == 0 || cfg.trials == 0 {
        return Err(Error::InvalidInput("d_list, k, T and trials must be nonempty/positive".into()));
    }
    let hp = build_hard_pair(cfg.t)?;
    let s = hp.s as usize;
    let seed = cfg.seed;

    let matching = cfg
        .d_list
        .iter()
        .map(|&d| match cap_reason(d, s) {
            Some(r) => Section::skipped(r),
            None => Section::from_result(verify_matching(&hp.p, &hp.q, d, s)),
        })
        .collect();

    let rounding = Section::from_result(rounding_scaling_experiment(
        &hp.p.to_f64(),
        &cfg.rounding_d_list,
        cfg.trials,
        derive_seed(seed, 1),
    ));

    let tables: Vec<Section<IndistTable>> = cfg
        .d_list
        .iter()
        .map(|&d| match cap_reason(d, cfg.k * cfg.rounds) {
            Some(r) => Section::skipped(r),
            None => Section::from_result(indistinguishability_with_spectra(
                &hp.p,
                &hp.q,
                cfg.k,
                d,
                cfg.rounds,
                derive_seed(seed, 2),
                cfg.n_povms,
            )),
        })
        .collect();
    let done: Vec<IndistTable> = tables.iter().filter_map(|s| s.done().cloned()).collect();
    let indistinguishability = IndistSummary {
        nonincreasing: nonincreasing_within_noise(&done, 4.0),
        tables,
    };

    let gap = match gap {
        None => Section::skipped("no observable given"),
        Some(g) => Section::from_result(
            embedded_gap_with_pair(&hp, g.observable, g.eta, cfg.trials, derive_seed(seed, 3)).and_then(
                |report| {
                    Ok(GapSummary {
                        observable: g.label,
                        threshold: midpoint_threshold(&report)?,
                        pure_moments: (hp.moment_t_p, hp.moment_t_q),
                        report,
                    })
                },
            ),
        ),
    };

    let c_prime = rounding.done().map(EmpiricalConstant::from_scaling);
    let closure = cfg
        .d_list
        .iter()
        .map(|&d| match &c_prime {
            None => Section::skipped("no fitted rounding constant"),
            Some(c) => Section::from_result(closure_evaluate(
                d as f64,
                cfg.k as u64,
                cfg.rounds as u64,
                hp.m as u64,
                c,
            )),
        })
        .collect();
    let sample_bound = match &c_prime {
        None => Section::skipped("no fitted rounding constant"),
        Some(c) => Section::from_result(sample_bound_sweep(&cfg.sweep_d_list, hp.m as u64, c)),
    };

    Ok(ThresholdReport {
        config: cfg.clone(),
        t: hp.t,
        s: hp.s,
        m: hp.m,
        delta_t: hp.delta_t,
        hard_pair: HardPairSummary::new(&hp),
        matching,
        sectors: Section::from_result(sector_suite(4, &[2, 3])),
        inequality: Section::from_result(inequality_suite(50, derive_seed(seed, 4))),
        rounding,
        twirls: Section::from_result(twirl_suite(&[2, 3, 4], cfg.trials, derive_seed(seed, 5))),
        indistinguishability,
        gap,
        amplification: amplification(&rat(11, 12), &rat(2, 3))?,
        closure,
        sample_bound,
        notes: vec![
            "term_match is a proven bound; term_const is a fixed good-event budget".into(),
            "term_round and sample_bound use the fitted rounding constant and are empirical".into(),
            "the asymptotic lower bound is not checked at these dimensions".into(),
        ],
    })
}
