//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use replica_core::ensembles::{rounding_scaling_experiment, verify_matching};
use replica_core::hardpair::{build_hard_pair, reference_points, Spectrum};
use replica_core::linalg::{kron_all, real_diag, CMat};
use replica_core::observable::{embedded_gap_experiment, pauli_string, Observable};
use replica_core::report::{inequality_suite, sample_bound_sweep, twirl_suite, EmpiricalConstant};
use replica_core::symfun::{rat, to_f64, Rational};
use replica_core::tensorperm::{permutation_inequality_check, rising_factorial, sector_identity_check, Placements};
use replica_core::testersim::{
    expected_ar2, expected_ar2_mc, indistinguishability_experiment, nonincreasing_within_noise,
    pochhammer_ratio_check,
};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn hard_pairs() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut worst_ledger: f64 = 0.0;
    let mut t3 = f64::NAN;
    for t in 3..=10 {
        let hp = match build_hard_pair(t) {
            Ok(hp) => hp,
            Err(e) => return outcome(false, format!("t={t}: {e}")),
        };
        worst_ledger = worst_ledger.max(hp.max_ledger_diff());
        ok &= hp.max_ledger_diff() <= 1e-12 && hp.gap >= hp.delta_t && hp.delta_t > 0.0;
        if t == 3 {
            t3 = (hp.gap - 1.5 * hp.eta0.value).abs();
            ok &= t3 <= 1e-12;
        }
    }
    let el = start.elapsed();
    outcome(
        ok && within(el, 10),
        format!("t=3..10, max power-sum diff {worst_ledger:.1e}, |gap₃−3η₀/2| {t3:.1e}, {el:.2?}"),
    )
}

fn matching() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (t, d) in [(3, 2), (4, 3), (5, 2), (6, 3)] {
        let hp = build_hard_pair(t).unwrap();
        let r = verify_matching(&hp.p, &hp.q, d, hp.s as usize).unwrap();
        worst = worst.max(r.deviation);
        ok &= r.precondition_met && r.deviation <= 1e-10;
    }
    let el = start.elapsed();
    outcome(ok && within(el, 30), format!("max deviation {worst:.1e}, {el:.2?}"))
}

fn sectors() -> Outcome {
    let start = Instant::now();
    let (mut checked, mut passed) = (0, 0);
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        for na in 1..5 {
            for nb in 1..=(5 - na) {
                let a: Vec<usize> = (0..na).collect();
                let b: Vec<usize> = (na..na + nb).collect();
                for j in 0..=na.min(nb) {
                    let r = sector_identity_check(&a, &b, j, d).unwrap();
                    checked += 1;
                    worst = worst.max(r.residual);
                    if r.multiplicity == r.fiber_multiplicity && r.residual <= 1e-10 && r.coset_is_sector {
                        passed += 1;
                    }
                }
            }
        }
    }
    let el = start.elapsed();
    outcome(
        passed == checked && within(el, 60),
        format!("{passed}/{checked} (|A|+|B| ≤ 5, d ∈ {{2,3}}), max residual {worst:.1e}, {el:.2?}"),
    )
}

/// `∏_r d^{↑|Q_r|} / ∏_{t,r} d^{↑|I_{t,r}|}` straight from the placement.
fn symmetrizer_ratio(pl: &Placements, d: u64) -> Rational {
    let num = pl
        .merged_blocks()
        .iter()
        .fold(BigInt::from(1), |acc, b| acc * rising_factorial(d, b.len() as u32));
    let den = pl
        .round_blocks()
        .iter()
        .fold(BigInt::from(1), |acc, b| acc * rising_factorial(d, b.len() as u32));
    Rational::new(num, den)
}

fn inequality() -> Outcome {
    let suite = inequality_suite(200, SEED).unwrap();
    let cases = [
        Placements::new(1, vec![vec![vec![0], vec![]], vec![vec![0], vec![]]]).unwrap(),
        Placements::new(2, vec![vec![vec![0, 1], vec![]], vec![vec![0], vec![1]]]).unwrap(),
        Placements::new(3, vec![vec![vec![0, 2], vec![1]], vec![vec![1], vec![0, 2]]]).unwrap(),
        Placements::new(2, vec![vec![vec![0], vec![1]]; 3]).unwrap(),
    ];
    let mut exact_ok = true;
    let mut worst_ratio_err: f64 = 0.0;
    for pl in &cases {
        let block = 2usize.pow(pl.k as u32);
        let g = vec![CMat::identity(block, block); pl.rounds_count()];
        let r = permutation_inequality_check(pl, 2, &g).unwrap();
        let exact = symmetrizer_ratio(pl, 2);
        worst_ratio_err = worst_ratio_err.max((r.lhs / r.rhs - to_f64(&exact)).abs());
        exact_ok &= exact >= rat(1, 1);
    }
    outcome(
        suite.all_hold() && exact_ok && worst_ratio_err <= 1e-12,
        format!(
            "{}/{} random instances, min relative margin {:.3e}, identity ratio error {worst_ratio_err:.1e}",
            suite.passed, suite.instances, suite.min_relative_margin
        ),
    )
}

fn twirls() -> Outcome {
    let trials = 100_000;
    let rows = twirl_suite(&[2, 3, 4], trials, SEED).unwrap();
    let detail: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "D={}: dev {:.4}/{:.4}, z {:.2}, var ratio {:.3}",
                r.dim,
                r.first.deviation,
                r.second.deviation,
                r.mean_var.mean_z,
                r.mean_var.variance_ratio.unwrap_or(f64::NAN)
            )
        })
        .collect();
    outcome(
        rows.iter().all(|r| r.passes()),
        format!("bound {:.4}; {}", rows[0].first.bound, detail.join("; ")),
    )
}

fn rounding() -> (Outcome, Option<f64>) {
    let start = Instant::now();
    let (_, m, a) = reference_points(5).unwrap();
    assert_eq!(m, 3);
    let r = rounding_scaling_experiment(&a.to_f64(), &[64, 128, 256, 512], 2000, SEED).unwrap();
    let el = start.elapsed();
    let q: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.quantile99)).collect();
    (
        outcome(
            r.slope_in_range() && r.bound_never_violated() && within(el, 300),
            format!("slope {:.4}, quantiles [{}], C′ {:.3}, {el:.2?}", r.slope, q.join(", "), r.c_emp),
        ),
        Some(r.c_emp),
    )
}

fn indistinguishability() -> Outcome {
    let hp = build_hard_pair(3).unwrap();
    let mut tables = Vec::new();
    for d in [2, 4, 8] {
        tables.push(indistinguishability_experiment(&hp, d, 2, SEED, 8).unwrap());
    }
    let pi_equal = tables.iter().all(|t| t.pi_deviation <= 1e-12);
    let dominated = tables
        .iter()
        .all(|t| t.enumerated && t.domination.exhaustive && t.domination.violations == 0);
    let trend = nonincreasing_within_noise(&tables, 4.0);
    let dm: Vec<String> = tables
        .iter()
        .map(|t| format!("{:.4}±{:.4}", t.mean_dm_gamma_pi.value, t.mean_dm_gamma_pi.std_error))
        .collect();
    let checked: usize = tables.iter().map(|t| t.domination.outcomes_checked).sum();
    outcome(
        pi_equal && dominated && trend,
        format!("Π_p=Π_q, domination on {checked} (α, y) pairs, d_M(Γ,Π) over d=2,4,8: [{}]", dm.join(", ")),
    )
}

/// All `y ∈ ℕ^T` with `T ≤ 4` and `Σy ≤ 8`.
fn compositions(parts: usize, max_sum: u32) -> Vec<Vec<u32>> {
    if parts == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=max_sum {
        for mut rest in compositions(parts - 1, max_sum - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn pochhammer() -> Outcome {
    let mut checked = 0;
    let mut failures = 0;
    let mut tightest = f64::INFINITY;
    for rounds in 1..=4 {
        for y in compositions(rounds, 8) {
            for d in 2..=16u64 {
                let r = pochhammer_ratio_check(d, &y).unwrap();
                checked += 1;
                if !r.holds() {
                    failures += 1;
                }
                tightest = tightest.min(r.ratio / r.bound);
            }
        }
    }
    outcome(
        failures == 0,
        format!("{checked} (y, d) cases, {failures} failures, min ratio/bound {tightest:.4}"),
    )
}

fn ar2() -> Outcome {
    let hp5 = build_hard_pair(5).unwrap();
    let settings: Vec<(Spectrum, usize, usize)> = vec![
        (Spectrum::new(vec![rat(1, 2), rat(1, 2)]).unwrap(), 2, 2),
        (Spectrum::new(vec![rat(1, 3), rat(2, 3)]).unwrap(), 1, 3),
        (hp5.p.clone(), 2, 2),
    ];
    let mut ok = true;
    let mut worst_z: f64 = 0.0;
    for (i, (p, k, t)) in settings.iter().enumerate() {
        let exact = expected_ar2(p, *k, *t);
        let mc = expected_ar2_mc(&p.to_f64(), *k, *t, 100_000, SEED + i as u64).unwrap();
        for (e, x) in mc.iter().zip(&exact.per_label) {
            worst_z = worst_z.max(e.z_score(*x).abs());
            ok &= e.within(*x, 4.0, 0.0);
        }
        let kt = (k * t) as f64;
        ok &= exact.total_matches_identity
            && exact.chain_bound == kt * kt + kt
            && exact.total <= exact.chain_bound;
    }
    outcome(ok, format!("3 settings, max |z| {worst_z:.2}, Σ_r bound (kT)²+kT reproduced"))
}

fn gap() -> Outcome {
    let observables: Vec<(&str, Observable)> = vec![
        ("I", Observable::identity(64).unwrap()),
        ("Z⊗6", pauli_string("ZZZZZZ").unwrap()),
        ("ZZZIII", pauli_string("ZZZIII").unwrap()),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, o) in &observables {
        let r = embedded_gap_experiment(3, o, 1.0, 5000, SEED).unwrap();
        ok &= r.means_match() && r.separated() && r.hits_ok() && r.audit_max_residual <= 1e-9;
        ok &= (r.delta - r.eta * r.delta_t / 4.0).abs() <= 1e-15;
        parts.push(format!(
            "{name}: sep {:.5} ≥ {:.5}, hits {:.3}/{:.3}, audit {:.1e}",
            r.separation(),
            2.0 * r.delta,
            r.hit_p.value,
            r.hit_q.value,
            r.audit_max_residual
        ));
    }
    // a generic diagonal observable with the same trace norm
    let diag: Vec<f64> = (0..64).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
    let o = Observable::new(kron_all(&[real_diag(&diag)])).unwrap();
    let r = embedded_gap_experiment(3, &o, 1.0, 5000, SEED).unwrap();
    ok &= r.means_match() && r.separated() && r.audit_max_residual <= 1e-9;
    parts.push(format!("±1 diagonal: sep {:.5}, audit {:.1e}", r.separation(), r.audit_max_residual));
    outcome(ok, parts.join("; "))
}

fn closure(c_emp: Option<f64>) -> Outcome {
    let Some(c) = c_emp else {
        return outcome(false, "no fitted constant".into());
    };
    let c = EmpiricalConstant::new(c, format!("rounding experiment m=3 seed={SEED}"));
    let ds = [1e3, 1e4, 1e5, 1e6];
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [2, 3] {
        let s = sample_bound_sweep(&ds, m, &c).unwrap();
        ok &= s.grows_like_sqrt_d();
        let kt: Vec<String> = s.rows.iter().map(|r| r.kt.to_string()).collect();
        parts.push(format!("m={m}: kT [{}], exponent {:.3}", kt.join(", "), s.exponent));
    }
    outcome(ok, format!("empirical C′ {:.3}; {}", c.value, parts.join("; ")))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "hard pair", hard_pairs());
    report(2, "matching at k copies", matching());
    report(3, "sector identity", sectors());
    report(4, "permutation inequality", inequality());
    report(5, "Haar twirls", twirls());
    let (round, c_emp) = rounding();
    report(6, "rounding scaling", round);
    report(7, "indistinguishability", indistinguishability());
    report(8, "Pochhammer bound", pochhammer());
    report(9, "E[A_r²]", ar2());
    report(10, "observable gap", gap());
    report(11, "closure sweep (empirical)", closure(c_emp));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
