//! First and second Haar moments of `X_A(U) = tr(B·UAU†)` and the
//! second-order twirl `𝔼[(UAU†)^{⊗2}] = α I⊗I + β F`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, haar_unitary, kron, op_norm_hermitian, swap_operator, trace, CMat};
use crate::mc::{run_chunks, McEstimate, RunningStats};
use crate::symfun::{rat_int, Rational};
use crate::tensorperm::OperatorMcCheck;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct TwirlCoefficients {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub dim: usize,
}

impl TwirlCoefficients {
    /// Residuals of `αD² + βD = tr(A)²` and `αD + βD² = tr(A²)`.
    pub fn system_residual(&self, tr_a: f64, tr_a2: f64) -> f64 {
        let d = self.dim as f64;
        let r1 = self.alpha * d * d + self.beta * d - tr_a * tr_a;
        let r2 = self.alpha * d + self.beta * d * d - tr_a2;
        r1.abs().max(r2.abs())
    }

    pub fn operator(&self) -> CMat {
        let n = self.dim;
        CMat::identity(n * n, n * n) * c(self.alpha) + swap_operator(n) * c(self.beta)
    }
}

fn traces(a: &CMat) -> Result<(f64, f64)> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("square matrix required".into()));
    }
    Ok((trace(a).re, trace(&(a * a)).re))
}

/// `α = (D tr(A)² − tr(A²))/(D(D²−1))`, `β = (D tr(A²) − tr(A)²)/(D(D²−1))`
/// from `tr A` and `tr A²`, exactly.
pub fn twirl2_exact(tr_a: &Rational, tr_a2: &Rational, dim: usize) -> Result<(Rational, Rational)> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!("D = {dim} < 2")));
    }
    let d = rat_int(dim as i64);
    let den = &d * (&d * &d - rat_int(1));
    let alpha = (&d * tr_a * tr_a - tr_a2) / &den;
    let beta = (&d * tr_a2 - tr_a * tr_a) / &den;
    Ok((alpha, beta))
}

pub fn twirl2_coefficients(a: &CMat) -> Result<TwirlCoefficients> {
    let dim = a.nrows();
    if dim < 2 {
        return Err(Error::InvalidInput(format!("D = {dim} < 2")));
    }
    let (t1, t2) = traces(a)?;
    let d = dim as f64;
    let den = d * (d * d - 1.0);
    Ok(TwirlCoefficients {
        alpha: (d * t1 * t1 - t2) / den,
        beta: (d * t2 - t1 * t1) / den,
        dim,
    })
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
}

/// `𝔼X_A = tr(A)tr(B)/D` and
/// `Var X_A = (D tr A² − (tr A)²)(D tr B² − (tr B)²)/(D²(D²−1))`.
pub fn haar_mean_var(a: &CMat, b: &CMat) -> Result<MeanVar> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch("A and B must share a side".into()));
    }
    let dim = a.nrows();
    if dim < 2 {
        return Err(Error::InvalidInput(format!("D = {dim} < 2")));
    }
    let (ta, ta2) = traces(a)?;
    let (tb, tb2) = traces(b)?;
    let d = dim as f64;
    Ok(MeanVar {
        mean: ta * tb / d,
        variance: (d * ta2 - ta * ta) * (d * tb2 - tb * tb) / (d * d * (d * d - 1.0)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HaarMc {
    pub formula: MeanVar,
    pub mean: McEstimate,
    pub variance: McEstimate,
    pub mean_z: f64,
    /// MC variance over formula variance; `None` when the formula gives 0.
    pub variance_ratio: Option<f64>,
    pub seed: u64,
}

impl HaarMc {
    pub fn mean_ok(&self) -> bool {
        self.mean.within(self.formula.mean, 4.0, 1e-12)
    }

    pub fn variance_ok(&self) -> bool {
        match self.variance_ratio {
            Some(r) => (0.8..=1.25).contains(&r),
            None => self.variance.value <= 1e-20,
        }
    }
}

/// Monte Carlo over Haar `U ∈ U(D)` for `X = tr(B·UAU†)`.
pub fn haar_mean_var_mc(a: &CMat, b: &CMat, trials: usize, seed: u64) -> Result<HaarMc> {
    let formula = haar_mean_var(a, b)?;
    let dim = a.nrows();
    if dim > 64 {
        return Err(Error::InvalidInput(format!("D = {dim} > 64")));
    }
    let parts = run_chunks(trials, seed, |rng, n| {
        let mut st = RunningStats::default();
        for _ in 0..n {
            let u = haar_unitary(dim, rng);
            st.push(trace(&(b * &u * a * u.adjoint())).re);
        }
        st
    });
    let mut stats = RunningStats::default();
    parts.iter().for_each(|p| stats.merge(p));
    let mean = stats.estimate();
    let variance = stats.variance_estimate();
    Ok(HaarMc {
        formula,
        mean_z: mean.z_score(formula.mean),
        variance_ratio: (formula.variance > 1e-14).then(|| variance.value / formula.variance),
        mean,
        variance,
        seed,
    })
}

/// `‖avg UAU† − tr(A)/D·I‖_∞` against `5/√trials`.
pub fn twirl1_mc_check(a: &CMat, trials: usize, seed: u64) -> Result<OperatorMcCheck> {
    let dim = a.nrows();
    let (ta, _) = traces(a)?;
    let parts = run_chunks(trials, seed, |rng, n| {
        let mut acc = CMat::zeros(dim, dim);
        for _ in 0..n {
            let u = haar_unitary(dim, rng);
            acc += &u * a * u.adjoint();
        }
        acc
    });
    let avg = parts.into_iter().fold(CMat::zeros(dim, dim), |x, y| x + y) / c(trials as f64);
    let exact = CMat::identity(dim, dim) * c(ta / dim as f64);
    Ok(OperatorMcCheck {
        deviation: op_norm_hermitian(&(avg - exact)),
        bound: 5.0 / (trials as f64).sqrt(),
        trials: trials as u64,
        seed,
    })
}

/// `‖avg (UAU†)^{⊗2} − (αI⊗I + βF)‖_∞` against `5/√trials`.
pub fn twirl2_mc_check(a: &CMat, trials: usize, seed: u64) -> Result<OperatorMcCheck> {
    let coeffs = twirl2_coefficients(a)?;
    let dim = a.nrows();
    let side = dim * dim;
    let parts = run_chunks(trials, seed, |rng, n| {
        let mut acc = CMat::zeros(side, side);
        for _ in 0..n {
            let u = haar_unitary(dim, rng);
            let x = &u * a * u.adjoint();
            acc += kron(&x, &x);
        }
        acc
    });
    let avg = parts.into_iter().fold(CMat::zeros(side, side), |x, y| x + y) / c(trials as f64);
    Ok(OperatorMcCheck {
        deviation: op_norm_hermitian(&(avg - coeffs.operator())),
        bound: 5.0 / (trials as f64).sqrt(),
        trials: trials as u64,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, real_diag};
    use crate::symfun::rat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(dim: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian_matrix(dim, dim, &mut rng);
        (&g + g.adjoint()) * c(0.5)
    }

    #[test]
    fn twirl_examples() {
        let id = twirl2_coefficients(&CMat::identity(3, 3)).unwrap();
        assert!((id.alpha - 1.0).abs() < 1e-15 && id.beta.abs() < 1e-15);
        // traceless with tr A² = 1
        let h = 0.5f64.sqrt();
        let a = real_diag(&[h, -h, 0.0, 0.0]);
        let t = twirl2_coefficients(&a).unwrap();
        assert!((t.alpha + 1.0 / 60.0).abs() < 1e-15);
        assert!((t.beta - 1.0 / 15.0).abs() < 1e-15);
        let (al, be) = twirl2_exact(&rat(1, 1), &rat(1, 1), 2).unwrap();
        assert_eq!((al, be), (rat(1, 6), rat(1, 6)));
        assert!(twirl2_coefficients(&CMat::identity(1, 1)).is_err());
    }

    #[test]
    fn twirl_solves_linear_system() {
        for seed in 0..5 {
            let a = random_hermitian(4, seed);
            let t = twirl2_coefficients(&a).unwrap();
            let (t1, t2) = traces(&a).unwrap();
            assert!(t.system_residual(t1, t2) < 1e-10);
        }
    }

    #[test]
    fn mean_var_examples() {
        let d = 5;
        let a = CMat::identity(d, d) * c(0.3);
        let b = random_hermitian(d, 3);
        assert_eq!(haar_mean_var(&a, &b).unwrap().variance, 0.0);
        let mv = haar_mean_var(&b, &(CMat::identity(d, d) * c(2.0))).unwrap();
        assert!(mv.variance.abs() < 1e-12);
        assert!((mv.mean - 2.0 * trace(&b).re).abs() < 1e-12);
        // A = e₁e₁†, ‖B‖_∞ ≤ 1
        let mut diag = vec![0.0; d];
        diag[0] = 1.0;
        let bb = real_diag(&[1.0, -1.0, 0.5, 1.0, -0.25]);
        let mv = haar_mean_var(&real_diag(&diag), &bb).unwrap();
        let df = d as f64;
        assert!(mv.variance <= df / (df * df - 1.0));
    }

    #[test]
    fn variance_symmetric_in_roles() {
        let a = random_hermitian(4, 8);
        let b = random_hermitian(4, 9);
        let ab = haar_mean_var(&a, &b).unwrap();
        let ba = haar_mean_var(&b, &a).unwrap();
        assert_eq!(ab.variance, ba.variance);
    }

    #[test]
    fn variance_vanishes_only_for_scalar_operators() {
        let b = random_hermitian(3, 1);
        for x in [0.0, 1e-3, 0.5, 1.0] {
            let a = real_diag(&[1.0 + x, 1.0, 1.0 - x]);
            let v = haar_mean_var(&a, &b).unwrap().variance;
            if x == 0.0 {
                assert!(v.abs() < 1e-15);
            } else {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn mc_small() {
        let a = real_diag(&[1.0, 0.0]);
        let b = real_diag(&[1.0, -1.0]);
        let mc = haar_mean_var_mc(&a, &b, 20_000, 4).unwrap();
        assert_eq!(mc.formula.mean, 0.0);
        assert!(mc.mean_ok(), "{mc:?}");
        assert!(mc.variance_ok(), "{mc:?}");
        let mc = haar_mean_var_mc(&CMat::identity(3, 3), &random_hermitian(3, 2), 2_000, 4).unwrap();
        assert!(mc.variance.value <= 1e-20, "{mc:?}");
        assert!(twirl2_mc_check(&random_hermitian(2, 6), 20_000, 1).unwrap().passes());
        assert!(twirl1_mc_check(&random_hermitian(3, 6), 20_000, 1).unwrap().passes());
    }
}
