//! Biased-block reduction of an observable and the embedded hard-pair gap
//! experiment for `tr(Oρ^t)`.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::haarmoments::haar_mean_var;
use crate::hardpair::{build_hard_pair, HardPair};
use crate::linalg::{
    c, haar_unitary, hermitian_eigen, hermiticity_defect, kron_all, op_norm_hermitian, real_diag,
    trace, CMat,
};
use crate::mc::{derive_seed, run_chunks, McEstimate, RunningStats};

/// A Hermitian observable with `‖O‖_∞ ≤ 1`.
#[derive(Debug, Clone)]
pub struct Observable {
    pub d: usize,
    pub matrix: CMat,
    pub op_norm: f64,
    pub trace_norm: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
}

impl Observable {
    pub fn new(matrix: CMat) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::DimensionMismatch("observable must be square".into()));
        }
        if hermiticity_defect(&matrix) > 1e-12 {
            return Err(Error::InvalidInput("observable is not Hermitian".into()));
        }
        let eigenvalues = hermitian_eigen(&matrix).values;
        let op_norm = eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if op_norm > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!("‖O‖_∞ = {op_norm} > 1")));
        }
        Ok(Self {
            d,
            trace_norm: eigenvalues.iter().map(|v| v.abs()).sum(),
            op_norm,
            eigenvalues,
            matrix,
        })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(CMat::identity(d, d))
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(real_diag(values))
    }

    pub fn negated(&self) -> Self {
        Self {
            d: self.d,
            matrix: -self.matrix.clone(),
            op_norm: self.op_norm,
            trace_norm: self.trace_norm,
            eigenvalues: self.eigenvalues.iter().rev().map(|v| -v).collect(),
        }
    }
}

fn pauli(letter: char) -> Result<CMat> {
    let (o, i) = (c(0.0), c(1.0));
    let im = crate::linalg::C64::new(0.0, 1.0);
    Ok(match letter {
        'I' => CMat::identity(2, 2),
        'X' => CMat::from_row_slice(2, 2, &[o, i, i, o]),
        'Y' => CMat::from_row_slice(2, 2, &[o, -im, im, o]),
        'Z' => CMat::from_row_slice(2, 2, &[i, o, o, -i]),
        other => {
            return Err(Error::InvalidInput(format!("unknown Pauli letter {other:?}")));
        }
    })
}

/// Tensor product of single-qubit Paulis, first letter most significant.
pub fn pauli_string(letters: &str) -> Result<Observable> {
    if letters.is_empty() {
        return Err(Error::InvalidInput("empty Pauli string".into()));
    }
    if letters.chars().all(|ch| ch == 'I') {
        return Err(Error::InvalidInput(
            "all-identity string: use the identity observable".into(),
        ));
    }
    if letters.len() > 12 {
        return Err(Error::SizeCap {
            side: 1 << letters.len().min(63),
            cap: crate::MAX_OPERATOR_SIDE,
        });
    }
    let factors = letters.chars().map(pauli).collect::<Result<Vec<_>>>()?;
    Observable::new(kron_all(&factors))
}

/// Which half of the reduction applied: `r` is the number of positive
/// eigenvalues of the sign-normalized observable.
#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
pub enum BlockBranch {
    #[serde(rename = "r>=D")]
    ManyPositive,
    #[serde(rename = "r<D")]
    FewPositive,
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasedBlock {
    pub d: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub eta: f64,
    /// `d × D` isometry onto the top-`D` eigenvectors of the normalized
    /// observable.
    #[serde(skip)]
    pub isometry: CMat,
    /// `V†OV` for the observable as given.
    #[serde(skip)]
    pub b: CMat,
    pub sign_flipped: bool,
    /// `tr(V†OV)`, before sign normalization.
    pub trace_b: f64,
    pub op_norm_b: f64,
    pub positive_count: usize,
    pub branch: BlockBranch,
    /// The `D`-th and `(D+1)`-th eigenvalues coincide.
    pub tie_at_cut: bool,
    pub isometry_sha256: String,
}

impl BiasedBlock {
    pub fn sign(&self) -> f64 {
        if self.sign_flipped {
            -1.0
        } else {
            1.0
        }
    }

    /// `B` after sign normalization, `tr ≥ ηD/2`.
    pub fn normalized(&self) -> CMat {
        &self.b * c(self.sign())
    }

    pub fn normalized_trace(&self) -> f64 {
        self.sign() * self.trace_b
    }

    pub fn meets_bound(&self) -> bool {
        self.op_norm_b <= 1.0 + 1e-12
            && self.normalized_trace() >= self.eta * self.dim as f64 / 2.0 - 1e-9
    }
}

fn hash_matrix(m: &CMat) -> String {
    let mut h = Sha256::new();
    for z in m.iter() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Project onto the top `D = ⌊d/2⌋` eigenvectors after flipping `O` so that
/// its positive part dominates.
pub fn biased_block(o: &Observable, eta: f64) -> Result<BiasedBlock> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("η = {eta} outside (0, 1]")));
    }
    let d = o.d;
    if d < 2 {
        return Err(Error::InvalidInput("d ≥ 2 required".into()));
    }
    if o.trace_norm < eta * d as f64 - 1e-9 {
        return Err(Error::Precondition(format!(
            "‖O‖₁ = {} < ηd = {}",
            o.trace_norm,
            eta * d as f64
        )));
    }
    let eig = hermitian_eigen(&o.matrix);
    let pos: f64 = eig.values.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = -eig.values.iter().filter(|&&v| v < 0.0).sum::<f64>();
    let sign_flipped = neg > pos;
    let sign = if sign_flipped { -1.0 } else { 1.0 };
    let dim = d / 2;
    // descending in the normalized eigenvalue, ties by eigensolver index
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        (sign * eig.values[j])
            .total_cmp(&(sign * eig.values[i]))
            .then(i.cmp(&j))
    });
    let isometry = CMat::from_columns(
        &order[..dim]
            .iter()
            .map(|&i| eig.vectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    let b = isometry.adjoint() * &o.matrix * &isometry;
    let positive_count = eig.values.iter().filter(|&&v| sign * v > 0.0).count();
    let tie_at_cut =
        dim < d && (eig.values[order[dim - 1]] - eig.values[order[dim]]).abs() <= 1e-12;
    let block = BiasedBlock {
        d,
        dim,
        eta,
        trace_b: trace(&b).re,
        op_norm_b: op_norm_hermitian(&b),
        b,
        sign_flipped,
        positive_count,
        branch: if positive_count >= dim {
            BlockBranch::ManyPositive
        } else {
            BlockBranch::FewPositive
        },
        tie_at_cut,
        isometry_sha256: hash_matrix(&isometry),
        isometry,
    };
    if !block.meets_bound() {
        return Err(Error::IdentityViolated(format!(
            "biased block trace {} below ηD/2",
            block.normalized_trace()
        )));
    }
    Ok(block)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub t: u32,
    pub eta: f64,
    pub d: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub m: u32,
    pub block: BiasedBlock,
    pub delta_t: f64,
    /// `Δ = ηδ_t/4`.
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub mean_p: f64,
    pub mean_q: f64,
    pub var_p: f64,
    pub var_q: f64,
    pub mc_mean_p: McEstimate,
    pub mc_mean_q: McEstimate,
    pub mc_var_p: McEstimate,
    pub mc_var_q: McEstimate,
    /// Fraction of trials with `|X − mean| < Δ/2`.
    pub hit_p: McEstimate,
    pub hit_q: McEstimate,
    /// `Var ≤ Δ²/48` for both spectra (Chebyshev route to 11/12).
    pub variance_condition_met: bool,
    pub audit_trials: usize,
    pub audit_max_residual: f64,
    pub trials: usize,
    pub seed: u64,
}

impl GapReport {
    pub fn separation(&self) -> f64 {
        (self.mean_p - self.mean_q).abs()
    }

    pub fn separated(&self) -> bool {
        self.separation() >= 2.0 * self.delta - 1e-9
    }

    pub fn means_match(&self) -> bool {
        self.mc_mean_p.within(self.mean_p, 4.0, 1e-9) && self.mc_mean_q.within(self.mean_q, 4.0, 1e-9)
    }

    pub fn hits_ok(&self) -> bool {
        self.hit_p.value >= 11.0 / 12.0 && self.hit_q.value >= 11.0 / 12.0
    }
}

pub const AUDIT_TRIALS: usize = 10;

fn spectrum_power_diag(weights: &[f64], t: u32, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for (slot, w) in v.iter_mut().zip(weights) {
        *slot = w.powi(t as i32);
    }
    v
}

/// Embed the hard pair into the biased block and sample
/// `X_a = tr(B·U A_a U†)` for Haar `U ∈ U(D)`.
pub fn embedded_gap_experiment(
    t: u32,
    o: &Observable,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<GapReport> {
    let hp = build_hard_pair(t)?;
    embedded_gap_with_pair(&hp, o, eta, trials, seed)
}

pub fn embedded_gap_with_pair(
    hp: &HardPair,
    o: &Observable,
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<GapReport> {
    let block = biased_block(o, eta)?;
    let dim = block.dim;
    let m = hp.m as usize;
    if dim < m {
        return Err(Error::Precondition(format!("D = {dim} < m = {m}")));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let t = hp.t;
    let b = block.normalized();
    let p = hp.p.to_f64();
    let q = hp.q.to_f64();
    let ap = real_diag(&spectrum_power_diag(&p, t, dim));
    let aq = real_diag(&spectrum_power_diag(&q, t, dim));
    let fp = haar_mean_var(&ap, &b)?;
    let fq = haar_mean_var(&aq, &b)?;
    let delta = eta * hp.delta_t / 4.0;
    let radius = delta / 2.0;

    let parts = run_chunks(trials, seed, |rng, n| {
        let mut st = [RunningStats::default(); 4];
        for _ in 0..n {
            let u = haar_unitary(dim, rng);
            let bu = &b * &u;
            let xp = trace(&(&bu * &ap * u.adjoint())).re;
            let xq = trace(&(&bu * &aq * u.adjoint())).re;
            st[0].push(xp);
            st[1].push(xq);
            st[2].push(f64::from(u8::from((xp - fp.mean).abs() < radius)));
            st[3].push(f64::from(u8::from((xq - fq.mean).abs() < radius)));
        }
        st
    });
    let mut st = [RunningStats::default(); 4];
    for part in &parts {
        for (acc, x) in st.iter_mut().zip(part) {
            acc.merge(x);
        }
    }

    // ambient route: tr(O'·ρ^t) with ρ = V U diag(a) U† V†
    let o_norm = &o.matrix * c(block.sign());
    let v = &block.isometry;
    let mut audit_rng = crate::mc::stream_rng(derive_seed(seed, 0xA0D1), 0);
    let mut audit_max_residual: f64 = 0.0;
    for _ in 0..AUDIT_TRIALS.min(trials) {
        let u = haar_unitary(dim, &mut audit_rng);
        for weights in [&p, &q] {
            let diag = real_diag(&spectrum_power_diag(weights, 1, dim));
            let rho = v * &u * diag * u.adjoint() * v.adjoint();
            let mut rho_t = rho.clone();
            for _ in 1..t {
                rho_t = &rho_t * &rho;
            }
            let ambient = trace(&(&o_norm * rho_t)).re;
            let a_t = real_diag(&spectrum_power_diag(weights, t, dim));
            let compressed = trace(&(&b * &u * a_t * u.adjoint())).re;
            audit_max_residual = audit_max_residual.max((ambient - compressed).abs());
        }
    }

    let bound48 = delta * delta / 48.0;
    Ok(GapReport {
        t,
        eta,
        d: o.d,
        dim,
        m: hp.m,
        delta_t: hp.delta_t,
        delta,
        mean_p: fp.mean,
        mean_q: fq.mean,
        var_p: fp.variance,
        var_q: fq.variance,
        mc_mean_p: st[0].estimate(),
        mc_mean_q: st[1].estimate(),
        mc_var_p: st[0].variance_estimate(),
        mc_var_q: st[1].variance_estimate(),
        hit_p: st[2].estimate(),
        hit_q: st[3].estimate(),
        variance_condition_met: fp.variance <= bound48 && fq.variance <= bound48,
        audit_trials: AUDIT_TRIALS.min(trials),
        audit_max_residual,
        trials,
        seed,
        block,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MidpointThreshold {
    pub tau: f64,
    /// `true` when `X > τ` decides for `p`.
    pub p_above: bool,
    /// Distance from τ to the nearer interval edge (radius `Δ/2`).
    pub clearance: f64,
}

/// `τ = (mean_p + mean_q)/2` between the formula interval centres.
pub fn midpoint_threshold(report: &GapReport) -> Result<MidpointThreshold> {
    if report.mean_p == report.mean_q {
        return Err(Error::Precondition("degenerate means".into()));
    }
    let tau = 0.5 * (report.mean_p + report.mean_q);
    Ok(MidpointThreshold {
        tau,
        p_above: report.mean_p > report.mean_q,
        clearance: 0.5 * report.separation() - 0.5 * report.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    #[test]
    fn pauli_examples() {
        let z = pauli_string("Z").unwrap();
        assert_eq!(z.eigenvalues, vec![-1.0, 1.0]);
        assert_eq!(trace(&z.matrix).re, 0.0);
        assert_eq!(z.trace_norm, 2.0);
        let zz = pauli_string("ZZ").unwrap();
        let diag: Vec<f64> = (0..4).map(|i| zz.matrix[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
        let xi = pauli_string("XI").unwrap();
        assert_eq!(trace(&xi.matrix).re, 0.0);
        assert!((xi.op_norm - 1.0).abs() < 1e-12);
        let y = pauli_string("Y").unwrap();
        assert!((y.trace_norm - 2.0).abs() < 1e-12);
        assert!(pauli_string("II").is_err());
        assert!(pauli_string("ZQ").is_err());
    }

    #[test]
    fn block_examples() {
        let bb = biased_block(&Observable::identity(8).unwrap(), 1.0).unwrap();
        assert!(frobenius(&(bb.b.clone() - CMat::identity(4, 4))) < 1e-12);
        assert!((bb.trace_b - 4.0).abs() < 1e-12);
        let bb = biased_block(&pauli_string("ZZZ").unwrap(), 1.0).unwrap();
        assert!((bb.trace_b - 4.0).abs() < 1e-12);
        let mut vals = vec![1.0; 6];
        vals.extend([-1.0, -1.0]);
        let bb = biased_block(&Observable::diagonal(&vals).unwrap(), 1.0).unwrap();
        assert!((bb.trace_b - 4.0).abs() < 1e-12);
        assert_eq!(bb.branch, BlockBranch::ManyPositive);
        assert!(biased_block(&Observable::diagonal(&[0.1, 0.1, 0.0, 0.0]).unwrap(), 0.5).is_err());
    }

    #[test]
    fn few_positive_branch() {
        // one large positive eigenvalue, many small negative ones
        let bb = biased_block(&Observable::diagonal(&[1.0, -0.1, -0.1, -0.1, 0.0, 0.0]).unwrap(), 0.2)
            .unwrap();
        assert_eq!(bb.branch, BlockBranch::FewPositive);
        assert!(bb.meets_bound());
    }

    #[test]
    fn negation_toggles_sign() {
        let o = Observable::diagonal(&[1.0, 0.5, -0.2, -0.3, 0.9, -1.0]).unwrap();
        let a = biased_block(&o, 0.5).unwrap();
        let b = biased_block(&o.negated(), 0.5).unwrap();
        assert_ne!(a.sign_flipped, b.sign_flipped);
        assert!(frobenius(&(a.b.clone() + &b.b)) < 1e-12);
        assert!((a.normalized_trace() - b.normalized_trace()).abs() < 1e-12);
    }

    #[test]
    fn identity_gap_small() {
        let rep = embedded_gap_experiment(3, &Observable::identity(16).unwrap(), 1.0, 500, 3).unwrap();
        assert!(rep.separated());
        assert!(rep.means_match(), "{rep:?}");
        assert!(rep.audit_max_residual < 1e-9);
        assert!(rep.hits_ok());
        let th = midpoint_threshold(&rep).unwrap();
        assert!(th.p_above);
        assert!(th.clearance >= 0.0);
    }

    #[test]
    fn nontrivial_block_variance_bound() {
        let vals: Vec<f64> = (0..16).map(|i| if i % 3 == 0 { -0.5 } else { 0.75 }).collect();
        let rep = embedded_gap_experiment(3, &Observable::diagonal(&vals).unwrap(), 0.5, 2000, 9).unwrap();
        let dd = rep.dim as f64;
        assert!(rep.var_p <= dd / (dd * dd - 1.0));
        assert!(rep.means_match(), "{rep:?}");
        assert!(rep.audit_max_residual < 1e-9);
    }

    #[test]
    fn small_block_rejected() {
        assert!(matches!(
            embedded_gap_experiment(5, &pauli_string("Z").unwrap(), 1.0, 10, 1),
            Err(Error::Precondition(_))
        ));
    }
}
