//! Dense complex linear algebra shared by the operator-level modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left factor most significant.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMat>) -> CMat {
    let mut acc = CMat::from_element(1, 1, c(1.0));
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    a.kronecker(b)
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// `‖M − M†‖_max`, zero for Hermitian input.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn hermitian_eigen(m: &CMat) -> HermitianEigen {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let n = m.nrows();
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    hermitian_eigen(m).values
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

/// Spectral norm of a Hermitian matrix.
pub fn op_norm_hermitian(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of an arbitrary matrix.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |acc, v| acc.max(*v))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Apply `f` to the eigenvalues of a Hermitian matrix.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let eig = hermitian_eigen(m);
    let n = m.nrows();
    let mut scaled = eig.vectors.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        let fj = c(f(lam));
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    &scaled * eig.vectors.adjoint()
}

/// Complex standard Gaussian sample, `E|z|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-random unit vector in `ℂ^d` (normalized complex Gaussian).
pub fn haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    loop {
        let v = CVec::from_fn(d, |_, _| complex_gaussian(rng));
        let n = v.norm();
        if n > 0.0 {
            return v.unscale(n);
        }
    }
}

/// Haar-random unitary: QR of a complex Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat {
    let g = gaussian_matrix(dim, dim, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / n } else { c(1.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Generic PSD operator `M†M` from a seeded complex Gaussian `M`.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let m = gaussian_matrix(n, n, rng);
    m.adjoint() * m
}

/// Seeded GUE-style Hermitian matrix `(M + M†)/2`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let m = gaussian_matrix(n, n, rng);
    (&m + m.adjoint()) * c(0.5)
}

pub fn real_diag(values: &[f64]) -> CMat {
    let mut m = CMat::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v);
    }
    m
}

/// Swap operator `F` on `ℂ^D ⊗ ℂ^D`.
pub fn swap_operator(dim: usize) -> CMat {
    let n = dim * dim;
    let mut f = CMat::zeros(n, n);
    for i in 0..dim {
        for j in 0..dim {
            f[(j * dim + i, i * dim + j)] = c(1.0);
        }
    }
    f
}
