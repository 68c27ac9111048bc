//! Finite-dimensional verification toolkit for the replica threshold of
//! nonlinear state moments `tr(ρ^t)` and `tr(Oρ^t)`.
//!
//! The crate builds moment-matched pairs of spectra and checks, exactly where
//! possible and by seeded Monte Carlo otherwise, every finite-d ingredient of
//! the lower-bound argument:
//!
//! * [`symfun`]: exact symmetric-function algebra (elementary, power-sum,
//!   complete homogeneous and monomial bases).
//! * [`hardpair`]: certified construction of the hard pair `(p, q)`.
//! * [`tensorperm`]: permutation operators on `(ℂ^d)^{⊗n}`, symmetrizers,
//!   crossing-number sectors and the merging inequality.
//! * [`ensembles`]: Haar-assembled ensembles, exact k-copy averages and
//!   Gram-matrix rounding to exact spectra.
//! * [`haarmoments`]: first and second unitary twirl formulas.
//! * [`observable`]: biased-block reduction and the embedded gap experiment.
//! * [`testersim`]: configuration averaging, Pochhammer bounds and induced
//!   total-variation distances under product POVMs.
//! * [`report`]: closure-inequality bookkeeping.

pub mod ensembles;
pub mod error;
pub mod haarmoments;
pub mod hardpair;
pub mod linalg;
pub mod mc;
pub mod observable;
pub mod report;
pub mod symfun;
pub mod tensorperm;
pub mod testersim;

pub use error::{Error, Result};

/// Largest operator side `d^n` any dense routine will build.
pub const MAX_OPERATOR_SIDE: usize = 4096;

/// Largest configuration space enumerated exactly.
pub const MAX_CONFIGURATIONS: usize = 100_000;
