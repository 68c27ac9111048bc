use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator side {side} exceeds the dense cap of {cap}")]
    SizeCap { side: usize, cap: usize },

    #[error("root certification failed: {0}")]
    CertificationFailed(String),

    #[error("Gram matrix too far from identity: ‖G−I‖₂ = {0} ≥ 1/2")]
    GramTooFar(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("POVM completeness violated: ‖ΣF − I‖ = {0}")]
    IncompletePovm(f64),

    #[error("identity violated: {0}")]
    IdentityViolated(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_side(d: usize, n: usize) -> Result<usize> {
    let mut side: usize = 1;
    for _ in 0..n {
        side = side.saturating_mul(d);
        if side > crate::MAX_OPERATOR_SIDE {
            return Err(Error::SizeCap {
                side,
                cap: crate::MAX_OPERATOR_SIDE,
            });
        }
    }
    Ok(side)
}
