use thiserror::Error;

/// Errors produced by the pricing, optimization and asymptotic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WingError {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An option price violates static no-arbitrage bounds.
    #[error("arbitrage violation: price {price} outside ({lower}, {upper})")]
    Arbitrage { price: f64, lower: f64, upper: f64 },

    /// An option price sits on a no-arbitrage bound (implied volatility is 0 or infinite).
    #[error("price {price} on no-arbitrage boundary: {reason}")]
    Boundary { price: f64, reason: String },

    /// Matrix input is malformed (not symmetric, not positive definite, badly conditioned).
    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("integration failed: {0}")]
    Integration(String),

    /// The requested formula does not apply in the detected asymptotic regime.
    #[error("regime error: {0}")]
    Regime(String),

    /// A required exponential moment of the time change does not exist.
    #[error("moment condition violated: {0}")]
    Moment(String),
}

pub type Result<T> = std::result::Result<T, WingError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(WingError::Domain(msg.into()))
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite, got {x}"))
    }
}
