use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A standing assumption on the model failed; carries the condition name
    /// and, where available, a witness point.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A parameter (m, c, alpha, step size, ...) is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// The adaptive stepper exhausted its halving budget with the proposal
    /// still outside (guard, 1-guard). Signals dt too coarse or an invalid
    /// model; never silently clamped.
    #[error(
        "boundary breach at t={t}: proposal {x} outside ({guard}, 1-{guard}) after {halvings} halvings"
    )]
    BoundaryBreach {
        t: f64,
        x: f64,
        guard: f64,
        halvings: u32,
    },

    #[error("quadrature did not converge: achieved error {achieved} > tolerance {tol}")]
    Quadrature { achieved: f64, tol: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    /// A statistical estimate cannot be formed (empty data, unvisited chain
    /// state, excessive censoring, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
