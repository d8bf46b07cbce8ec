use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("near-singular linear system (estimated condition number {cond:.3e})")]
    NearSingular { cond: f64 },

    #[error("profile (A={a}, B={b}, C={c}) violates the no-reversal condition")]
    Inadmissible { a: f64, b: f64, c: f64 },

    #[error("unresolved force: {tail:.3e} of the energy lies in modes beyond the cutoff")]
    Unresolved { tail: f64 },

    #[error("resolution failure: {0}")]
    Resolution(String),

    #[error("iterate left the ball: norm {norm:.3e} > radius {radius:.3e} at iteration {iteration}")]
    BallEscape {
        norm: f64,
        radius: f64,
        iteration: usize,
    },

    #[error("iteration is not contracting (increment ratio {ratio:.3} at iteration {iteration})")]
    NonContraction { ratio: f64, iteration: usize },

    #[error("iteration did not converge in {0} steps")]
    MaxIterations(usize),

    #[error("no sign change bracketed: growth {lo:.6e} at lower end, {hi:.6e} at upper end")]
    NoBracket { lo: f64, hi: f64 },

    #[error("neutral tolerance not reached: best |Re lambda| = {best_re:.3e} at A = {best_a}")]
    ToleranceNotReached { best_re: f64, best_a: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),
}
