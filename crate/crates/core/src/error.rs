//! Crate-wide error type.

/// One residual snapshot kept by the solver while iterating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub sweep: usize,
    pub interior: f64,
    pub vertex: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument left the domain it is defined on (coordinate outside a
    /// ray, non-finite input, non-positive constant, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Ray values disagree at the vertex beyond the admissible tolerance.
    #[error(
        "vertex consistency error: rays {ray_a} and {ray_b} disagree at the vertex \
         ({value_a} vs {value_b}, tolerance {tolerance})"
    )]
    VertexMismatch {
        ray_a: usize,
        ray_b: usize,
        value_a: f64,
        value_b: f64,
        tolerance: f64,
    },

    /// A bracketing root search could not enclose a sign change.
    #[error("no root: {0}")]
    NoRoot(String),

    /// The relaxation loop hit its sweep cap before reaching the tolerance.
    #[error(
        "solver did not converge within {sweeps} sweeps \
         (interior residual {interior:.3e}, vertex residual {vertex:.3e})"
    )]
    NonConvergence {
        sweeps: usize,
        interior: f64,
        vertex: f64,
        history: Vec<ResidualSample>,
    },

    /// Array arguments do not match the expected layout.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A caller-asserted precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
