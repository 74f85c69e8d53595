use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver did not converge: residual {residual:.3e} for pair {index}")]
    EigenNonConvergence { index: usize, residual: f64 },

    #[error("no coordinate passes the truncation threshold {threshold}")]
    EmptyTruncation { threshold: f64 },

    #[error("polytope is empty: {0}")]
    EmptyPolytope(String),

    #[error("mechanism parse error at line {line}, column {column}: {message}")]
    MechanismSyntax { line: usize, column: usize, message: String },

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("reaction {reaction} does not conserve element {element} (net {net})")]
    ElementImbalance { reaction: usize, element: String, net: f64 },

    #[error("reaction {reaction} references unknown species '{species}'")]
    UnknownSpecies { reaction: usize, species: String },

    #[error("negative concentration {value:.3e} for species {species}")]
    NegativeConcentration { species: usize, value: f64 },

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error(
        "step size underflow at t = {t:.6e} (h = {h:.3e}); the problem is likely too stiff for \
         the explicit integrator, loosen the tolerances or shorten the horizon"
    )]
    StepUnderflow { t: f64, h: f64 },

    #[error(
        "step budget of {max_steps} exhausted at t = {t:.6e}; loosen the tolerances or shorten \
         the horizon"
    )]
    TooManySteps { t: f64, max_steps: usize },

    #[error("query lies outside the kernel support (nearest scaled distance {distance:.3e})")]
    OutsideKernelSupport { distance: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("rank-deficient lifting Jacobian (condition {condition:.3e}){}", node_suffix(*node))]
    RankDeficientJacobian { condition: f64, node: Option<usize> },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("point {point:?} lies outside the table domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("cell containing {point:?} has masked corners")]
    MaskedCell { point: Vec<f64> },

    #[error("trajectories do not overlap in time")]
    EmptyOverlap,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

fn node_suffix(node: Option<usize>) -> String {
    match node {
        Some(n) => format!(" at grid node {n}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
