use thiserror::Error;

use crate::measure::HomotopyTrace;
use crate::newton::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An index or parameter lies outside the admissible range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("subset enumeration refused for n = {n} (limit {limit})")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Spectra left the Gårding cone at the listed nodes.
    #[error("cone violation at {} node(s), first {:?}", nodes.len(), &nodes[..nodes.len().min(8)])]
    ConeViolation { nodes: Vec<usize> },

    #[error("starshapedness lost (support value <= 0) at {} node(s), first {:?}", nodes.len(), &nodes[..nodes.len().min(8)])]
    NotStarshaped { nodes: Vec<usize> },

    #[error("degenerate geometry at node {node}: {reason}")]
    Geometry { node: usize, reason: String },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("no admissible start: {0}")]
    Start(String),

    #[error("singular Jacobian at pivot {0}")]
    SingularJacobian(usize),

    #[error("Newton iteration did not converge: {reason}")]
    NonConvergence {
        reason: String,
        report: Box<SolveReport>,
    },

    #[error("continuation stalled at t = {t_reached}: {reason}")]
    ContinuationFailure {
        t_reached: f64,
        reason: String,
        trace: Box<HomotopyTrace>,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
