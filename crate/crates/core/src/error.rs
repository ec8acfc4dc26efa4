//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph analysis, gain synthesis, simulation and
/// scenario handling.
#[derive(Debug, Error)]
pub enum Error {
    /// The communication graph fails the connectivity requirement
    /// (leader reachable from node 0 along information-flow edges and
    /// undirected follower subgraph), or `H` is not positive definite.
    #[error("graph is not connected: {0}")]
    NotConnected(String),

    /// A digraph violates a structural invariant (self-loop, negative
    /// weight, in-edge into the leader, dimension mismatch).
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Gain synthesis did not converge or a certificate failed.
    #[error("synthesis failure: {0}")]
    SynthesisFailure(String),

    /// A requested pole set is unusable (non-negative real part).
    #[error("invalid poles: {0}")]
    InvalidPoles(String),

    /// A model or controller parameter is out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A controller step was invoked without a packet from a declared
    /// in-neighbor.
    #[error("missing neighbor data: agent {agent} expected a packet from node {sender}")]
    MissingNeighborData { agent: usize, sender: usize },

    /// The leader input exceeded its declared bound while `bound_check`
    /// was enabled.
    #[error("leader input bound violated at t={t}: |v|={v} > l={bound}")]
    BoundViolation { v: f64, bound: f64, t: f64 },

    /// A simulated state left the sane numeric range.
    #[error("numeric blowup at t={t}: max |state| = {max_abs}")]
    NumericBlowup { t: f64, max_abs: f64 },

    /// The requested analysis does not apply to this trace (e.g. an
    /// observer fit on a run without observer states).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A scenario document could not be parsed.
    #[error("scenario parse error: {0}")]
    Parse(String),

    /// A scenario violates a load-time assumption; names the assumption.
    #[error("scenario validation failed [{assumption}]: {detail}")]
    Validation { assumption: String, detail: String },

    /// Vector/matrix dimensions disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
