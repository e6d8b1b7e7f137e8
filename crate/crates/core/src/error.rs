use thiserror::Error;

/// Errors raised by the solvers, checkers and configuration layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImcfError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("mean curvature {h:.3e} at node {node} is below the curvature floor")]
    CurvatureFloor { node: usize, h: f64 },

    #[error("Newton iteration did not converge at t = {t}: residual {residual:.3e}")]
    NewtonDiverged { t: f64, residual: f64 },

    #[error("initial datum leaves the cone sandwich at node {node} by {magnitude:.3e}")]
    SandwichViolation { node: usize, magnitude: f64 },

    #[error("initial datum is not strictly mean convex at node {node} (H = {h:.3e})")]
    MeanConvexityViolation { node: usize, h: f64 },

    #[error("H*u is not resolution independent near node {node} (fine/coarse ratio {ratio:.3})")]
    UnboundedCurvature { node: usize, ratio: f64 },

    #[error("slope ODE reached zero at t = {time}")]
    BlowDown { time: f64 },

    #[error("run did not end by flattening")]
    NotFlattened,

    #[error("self-similar series start is invalid: r*u_r - u = {denominator:.3e}")]
    SeriesStartInvalid { denominator: f64 },

    #[error("self-similar profile blew up at r = {r}")]
    BlowUp { r: f64 },

    #[error("flux ratio has not converged: variation {variation:.3e} over the last decade")]
    NotConverged { variation: f64 },

    #[error("linear solver failed to converge: relative residual {residual:.3e}")]
    LinearSolver { residual: f64 },

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{key}` (line {line}): {message}")]
    Config {
        key: String,
        line: usize,
        message: String,
    },

    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl ImcfError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ImcfError::Domain(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ImcfError::CurvatureFloor { .. }
                | ImcfError::NewtonDiverged { .. }
                | ImcfError::BlowDown { .. }
                | ImcfError::BlowUp { .. }
                | ImcfError::NotConverged { .. }
                | ImcfError::LinearSolver { .. }
                | ImcfError::NotFlattened
        )
    }
}

pub type Result<T> = std::result::Result<T, ImcfError>;
