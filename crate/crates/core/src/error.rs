use thiserror::Error;

/// Errors produced by the allocation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("{name} = {value} is out of range: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A bracketing root finder was given an interval without a sign change.
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// An iterative method hit its iteration cap.
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    /// The requested rate is not below `B log2(1 + Γ)`, so no finite latency exists.
    #[error("target rate {rate} bit/s is not below the supported rate {capacity} bit/s")]
    InfeasibleRate { rate: f64, capacity: f64 },

    /// Structural precondition violated (antenna count vs. population size and the like).
    #[error("{0}")]
    Precondition(String),

    /// Configuration file problem.
    #[error("config error{}: {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            reason,
        }
    }

    /// True for errors that signal an infeasible instance rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::InfeasibleRate { .. })
    }
}
