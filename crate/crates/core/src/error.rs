use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A time query outside the span on which a motion is defined.
    #[error("time {t} s is outside [{start}, {end}] s")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    /// The linear system fixing the constants of integration is singular.
    #[error("singular linear system ({0})")]
    Singular(&'static str),

    /// Boundary conditions are over- or under-determined for the requested solve.
    #[error("invalid boundary conditions: {0}")]
    Contract(String),

    /// No admissible trajectory exists for the given schedule.
    #[error("infeasible at t = {time:.4} s: {reason}")]
    Infeasible { time: f64, reason: String },

    #[error("active set did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("scenario has {} violation(s): {}", .0.len(), join_violations(.0))]
    InvalidScenario(Vec<Violation>),

    #[error("cannot parse scenario: {0}")]
    Parse(String),

    #[error("reports belong to different scenarios ({left:?} vs {right:?})")]
    ScenarioMismatch { left: String, right: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn infeasible(time: f64, reason: impl Into<String>) -> Self {
        Error::Infeasible {
            time,
            reason: reason.into(),
        }
    }
}
