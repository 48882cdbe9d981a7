//! Energy-optimal longitudinal control of connected automated vehicles along a
//! corridor of conflict zones, with rear-end safety against a leader.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod linalg;
mod roots;

pub mod arc;
pub mod bvp;
pub mod constraint;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod sim;
pub mod trajectory;

pub use arc::{ArcCondition, ArcPoint, BoundarySpec, PolynomialArc, TerminalCondition};
pub use bvp::{solve_interior_bvp, solve_route, RoutePlanProblem, SafetyContext};
pub use constraint::{ConstrainedSegment, GapMargin, Window};
pub use error::{Error, Result};
pub use metrics::{compare_runs, fuel_rate, total_fuel, FuelCoefficients, RunReport};
pub use model::*;
pub use scenario::{validate_scenario, ScenarioSpec, SimMode};
pub use trajectory::{Segment, Trajectory};
