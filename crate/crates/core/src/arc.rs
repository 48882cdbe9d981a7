//! Unconstrained optimal arcs.
//!
//! Where no constraint is active the energy-optimal control is affine in time,
//! so speed is quadratic and position cubic. Four scalar boundary conditions
//! fix the four constants of integration.
//!
//! Coefficients are stored against local time `τ = t - t_start`:
//!
//! ```text
//! u(t) = jerk·τ + c
//! v(t) = ½·jerk·τ² + c·τ + d
//! p(t) = ⅙·jerk·τ³ + ½·c·τ² + d·τ + e
//! ```
//!
//! Local time keeps the 4×4 systems well conditioned late in a simulation;
//! [`PolynomialArc::global_coefficients`] recovers the form in absolute time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::LinearSystem;
use crate::model::VehicleState;

/// Control, speed and position at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcPoint {
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialArc {
    pub t_start: f64,
    pub t_end: f64,
    /// Slope of the control, m/s³.
    pub jerk: f64,
    /// Control at `t_start`, m/s².
    pub c: f64,
    /// Speed at `t_start`, m/s.
    pub d: f64,
    /// Position at `t_start`, m.
    pub e: f64,
}

/// A linear condition `wp·p(t) + wv·v(t) + wu·u(t) = rhs` at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcCondition {
    pub time: f64,
    pub weights: [f64; 3],
    pub rhs: f64,
}

impl ArcCondition {
    pub fn position(time: f64, value: f64) -> Self {
        Self::linear(time, [1.0, 0.0, 0.0], value)
    }

    pub fn speed(time: f64, value: f64) -> Self {
        Self::linear(time, [0.0, 1.0, 0.0], value)
    }

    pub fn control(time: f64, value: f64) -> Self {
        Self::linear(time, [0.0, 0.0, 1.0], value)
    }

    pub fn linear(time: f64, weights: [f64; 3], rhs: f64) -> Self {
        Self { time, weights, rhs }
    }

    /// Row of the condition in the unknowns `(jerk, c, d, e)` of an arc
    /// starting at `t_start`.
    pub fn row(&self, t_start: f64) -> [f64; 4] {
        let tau = self.time - t_start;
        let [wp, wv, wu] = self.weights;
        let p = basis_position(tau);
        let v = basis_speed(tau);
        let u = basis_control(tau);
        std::array::from_fn(|i| wp * p[i] + wv * v[i] + wu * u[i])
    }
}

pub(crate) fn basis_position(tau: f64) -> [f64; 4] {
    [tau * tau * tau / 6.0, tau * tau / 2.0, tau, 1.0]
}

pub(crate) fn basis_speed(tau: f64) -> [f64; 4] {
    [tau * tau / 2.0, tau, 1.0, 0.0]
}

pub(crate) fn basis_control(tau: f64) -> [f64; 4] {
    [tau, 1.0, 0.0, 0.0]
}

impl PolynomialArc {
    /// Solve for the arc on `[t_start, t_end]` meeting four linear conditions.
    pub fn solve(t_start: f64, t_end: f64, conditions: &[ArcCondition]) -> Result<Self> {
        if conditions.len() != 4 {
            return Err(Error::Contract(format!(
                "an arc needs exactly 4 conditions, got {}",
                conditions.len()
            )));
        }
        if !(t_end > t_start) {
            return Err(Error::Singular("zero-length arc"));
        }
        let mut sys = LinearSystem::zeros(4);
        for (i, cond) in conditions.iter().enumerate() {
            sys.set_row_slice(i, 0, &cond.row(t_start));
            sys.set_rhs(i, cond.rhs);
        }
        let x = sys.solve()?;
        Ok(Self::from_local(t_start, t_end, [x[0], x[1], x[2], x[3]]))
    }

    pub(crate) fn from_local(t_start: f64, t_end: f64, coeffs: [f64; 4]) -> Self {
        let [jerk, c, d, e] = coeffs;
        Self {
            t_start,
            t_end,
            jerk,
            c,
            d,
            e,
        }
    }

    /// Constant-speed arc through `(t_start, position)`.
    pub fn cruise(t_start: f64, t_end: f64, position: f64, speed: f64) -> Self {
        Self::from_local(t_start, t_end, [0.0, 0.0, speed, position])
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn coeffs(&self) -> [f64; 4] {
        [self.jerk, self.c, self.d, self.e]
    }

    /// Coefficients `(alpha, c, d, e)` of the same polynomials in absolute time,
    /// i.e. `u(t) = alpha·t + c`.
    pub fn global_coefficients(&self) -> [f64; 4] {
        let s = self.t_start;
        let alpha = self.jerk;
        let c = self.c - alpha * s;
        let d = self.d - self.c * s + 0.5 * alpha * s * s;
        let e = self.e - self.d * s + 0.5 * self.c * s * s - alpha * s * s * s / 6.0;
        [alpha, c, d, e]
    }

    /// Evaluate without range checks; used inside the crate on closed intervals
    /// already known to belong to the arc.
    pub fn at(&self, t: f64) -> ArcPoint {
        let tau = t - self.t_start;
        ArcPoint {
            u: self.jerk * tau + self.c,
            v: (0.5 * self.jerk * tau + self.c) * tau + self.d,
            p: ((self.jerk * tau / 6.0 + 0.5 * self.c) * tau + self.d) * tau + self.e,
        }
    }

    /// Exact polynomial evaluation on `[t_start, t_end]`.
    pub fn eval(&self, t: f64) -> Result<ArcPoint> {
        let slack = 1e-12 * self.t_end.abs().max(1.0);
        if t < self.t_start - slack || t > self.t_end + slack {
            return Err(Error::OutOfSpan {
                t,
                start: self.t_start,
                end: self.t_end,
            });
        }
        Ok(self.at(t))
    }

    pub fn start(&self) -> ArcPoint {
        self.at(self.t_start)
    }

    pub fn end(&self) -> ArcPoint {
        self.at(self.t_end)
    }

    /// `½∫u² dt` over the arc, in closed form.
    pub fn cost(&self) -> f64 {
        let t = self.duration();
        let (a, c) = (self.jerk, self.c);
        0.5 * (a * a * t * t * t / 3.0 + a * c * t * t + c * c * t)
    }

    pub fn with_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }
}

/// Free-function form of [`PolynomialArc::eval`].
pub fn eval_arc(arc: &PolynomialArc, t: f64) -> Result<ArcPoint> {
    arc.eval(t)
}

/// Free-function form of [`PolynomialArc::cost`].
pub fn arc_cost(arc: &PolynomialArc) -> f64 {
    arc.cost()
}

/// What is imposed at the end of an arc besides its position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminalCondition {
    /// Free speed: the speed costate vanishes, so `u(t_f) = 0`.
    FreeSpeed,
    Speed(f64),
    SpeedAndControl {
        speed: f64,
        control: f64,
    },
}

/// Boundary data of a single arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub initial: VehicleState,
    pub final_time: f64,
    pub final_position: Option<f64>,
    pub terminal: TerminalCondition,
}

impl BoundarySpec {
    pub fn free(initial: VehicleState, final_time: f64, final_position: f64) -> Self {
        Self {
            initial,
            final_time,
            final_position: Some(final_position),
            terminal: TerminalCondition::FreeSpeed,
        }
    }

    pub fn pinned(initial: VehicleState, final_time: f64, final_position: f64, final_speed: f64) -> Self {
        Self {
            initial,
            final_time,
            final_position: Some(final_position),
            terminal: TerminalCondition::Speed(final_speed),
        }
    }

    /// The scalar conditions this spec imposes, in a fixed order.
    pub fn conditions(&self) -> Vec<ArcCondition> {
        let (t0, tf) = (self.initial.time, self.final_time);
        let mut out = vec![
            ArcCondition::position(t0, self.initial.position),
            ArcCondition::speed(t0, self.initial.speed),
        ];
        if let Some(p) = self.final_position {
            out.push(ArcCondition::position(tf, p));
        }
        match self.terminal {
            TerminalCondition::FreeSpeed => out.push(ArcCondition::control(tf, 0.0)),
            TerminalCondition::Speed(v) => out.push(ArcCondition::speed(tf, v)),
            TerminalCondition::SpeedAndControl { speed, control } => {
                out.push(ArcCondition::speed(tf, speed));
                out.push(ArcCondition::control(tf, control));
            }
        }
        out
    }

    fn solve(&self) -> Result<PolynomialArc> {
        let conds = self.conditions();
        if conds.len() != 4 {
            return Err(Error::Contract(format!(
                "{} scalar conditions given, 4 required",
                conds.len()
            )));
        }
        PolynomialArc::solve(self.initial.time, self.final_time, &conds)
    }
}

/// Energy-optimal arc with free terminal speed.
pub fn solve_free_arc(bc: &BoundarySpec) -> Result<PolynomialArc> {
    if bc.terminal != TerminalCondition::FreeSpeed {
        return Err(Error::Contract("solve_free_arc needs a free-speed terminal".into()));
    }
    bc.solve()
}

/// Energy-optimal arc with pinned terminal speed (and possibly control).
pub fn solve_pinned_arc(bc: &BoundarySpec) -> Result<PolynomialArc> {
    if bc.terminal == TerminalCondition::FreeSpeed {
        return Err(Error::Contract("solve_pinned_arc needs a pinned terminal speed".into()));
    }
    bc.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start(p: f64, v: f64, t: f64) -> VehicleState {
        VehicleState {
            position: p,
            speed: v,
            time: t,
        }
    }

    #[test]
    fn constant_speed_is_optimal() {
        let arc = solve_free_arc(&BoundarySpec::free(start(0.0, 10.0, 0.0), 30.0, 300.0)).unwrap();
        assert!(arc.jerk.abs() < 1e-12 && arc.c.abs() < 1e-12);
        assert!((arc.d - 10.0).abs() < 1e-12 && arc.e.abs() < 1e-12);
        let pt = eval_arc(&arc, 3.0).unwrap();
        assert!(pt.u.abs() < 1e-12);
        assert!((pt.v - 10.0).abs() < 1e-12);
        assert!((pt.p - 30.0).abs() < 1e-12);
    }

    #[test]
    fn monomial_evaluation() {
        let arc = PolynomialArc::from_local(0.0, 2.0, [6.0, 0.0, 0.0, 0.0]);
        let pt = arc.eval(1.0).unwrap();
        assert_eq!((pt.u, pt.v, pt.p), (6.0, 3.0, 1.0));
    }

    #[test]
    fn eval_outside_arc() {
        let arc = PolynomialArc::cruise(0.0, 2.0, 0.0, 1.0);
        assert!(matches!(arc.eval(2.5), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn cost_of_constant_control() {
        let arc = PolynomialArc::from_local(0.0, 2.0, [0.0, 1.0, 0.0, 0.0]);
        assert!((arc_cost(&arc) - 1.0).abs() < 1e-15);
        assert_eq!(PolynomialArc::cruise(0.0, 5.0, 0.0, 3.0).cost(), 0.0);
    }

    #[test]
    fn pinned_constant_speed() {
        let arc = solve_pinned_arc(&BoundarySpec::pinned(start(0.0, 10.0, 0.0), 10.0, 100.0, 10.0)).unwrap();
        assert!(arc.jerk.abs() < 1e-12 && arc.c.abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval() {
        let err = solve_pinned_arc(&BoundarySpec::pinned(start(0.0, 10.0, 5.0), 5.0, 100.0, 10.0));
        assert!(matches!(err, Err(Error::Singular(_))));
        let err = solve_free_arc(&BoundarySpec::free(start(0.0, 10.0, 5.0), 5.0, 100.0));
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn condition_count_is_checked() {
        let over = BoundarySpec {
            initial: start(0.0, 10.0, 0.0),
            final_time: 10.0,
            final_position: Some(100.0),
            terminal: TerminalCondition::SpeedAndControl {
                speed: 10.0,
                control: 0.0,
            },
        };
        assert!(matches!(solve_pinned_arc(&over), Err(Error::Contract(_))));
        let exact = BoundarySpec {
            final_position: None,
            ..over
        };
        let arc = solve_pinned_arc(&exact).unwrap();
        assert!(arc.cost().abs() < 1e-20);
        let under = BoundarySpec {
            final_position: None,
            terminal: TerminalCondition::Speed(10.0),
            ..over
        };
        assert!(matches!(solve_pinned_arc(&under), Err(Error::Contract(_))));
        assert!(matches!(solve_free_arc(&exact), Err(Error::Contract(_))));
    }

    #[test]
    fn global_coefficients_match_local() {
        let arc = PolynomialArc::from_local(40.0, 55.0, [0.003, -0.2, 13.0, 410.0]);
        let [a, c, d, e] = arc.global_coefficients();
        for t in [40.0, 47.3, 55.0] {
            let pt = arc.at(t);
            assert!((pt.u - (a * t + c)).abs() < 1e-9);
            assert!((pt.v - (0.5 * a * t * t + c * t + d)).abs() < 1e-9);
            assert!((pt.p - (a * t * t * t / 6.0 + 0.5 * c * t * t + d * t + e)).abs() < 1e-7);
        }
    }
}
