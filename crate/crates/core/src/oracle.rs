//! Direct transcription of the route problem into a small quadratic program.
//!
//! The control is held constant on `N` equal steps and the double integrator
//! is propagated exactly across each step:
//!
//! ```text
//! v[j+1] = v[j] + h·u[j]
//! p[j+1] = p[j] + h·v[j] + ½h²·u[j]
//! ```
//!
//! Every state is then an affine function of the controls, the objective is
//! `½h·Σu²`, pins are linear equalities and the sampled margin is a set of
//! linear inequalities. With a working set `W` of active margin samples the
//! minimiser is `u = Cᵀ(CCᵀ)⁻¹d`. The working set is grown with violated
//! samples and pruned of negative multipliers until both are empty.
//!
//! Consecutive active samples give almost parallel rows, so runs are stored
//! as first and second differences. The difference of two margin rows is
//! banded, which keeps the Gram matrix well conditioned.

use crate::bvp::RoutePlanProblem;
use crate::error::{Error, Result};
use crate::model::{SafetyParams, ScheduleAssignment};

const MIN_STEPS: usize = 10;
const FEAS_TOL: f64 = 1e-10;

/// The discretised problem: grid, pins and margin samples.
#[derive(Debug, Clone)]
pub struct TranscribedProblem {
    /// Number of control steps `N`.
    pub steps: usize,
    /// Step length `h`, s.
    pub step: f64,
    pub t0: f64,
    p0: f64,
    v0: f64,
    equalities: Vec<Row>,
    /// Leader position at each grid node that is subject to the margin.
    margin_nodes: Vec<(usize, f64)>,
    safety: Option<SafetyParams>,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Grid nodes `t_0 … t_N`.
    pub times: Vec<f64>,
    /// Control held on `[t_j, t_{j+1})`.
    pub controls: Vec<f64>,
    pub speeds: Vec<f64>,
    pub positions: Vec<f64>,
    /// `½h·Σu²`.
    pub cost: f64,
    /// Grid indices of margin samples held at zero.
    pub active: Vec<usize>,
    /// Smallest sampled margin (`+∞` without a leader).
    pub min_margin: f64,
    pub iterations: usize,
}

/// A linear functional of the controls supported on `lo..lo + vals.len()`.
#[derive(Debug, Clone)]
struct Row {
    lo: usize,
    vals: Vec<f64>,
    rhs: f64,
}

impl Row {
    fn dot(&self, other: &Row) -> f64 {
        let lo = self.lo.max(other.lo);
        let hi = (self.lo + self.vals.len()).min(other.lo + other.vals.len());
        (lo..hi)
            .map(|l| self.vals[l - self.lo] * other.vals[l - other.lo])
            .sum()
    }

    fn norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// How a working-set row was formed from the raw margin rows.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Full,
    First,
    Second,
}

impl TranscribedProblem {
    pub fn new(problem: &RoutePlanProblem<'_>, steps: usize) -> Result<Self> {
        if steps < MIN_STEPS {
            return Err(Error::Domain(format!(
                "at least {MIN_STEPS} steps are needed, got {steps}"
            )));
        }
        let s: &ScheduleAssignment = &problem.schedule;
        let horizon = s.terminal_time - s.entry_time;
        if !(horizon > 0.0) {
            return Err(Error::infeasible(s.entry_time, "empty planning horizon"));
        }
        let h = horizon / steps as f64;
        let start = s.entry_state();
        let (t0, p0, v0) = (start.time, start.position, start.speed);

        let mut equalities = Vec::new();
        for w in &s.waypoints {
            let theta_raw = (w.time - t0) / h;
            let m = (theta_raw.floor() as usize).min(steps - 1);
            let theta = w.time - (t0 + m as f64 * h);
            let mut vals: Vec<f64> = (0..m).map(|l| h * h * ((m - l) as f64 - 0.5) + h * theta).collect();
            vals.push(0.5 * theta * theta);
            equalities.push(Row {
                lo: 0,
                vals,
                rhs: w.position - p0 - v0 * (w.time - t0),
            });
            if let Some(speed) = w.speed {
                let mut vals = vec![h; m];
                vals.push(theta);
                equalities.push(Row {
                    lo: 0,
                    vals,
                    rhs: speed - v0,
                });
            }
        }
        equalities.push(Row {
            lo: 0,
            vals: (0..steps).map(|l| h * h * ((steps - l) as f64 - 0.5)).collect(),
            rhs: s.terminal_position - p0 - v0 * horizon,
        });

        let mut margin_nodes = Vec::new();
        let mut safety = None;
        if let Some(ctx) = problem.safety {
            safety = Some(ctx.params);
            for j in 0..=steps {
                let t = t0 + j as f64 * h;
                if t > ctx.leader.exit_time() {
                    break;
                }
                margin_nodes.push((j, ctx.leader.kinematics(t).position));
            }
            if let Some(&(0, pk)) = margin_nodes.first() {
                if ctx.params.margin(pk, p0, v0) < -1e-9 {
                    return Err(Error::infeasible(
                        t0,
                        "the follower enters closer than the safe distance",
                    ));
                }
            }
        }

        Ok(Self {
            steps,
            step: h,
            t0,
            p0,
            v0,
            equalities,
            margin_nodes,
            safety,
        })
    }

    /// Raw margin row `ξp_j + ρv_j ≤ ξp_k − γ`, moved to control space.
    fn margin_rhs(&self, idx: usize) -> f64 {
        let sp = self.safety.expect("margin rows need safety constants");
        let (j, pk) = self.margin_nodes[idx];
        let t = j as f64 * self.step;
        sp.xi * pk - sp.gamma - sp.xi * (self.p0 + self.v0 * t) - sp.rho * self.v0
    }

    fn margin_row(&self, idx: usize, form: Form) -> Row {
        let sp = self.safety.expect("margin rows need safety constants");
        let (j, _) = self.margin_nodes[idx];
        let h = self.step;
        let (xh2, rh) = (sp.xi * h * h, sp.rho * h);
        match form {
            Form::Full => Row {
                lo: 0,
                vals: (0..j).map(|l| xh2 * ((j - l) as f64 - 0.5) + rh).collect(),
                rhs: self.margin_rhs(idx),
            },
            Form::First => {
                let mut vals = vec![xh2; j - 1];
                vals.push(0.5 * xh2 + rh);
                Row {
                    lo: 0,
                    vals,
                    rhs: self.margin_rhs(idx) - self.margin_rhs(idx - 1),
                }
            }
            Form::Second => Row {
                lo: j - 2,
                vals: vec![0.5 * xh2 - rh, 0.5 * xh2 + rh],
                rhs: self.margin_rhs(idx) - 2.0 * self.margin_rhs(idx - 1) + self.margin_rhs(idx - 2),
            },
        }
    }

    /// Minimiser for a fixed working set, with the multipliers of its margin rows.
    fn solve_working(&self, working: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rows = self.equalities.clone();
        let mut forms = Vec::with_capacity(working.len());
        for (k, &idx) in working.iter().enumerate() {
            let consecutive =
                |back: usize| k >= back && working[k - back] + back == idx && self.margin_nodes[idx].0 >= back;
            let form = if consecutive(2) && consecutive(1) {
                Form::Second
            } else if consecutive(1) {
                Form::First
            } else {
                Form::Full
            };
            forms.push(form);
            rows.push(self.margin_row(idx, form));
        }
        let n = rows.len();
        let scale: Vec<f64> = rows.iter().map(|r| 1.0 / r.norm().max(1e-300)).collect();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let g = rows[i].dot(&rows[j]) * scale[i] * scale[j];
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let rhs: Vec<f64> = rows.iter().zip(&scale).map(|(r, s)| r.rhs * s).collect();
        let y_scaled = cholesky_solve(&mut gram, n, rhs)?;
        let y: Vec<f64> = y_scaled.iter().zip(&scale).map(|(y, s)| y * s).collect();

        let mut u = vec![0.0; self.steps];
        for (row, yi) in rows.iter().zip(&y) {
            for (k, v) in row.vals.iter().enumerate() {
                u[row.lo + k] += yi * v;
            }
        }

        // Multipliers of the transformed rows, mapped back through the
        // difference transform: λ = Tᵀλ'.
        let e = self.equalities.len();
        let transformed: Vec<f64> = y[e..].iter().map(|yi| -self.step * yi).collect();
        let mut lambda = vec![0.0; working.len()];
        for (k, form) in forms.iter().enumerate() {
            let l = transformed[k];
            lambda[k] += l;
            match form {
                Form::Full => {}
                Form::First => lambda[k - 1] -= l,
                Form::Second => {
                    lambda[k - 1] -= 2.0 * l;
                    lambda[k - 2] += l;
                }
            }
        }
        Ok((u, lambda))
    }

    fn simulate(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.step;
        let mut p = Vec::with_capacity(self.steps + 1);
        let mut v = Vec::with_capacity(self.steps + 1);
        let (mut pj, mut vj) = (self.p0, self.v0);
        p.push(pj);
        v.push(vj);
        for &uj in u {
            pj += h * vj + 0.5 * h * h * uj;
            vj += h * uj;
            p.push(pj);
            v.push(vj);
        }
        (p, v)
    }

    fn margins(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        let Some(sp) = self.safety else {
            return Vec::new();
        };
        self.margin_nodes
            .iter()
            .map(|&(j, pk)| sp.margin(pk, p[j], v[j]))
            .collect()
    }

    /// Solve from an empty working set.
    pub fn solve(&self) -> Result<OracleSolution> {
        self.solve_from(&[])
    }

    /// Solve starting from the given grid indices as the working set.
    pub fn solve_from(&self, initial: &[usize]) -> Result<OracleSolution> {
        let mut working: Vec<usize> = self
            .margin_nodes
            .iter()
            .enumerate()
            .filter(|(_, (j, _))| *j > 0 && initial.contains(j))
            .map(|(i, _)| i)
            .collect();
        let mut visited = std::collections::HashSet::new();
        let mut single_drops = false;
        for iteration in 1..=self.steps.max(MIN_STEPS) {
            let (u, lambda) = match self.solve_working(&working) {
                Ok(sol) => sol,
                Err(Error::Singular(_)) if !working.is_empty() => {
                    return Err(Error::infeasible(
                        self.t0,
                        "active margin samples conflict with the pins",
                    ));
                }
                Err(Error::Singular(_)) => {
                    return Err(Error::infeasible(self.t0, "pins are inconsistent on this grid"));
                }
                Err(e) => return Err(e),
            };
            let (p, v) = self.simulate(&u);
            let margins = self.margins(&p, &v);

            // The deepest sample of every violated run enters the working set.
            let mut violated = Vec::new();
            let mut run: Option<(usize, f64)> = None;
            for (i, &m) in margins.iter().enumerate() {
                let eligible = m < -FEAS_TOL && self.margin_nodes[i].0 > 0 && !working.contains(&i);
                if eligible {
                    if run.is_none_or(|(_, best)| m < best) {
                        run = Some((i, m));
                    }
                } else if let Some((k, _)) = run.take() {
                    violated.push(k);
                }
            }
            violated.extend(run.map(|(k, _)| k));
            if !violated.is_empty() {
                working.extend(violated);
                working.sort_unstable();
                continue;
            }
            let negative: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] < -1e-12).collect();
            if !negative.is_empty() {
                if !visited.insert(working.clone()) {
                    single_drops = true;
                }
                if single_drops {
                    let k = negative
                        .iter()
                        .copied()
                        .min_by(|a, b| lambda[*a].total_cmp(&lambda[*b]))
                        .expect("non-empty");
                    working.remove(k);
                } else {
                    let mut k = 0;
                    working.retain(|_| {
                        k += 1;
                        lambda[k - 1] >= -1e-12
                    });
                }
                continue;
            }

            let h = self.step;
            return Ok(OracleSolution {
                times: (0..=self.steps).map(|j| self.t0 + j as f64 * h).collect(),
                cost: 0.5 * h * u.iter().map(|x| x * x).sum::<f64>(),
                controls: u,
                speeds: v,
                positions: p,
                active: working.iter().map(|&i| self.margin_nodes[i].0).collect(),
                min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
                iterations: iteration,
            });
        }
        Err(Error::NotConverged(self.steps.max(MIN_STEPS)))
    }
}

/// In-place Cholesky factorisation and solve of a dense SPD system.
fn cholesky_solve(a: &mut [f64], n: usize, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 1e-13 * max_diag) {
            return Err(Error::Singular("transcribed constraints are linearly dependent"));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(b)
}

/// Transcribe `problem` on `steps` control steps and solve it.
pub fn solve_transcribed(problem: &RoutePlanProblem<'_>, steps: usize) -> Result<OracleSolution> {
    TranscribedProblem::new(problem, steps)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LeaderProfile, Waypoint};

    #[test]
    fn cruise_needs_no_control() {
        let s = ScheduleAssignment::direct(0.0, 10.0, 30.0, 300.0);
        let sol = solve_transcribed(&RoutePlanProblem::new(s), 200).unwrap();
        assert!(sol.cost.abs() < 1e-20);
        assert!(sol.controls.iter().all(|u| u.abs() < 1e-10));
    }

    #[test]
    fn too_few_steps() {
        let s = ScheduleAssignment::direct(0.0, 10.0, 30.0, 300.0);
        assert!(matches!(
            solve_transcribed(&RoutePlanProblem::new(s), 9),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn exact_propagation_meets_pins() {
        let s = ScheduleAssignment::direct(0.0, 12.0, 26.0, 300.0)
            .with_waypoints(vec![Waypoint::with_speed(15.03, 150.0, 11.0)]);
        let prob = RoutePlanProblem::new(s);
        let sol = solve_transcribed(&prob, 100).unwrap();
        assert!((sol.positions[100] - 300.0).abs() < 1e-8);
        // Propagate inside the cell holding the off-grid waypoint.
        let h = sol.times[1];
        let m = (15.03 / h).floor() as usize;
        let th = 15.03 - sol.times[m];
        let u = sol.controls[m];
        let p = sol.positions[m] + sol.speeds[m] * th + 0.5 * u * th * th;
        assert!((p - 150.0).abs() < 1e-8);
        assert!((sol.speeds[m] + u * th - 11.0).abs() < 1e-9);
    }

    #[test]
    fn active_set_holds_the_margin() {
        let leader = LeaderProfile::from_accelerations(0.0, 20.0, 11.5, &[(24.0, 0.02)], 24.0);
        let s = ScheduleAssignment::direct(0.0, 14.0, 26.0, 300.0);
        let params = SafetyParams {
            xi: 1.0,
            gamma: 1.3,
            rho: 1.2,
        };
        let prob = RoutePlanProblem::new(s).with_leader(&leader, params);
        let sol = solve_transcribed(&prob, 400).unwrap();
        assert!(!sol.active.is_empty());
        assert!(sol.min_margin > -1e-8);
        let warm = TranscribedProblem::new(&prob, 400)
            .unwrap()
            .solve_from(&[10, 50, 100, 200])
            .unwrap();
        assert!((warm.cost - sol.cost).abs() < 1e-8 * sol.cost);
    }

    #[test]
    fn entering_unsafe_is_infeasible() {
        let leader = LeaderProfile::constant_speed(0.0, 5.0, 10.0, 30.0);
        let s = ScheduleAssignment::direct(0.0, 14.0, 26.0, 300.0);
        let prob = RoutePlanProblem::new(s).with_leader(&leader, SafetyParams::default());
        assert!(matches!(solve_transcribed(&prob, 100), Err(Error::Infeasible { .. })));
    }
}
