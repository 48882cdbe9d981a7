use crate::arc::{ArcPoint, PolynomialArc};
use crate::constraint::ConstrainedSegment;
use crate::error::{Error, Result};
use crate::model::{Kinematics, LeaderMotion, VehicleParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Free(PolynomialArc),
    Constrained(ConstrainedSegment),
}

impl Segment {
    pub fn t_start(&self) -> f64 {
        match self {
            Segment::Free(a) => a.t_start,
            Segment::Constrained(c) => c.t_start(),
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            Segment::Free(a) => a.t_end,
            Segment::Constrained(c) => c.t_end(),
        }
    }

    pub fn at(&self, t: f64) -> ArcPoint {
        match self {
            Segment::Free(a) => a.at(t),
            Segment::Constrained(c) => c.at(t),
        }
    }

    pub fn cost(&self) -> f64 {
        match self {
            Segment::Free(a) => a.cost(),
            Segment::Constrained(c) => c.cost(),
        }
    }

    pub fn is_constrained(&self) -> bool {
        matches!(self, Segment::Constrained(_))
    }
}

/// The planned motion of one vehicle from entry to exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    /// `½∫u² dt` over the whole trajectory.
    pub cost: f64,
}

/// A speed or control bound crossed by a planned trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub time: f64,
    pub quantity: BoundQuantity,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundQuantity {
    Speed,
    Control,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>) -> Self {
        debug_assert!(!segments.is_empty());
        let cost = segments.iter().map(Segment::cost).sum();
        Self { segments, cost }
    }

    pub fn from_arcs(arcs: Vec<PolynomialArc>) -> Self {
        Self::new(arcs.into_iter().map(Segment::Free).collect())
    }

    pub fn start_time(&self) -> f64 {
        self.segments[0].t_start()
    }

    pub fn end_time(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end()
    }

    fn index_at(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.t_start() <= t).saturating_sub(1)
    }

    /// Segment containing `t`; at a junction the later segment wins.
    pub fn segment_at(&self, t: f64) -> &Segment {
        &self.segments[self.index_at(t)]
    }

    /// State at `t`. Outside the span the first or last segment is extended.
    pub fn at(&self, t: f64) -> ArcPoint {
        self.segment_at(t).at(t)
    }

    pub fn eval(&self, t: f64) -> Result<ArcPoint> {
        let (start, end) = (self.start_time(), self.end_time());
        let slack = 1e-12 * end.abs().max(1.0);
        if t < start - slack || t > end + slack {
            return Err(Error::OutOfSpan { t, start, end });
        }
        Ok(self.at(t.clamp(start, end)))
    }

    /// Interior junction times between consecutive segments.
    pub fn junctions(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(Segment::t_start).collect()
    }

    pub fn constrained_segments(&self) -> impl Iterator<Item = &ConstrainedSegment> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Constrained(c) => Some(c),
            Segment::Free(_) => None,
        })
    }

    pub fn free_arcs(&self) -> impl Iterator<Item = &PolynomialArc> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Free(a) => Some(a),
            Segment::Constrained(_) => None,
        })
    }

    pub fn has_constrained_segment(&self) -> bool {
        self.segments.iter().any(Segment::is_constrained)
    }

    /// Largest jump in `(position, speed, control)` across any junction.
    pub fn junction_jumps(&self) -> [f64; 3] {
        let mut out = [0.0_f64; 3];
        for pair in self.segments.windows(2) {
            let t = pair[1].t_start();
            let (l, r) = (pair[0].at(t), pair[1].at(t));
            out[0] = out[0].max((l.p - r.p).abs());
            out[1] = out[1].max((l.v - r.v).abs());
            out[2] = out[2].max((l.u - r.u).abs());
        }
        out
    }

    /// Left and right limits at a junction time.
    pub fn limits_at(&self, t: f64) -> (ArcPoint, ArcPoint) {
        let idx = self.index_at(t);
        let right = self.segments[idx].at(t);
        let left = if idx > 0 && (self.segments[idx].t_start() - t).abs() < 1e-12 {
            self.segments[idx - 1].at(t)
        } else {
            right
        };
        (left, right)
    }

    /// Samples where the trajectory leaves the speed or control bounds.
    pub fn bound_violations(&self, params: &VehicleParams, step: f64) -> Vec<BoundViolation> {
        let mut out = Vec::new();
        let (start, end) = (self.start_time(), self.end_time());
        let n = ((end - start) / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = (start + i as f64 * step).min(end);
            let pt = self.at(t);
            let checks = [
                (BoundQuantity::Speed, pt.v, params.v_min, params.v_max),
                (BoundQuantity::Control, pt.u, params.u_min, params.u_max),
            ];
            for (quantity, value, lo, hi) in checks {
                let limit = if value < lo - 1e-9 {
                    lo
                } else if value > hi + 1e-9 {
                    hi
                } else {
                    continue;
                };
                out.push(BoundViolation {
                    time: t,
                    quantity,
                    value,
                    limit,
                });
            }
        }
        out
    }
}

impl LeaderMotion for Trajectory {
    fn start_time(&self) -> f64 {
        Trajectory::start_time(self)
    }

    fn exit_time(&self) -> f64 {
        self.end_time()
    }

    fn kinematics(&self, t: f64) -> Kinematics {
        let pt = self.at(t);
        Kinematics {
            position: pt.p,
            speed: pt.v,
            accel: pt.u,
        }
    }

    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.junctions().into_iter().filter(|&t| t > from && t < to).collect();
        for c in self.constrained_segments() {
            out.extend(c.breakpoints().iter().copied().filter(|&t| t > from && t < to));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}
