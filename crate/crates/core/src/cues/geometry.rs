use std::f64::consts::TAU;

use super::{AngleSense, CueError, Incision};
use crate::ellipse::EllipseParams;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Segment {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end[0] - self.start[0]).hypot(self.end[1] - self.start[1])
    }

    /// Direction from `start` to `end`, radians.
    pub fn direction(&self) -> f64 {
        (self.end[1] - self.start[1]).atan2(self.end[0] - self.start[0])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1])]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Piece of an ellipse between curve parameters `t_start < t_end`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EllipseArc {
    pub ellipse: EllipseParams,
    pub t_start: f64,
    pub t_end: f64,
}

impl EllipseArc {
    pub fn length(&self) -> f64 {
        self.ellipse.arc_length(self.t_start, self.t_end)
    }

    /// Point at fraction `s ∈ [0, 1]` of the parameter interval.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        self.ellipse.point_at(self.t_start + s * (self.t_end - self.t_start))
    }

    pub fn start_point(&self) -> [f64; 2] {
        self.point_at(0.0)
    }

    pub fn end_point(&self) -> [f64; 2] {
        self.point_at(1.0)
    }
}

/// Rotation reference line: centered on the ellipse, at `theta_deg` from
/// the image horizontal, `1.2·l_major` long.
pub fn rrl(e: &EllipseParams, theta_deg: f64) -> Segment {
    let half = 0.6 * e.l_major;
    let (s, c) = theta_deg.to_radians().sin_cos();
    Segment {
        start: [e.ox - half * c, e.oy - half * s],
        end: [e.ox + half * c, e.oy + half * s],
    }
}

/// Ray from the ellipse center at the RRL direction plus 95° (primary) or
/// 175° (secondary), `0.3·(l_major + l_minor)` long.
pub fn incision_guideline(e: &EllipseParams, rrl: &Segment, which: Incision, sense: AngleSense) -> Segment {
    let dir = rrl.direction() + sense.sign() * which.angle_deg().to_radians();
    let len = 0.3 * (e.l_major + e.l_minor);
    let (s, c) = dir.sin_cos();
    Segment { start: [e.ox, e.oy], end: [e.ox + len * c, e.oy + len * s] }
}

/// Parameter step `dt ≥ 0` with `arc_length(t, t ± dt) = target`.
fn step_for_length(e: &EllipseParams, t: f64, target: f64, forward: bool) -> f64 {
    let len = |dt: f64| if forward { e.arc_length(t, t + dt) } else { e.arc_length(t - dt, t) };
    let (mut lo, mut hi) = (0.0, TAU);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if len(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Arc on the limbus ellipse centered, by arc length, on the guideline's
/// crossing with the ellipse; `arc_len` px in total.
pub fn incision_curve(e: &EllipseParams, guideline: &Segment, arc_len: f64) -> Result<EllipseArc, CueError> {
    if !(guideline.length() > 0.0) {
        return Err(CueError::NoIntersection);
    }
    let perimeter = e.perimeter();
    if !(arc_len > 0.0 && arc_len < perimeter) {
        return Err(CueError::ArcTooLong { len: arc_len, perimeter });
    }
    let tc = e.param_at_direction(guideline.direction());
    let half = 0.5 * arc_len;
    Ok(EllipseArc {
        ellipse: *e,
        t_start: tc - step_for_length(e, tc, half, false),
        t_end: tc + step_for_length(e, tc, half, true),
    })
}

/// Capsulorhexis circle of diameter `(l_major + l_minor)/2`.
pub fn ccr(e: &EllipseParams) -> Circle {
    Circle { center: [e.ox, e.oy], radius: 0.25 * (e.l_major + e.l_minor) }
}
