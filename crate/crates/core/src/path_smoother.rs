//! Waypoint reduction and straight/arc path construction.
//!
//! The grid path is first reduced to the fewest waypoints reachable by
//! line-of-sight jumps (searching backwards from the goal for the earliest
//! visible waypoint). Interior corners are then replaced by circle arcs
//! tangent to both adjacent legs, giving a path with continuous position and
//! tangent angle, parametrized by arc length.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{PlanError, Result};
use crate::obstacle_map::ObstacleSet;
use crate::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub waypoints: Vec<Point2>,
}

/// Reduce a collision-free polyline to a minimal set of waypoints.
///
/// Starting at the last point, jump to the lowest-index point with a
/// collision-free connecting segment until the first point is reached. The
/// result is returned ordered start to goal.
pub fn reduce_waypoints(raw: &[Point2], set: &ObstacleSet) -> WaypointPath {
    let mut pts: Vec<Point2> = Vec::with_capacity(raw.len());
    for &p in raw {
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    if pts.len() <= 2 {
        return WaypointPath { waypoints: pts };
    }
    let mut i = pts.len() - 1;
    let mut reduced = vec![pts[i]];
    while i > 0 {
        let j = (0..i)
            .find(|&j| !set.segment_in_collision(pts[i], pts[j], true))
            .unwrap_or(i - 1);
        reduced.push(pts[j]);
        i = j;
    }
    reduced.reverse();
    WaypointPath { waypoints: reduced }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathElement {
    Straight {
        start: Point2,
        end: Point2,
        heading: f64,
    },
    Arc {
        center: Point2,
        radius: f64,
        /// Polar angle of the entry point about the center.
        start_angle: f64,
        /// Signed swept angle; positive turns toward increasing heading.
        sweep: f64,
        /// Unwrapped tangent angle at entry.
        heading_in: f64,
    },
}

impl PathElement {
    pub fn length(&self) -> f64 {
        match *self {
            PathElement::Straight { start, end, .. } => (end - start).norm(),
            PathElement::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position, tangent angle and curvature at arc length `l` into the element.
    fn eval(&self, l: f64) -> (Point2, f64, f64) {
        match *self {
            PathElement::Straight { start, end, heading } => {
                let len = (end - start).norm();
                let p = if len > 0.0 {
                    start + (end - start) * (l / len)
                } else {
                    start
                };
                (p, heading, 0.0)
            }
            PathElement::Arc {
                center,
                radius,
                start_angle,
                sweep,
                heading_in,
            } => {
                let sign = sweep.signum();
                let theta = start_angle + sign * l / radius;
                let p = center + nalgebra::Vector2::new(theta.cos(), theta.sin()) * radius;
                (p, heading_in + sign * l / radius, sign / radius)
            }
        }
    }
}

/// Sample of the geometric path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub position: Point2,
    /// Unwrapped tangent angle.
    pub gamma: f64,
    pub turn_rate: f64,
}

#[derive(Debug, Clone)]
pub struct GeomPath {
    pub elements: Vec<PathElement>,
    offsets: Vec<f64>,
    pub total_length: f64,
}

impl GeomPath {
    fn from_elements(elements: Vec<PathElement>) -> Self {
        let mut offsets = Vec::with_capacity(elements.len());
        let mut acc = 0.0;
        for e in &elements {
            offsets.push(acc);
            acc += e.length();
        }
        Self {
            elements,
            offsets,
            total_length: acc,
        }
    }

    /// Arc length at which each element starts.
    pub fn element_offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn min_radius(&self) -> Option<f64> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                PathElement::Arc { radius, .. } => Some(*radius),
                _ => None,
            })
            .reduce(f64::min)
    }

    /// Index of the element containing `s` (right-continuous at joints).
    pub fn element_at(&self, s: f64) -> usize {
        match self.offsets.partition_point(|&o| o <= s) {
            0 => 0,
            k => (k - 1).min(self.elements.len() - 1),
        }
    }

    /// Evaluate inside a given element, `s` being the global arc length.
    pub fn eval_in_element(&self, index: usize, s: f64, u_nom: f64) -> PathSample {
        let l = (s - self.offsets[index]).clamp(0.0, self.elements[index].length());
        let (position, gamma, curvature) = self.elements[index].eval(l);
        PathSample {
            position,
            gamma,
            turn_rate: curvature * u_nom,
        }
    }

    /// `p_g(s)`, `gamma_g(s)` and `r_g(s)` for a surge speed `u_nom`.
    pub fn eval(&self, s: f64, u_nom: f64) -> Result<PathSample> {
        let tol = 1e-9 * self.total_length.max(1.0);
        if !(s >= -tol && s <= self.total_length + tol) {
            return Err(PlanError::OutOfRange {
                s,
                length: self.total_length,
            });
        }
        let s = s.clamp(0.0, self.total_length);
        Ok(self.eval_in_element(self.element_at(s), s, u_nom))
    }

    /// `s,x,y,gamma,r` rows at `samples` uniformly spaced arc lengths.
    pub fn write_csv<W: Write>(&self, mut w: W, u_nom: f64, samples: usize) -> std::io::Result<()> {
        writeln!(w, "s,x,y,gamma,r")?;
        let n = samples.max(2);
        for k in 0..n {
            let s = self.total_length * k as f64 / (n - 1) as f64;
            let p = self.eval_in_element(self.element_at(s), s, u_nom);
            writeln!(w, "{},{},{},{},{}", s, p.position.x, p.position.y, p.gamma, p.turn_rate)?;
        }
        Ok(())
    }
}

fn wrap_pi(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Turning radius and tangent-point offset for a course change.
pub fn corner_geometry(course_change: f64, r_acc: f64, r_min: f64) -> (f64, f64) {
    let half = 0.5 * course_change.abs();
    let t = half.tan();
    let radius = r_min.max(r_acc / t);
    (radius, radius * t)
}

/// Join waypoints with straights and tangent circle arcs.
pub fn connect_waypoints(wp: &WaypointPath, r_acc: f64, r_min: f64) -> Result<GeomPath> {
    if !(r_acc > 0.0) || !(r_min > 0.0) {
        return Err(PlanError::InvalidParams("r_acc and r_turn_min must be positive".into()));
    }
    let pts = &wp.waypoints;
    if pts.len() < 2 {
        return Err(PlanError::InvalidParams("need at least two waypoints".into()));
    }
    let legs: Vec<_> = pts.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(k) = legs.iter().position(|d| !(d.norm() > 0.0)) {
        return Err(PlanError::InvalidParams(format!("zero-length leg after waypoint {k}")));
    }
    let lens: Vec<f64> = legs.iter().map(|d| d.norm()).collect();
    let dirs: Vec<_> = legs.iter().zip(&lens).map(|(d, l)| d / *l).collect();

    // per-corner (signed course change, radius, offset)
    let mut corners = Vec::with_capacity(pts.len());
    for k in 1..pts.len() - 1 {
        let (a, b) = (dirs[k - 1], dirs[k]);
        let dgamma = wrap_pi(b.y.atan2(b.x) - a.y.atan2(a.x));
        if dgamma.abs() < 1e-12 {
            corners.push(None);
            continue;
        }
        let (radius, offset) = corner_geometry(dgamma, r_acc, r_min);
        let limit = 0.5 * lens[k - 1].min(lens[k]);
        if !(offset <= limit) {
            return Err(PlanError::InfeasibleCorner {
                index: k,
                offset,
                limit,
            });
        }
        corners.push(Some((dgamma, radius, offset)));
    }

    let mut elements = Vec::new();
    let mut heading = dirs[0].y.atan2(dirs[0].x);
    let mut cursor = pts[0];
    for k in 1..pts.len() {
        let dir = dirs[k - 1];
        let corner = if k < pts.len() - 1 { corners[k - 1] } else { None };
        let straight_end = match corner {
            Some((_, _, offset)) => pts[k] - dir * offset,
            None => pts[k],
        };
        if (straight_end - cursor).norm() > 0.0 {
            elements.push(PathElement::Straight {
                start: cursor,
                end: straight_end,
                heading,
            });
        }
        cursor = straight_end;
        if let Some((dgamma, radius, offset)) = corner {
            let sign = dgamma.signum();
            let left = nalgebra::Vector2::new(-dir.y, dir.x);
            let center = straight_end + left * (sign * radius);
            let rel = straight_end - center;
            elements.push(PathElement::Arc {
                center,
                radius,
                start_angle: rel.y.atan2(rel.x),
                sweep: dgamma,
                heading_in: heading,
            });
            heading += dgamma;
            cursor = pts[k] + dirs[k] * offset;
        }
    }
    Ok(GeomPath::from_elements(elements))
}
