//! Rotated-ellipse obstacles.
//!
//! Each obstacle is described by its center, semi-axes and the rotation of the
//! `x_a` axis from the global x-axis. In the ellipse frame the normalized
//! quadratic is
//!
//! ```text
//! q(x, y) = ((dx cos a + dy sin a) / x_a)^2 + ((-dx sin a + dy cos a) / y_a)^2
//! ```
//!
//! and the smooth optimal-control constraint is
//! `g_o = -ln(q + eps) + ln(1 + eps) <= 0`.

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{PlanError, Result};
use crate::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseObstacle {
    pub x_c: f64,
    pub y_c: f64,
    pub x_a: f64,
    pub y_a: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl EllipseObstacle {
    pub fn new(x_c: f64, y_c: f64, x_a: f64, y_a: f64, alpha: f64) -> Result<Self> {
        let e = Self {
            x_c,
            y_c,
            x_a,
            y_a,
            alpha,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_a > 0.0 && self.y_a > 0.0) {
            return Err(PlanError::InvalidParams(format!(
                "ellipse semi-axes must be positive, got ({}, {})",
                self.x_a, self.y_a
            )));
        }
        if ![self.x_c, self.y_c, self.x_a, self.y_a, self.alpha]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(PlanError::InvalidParams("ellipse has non-finite fields".into()));
        }
        Ok(())
    }

    /// Same ellipse with both semi-axes grown by `margin`.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            x_a: self.x_a + margin,
            y_a: self.y_a + margin,
            ..*self
        }
    }

    /// Point mapped into the frame where the ellipse is the unit circle.
    pub fn to_unit_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.alpha.sin_cos();
        let (dx, dy) = (x - self.x_c, y - self.y_c);
        ((dx * c + dy * s) / self.x_a, (-dx * s + dy * c) / self.y_a)
    }

    pub(crate) fn quadratic_generic<T: Scalar>(&self, x: T, y: T) -> T {
        let (s, c) = self.alpha.sin_cos();
        let dx = x - self.x_c;
        let dy = y - self.y_c;
        let a = (dx * c + dy * s) / self.x_a;
        let b = (dx * (-s) + dy * c) / self.y_a;
        a * a + b * b
    }

    /// Normalized quadratic `q(x, y)`; `q < 1` strictly inside.
    pub fn quadratic(&self, x: f64, y: f64) -> f64 {
        self.quadratic_generic(x, y)
    }

    pub(crate) fn constraint_generic<T: Scalar>(&self, eps: f64, x: T, y: T) -> T {
        -(self.quadratic_generic(x, y) + eps).ln() + (1.0 + eps).ln()
    }
}

/// Smooth obstacle constraint value; negative outside, zero on the boundary,
/// positive inside.
pub fn g_o(obs: &EllipseObstacle, eps: f64, x: f64, y: f64) -> f64 {
    obs.constraint_generic(eps, x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    #[serde(default, rename = "ellipse")]
    pub obstacles: Vec<EllipseObstacle>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Semi-axis margin applied by the discrete planning stages only.
    #[serde(default)]
    pub inflation: f64,
}

fn default_epsilon() -> f64 {
    1e-6
}

impl Default for ObstacleSet {
    fn default() -> Self {
        Self {
            obstacles: Vec::new(),
            epsilon: default_epsilon(),
            inflation: 0.0,
        }
    }
}

impl ObstacleSet {
    pub fn new(obstacles: Vec<EllipseObstacle>, epsilon: f64, inflation: f64) -> Result<Self> {
        let set = Self {
            obstacles,
            epsilon,
            inflation,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(PlanError::InvalidParams("obstacle epsilon must be positive".into()));
        }
        if !(self.inflation >= 0.0) {
            return Err(PlanError::InvalidParams(
                "obstacle inflation must be nonnegative".into(),
            ));
        }
        self.obstacles.iter().try_for_each(|o| o.validate())
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    fn effective(&self, obs: &EllipseObstacle, use_inflation: bool) -> EllipseObstacle {
        if use_inflation && self.inflation > 0.0 {
            obs.inflated(self.inflation)
        } else {
            *obs
        }
    }

    pub fn point_in_collision(&self, x: f64, y: f64, use_inflation: bool) -> bool {
        self.obstacles
            .iter()
            .any(|o| self.effective(o, use_inflation).quadratic(x, y) < 1.0)
    }

    /// True iff the closed segment meets the open interior of any ellipse.
    pub fn segment_in_collision(&self, p1: Point2, p2: Point2, use_inflation: bool) -> bool {
        self.obstacles
            .iter()
            .any(|o| segment_hits_ellipse(&self.effective(o, use_inflation), p1, p2))
    }

    /// Largest `g_o` over all obstacles (uninflated).
    pub fn max_constraint(&self, x: f64, y: f64) -> f64 {
        self.obstacles
            .iter()
            .map(|o| g_o(o, self.epsilon, x, y))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Segment/ellipse test in the unit-circle frame: `|A + t (B - A)|^2 < 1` for
/// some `t` in `[0, 1]`.
fn segment_hits_ellipse(e: &EllipseObstacle, p1: Point2, p2: Point2) -> bool {
    let (ax, ay) = e.to_unit_frame(p1.x, p1.y);
    let (bx, by) = e.to_unit_frame(p2.x, p2.y);
    let (dx, dy) = (bx - ax, by - ay);
    let a = dx * dx + dy * dy;
    let b = 2.0 * (ax * dx + ay * dy);
    let c = ax * ax + ay * ay - 1.0;
    if c < 0.0 || (bx * bx + by * by) < 1.0 {
        return true;
    }
    if a == 0.0 {
        return false;
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return false;
    }
    let sq = disc.sqrt();
    let t1 = (-b - sq) / (2.0 * a);
    let t2 = (-b + sq) / (2.0 * a);
    t1 < 1.0 && t2 > 0.0
}
