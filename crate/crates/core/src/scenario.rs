//! TOML scenario files.
//!
//! ```toml
//! t_max = 500.0
//! n_ocp = 200
//! x_s = 0.0
//! y_s = 0.0
//! u_r_s = 3.0
//! x_f = 1500.0
//! y_f = 200.0
//!
//! [map]
//! x_min = -100.0
//! x_max = 1700.0
//! y_min = -400.0
//! y_max = 600.0
//!
//! [[obstacles.ellipse]]
//! x_c = 700.0
//! y_c = 100.0
//! x_a = 200.0
//! y_a = 120.0
//! alpha = 0.3
//! ```
//!
//! `weights`, `vessel` and `solver` tables are optional and default to the
//! built-in values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::astar::MapBounds;
use crate::error::{PlanError, Result};
use crate::nlp_solver::SolverConfig;
use crate::obstacle_map::ObstacleSet;
use crate::ocp_transcription::BoundaryConditions;
use crate::vessel_model::{CostWeights, VesselParams};
use crate::Point2;

fn default_delta_d() -> f64 {
    50.0
}
fn default_n_ocp() -> usize {
    1000
}
fn default_k_ocp() -> usize {
    1
}
fn default_r_acc() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub map: MapBounds,
    #[serde(default)]
    pub obstacles: ObstacleSet,
    pub x_s: f64,
    pub y_s: f64,
    /// Initial surge speed.
    pub u_r_s: f64,
    pub x_f: f64,
    pub y_f: f64,
    /// Grid spacing.
    #[serde(default = "default_delta_d")]
    pub delta_d: f64,
    pub t_max: f64,
    #[serde(default = "default_n_ocp")]
    pub n_ocp: usize,
    #[serde(default = "default_k_ocp")]
    pub k_ocp: usize,
    #[serde(default = "default_r_acc")]
    pub r_acc: f64,
    /// Overrides the vessel's minimum turning radius when set.
    #[serde(default)]
    pub r_turn_min: Option<f64>,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub vessel: VesselParams,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Optional corridor used to classify routes in reports.
    #[serde(default)]
    pub passage: Option<MapBounds>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| PlanError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PlanError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            PlanError::Config(msg) => PlanError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PlanError::Config(e.to_string()))
    }

    pub fn start(&self) -> Point2 {
        Point2::new(self.x_s, self.y_s)
    }

    pub fn goal(&self) -> Point2 {
        Point2::new(self.x_f, self.y_f)
    }

    pub fn params(&self) -> VesselParams {
        let mut p = self.vessel.clone();
        if let Some(r) = self.r_turn_min {
            p.min_turn_radius = r;
        }
        p
    }

    pub fn boundary(&self) -> BoundaryConditions {
        BoundaryConditions {
            start: self.start(),
            start_surge: self.u_r_s,
            goal: self.goal(),
            t_max: self.t_max,
            map: self.map,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.obstacles.validate()?;
        self.solver.validate()?;
        let finite = [self.x_s, self.y_s, self.u_r_s, self.x_f, self.y_f]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(PlanError::Config("start/goal fields must be finite".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(PlanError::Config("t_max must be positive".into()));
        }
        if !(self.delta_d > 0.0) || !(self.r_acc > 0.0) {
            return Err(PlanError::Config("delta_d and r_acc must be positive".into()));
        }
        if self.r_turn_min.is_some_and(|r| !(r > 0.0)) {
            return Err(PlanError::Config("r_turn_min must be positive".into()));
        }
        if self.n_ocp < 1 || self.k_ocp < 1 {
            return Err(PlanError::Config("n_ocp and k_ocp must be at least 1".into()));
        }
        for (name, p) in [("start", self.start()), ("goal", self.goal())] {
            if !self.map.contains(p) {
                return Err(PlanError::Config(format!("{name} lies outside the map")));
            }
            if self.obstacles.point_in_collision(p.x, p.y, false) {
                return Err(PlanError::Config(format!("{name} lies inside an obstacle")));
            }
        }
        if let Some(p) = &self.passage {
            p.validate()?;
        }
        Ok(())
    }

    /// True if every point whose x lies inside the passage x-range also lies
    /// inside its y-range, and at least one point does.
    pub fn route_uses_passage(&self, xy: &[(f64, f64)]) -> Option<bool> {
        let p = self.passage?;
        let mut seen = false;
        for &(x, y) in xy {
            if x >= p.x_min && x <= p.x_max {
                seen = true;
                if y < p.y_min || y > p.y_max {
                    return Some(false);
                }
            }
        }
        Some(seen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        t_max = 100.0
        x_s = 0.0
        y_s = 0.0
        u_r_s = 2.0
        x_f = 300.0
        y_f = 0.0
        [map]
        x_min = -50.0
        x_max = 350.0
        y_min = -100.0
        y_max = 100.0
    "#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.n_ocp, 1000);
        assert_eq!(s.k_ocp, 1);
        assert_eq!(s.delta_d, 50.0);
        assert_eq!(s.weights, CostWeights::default());
        assert_eq!(s.params().min_turn_radius, 24.5);
        let back = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad = MINIMAL.replace("t_max = 100.0", "t_max = -1.0");
        assert!(matches!(Scenario::from_toml_str(&bad), Err(PlanError::Config(_))));
        let unknown = format!("bogus = 1\n{MINIMAL}");
        assert!(Scenario::from_toml_str(&unknown).is_err());
        let blocked = format!("{MINIMAL}\n[[obstacles.ellipse]]\nx_c = 0.0\ny_c = 0.0\nx_a = 10.0\ny_a = 10.0\n");
        assert!(Scenario::from_toml_str(&blocked).is_err());
    }
}
