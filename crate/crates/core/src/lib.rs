//! Warm-started trajectory planning for autonomous surface vessels.
//!
//! The pipeline runs in three steps:
//!
//! 1. [`astar`]: shortest 8-connected grid path around elliptic obstacles.
//! 2. [`path_smoother`] and [`warmstart`]: line-of-sight waypoint reduction,
//!    circular-arc fillets at the corners and a constant-speed time
//!    parametrization that serves as the initial guess.
//! 3. [`ocp_transcription`] and [`nlp_solver`]: a direct multiple-shooting
//!    optimal control problem over the 3-DOF vessel model in
//!    [`vessel_model`], solved by an augmented Lagrangian method.
//!
//! [`pipeline`] ties the steps together and [`scenario`] reads the TOML
//! scenario files used by the `asv-planner` binary.

pub mod ad;
pub mod astar;
mod banded;
pub mod error;
pub mod nlp_solver;
pub mod obstacle_map;
pub mod ocp_transcription;
pub mod path_smoother;
pub mod pipeline;
pub mod scenario;
pub mod vessel_model;
pub mod warmstart;

pub type Point2 = nalgebra::Point2<f64>;

pub use astar::{astar_search, build_grid, Grid, GridPath, MapBounds};
pub use error::{PlanError, Result};
pub use nlp_solver::{cold_start_guess, solve, NlpSolution, NonlinearProgram, SolverConfig, Status};
pub use obstacle_map::{g_o, EllipseObstacle, ObstacleSet};
pub use ocp_transcription::{transcribe, BoundaryConditions, Layout, NlpProblem};
pub use path_smoother::{connect_waypoints, reduce_waypoints, GeomPath, WaypointPath};
pub use pipeline::{run_pipeline, MetricsReport, Mode, PipelineOutput};
pub use scenario::Scenario;
pub use vessel_model::{AugmentedState, Control, CostWeights, State, VesselParams};
pub use warmstart::{lift, WarmTrajectory};
