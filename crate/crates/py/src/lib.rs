//! Python bindings for the `asv-planner` crate.
//!
//! ```python
//! import asvplan
//! s = asvplan.Scenario.load("two_island.toml")
//! s.n_ocp = 200
//! r = asvplan.plan(s, "warm")
//! print(r.status, r.metrics["scaled_total_cost"])
//! ```

use std::path::PathBuf;

use asv_planner::pipeline::{emit_outputs, EmitOptions};
use asv_planner::{
    astar_search, build_grid, connect_waypoints, reduce_waypoints, run_pipeline, EllipseObstacle, Mode, PipelineOutput,
    PlanError, Point2,
};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: PlanError) -> PyErr {
    match e {
        PlanError::Io { .. } => PyIOError::new_err(e.to_string()),
        PlanError::Config(_) | PlanError::InvalidParams(_) | PlanError::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A planning scenario read from TOML.
#[pyclass(module = "asvplan", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: asv_planner::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        asv_planner::Scenario::from_toml_str(text)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        asv_planner::Scenario::load(path)
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(to_py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_ocp(&self) -> usize {
        self.inner.n_ocp
    }

    #[setter]
    fn set_n_ocp(&mut self, n: usize) -> PyResult<()> {
        if n == 0 {
            return Err(PyValueError::new_err("n_ocp must be at least 1"));
        }
        self.inner.n_ocp = n;
        Ok(())
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    #[getter]
    fn start(&self) -> (f64, f64) {
        (self.inner.x_s, self.inner.y_s)
    }

    #[getter]
    fn goal(&self) -> (f64, f64) {
        (self.inner.x_f, self.inner.y_f)
    }

    /// Obstacles as `(x_c, y_c, x_a, y_a, alpha)` tuples.
    #[getter]
    fn obstacles(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        self.inner
            .obstacles
            .obstacles
            .iter()
            .map(|o| (o.x_c, o.y_c, o.x_a, o.y_a, o.alpha))
            .collect()
    }

    /// True when `(x, y)` lies strictly inside an obstacle.
    fn in_collision(&self, x: f64, y: f64) -> bool {
        self.inner.obstacles.point_in_collision(x, y, false)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, n_ocp={}, obstacles={})",
            self.inner.name,
            self.inner.n_ocp,
            self.inner.obstacles.obstacles.len()
        )
    }
}

/// Result of one planning run.
#[pyclass(module = "asvplan")]
struct PlanResult {
    scenario: asv_planner::Scenario,
    out: PipelineOutput,
}

#[pymethods]
impl PlanResult {
    #[getter]
    fn mode(&self) -> String {
        self.out.mode.to_string()
    }

    /// Solver status, or `None` for guess-only runs.
    #[getter]
    fn status(&self) -> Option<String> {
        self.out.metrics.status.map(|s| format!("{s:?}"))
    }

    #[getter]
    fn converged(&self) -> bool {
        self.out.metrics.feasible
    }

    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.out.metrics)
    }

    /// Columns `t, x, y, psi, u, v, r, J` with one entry per grid node and
    /// `tau_x, tau_n` with one entry per interval.
    #[getter]
    fn trajectory<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let tr = &self.out.trajectory;
        let d = PyDict::new(py);
        d.set_item("t", tr.t.clone())?;
        let col = |f: fn(&asv_planner::AugmentedState) -> f64| tr.z.iter().map(f).collect::<Vec<f64>>();
        d.set_item("x", col(|z| z.state.x))?;
        d.set_item("y", col(|z| z.state.y))?;
        d.set_item("psi", col(|z| z.state.psi))?;
        d.set_item("u", col(|z| z.state.u))?;
        d.set_item("v", col(|z| z.state.v))?;
        d.set_item("r", col(|z| z.state.r))?;
        d.set_item("J", col(|z| z.cost))?;
        d.set_item("tau_x", tr.u.iter().map(|c| c.tau_x).collect::<Vec<f64>>())?;
        d.set_item("tau_n", tr.u.iter().map(|c| c.tau_n).collect::<Vec<f64>>())?;
        Ok(d)
    }

    /// Reduced waypoints of the guess, empty for cold runs.
    #[getter]
    fn waypoints(&self) -> Vec<(f64, f64)> {
        self.out
            .waypoints
            .as_ref()
            .map(|w| w.waypoints.iter().map(|p| (p.x, p.y)).collect())
            .unwrap_or_default()
    }

    /// Write the CSV and JSON outputs into `directory`.
    #[pyo3(signature = (directory, dump_grid = false))]
    fn write(&self, directory: PathBuf, dump_grid: bool) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let opts = EmitOptions {
            trace: !self.out.trace.is_empty(),
            dump_grid,
        };
        emit_outputs(&self.scenario, &self.out, &directory, opts).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "PlanResult(mode={}, status={:?}, cost={:.6e})",
            self.out.mode, self.out.metrics.status, self.out.metrics.scaled_total_cost
        )
    }
}

/// Run the planner in `mode` (`"warm"`, `"cold"` or `"guess"`).
#[pyfunction]
#[pyo3(signature = (scenario, mode = "warm", trace = false))]
fn plan(py: Python<'_>, scenario: &Scenario, mode: &str, trace: bool) -> PyResult<PlanResult> {
    let mode: Mode = mode.parse().map_err(to_py_err)?;
    let s = scenario.inner.clone();
    let out = py.detach(|| run_pipeline(&s, mode, trace)).map_err(to_py_err)?;
    Ok(PlanResult { scenario: s, out })
}

type Polyline = Vec<(f64, f64)>;

/// Grid A* followed by waypoint reduction. Returns `(grid_path, waypoints)`.
#[pyfunction]
fn shortest_path(scenario: &Scenario) -> PyResult<(Polyline, Polyline)> {
    let s = &scenario.inner;
    let grid = build_grid(&s.obstacles, &s.map, s.delta_d).map_err(to_py_err)?;
    let path = astar_search(&grid, &s.obstacles, s.start(), s.goal()).map_err(to_py_err)?;
    let mut raw = vec![s.start()];
    raw.extend(path.points(&grid));
    raw.push(s.goal());
    raw.dedup();
    let reduced = reduce_waypoints(&raw, &s.obstacles);
    connect_waypoints(&reduced, s.r_acc, s.params().min_turn_radius).map_err(to_py_err)?;
    let pts = |v: &[Point2]| v.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>();
    Ok((pts(&raw), pts(&reduced.waypoints)))
}

/// Obstacle constraint value at `(x, y)`; zero on the boundary, positive inside.
#[pyfunction]
#[pyo3(signature = (ellipse, x, y, epsilon = 1e-6))]
fn obstacle_constraint(ellipse: (f64, f64, f64, f64, f64), x: f64, y: f64, epsilon: f64) -> PyResult<f64> {
    let (x_c, y_c, x_a, y_a, alpha) = ellipse;
    let obs = EllipseObstacle::new(x_c, y_c, x_a, y_a, alpha).map_err(to_py_err)?;
    Ok(asv_planner::g_o(&obs, epsilon, x, y))
}

#[pymodule]
fn asvplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<PlanResult>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(shortest_path, m)?)?;
    m.add_function(wrap_pyfunction!(obstacle_constraint, m)?)?;
    Ok(())
}
