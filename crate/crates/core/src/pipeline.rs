//! End-to-end planning runs and their file outputs.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::astar::{astar_search, build_grid, Grid};
use crate::error::{PlanError, Result};
use crate::nlp_solver::{cold_start_guess, solve_with_trace, write_trace_csv, NlpSolution, Status, TraceRow};
use crate::ocp_transcription::{transcribe, Layout, ProblemStats};
use crate::path_smoother::{connect_waypoints, reduce_waypoints, GeomPath, WaypointPath};
use crate::scenario::Scenario;
use crate::vessel_model::{rk4_generic, wrap_angle, AugmentedState, Control, CostWeights, AUG_DIM};
use crate::warmstart::{lift, WarmTrajectory};
use crate::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Warm,
    Cold,
    GuessOnly,
}

impl FromStr for Mode {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(Mode::Warm),
            "cold" => Ok(Mode::Cold),
            "guess" | "guess-only" | "guess_only" => Ok(Mode::GuessOnly),
            other => Err(PlanError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Warm => "warm",
            Mode::Cold => "cold",
            Mode::GuessOnly => "guess",
        })
    }
}

/// Sampled trajectory on the optimal-control grid with the cost split into
/// its energy and turn channels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub z: Vec<AugmentedState>,
    /// One control per interval.
    pub u: Vec<Control>,
    /// Running unweighted energy integral `J_e`.
    pub energy: Vec<f64>,
    /// Running normalized turn integral `J_t`.
    pub turn: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.z.iter().map(|z| (z.state.x, z.state.y)).collect()
    }

    /// `K_e J_e + K_t J_t` at every sample.
    pub fn total_cost(&self, w: &CostWeights) -> Vec<f64> {
        self.energy
            .iter()
            .zip(&self.turn)
            .map(|(e, t)| w.k_e * e + w.k_t * t)
            .collect()
    }

    /// `t,x,y,psi_wrapped,psi,u,v,r,tau_x,tau_n,J`. The last row repeats the
    /// final control.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,psi_wrapped,psi,u,v,r,tau_x,tau_n,J")?;
        for k in 0..self.len() {
            let s = &self.z[k].state;
            let u = self.u.get(k).or(self.u.last()).copied().unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.t[k],
                s.x,
                s.y,
                wrap_angle(s.psi),
                s.psi,
                s.u,
                s.v,
                s.r,
                u.tau_x,
                u.tau_n,
                self.z[k].cost
            )?;
        }
        Ok(())
    }

    /// `t,J_total,K_e*J_e,K_t*J_t`.
    pub fn write_cost_csv<W: Write>(&self, weights: &CostWeights, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,J_total,K_e*J_e,K_t*J_t")?;
        for k in 0..self.len() {
            let e = weights.k_e * self.energy[k];
            let t = weights.k_t * self.turn[k];
            writeln!(w, "{},{},{},{}", self.t[k], e + t, e, t)?;
        }
        Ok(())
    }
}

/// Re-integrate the energy and turn channels along `(z_k, u_k)` with the
/// discretization used by the shooting map.
fn split_costs(s: &Scenario, layout: &Layout, w: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let params = s.params();
    let only_energy = CostWeights {
        k_e: 1.0,
        k_t: 0.0,
        ..s.weights
    };
    let only_turn = CostWeights {
        k_e: 0.0,
        k_t: 1.0,
        ..s.weights
    };
    let mut energy = vec![0.0];
    let mut turn = vec![0.0];
    for k in 0..layout.n_ocp {
        let z = layout.z(w, k);
        let mut z0 = [0.0; AUG_DIM];
        z0[..6].copy_from_slice(&z[..6]);
        let u = layout.u(w, k);
        let tau = [u[0], u[1]];
        let de = rk4_generic(&params, &only_energy, &z0, &tau, h, s.k_ocp)[6];
        let dt = rk4_generic(&params, &only_turn, &z0, &tau, h, s.k_ocp)[6];
        energy.push(energy[k] + de);
        turn.push(turn[k] + dt);
    }
    (energy, turn)
}

fn trajectory_from_vector(layout: &Layout, w: &[f64], t_max: f64, energy: Vec<f64>, turn: Vec<f64>) -> Trajectory {
    let n = layout.n_ocp;
    Trajectory {
        t: (0..=n).map(|k| t_max * k as f64 / n as f64).collect(),
        z: (0..=n).map(|k| layout.augmented_state(w, k)).collect(),
        u: (0..n).map(|k| layout.control(w, k)).collect(),
        energy,
        turn,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub step1_astar: f64,
    pub step2_smoothing: f64,
    pub step3_ocp: f64,
    pub total: f64,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: Mode,
    /// True when the solver converged; the lifted guess is never feasible.
    pub feasible: bool,
    pub status: Option<Status>,
    /// `K_e J_e + K_t J_t` at the final time.
    pub scaled_total_cost: f64,
    /// Unweighted energy integral `J_e` (J).
    pub energy_cost: f64,
    /// Normalized turn integral `J_t`.
    pub turn_cost: f64,
    /// Final cost channel of the decision vector.
    pub objective: f64,
    pub timings: StageTimings,
    pub iterations: Option<usize>,
    pub outer_iterations: Option<usize>,
    pub function_evaluations: Option<usize>,
    pub shooting_residual: Option<f64>,
    pub obstacle_violation: Option<f64>,
    pub waypoints: Option<usize>,
    pub path_length: Option<f64>,
    pub uses_passage: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub n_ocp: usize,
    pub k_ocp: usize,
    pub t_max: f64,
    pub methods: Vec<MethodMetrics>,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub mode: Mode,
    pub trajectory: Trajectory,
    pub metrics: MethodMetrics,
    pub grid: Option<Grid>,
    pub grid_path: Option<Vec<Point2>>,
    pub waypoints: Option<WaypointPath>,
    pub geom_path: Option<GeomPath>,
    pub warm: Option<WarmTrajectory>,
    pub stats: Option<ProblemStats>,
    pub solution: Option<NlpSolution>,
    pub trace: Vec<TraceRow>,
}

impl PipelineOutput {
    pub fn report(&self, s: &Scenario) -> MetricsReport {
        MetricsReport {
            scenario: s.name.clone(),
            n_ocp: s.n_ocp,
            k_ocp: s.k_ocp,
            t_max: s.t_max,
            methods: vec![self.metrics.clone()],
        }
    }
}

struct WarmStages {
    grid: Grid,
    grid_path: Vec<Point2>,
    waypoints: WaypointPath,
    geom: GeomPath,
    warm: WarmTrajectory,
    step1: f64,
    step2: f64,
}

fn plan_guess(s: &Scenario) -> Result<WarmStages> {
    let params = s.params();
    let t0 = Instant::now();
    let grid = build_grid(&s.obstacles, &s.map, s.delta_d)?;
    let path = astar_search(&grid, &s.obstacles, s.start(), s.goal())?;
    let step1 = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut raw = vec![s.start()];
    raw.extend(path.points(&grid));
    raw.push(s.goal());
    raw.dedup();
    let waypoints = reduce_waypoints(&raw, &s.obstacles);
    if waypoints.waypoints.len() < 2 {
        return Err(PlanError::InvalidParams("start and goal coincide".into()));
    }
    let geom = connect_waypoints(&waypoints, s.r_acc, params.min_turn_radius)?;
    let warm = lift(&geom, s.t_max, &params, &s.weights, 10 * s.n_ocp + 1)?;
    let step2 = t1.elapsed().as_secs_f64();
    Ok(WarmStages {
        grid,
        grid_path: raw,
        waypoints,
        geom,
        warm,
        step1,
        step2,
    })
}

/// Run one planning mode.
pub fn run_pipeline(s: &Scenario, mode: Mode, record_trace: bool) -> Result<PipelineOutput> {
    s.validate()?;
    let params = s.params();
    let layout = Layout::new(s.n_ocp);
    let stages = match mode {
        Mode::Warm | Mode::GuessOnly => Some(plan_guess(s)?),
        Mode::Cold => None,
    };

    if mode == Mode::GuessOnly {
        let st = stages.expect("guess stages");
        let samples = st.warm.grid_samples(s.n_ocp);
        let w0 = st.warm.sample_to_grid(s.n_ocp);
        let energy = samples.iter().map(|x| x.energy).collect();
        let turn = samples.iter().map(|x| x.turn).collect();
        let trajectory = trajectory_from_vector(&layout, &w0, s.t_max, energy, turn);
        let last = samples.last().expect("nonempty");
        let timings = StageTimings {
            step1_astar: st.step1,
            step2_smoothing: st.step2,
            step3_ocp: 0.0,
            total: st.step1 + st.step2,
        };
        let metrics = MethodMetrics {
            method: mode,
            feasible: false,
            status: None,
            scaled_total_cost: s.weights.k_e * last.energy + s.weights.k_t * last.turn,
            energy_cost: last.energy,
            turn_cost: last.turn,
            objective: last.z.cost,
            timings,
            iterations: None,
            outer_iterations: None,
            function_evaluations: None,
            shooting_residual: None,
            obstacle_violation: None,
            waypoints: Some(st.waypoints.waypoints.len()),
            path_length: Some(st.geom.total_length),
            uses_passage: s.route_uses_passage(&trajectory.positions()),
        };
        return Ok(PipelineOutput {
            mode,
            trajectory,
            metrics,
            grid: Some(st.grid),
            grid_path: Some(st.grid_path),
            waypoints: Some(st.waypoints),
            geom_path: Some(st.geom),
            warm: Some(st.warm),
            stats: None,
            solution: None,
            trace: Vec::new(),
        });
    }

    let t2 = Instant::now();
    let boundary = s.boundary();
    let problem = transcribe(&boundary, &params, &s.weights, &s.obstacles, s.n_ocp, s.k_ocp)?;
    let w0 = match &stages {
        Some(st) => st.warm.sample_to_grid(s.n_ocp),
        None => cold_start_guess(&boundary, &params, &s.weights, s.n_ocp),
    };
    let mut trace = Vec::new();
    let solution = solve_with_trace(&problem, &w0, &s.solver, &mut trace)?;
    if !record_trace {
        trace.clear();
    }
    let step3 = t2.elapsed().as_secs_f64();

    let (energy, turn) = split_costs(s, &layout, &solution.w, problem.h);
    let trajectory = trajectory_from_vector(&layout, &solution.w, s.t_max, energy, turn);
    let (step1, step2) = stages.as_ref().map(|st| (st.step1, st.step2)).unwrap_or((0.0, 0.0));
    let e_final = *trajectory.energy.last().expect("nonempty");
    let t_final = *trajectory.turn.last().expect("nonempty");
    let metrics = MethodMetrics {
        method: mode,
        feasible: solution.status == Status::Converged,
        status: Some(solution.status),
        scaled_total_cost: s.weights.k_e * e_final + s.weights.k_t * t_final,
        energy_cost: e_final,
        turn_cost: t_final,
        objective: solution.objective,
        timings: StageTimings {
            step1_astar: step1,
            step2_smoothing: step2,
            step3_ocp: step3,
            total: step1 + step2 + step3,
        },
        iterations: Some(solution.inner_iterations),
        outer_iterations: Some(solution.outer_iterations),
        function_evaluations: Some(solution.function_evaluations),
        shooting_residual: Some(solution.equality_residual),
        obstacle_violation: Some(solution.obstacle_violation),
        waypoints: stages.as_ref().map(|st| st.waypoints.waypoints.len()),
        path_length: stages.as_ref().map(|st| st.geom.total_length),
        uses_passage: s.route_uses_passage(&trajectory.positions()),
    };
    let (grid, grid_path, waypoints, geom_path, warm) = match stages {
        Some(st) => (
            Some(st.grid),
            Some(st.grid_path),
            Some(st.waypoints),
            Some(st.geom),
            Some(st.warm),
        ),
        None => (None, None, None, None, None),
    };
    Ok(PipelineOutput {
        mode,
        trajectory,
        metrics,
        grid,
        grid_path,
        waypoints,
        geom_path,
        warm,
        stats: Some(problem.stats()),
        solution: Some(solution),
        trace,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmitOptions {
    pub trace: bool,
    pub dump_grid: bool,
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, std::path::PathBuf)> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| PlanError::io(&path, e))?;
    Ok((BufWriter::new(f), path))
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let (mut w, path) = create(dir, name)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| PlanError::io(&path, e))
}

/// Write trajectory, cost breakdown, metrics and the optional debug files.
pub fn emit_outputs(s: &Scenario, out: &PipelineOutput, dir: &Path, opts: EmitOptions) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PlanError::io(dir, e))?;
    write_file(dir, "trajectory.csv", |w| out.trajectory.write_csv(w))?;
    write_file(dir, "cost.csv", |w| out.trajectory.write_cost_csv(&s.weights, w))?;
    let report = out.report(s);
    write_file(dir, "metrics.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    if let Some(stats) = &out.stats {
        write_file(dir, "problem_stats.json", |w| {
            serde_json::to_writer_pretty(&mut *w, stats)?;
            writeln!(w)
        })?;
    }
    if opts.trace && out.solution.is_some() {
        write_file(dir, "solver_trace.csv", |w| write_trace_csv(&out.trace, w))?;
    }
    if opts.dump_grid {
        if let Some(grid) = &out.grid {
            write_file(dir, "grid.csv", |w| grid.write_csv(w))?;
        }
        if let Some(raw) = &out.grid_path {
            write_file(dir, "astar_path.csv", |w| write_points(w, raw))?;
        }
        if let Some(wp) = &out.waypoints {
            write_file(dir, "waypoints.csv", |w| write_points(w, &wp.waypoints))?;
        }
        if let (Some(g), Some(warm)) = (&out.geom_path, &out.warm) {
            write_file(dir, "geom_path.csv", |w| g.write_csv(w, warm.u_nom, 2000))?;
            write_file(dir, "warm_start.csv", |w| warm.write_csv(w))?;
        }
    }
    Ok(())
}

fn write_points<W: Write>(mut w: W, pts: &[Point2]) -> std::io::Result<()> {
    writeln!(w, "x,y")?;
    for p in pts {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_water() -> Scenario {
        Scenario::from_toml_str(
            r#"
            name = "open water"
            t_max = 120.0
            n_ocp = 12
            x_s = 0.0
            y_s = 0.0
            u_r_s = 2.5
            x_f = 300.0
            y_f = 0.0
            [map]
            x_min = -50.0
            x_max = 350.0
            y_min = -100.0
            y_max = 100.0
            "#,
        )
        .unwrap()
    }

    #[test]
    fn guess_only_straight_route() {
        let s = open_water();
        let out = run_pipeline(&s, Mode::GuessOnly, false).unwrap();
        assert_eq!(out.waypoints.as_ref().unwrap().waypoints.len(), 2);
        assert_eq!(out.trajectory.len(), s.n_ocp + 1);
        assert!(out.trajectory.z.iter().all(|z| z.state.r == 0.0 && z.state.v == 0.0));
        assert!(!out.metrics.feasible);
        let total = out.trajectory.total_cost(&s.weights);
        assert!((total.last().unwrap() - out.metrics.scaled_total_cost).abs() < 1e-9);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("warm".parse::<Mode>().unwrap(), Mode::Warm);
        assert_eq!("guess".parse::<Mode>().unwrap(), Mode::GuessOnly);
        assert!("hot".parse::<Mode>().is_err());
        assert_eq!(Mode::Cold.to_string(), "cold");
    }
}
