//! Multiple-shooting transcription of the trajectory optimization problem.
//!
//! Decision vector: `w = [z_0, u_0, z_1, u_1, ..., u_{N-1}, z_N]` with
//! `z_k = [x, y, psi, u, v, r, J]` and `u_k = [X, N]`. The objective is the
//! final accumulated cost `J_N`. Constraints are stacked as
//!
//! * shooting rows `z_{k+1} - F(z_k, u_k)` for `k = 0..N` (7 rows each, `= 0`),
//! * obstacle rows `g_o(x_k, y_k)` for every obstacle and `k = 0..=N` (`<= 0`).
//!
//! Constraint Jacobians come from forward-mode dual numbers pushed through
//! the RK4 shooting map, so they are exact for the discretization.

use serde::Serialize;

use crate::ad::{Dual, Scalar};
use crate::astar::MapBounds;
use crate::error::{PlanError, Result};
use crate::nlp_solver::{CurvatureGroup, NonlinearProgram};
use crate::obstacle_map::{EllipseObstacle, ObstacleSet};
use crate::vessel_model::{
    rk4_generic, steady_state_thrust, AugmentedState, Control, CostWeights, VesselParams, AUG_DIM, CONTROL_DIM,
};
use crate::Point2;

const BLOCK: usize = AUG_DIM + CONTROL_DIM;

/// Index arithmetic for the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_ocp: usize,
}

impl Layout {
    pub fn new(n_ocp: usize) -> Self {
        Self { n_ocp }
    }

    pub fn n_vars(&self) -> usize {
        (self.n_ocp + 1) * AUG_DIM + self.n_ocp * CONTROL_DIM
    }

    pub fn z_index(&self, k: usize) -> usize {
        k * BLOCK
    }

    pub fn u_index(&self, k: usize) -> usize {
        k * BLOCK + AUG_DIM
    }

    /// Index of the final accumulated cost `J_N`.
    pub fn cost_index(&self) -> usize {
        self.z_index(self.n_ocp) + AUG_DIM - 1
    }

    pub fn z<'a>(&self, w: &'a [f64], k: usize) -> &'a [f64] {
        &w[self.z_index(k)..self.z_index(k) + AUG_DIM]
    }

    pub fn u<'a>(&self, w: &'a [f64], k: usize) -> &'a [f64] {
        &w[self.u_index(k)..self.u_index(k) + CONTROL_DIM]
    }

    pub fn z_mut<'a>(&self, w: &'a mut [f64], k: usize) -> &'a mut [f64] {
        let i = self.z_index(k);
        &mut w[i..i + AUG_DIM]
    }

    pub fn u_mut<'a>(&self, w: &'a mut [f64], k: usize) -> &'a mut [f64] {
        let i = self.u_index(k);
        &mut w[i..i + CONTROL_DIM]
    }

    pub fn augmented_state(&self, w: &[f64], k: usize) -> AugmentedState {
        let z = self.z(w, k);
        AugmentedState::from_array([z[0], z[1], z[2], z[3], z[4], z[5], z[6]])
    }

    pub fn control(&self, w: &[f64], k: usize) -> Control {
        let u = self.u(w, k);
        Control::new(u[0], u[1])
    }
}

/// Start/goal conditions and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditions {
    pub start: Point2,
    /// Initial surge speed.
    pub start_surge: f64,
    pub goal: Point2,
    pub t_max: f64,
    pub map: MapBounds,
}

/// Dimensions and sparsity summary.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ProblemStats {
    pub n_ocp: usize,
    pub substeps: usize,
    pub step_length: f64,
    pub n_vars: usize,
    pub n_shooting_rows: usize,
    pub n_obstacle_rows: usize,
    pub n_obstacles: usize,
    pub jacobian_nonzeros: usize,
    pub fixed_variables: usize,
}

#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub params: VesselParams,
    pub weights: CostWeights,
    pub obstacles: Vec<EllipseObstacle>,
    pub epsilon: f64,
    pub layout: Layout,
    pub substeps: usize,
    pub h: f64,
    pub boundary: BoundaryConditions,
    w_lb: Vec<f64>,
    w_ub: Vec<f64>,
    g_lb: Vec<f64>,
    g_ub: Vec<f64>,
    structure: Vec<(usize, usize)>,
    var_scale: Vec<f64>,
    con_scale: Vec<f64>,
    obj_scale: f64,
}

/// Build the nonlinear program.
pub fn transcribe(
    boundary: &BoundaryConditions,
    params: &VesselParams,
    weights: &CostWeights,
    obstacles: &ObstacleSet,
    n_ocp: usize,
    k_ocp: usize,
) -> Result<NlpProblem> {
    if n_ocp < 1 || k_ocp < 1 {
        return Err(PlanError::InvalidParams("n_ocp and k_ocp must be at least 1".into()));
    }
    if !(boundary.t_max > 0.0) {
        return Err(PlanError::InvalidParams("t_max must be positive".into()));
    }
    boundary.map.validate()?;
    obstacles.validate()?;
    let sb = &params.state_bounds;
    let cb = &params.control_bounds;
    let map = &boundary.map;
    for (name, p) in [("start", boundary.start), ("goal", boundary.goal)] {
        if !map.contains(p) {
            return Err(PlanError::InconsistentBounds(format!(
                "{name} ({}, {}) lies outside the map",
                p.x, p.y
            )));
        }
    }
    if !(boundary.start_surge >= sb.u_lb && boundary.start_surge <= sb.u_ub) {
        return Err(PlanError::InconsistentBounds(format!(
            "start surge {} outside [{}, {}]",
            boundary.start_surge, sb.u_lb, sb.u_ub
        )));
    }
    if !(sb.v_lb <= 0.0 && sb.v_ub >= 0.0 && sb.r_lb <= 0.0 && sb.r_ub >= 0.0) {
        return Err(PlanError::InconsistentBounds(
            "sway and yaw-rate bounds must admit zero at the boundary states".into(),
        ));
    }

    let layout = Layout::new(n_ocp);
    let n = layout.n_vars();
    let inf = f64::INFINITY;
    let mut w_lb = vec![0.0; n];
    let mut w_ub = vec![0.0; n];
    for k in 0..=n_ocp {
        let i = layout.z_index(k);
        let (lb, ub): ([f64; 7], [f64; 7]) = if k == 0 {
            let (x, y, u) = (boundary.start.x, boundary.start.y, boundary.start_surge);
            ([x, y, sb.psi_lb, u, 0.0, 0.0, 0.0], [x, y, sb.psi_ub, u, 0.0, 0.0, 0.0])
        } else if k == n_ocp {
            let (x, y) = (boundary.goal.x, boundary.goal.y);
            (
                [x, y, sb.psi_lb, sb.u_lb, 0.0, 0.0, 0.0],
                [x, y, sb.psi_ub, sb.u_ub, 0.0, 0.0, inf],
            )
        } else {
            (
                [map.x_min, map.y_min, sb.psi_lb, sb.u_lb, sb.v_lb, sb.r_lb, 0.0],
                [map.x_max, map.y_max, sb.psi_ub, sb.u_ub, sb.v_ub, sb.r_ub, inf],
            )
        };
        w_lb[i..i + AUG_DIM].copy_from_slice(&lb);
        w_ub[i..i + AUG_DIM].copy_from_slice(&ub);
        if k < n_ocp {
            let j = layout.u_index(k);
            w_lb[j..j + 2].copy_from_slice(&[cb.x_lb, cb.n_lb]);
            w_ub[j..j + 2].copy_from_slice(&[cb.x_ub, cb.n_ub]);
        }
    }
    if let Some(i) = (0..n).find(|&i| !(w_lb[i] <= w_ub[i])) {
        return Err(PlanError::InconsistentBounds(format!("variable {i}: lb > ub")));
    }

    let n_o = obstacles.len();
    let n_shoot = AUG_DIM * n_ocp;
    let n_obs_rows = n_o * (n_ocp + 1);
    let mut g_lb = vec![0.0; n_shoot + n_obs_rows];
    let mut g_ub = vec![0.0; n_shoot + n_obs_rows];
    for v in g_lb[n_shoot..].iter_mut() {
        *v = -inf;
    }
    for v in g_ub[n_shoot..].iter_mut() {
        *v = 0.0;
    }

    let mut structure = Vec::with_capacity(n_shoot * (BLOCK + 1) + 2 * n_obs_rows);
    for k in 0..n_ocp {
        let base = layout.z_index(k);
        for j in 0..AUG_DIM {
            let row = AUG_DIM * k + j;
            for c in 0..BLOCK {
                structure.push((row, base + c));
            }
            structure.push((row, layout.z_index(k + 1) + j));
        }
    }
    for k in 0..=n_ocp {
        for o in 0..n_o {
            let row = n_shoot + k * n_o + o;
            structure.push((row, layout.z_index(k)));
            structure.push((row, layout.z_index(k) + 1));
        }
    }

    let h = boundary.t_max / n_ocp as f64;
    // Typical magnitudes used by the solver to equilibrate the problem.
    let dist = (boundary.goal - boundary.start).norm();
    let u_est = (dist / boundary.t_max).max(0.5);
    let rate_est = weights.k_e * u_est * steady_state_thrust(params, u_est);
    let j_scale = (rate_est * h).max(1e-3);
    let z_scale = [10.0, 10.0, 0.1, 0.5, 0.2, 0.02, j_scale];
    let u_scale = [
        (0.1 * cb.x_ub.abs().max(cb.x_lb.abs())).max(1.0),
        (0.1 * cb.n_ub.abs().max(cb.n_lb.abs())).max(1.0),
    ];
    let mut var_scale = vec![1.0; n];
    for k in 0..=n_ocp {
        layout.z_mut(&mut var_scale, k).copy_from_slice(&z_scale);
        if k < n_ocp {
            layout.u_mut(&mut var_scale, k).copy_from_slice(&u_scale);
        }
    }
    let mut con_scale = vec![1.0; n_shoot + n_obs_rows];
    for k in 0..n_ocp {
        con_scale[AUG_DIM * k..AUG_DIM * (k + 1)].copy_from_slice(&z_scale);
    }

    Ok(NlpProblem {
        params: params.clone(),
        weights: *weights,
        obstacles: obstacles.obstacles.clone(),
        epsilon: obstacles.epsilon,
        layout,
        substeps: k_ocp,
        h,
        boundary: *boundary,
        w_lb,
        w_ub,
        g_lb,
        g_ub,
        structure,
        var_scale,
        con_scale,
        obj_scale: j_scale,
    })
}

impl NlpProblem {
    pub fn n_shooting_rows(&self) -> usize {
        AUG_DIM * self.layout.n_ocp
    }

    pub fn n_obstacle_rows(&self) -> usize {
        self.obstacles.len() * (self.layout.n_ocp + 1)
    }

    pub fn stats(&self) -> ProblemStats {
        ProblemStats {
            n_ocp: self.layout.n_ocp,
            substeps: self.substeps,
            step_length: self.h,
            n_vars: self.layout.n_vars(),
            n_shooting_rows: self.n_shooting_rows(),
            n_obstacle_rows: self.n_obstacle_rows(),
            n_obstacles: self.obstacles.len(),
            jacobian_nonzeros: self.structure.len(),
            fixed_variables: self.w_lb.iter().zip(&self.w_ub).filter(|(l, u)| l == u).count(),
        }
    }

    /// `(value, gradient)` of `phi(w) = J_N`.
    pub fn eval_cost_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(w)?;
        let mut grad = vec![0.0; w.len()];
        grad[self.layout.cost_index()] = 1.0;
        Ok((w[self.layout.cost_index()], grad))
    }

    /// Constraint values and Jacobian nonzeros (ordered as
    /// [`NonlinearProgram::jacobian_structure`]).
    pub fn eval_constraints_and_jacobian(&self, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(w)?;
        let mut g = vec![0.0; self.n_constraints()];
        let mut jac = vec![0.0; self.structure.len()];
        self.constraints_and_jacobian(w, &mut g, &mut jac);
        Ok((g, jac))
    }

    /// Shooting-block infinity norm.
    pub fn shooting_residual(&self, w: &[f64]) -> f64 {
        let mut g = vec![0.0; self.n_constraints()];
        self.constraints(w, &mut g);
        g[..self.n_shooting_rows()].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest obstacle constraint value (positive means penetration).
    pub fn max_obstacle_value(&self, w: &[f64]) -> f64 {
        let mut g = vec![0.0; self.n_constraints()];
        self.constraints(w, &mut g);
        g[self.n_shooting_rows()..]
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.layout.n_vars() {
            return Err(PlanError::DimensionMismatch {
                expected: self.layout.n_vars(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Pack a roll-out of the shooting map from `z0` under `controls`.
    pub fn pack_rollout(&self, z0: &AugmentedState, controls: &[Control]) -> Result<Vec<f64>> {
        if controls.len() != self.layout.n_ocp {
            return Err(PlanError::DimensionMismatch {
                expected: self.layout.n_ocp,
                got: controls.len(),
            });
        }
        let mut w = vec![0.0; self.layout.n_vars()];
        let mut z = z0.to_array();
        for (k, u) in controls.iter().enumerate() {
            self.layout.z_mut(&mut w, k).copy_from_slice(&z);
            self.layout.u_mut(&mut w, k).copy_from_slice(&u.to_array());
            z = rk4_generic(&self.params, &self.weights, &z, &u.to_array(), self.h, self.substeps);
        }
        self.layout.z_mut(&mut w, self.layout.n_ocp).copy_from_slice(&z);
        Ok(w)
    }

    fn shooting_values(&self, w: &[f64], k: usize, out: &mut [f64]) {
        let z = self.layout.z(w, k);
        let u = self.layout.u(w, k);
        let z0 = [z[0], z[1], z[2], z[3], z[4], z[5], z[6]];
        let next = rk4_generic(&self.params, &self.weights, &z0, &[u[0], u[1]], self.h, self.substeps);
        let z1 = self.layout.z(w, k + 1);
        for j in 0..AUG_DIM {
            out[j] = z1[j] - next[j];
        }
    }
}

impl NonlinearProgram for NlpProblem {
    fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn n_constraints(&self) -> usize {
        self.g_lb.len()
    }

    fn variable_bounds(&self) -> (&[f64], &[f64]) {
        (&self.w_lb, &self.w_ub)
    }

    fn constraint_bounds(&self) -> (&[f64], &[f64]) {
        (&self.g_lb, &self.g_ub)
    }

    fn jacobian_structure(&self) -> &[(usize, usize)] {
        &self.structure
    }

    fn objective(&self, w: &[f64]) -> f64 {
        w[self.layout.cost_index()]
    }

    fn objective_gradient(&self, _w: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[self.layout.cost_index()] = 1.0;
    }

    fn constraints(&self, w: &[f64], g: &mut [f64]) {
        let n_ocp = self.layout.n_ocp;
        for k in 0..n_ocp {
            self.shooting_values(w, k, &mut g[AUG_DIM * k..AUG_DIM * (k + 1)]);
        }
        let base = self.n_shooting_rows();
        let n_o = self.obstacles.len();
        for k in 0..=n_ocp {
            let z = self.layout.z(w, k);
            for (o, obs) in self.obstacles.iter().enumerate() {
                g[base + k * n_o + o] = obs.constraint_generic(self.epsilon, z[0], z[1]);
            }
        }
    }

    fn constraints_and_jacobian(&self, w: &[f64], g: &mut [f64], jac: &mut [f64]) {
        let n_ocp = self.layout.n_ocp;
        let mut nz = 0;
        for k in 0..n_ocp {
            let z = self.layout.z(w, k);
            let u = self.layout.u(w, k);
            let zd: [Dual<BLOCK>; AUG_DIM] = std::array::from_fn(|i| Dual::variable(z[i], i));
            let ud: [Dual<BLOCK>; CONTROL_DIM] = std::array::from_fn(|i| Dual::variable(u[i], AUG_DIM + i));
            let next = rk4_generic(&self.params, &self.weights, &zd, &ud, self.h, self.substeps);
            let z1 = self.layout.z(w, k + 1);
            for j in 0..AUG_DIM {
                g[AUG_DIM * k + j] = z1[j] - next[j].value();
                for c in 0..BLOCK {
                    jac[nz] = -next[j].eps[c];
                    nz += 1;
                }
                jac[nz] = 1.0;
                nz += 1;
            }
        }
        let base = self.n_shooting_rows();
        let n_o = self.obstacles.len();
        for k in 0..=n_ocp {
            let z = self.layout.z(w, k);
            let (x, y) = (Dual::<2>::variable(z[0], 0), Dual::<2>::variable(z[1], 1));
            for (o, obs) in self.obstacles.iter().enumerate() {
                let v = obs.constraint_generic(self.epsilon, x, y);
                g[base + k * n_o + o] = v.re;
                jac[nz] = v.eps[0];
                jac[nz + 1] = v.eps[1];
                nz += 2;
            }
        }
        debug_assert_eq!(nz, self.structure.len());
    }

    fn variable_scaling(&self) -> Vec<f64> {
        self.var_scale.clone()
    }

    fn constraint_scaling(&self) -> Vec<f64> {
        self.con_scale.clone()
    }

    fn objective_scaling(&self) -> f64 {
        self.obj_scale
    }

    fn curvature_groups(&self) -> Vec<CurvatureGroup> {
        let n_ocp = self.layout.n_ocp;
        let n_o = self.obstacles.len();
        let base = self.n_shooting_rows();
        let mut groups = Vec::with_capacity(n_ocp + if n_o > 0 { n_ocp + 1 } else { 0 });
        for k in 0..n_ocp {
            let z = self.layout.z_index(k);
            groups.push(CurvatureGroup {
                rows: (AUG_DIM * k..AUG_DIM * (k + 1)).collect(),
                cols: (z..z + BLOCK).collect(),
            });
        }
        if n_o > 0 {
            for k in 0..=n_ocp {
                let z = self.layout.z_index(k);
                groups.push(CurvatureGroup {
                    rows: (base + k * n_o..base + (k + 1) * n_o).collect(),
                    cols: vec![z, z + 1],
                });
            }
        }
        groups
    }

    fn objective_curvature_columns(&self) -> Vec<usize> {
        Vec::new()
    }
}
