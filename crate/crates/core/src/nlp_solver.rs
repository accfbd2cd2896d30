//! Augmented Lagrangian solver for sparse, box-constrained NLPs.
//!
//! Outer loop: PHR augmented Lagrangian over the general constraint rows
//! `g_lb <= g(w) <= g_ub` with first-order multiplier updates. Inner loop:
//! projected limited-memory BFGS on the variable box. The initial matrix of
//! every two-loop recursion is a banded model of the augmented Lagrangian
//! Hessian: the Gauss-Newton term `rho J_A^T J_A` of the active penalty rows
//! plus small dense damped-BFGS blocks, one per group of rows that share a
//! few nonlinear columns (partitioned quasi-Newton). Only first derivatives
//! are required.
//!
//! All iterations run on scaled quantities supplied by the problem.

use std::collections::VecDeque;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{PlanError, Result};
use crate::ocp_transcription::{BoundaryConditions, Layout};
use crate::vessel_model::{cost_terms, steady_state_thrust, Control, CostWeights, State, VesselParams};

/// First-order callback interface.
pub trait NonlinearProgram {
    fn n_vars(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn variable_bounds(&self) -> (&[f64], &[f64]);
    fn constraint_bounds(&self) -> (&[f64], &[f64]);
    /// `(row, column)` of every Jacobian nonzero.
    fn jacobian_structure(&self) -> &[(usize, usize)];
    fn objective(&self, w: &[f64]) -> f64;
    fn objective_gradient(&self, w: &[f64], grad: &mut [f64]);
    fn constraints(&self, w: &[f64], g: &mut [f64]);
    /// Constraint values and Jacobian nonzeros in structure order.
    fn constraints_and_jacobian(&self, w: &[f64], g: &mut [f64], jac: &mut [f64]);

    fn variable_scaling(&self) -> Vec<f64> {
        vec![1.0; self.n_vars()]
    }
    fn constraint_scaling(&self) -> Vec<f64> {
        vec![1.0; self.n_constraints()]
    }
    fn objective_scaling(&self) -> f64 {
        1.0
    }
    /// Row groups whose second derivatives are confined to a few columns.
    /// The solver keeps one dense quasi-Newton block per group. Default: one
    /// group per row over all of its structural columns.
    fn curvature_groups(&self) -> Vec<CurvatureGroup> {
        let mut groups: Vec<CurvatureGroup> = (0..self.n_constraints())
            .map(|r| CurvatureGroup {
                rows: vec![r],
                cols: Vec::new(),
            })
            .collect();
        for &(r, c) in self.jacobian_structure() {
            if !groups[r].cols.contains(&c) {
                groups[r].cols.push(c);
            }
        }
        groups
    }
    /// Columns on which the objective is nonlinear. Default: all.
    fn objective_curvature_columns(&self) -> Vec<usize> {
        (0..self.n_vars()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurvatureGroup {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    pub constraint_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    /// Multiplies `max(1, |f|) / max(1, |c|^2 / 2)` at the initial point.
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// Required violation reduction factor before the penalty is left alone.
    pub violation_reduction: f64,
    pub lbfgs_memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-6,
            max_outer_iterations: 100,
            max_inner_iterations: 200,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            violation_reduction: 0.25,
            lbfgs_memory: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kkt_tolerance > 0.0
            && self.constraint_tolerance > 0.0
            && self.max_outer_iterations >= 1
            && self.max_inner_iterations >= 1
            && self.initial_penalty > 0.0
            && self.penalty_growth > 1.0
            && self.violation_reduction > 0.0
            && self.violation_reduction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(PlanError::InvalidParams(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    IterationLimit,
    EvaluationFailure,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub w: Vec<f64>,
    pub objective: f64,
    /// Largest `|g_i - g_lb,i|` over equality rows.
    pub equality_residual: f64,
    /// Largest bound violation over inequality rows (obstacle rows in the
    /// trajectory problem).
    pub obstacle_violation: f64,
    /// Projected gradient of the Lagrangian, scaled units.
    pub kkt_residual: f64,
    /// Unscaled constraint multipliers.
    pub multipliers: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub function_evaluations: usize,
    pub wall_time: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub iteration: usize,
    pub merit: f64,
    pub objective: f64,
    pub equality_residual: f64,
    pub obstacle_violation: f64,
    pub projected_gradient: f64,
    pub step_norm: f64,
    pub penalty: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "outer,iteration,merit,objective,equality_residual,obstacle_violation,projected_gradient,step_norm,penalty"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.outer,
            r.iteration,
            r.merit,
            r.objective,
            r.equality_residual,
            r.obstacle_violation,
            r.projected_gradient,
            r.step_norm,
            r.penalty
        )?;
    }
    Ok(())
}

/// Unscaled equality residual and inequality violation of `g`.
pub fn residuals(g: &[f64], g_lb: &[f64], g_ub: &[f64]) -> (f64, f64) {
    let (mut eq, mut ineq) = (0.0f64, 0.0f64);
    for i in 0..g.len() {
        if g_lb[i] == g_ub[i] {
            eq = eq.max((g[i] - g_lb[i]).abs());
        } else {
            ineq = ineq.max(g[i] - g_ub[i]).max(g_lb[i] - g[i]);
        }
    }
    (eq, ineq)
}

const SIGMA_REG: f64 = 1e-8;
const INITIAL_BLOCK_CURVATURE: f64 = 1.0;
const MIN_INITIAL_PENALTY: f64 = 1e-8;
const MAX_INITIAL_PENALTY: f64 = 1e8;
const MAX_PENALTY: f64 = 1e12;
const MAX_MULTIPLIER: f64 = 1e12;
const MAX_BLOCK_CURVATURE: f64 = 1e8;
const ARMIJO: f64 = 1e-4;
/// Armijo slack in units of the merit's rounding scale.
const MERIT_NOISE: f64 = 10.0;
const MAX_BACKTRACKS: usize = 40;
/// Inner solves stop once the projected gradient has dropped by this factor
/// (or below the outer tolerance schedule).
const INNER_RELATIVE_TOLERANCE: f64 = 1e-2;

/// Dense quasi-Newton block over a few columns.
struct Element {
    cols: Vec<usize>,
    /// `(nonzero index, local column)` of the Jacobian entries of the group
    /// rows that fall on `cols`. Empty for the objective element.
    entries: Vec<(usize, usize)>,
    objective: bool,
    /// Row-major `d x d` approximation.
    b: Vec<f64>,
    fresh: bool,
}

impl Element {
    fn new(cols: Vec<usize>, entries: Vec<(usize, usize)>, objective: bool) -> Self {
        let d = cols.len();
        let mut b = vec![0.0; d * d];
        for i in 0..d {
            b[i * d + i] = INITIAL_BLOCK_CURVATURE;
        }
        Self {
            cols,
            entries,
            objective,
            b,
            fresh: true,
        }
    }

    fn reset(&mut self) {
        let d = self.cols.len();
        self.b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            self.b[i * d + i] = INITIAL_BLOCK_CURVATURE;
        }
        self.fresh = true;
    }

    fn gradient(&self, rows: &[usize], fgrad: &[f64], jac: &[f64], mu: &[f64]) -> Vec<f64> {
        if self.objective {
            return self.cols.iter().map(|&c| fgrad[c]).collect();
        }
        let mut g = vec![0.0; self.cols.len()];
        for &(k, local) in &self.entries {
            g[local] += mu[rows[k]] * jac[k];
        }
        g
    }

    /// Powell-damped BFGS update, which keeps the block positive definite.
    fn update(&mut self, s: &[f64], y: &[f64]) {
        let d = self.cols.len();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        if !(ss > 0.0) {
            return;
        }
        let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if self.fresh && sy > 0.0 {
            let scale = (yy / sy).clamp(1e-8, 1e8);
            self.b.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..d {
                self.b[i * d + i] = scale;
            }
            self.fresh = false;
        }
        let bs: Vec<f64> = (0..d).map(|i| (0..d).map(|j| self.b[i * d + j] * s[j]).sum()).collect();
        let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
        if !(sbs > 0.0) {
            return;
        }
        if yy > MAX_BLOCK_CURVATURE * sy.max(0.2 * sbs) {
            return;
        }
        let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
        let r: Vec<f64> = (0..d).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
        let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
        if !(sr > 0.0) {
            return;
        }
        for i in 0..d {
            for j in 0..d {
                self.b[i * d + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
            }
        }
    }
}

/// Scaled view of a problem plus cached sparsity bookkeeping.
struct Scaled<'a, P: NonlinearProgram> {
    p: &'a P,
    sw: Vec<f64>,
    sc: Vec<f64>,
    sf: f64,
    lb: Vec<f64>,
    ub: Vec<f64>,
    clb: Vec<f64>,
    cub: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Nonzeros grouped by row: `row_nz[row_ptr[r]..row_ptr[r + 1]]`.
    row_ptr: Vec<usize>,
    row_nz: Vec<usize>,
    bandwidth: usize,
    w: Vec<f64>,
    evals: usize,
}

struct Point {
    x: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    jac: Vec<f64>,
    fgrad: Vec<f64>,
    mu: Vec<f64>,
    grad: Vec<f64>,
    merit: f64,
    /// Rounding-error scale of `merit`.
    noise: f64,
}

fn span(cols: impl Iterator<Item = usize>) -> usize {
    let (mut lo, mut hi) = (usize::MAX, 0);
    for c in cols {
        lo = lo.min(c);
        hi = hi.max(c);
    }
    hi.saturating_sub(lo)
}

impl<'a, P: NonlinearProgram> Scaled<'a, P> {
    fn new(p: &'a P) -> Self {
        let n = p.n_vars();
        let m = p.n_constraints();
        let sw = p.variable_scaling();
        let sc = p.constraint_scaling();
        let sf = p.objective_scaling();
        let (wl, wu) = p.variable_bounds();
        let (gl, gu) = p.constraint_bounds();
        let lb = (0..n).map(|i| wl[i] / sw[i]).collect();
        let ub = (0..n).map(|i| wu[i] / sw[i]).collect();
        let clb = (0..m).map(|i| gl[i] / sc[i]).collect();
        let cub = (0..m).map(|i| gu[i] / sc[i]).collect();
        let structure = p.jacobian_structure();
        let rows: Vec<usize> = structure.iter().map(|e| e.0).collect();
        let cols: Vec<usize> = structure.iter().map(|e| e.1).collect();
        let mut row_ptr = vec![0usize; m + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..m {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut fill = row_ptr.clone();
        let mut row_nz = vec![0usize; rows.len()];
        for (k, &r) in rows.iter().enumerate() {
            row_nz[fill[r]] = k;
            fill[r] += 1;
        }
        let bandwidth = (0..m)
            .map(|r| span(row_nz[row_ptr[r]..row_ptr[r + 1]].iter().map(|&k| cols[k])))
            .max()
            .unwrap_or(0);
        Self {
            p,
            sw,
            sc,
            sf,
            lb,
            ub,
            clb,
            cub,
            rows,
            cols,
            row_ptr,
            row_nz,
            bandwidth,
            w: vec![0.0; n],
            evals: 0,
        }
    }

    fn elements(&self) -> Vec<Element> {
        let mut out = Vec::new();
        let obj_cols = self.p.objective_curvature_columns();
        if !obj_cols.is_empty() {
            out.push(Element::new(obj_cols, Vec::new(), true));
        }
        for group in self.p.curvature_groups() {
            let mut entries = Vec::new();
            for &r in &group.rows {
                for &k in &self.row_nz[self.row_ptr[r]..self.row_ptr[r + 1]] {
                    if let Some(local) = group.cols.iter().position(|&c| c == self.cols[k]) {
                        entries.push((k, local));
                    }
                }
            }
            if !group.cols.is_empty() {
                out.push(Element::new(group.cols, entries, false));
            }
        }
        out
    }

    fn unscale(&mut self, x: &[f64]) {
        for i in 0..x.len() {
            self.w[i] = x[i] * self.sw[i];
        }
    }

    fn eval_values(&mut self, x: &[f64], c: &mut [f64]) -> Option<f64> {
        self.unscale(x);
        self.evals += 1;
        let f = self.p.objective(&self.w) / self.sf;
        self.p.constraints(&self.w, c);
        for i in 0..c.len() {
            c[i] /= self.sc[i];
        }
        (f.is_finite() && c.iter().all(|v| v.is_finite())).then_some(f)
    }

    fn eval_full(&mut self, x: &[f64], c: &mut [f64], jac: &mut [f64], fgrad: &mut [f64]) -> Option<f64> {
        self.unscale(x);
        self.evals += 1;
        let f = self.p.objective(&self.w) / self.sf;
        self.p.objective_gradient(&self.w, fgrad);
        self.p.constraints_and_jacobian(&self.w, c, jac);
        for i in 0..c.len() {
            c[i] /= self.sc[i];
        }
        for i in 0..fgrad.len() {
            fgrad[i] *= self.sw[i] / self.sf;
        }
        for k in 0..jac.len() {
            jac[k] *= self.sw[self.cols[k]] / self.sc[self.rows[k]];
        }
        let finite = f.is_finite()
            && c.iter().all(|v| v.is_finite())
            && jac.iter().all(|v| v.is_finite())
            && fgrad.iter().all(|v| v.is_finite());
        finite.then_some(f)
    }

    /// Shifted constraint distance `t - clamp(t)`, `t = c + lambda / rho`.
    #[inline]
    fn excess(&self, i: usize, c: f64, lam: f64, rho: f64) -> f64 {
        let t = c + lam / rho;
        t - t.clamp(self.clb[i], self.cub[i])
    }

    fn merit(&self, f: f64, c: &[f64], lam: &[f64], rho: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..c.len() {
            let e = self.excess(i, c[i], lam[i], rho);
            s += e * e - (lam[i] / rho) * (lam[i] / rho);
        }
        f + 0.5 * rho * s
    }

    fn multiplier_estimate(&self, c: &[f64], lam: &[f64], rho: f64) -> Vec<f64> {
        (0..c.len()).map(|i| rho * self.excess(i, c[i], lam[i], rho)).collect()
    }

    fn evaluate_point(&mut self, x: Vec<f64>, lam: &[f64], rho: f64) -> Option<Point> {
        let n = x.len();
        let mut c = vec![0.0; self.clb.len()];
        let mut jac = vec![0.0; self.rows.len()];
        let mut fgrad = vec![0.0; n];
        let f = self.eval_full(&x, &mut c, &mut jac, &mut fgrad)?;
        let mu = self.multiplier_estimate(&c, lam, rho);
        let mut grad = fgrad.clone();
        for k in 0..jac.len() {
            grad[self.cols[k]] += jac[k] * mu[self.rows[k]];
        }
        let merit = self.merit(f, &c, lam, rho);
        let mut noise = f.abs() + merit.abs();
        for k in 0..jac.len() {
            noise += (mu[self.rows[k]] * jac[k] * x[self.cols[k]]).abs();
        }
        noise *= MERIT_NOISE * f64::EPSILON;
        Some(Point {
            x,
            f,
            c,
            jac,
            fgrad,
            mu,
            grad,
            merit,
            noise,
        })
    }

    fn project(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lb[i], self.ub[i]);
        }
    }

    fn projected_gradient_norm(&self, x: &[f64], grad: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for i in 0..x.len() {
            let t = (x[i] - grad[i]).clamp(self.lb[i], self.ub[i]);
            m = m.max((t - x[i]).abs());
        }
        m
    }

    fn active_set(&self, x: &[f64], grad: &[f64], eps: f64) -> Vec<bool> {
        (0..x.len())
            .map(|i| {
                self.lb[i] == self.ub[i]
                    || (x[i] <= self.lb[i] + eps && grad[i] > 0.0)
                    || (x[i] >= self.ub[i] - eps && grad[i] < 0.0)
            })
            .collect()
    }

    /// Row participates in the Gauss-Newton term when its penalty is active.
    fn row_active(&self, i: usize, c: f64, lam: f64, rho: f64) -> bool {
        self.clb[i] == self.cub[i] || self.excess(i, c, lam, rho) != 0.0
    }

    /// `rho J_A^T J_A + sum of element blocks + shift`, identity on active
    /// variables, factorized in place.
    #[allow(clippy::too_many_arguments)]
    fn build_model(
        &self,
        band: &mut BandMatrix,
        pt: &Point,
        lam: &[f64],
        rho: f64,
        elements: &[Element],
        shift: f64,
        active: &[bool],
    ) -> bool {
        band.clear();
        for r in 0..self.clb.len() {
            if !self.row_active(r, pt.c[r], lam[r], rho) {
                continue;
            }
            let nz = &self.row_nz[self.row_ptr[r]..self.row_ptr[r + 1]];
            for (a, &ka) in nz.iter().enumerate() {
                let va = pt.jac[ka];
                if va == 0.0 {
                    continue;
                }
                for &kb in &nz[..=a] {
                    let (ca, cb) = (self.cols[ka], self.cols[kb]);
                    let v = rho * va * pt.jac[kb];
                    if ca == cb && ka != kb {
                        band.add(ca, cb, 2.0 * v);
                    } else {
                        band.add(ca, cb, v);
                    }
                }
            }
        }
        for e in elements {
            let d = e.cols.len();
            for a in 0..d {
                for b in 0..=a {
                    band.add(e.cols[a], e.cols[b], e.b[a * d + b]);
                }
            }
        }
        for i in 0..band.n {
            if active[i] {
                band.set_identity_row(i);
            } else {
                band.add(i, i, shift);
            }
        }
        band.factorize()
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

fn masked_dot(a: &[f64], b: &[f64], active: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if !active[i] {
            s += a[i] * b[i];
        }
    }
    s
}

/// L-BFGS two-loop recursion restricted to the free variables, with the
/// factorized band model as initial matrix.
fn two_loop(grad: &[f64], mem: &VecDeque<Pair>, band: &BandMatrix, active: &[bool]) -> Vec<f64> {
    let n = grad.len();
    let mut q: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { grad[i] }).collect();
    let mut alphas = vec![0.0; mem.len()];
    let mut rhos = vec![0.0; mem.len()];
    for (j, pair) in mem.iter().enumerate().rev() {
        let sy = masked_dot(&pair.s, &pair.y, active);
        if sy <= 0.0 {
            continue;
        }
        rhos[j] = 1.0 / sy;
        alphas[j] = rhos[j] * masked_dot(&pair.s, &q, active);
        for i in 0..n {
            if !active[i] {
                q[i] -= alphas[j] * pair.y[i];
            }
        }
    }
    band.solve_in_place(&mut q);
    for (j, pair) in mem.iter().enumerate() {
        if rhos[j] == 0.0 {
            continue;
        }
        let b = rhos[j] * masked_dot(&pair.y, &q, active);
        for i in 0..n {
            if !active[i] {
                q[i] += pair.s[i] * (alphas[j] - b);
            }
        }
    }
    for i in 0..n {
        q[i] = if active[i] { 0.0 } else { -q[i] };
    }
    q
}

enum InnerExit {
    Converged,
    Stalled,
    IterationLimit,
    Failure,
}

/// Solve from `w0`. The initial guess is projected onto the variable box.
pub fn solve<P: NonlinearProgram>(p: &P, w0: &[f64], cfg: &SolverConfig) -> Result<NlpSolution> {
    solve_impl(p, w0, cfg, None)
}

/// As [`solve`], additionally recording one [`TraceRow`] per inner iteration.
pub fn solve_with_trace<P: NonlinearProgram>(
    p: &P,
    w0: &[f64],
    cfg: &SolverConfig,
    trace: &mut Vec<TraceRow>,
) -> Result<NlpSolution> {
    solve_impl(p, w0, cfg, Some(trace))
}

fn unscaled_residuals<P: NonlinearProgram>(sp: &Scaled<'_, P>, c: &[f64], g_lb: &[f64], g_ub: &[f64]) -> (f64, f64) {
    let g: Vec<f64> = c.iter().zip(&sp.sc).map(|(a, b)| a * b).collect();
    residuals(&g, g_lb, g_ub)
}

fn solve_impl<P: NonlinearProgram>(
    p: &P,
    w0: &[f64],
    cfg: &SolverConfig,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<NlpSolution> {
    cfg.validate()?;
    let n = p.n_vars();
    let m = p.n_constraints();
    if w0.len() != n {
        return Err(PlanError::DimensionMismatch {
            expected: n,
            got: w0.len(),
        });
    }
    if p.jacobian_structure().iter().any(|&(r, c)| r >= m || c >= n) {
        return Err(PlanError::InvalidParams("Jacobian structure out of range".into()));
    }
    let started = Instant::now();
    let mut sp = Scaled::new(p);
    let mut elements = sp.elements();
    if elements.iter().flat_map(|e| e.cols.iter()).any(|&c| c >= n) {
        return Err(PlanError::InvalidParams("curvature group column out of range".into()));
    }
    let bandwidth = elements
        .iter()
        .map(|e| span(e.cols.iter().copied()))
        .fold(sp.bandwidth, usize::max);
    let (g_lb, g_ub) = {
        let (a, b) = p.constraint_bounds();
        (a.to_vec(), b.to_vec())
    };
    let mut x: Vec<f64> = (0..n).map(|i| w0[i] / sp.sw[i]).collect();
    sp.project(&mut x);

    let mut lam = vec![0.0; m];
    let mut rho = {
        let mut c = vec![0.0; m];
        let f = sp.eval_values(&x, &mut c).unwrap_or(0.0);
        let sq: f64 = (0..m).map(|i| (c[i] - c[i].clamp(sp.clb[i], sp.cub[i])).powi(2)).sum();
        let r = cfg.initial_penalty * f.abs().max(1.0) / (0.5 * sq).max(1.0);
        if r.is_finite() {
            r.clamp(MIN_INITIAL_PENALTY, MAX_INITIAL_PENALTY)
        } else {
            cfg.initial_penalty
        }
    };
    let mut omega: f64 = 1e-2f64.max(cfg.kkt_tolerance);
    let mut prev_violation = f64::INFINITY;
    let mut band = BandMatrix::zeros(n, bandwidth);
    let mut total_inner = 0usize;
    let mut outer = 0usize;
    let mut status = Status::IterationLimit;
    let mut kkt = f64::INFINITY;

    let mut pt = match sp.evaluate_point(x.clone(), &lam, rho) {
        Some(pt) => pt,
        None => {
            return Ok(finish(
                p,
                &sp,
                x,
                &lam,
                0,
                0,
                started,
                Status::EvaluationFailure,
                f64::NAN,
            ));
        }
    };

    while outer < cfg.max_outer_iterations {
        outer += 1;
        // The merit function changes with (lambda, rho).
        pt = match sp.evaluate_point(pt.x.clone(), &lam, rho) {
            Some(v) => v,
            None => {
                status = Status::EvaluationFailure;
                break;
            }
        };
        let mut mem: VecDeque<Pair> = VecDeque::with_capacity(cfg.lbfgs_memory);
        let mut inner = 0usize;
        let omega_k = omega.max(INNER_RELATIVE_TOLERANCE * sp.projected_gradient_norm(&pt.x, &pt.grad));
        let exit = loop {
            let pg = sp.projected_gradient_norm(&pt.x, &pt.grad);
            if pg <= omega_k {
                break InnerExit::Converged;
            }
            if inner >= cfg.max_inner_iterations {
                break InnerExit::IterationLimit;
            }
            let active = sp.active_set(&pt.x, &pt.grad, pg.min(1e-3));
            let mut shift = SIGMA_REG;
            while !sp.build_model(&mut band, &pt, &lam, rho, &elements, shift, &active) {
                shift *= 100.0;
                if shift > 1e4 && elements.iter().any(|e| !e.fresh) {
                    elements.iter_mut().for_each(Element::reset);
                    shift = SIGMA_REG;
                } else if shift > 1e12 {
                    break;
                }
            }
            if shift > 1e12 {
                break InnerExit::Failure;
            }
            let mut d = two_loop(&pt.grad, &mem, &band, &active);
            if !(masked_dot(&pt.grad, &d, &active) < 0.0) {
                mem.clear();
                d = two_loop(&pt.grad, &mem, &band, &active);
                if !(masked_dot(&pt.grad, &d, &active) < 0.0) {
                    d = (0..n).map(|i| if active[i] { 0.0 } else { -pt.grad[i] }).collect();
                }
            }

            // Projected Armijo backtracking.
            let mut alpha = 1.0;
            let mut trial = vec![0.0; n];
            let mut c_trial = vec![0.0; m];
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                for i in 0..n {
                    trial[i] = pt.x[i] + alpha * d[i];
                }
                sp.project(&mut trial);
                let decrease: f64 = (0..n).map(|i| pt.grad[i] * (trial[i] - pt.x[i])).sum();
                if let Some(f) = sp.eval_values(&trial, &mut c_trial) {
                    let merit = sp.merit(f, &c_trial, &lam, rho);
                    if decrease < 0.0 && merit <= pt.merit + ARMIJO * decrease + pt.noise {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                if mem.is_empty() {
                    break InnerExit::Stalled;
                }
                mem.clear();
                continue;
            }
            let new_pt = match sp.evaluate_point(trial, &lam, rho) {
                Some(v) => v,
                None => break InnerExit::Failure,
            };
            inner += 1;
            total_inner += 1;

            for e in elements.iter_mut() {
                let s: Vec<f64> = e.cols.iter().map(|&c| new_pt.x[c] - pt.x[c]).collect();
                let g1 = e.gradient(&sp.rows, &new_pt.fgrad, &new_pt.jac, &new_pt.mu);
                let g0 = e.gradient(&sp.rows, &pt.fgrad, &pt.jac, &new_pt.mu);
                let y: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
                e.update(&s, &y);
            }
            let s: Vec<f64> = (0..n).map(|i| new_pt.x[i] - pt.x[i]).collect();
            if cfg.lbfgs_memory > 0 {
                let y: Vec<f64> = (0..n).map(|i| new_pt.grad[i] - pt.grad[i]).collect();
                let ss: f64 = s.iter().map(|v| v * v).sum();
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 * (ss * yy).sqrt() {
                    if mem.len() == cfg.lbfgs_memory {
                        mem.pop_front();
                    }
                    mem.push_back(Pair { s: s.clone(), y });
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                let (eq, ineq) = unscaled_residuals(&sp, &new_pt.c, &g_lb, &g_ub);
                t.push(TraceRow {
                    outer,
                    iteration: total_inner,
                    merit: new_pt.merit,
                    objective: new_pt.f * sp.sf,
                    equality_residual: eq,
                    obstacle_violation: ineq.max(0.0),
                    projected_gradient: sp.projected_gradient_norm(&new_pt.x, &new_pt.grad),
                    step_norm: s.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                    penalty: rho,
                });
            }
            pt = new_pt;
        };
        if let InnerExit::Failure = exit {
            status = Status::EvaluationFailure;
            break;
        }

        // Multiplier update and convergence test.
        let mu = pt.mu.clone();
        let violation = (0..m)
            .map(|i| (pt.c[i] - (pt.c[i] + mu[i] / rho).clamp(sp.clb[i], sp.cub[i])).abs())
            .fold(0.0f64, f64::max);
        lam = mu.iter().map(|v| v.clamp(-MAX_MULTIPLIER, MAX_MULTIPLIER)).collect();
        let (eq, ineq) = unscaled_residuals(&sp, &pt.c, &g_lb, &g_ub);
        kkt = sp.projected_gradient_norm(&pt.x, &pt.grad);
        let complementarity = (0..m)
            .filter(|&i| sp.clb[i] != sp.cub[i])
            .map(|i| {
                let slack = (sp.cub[i] - pt.c[i]).max(0.0).min((pt.c[i] - sp.clb[i]).max(0.0));
                lam[i].abs().min(slack)
            })
            .fold(0.0f64, f64::max);
        if eq <= cfg.constraint_tolerance
            && ineq <= cfg.constraint_tolerance
            && kkt <= cfg.kkt_tolerance
            && complementarity <= cfg.kkt_tolerance
        {
            status = Status::Converged;
            break;
        }
        let feasible_enough = eq <= cfg.constraint_tolerance && ineq <= cfg.constraint_tolerance;
        if !feasible_enough && violation > cfg.violation_reduction * prev_violation {
            rho = (rho * cfg.penalty_growth).min(MAX_PENALTY);
        }
        prev_violation = violation;
        omega = (omega * 0.1).max(cfg.kkt_tolerance);
        if let InnerExit::Stalled = exit {
            omega = cfg.kkt_tolerance;
        }
    }

    let x = pt.x;
    Ok(finish(p, &sp, x, &lam, outer, total_inner, started, status, kkt))
}

#[allow(clippy::too_many_arguments)]
fn finish<P: NonlinearProgram>(
    p: &P,
    sp: &Scaled<'_, P>,
    x: Vec<f64>,
    lam: &[f64],
    outer: usize,
    inner: usize,
    started: Instant,
    status: Status,
    kkt: f64,
) -> NlpSolution {
    let w: Vec<f64> = (0..x.len()).map(|i| x[i] * sp.sw[i]).collect();
    let mut g = vec![0.0; p.n_constraints()];
    p.constraints(&w, &mut g);
    let (g_lb, g_ub) = p.constraint_bounds();
    let (eq, ineq) = residuals(&g, g_lb, g_ub);
    NlpSolution {
        objective: p.objective(&w),
        equality_residual: eq,
        obstacle_violation: ineq.max(0.0),
        kkt_residual: kkt,
        multipliers: (0..lam.len()).map(|i| lam[i] * sp.sf / sp.sc[i]).collect(),
        outer_iterations: outer,
        inner_iterations: inner,
        function_evaluations: sp.evals,
        wall_time: started.elapsed().as_secs_f64(),
        status,
        w,
    }
}

/// Straight-line constant-speed initial guess that ignores obstacles.
pub fn cold_start_guess(
    boundary: &BoundaryConditions,
    params: &VesselParams,
    weights: &CostWeights,
    n_ocp: usize,
) -> Vec<f64> {
    let n_ocp = n_ocp.max(1);
    let layout = Layout::new(n_ocp);
    let delta = boundary.goal - boundary.start;
    let length = delta.norm();
    let heading = if length > 0.0 { delta.y.atan2(delta.x) } else { 0.0 };
    let u = length / boundary.t_max;
    let control = Control::new(steady_state_thrust(params, u), 0.0);
    let mut w = vec![0.0; layout.n_vars()];
    for k in 0..=n_ocp {
        let f = k as f64 / n_ocp as f64;
        let t = boundary.t_max * f;
        let pos = boundary.start + delta * f;
        let state = State::new(pos.x, pos.y, heading, u, 0.0, 0.0);
        let (e, tr) = cost_terms(weights, params, &state, &control);
        let j = (weights.k_e * e + weights.k_t * tr) * t;
        layout
            .z_mut(&mut w, k)
            .copy_from_slice(&[pos.x, pos.y, heading, u, 0.0, 0.0, j]);
        if k < n_ocp {
            layout.u_mut(&mut w, k).copy_from_slice(&control.to_array());
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x - 1)^2 + 4 (y + 2)^2 written with an auxiliary cost variable
    /// `z >= (x - 1)^2 + 4 (y + 2)^2` so the objective stays linear.
    struct Quadratic {
        lb: Vec<f64>,
        ub: Vec<f64>,
        glb: Vec<f64>,
        gub: Vec<f64>,
        s: Vec<(usize, usize)>,
    }

    impl Quadratic {
        fn new() -> Self {
            Self {
                lb: vec![-10.0, -10.0, -100.0],
                ub: vec![10.0, 10.0, 100.0],
                glb: vec![f64::NEG_INFINITY],
                gub: vec![0.0],
                s: vec![(0, 0), (0, 1), (0, 2)],
            }
        }
    }

    impl NonlinearProgram for Quadratic {
        fn n_vars(&self) -> usize {
            3
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn variable_bounds(&self) -> (&[f64], &[f64]) {
            (&self.lb, &self.ub)
        }
        fn constraint_bounds(&self) -> (&[f64], &[f64]) {
            (&self.glb, &self.gub)
        }
        fn jacobian_structure(&self) -> &[(usize, usize)] {
            &self.s
        }
        fn objective(&self, w: &[f64]) -> f64 {
            w[2]
        }
        fn objective_gradient(&self, _w: &[f64], g: &mut [f64]) {
            g.copy_from_slice(&[0.0, 0.0, 1.0]);
        }
        fn constraints(&self, w: &[f64], g: &mut [f64]) {
            g[0] = (w[0] - 1.0).powi(2) + 4.0 * (w[1] + 2.0).powi(2) - w[2];
        }
        fn constraints_and_jacobian(&self, w: &[f64], g: &mut [f64], j: &mut [f64]) {
            self.constraints(w, g);
            j.copy_from_slice(&[2.0 * (w[0] - 1.0), 8.0 * (w[1] + 2.0), -1.0]);
        }
    }

    #[test]
    fn inequality_embedded_quadratic() {
        let sol = solve(&Quadratic::new(), &[5.0, 5.0, 50.0], &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, Status::Converged);
        assert!((sol.w[0] - 1.0).abs() < 1e-5, "{:?}", sol.w);
        assert!((sol.w[1] + 2.0).abs() < 1e-5, "{:?}", sol.w);
        assert!(sol.objective.abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = Quadratic::new();
        assert!(solve(&p, &[0.0; 2], &SolverConfig::default()).is_err());
        let cfg = SolverConfig {
            penalty_growth: 1.0,
            ..SolverConfig::default()
        };
        assert!(solve(&p, &[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn trace_rows_are_monotone_within_outer() {
        let mut trace = Vec::new();
        let sol = solve_with_trace(
            &Quadratic::new(),
            &[-3.0, 4.0, 0.0],
            &SolverConfig::default(),
            &mut trace,
        )
        .unwrap();
        assert_eq!(sol.inner_iterations, trace.len());
        for w in trace.windows(2) {
            if w[0].outer == w[1].outer {
                // Steps within rounding noise of the merit are accepted.
                assert!(w[1].merit <= w[0].merit + 1e-12 * (1.0 + w[0].merit.abs()));
            }
        }
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), trace.len() + 1);
    }
}
