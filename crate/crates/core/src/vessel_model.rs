//! 3-DOF surface vessel model.
//!
//! ```text
//! eta_dot = R(psi) nu
//! M nu_dot + C(nu) nu + D(nu) nu = tau(u),   tau(u) = [X, 0, N]^T
//! ```
//!
//! with `eta = [x, y, psi]`, `nu = [u, v, r]` and the state `x = [eta, nu]`.
//! `C(nu)` is derived from `M` through the skew-symmetric momentum form
//!
//! ```text
//! p = M nu,   C(nu) = [[0, 0, -p2], [0, 0, p1], [p2, -p1, 0]]
//! ```
//!
//! so that `nu^T C(nu) nu = 0`. Damping is diagonal, linear plus quadratic:
//! `D(nu) nu = d_l .* nu + d_q .* |nu| .* nu`.
//!
//! The running cost integrated alongside the dynamics is
//! `F = K_e (|u X| + |r N|) + K_t F_t(r)` with
//! `F_t(r) = (a_t r^2 + 1 - exp(-r^2 / b_t)) / F_t(r_max)`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{PlanError, Result};

pub const STATE_DIM: usize = 6;
pub const CONTROL_DIM: usize = 2;
/// State plus accumulated cost.
pub const AUG_DIM: usize = STATE_DIM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub x_lb: f64,
    pub x_ub: f64,
    pub n_lb: f64,
    pub n_ub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub u_lb: f64,
    pub u_ub: f64,
    pub v_lb: f64,
    pub v_ub: f64,
    pub r_lb: f64,
    pub r_ub: f64,
    /// Bounds on the unwrapped heading.
    #[serde(default = "default_psi_lb")]
    pub psi_lb: f64,
    #[serde(default = "default_psi_ub")]
    pub psi_ub: f64,
}

fn default_psi_lb() -> f64 {
    -4.0 * std::f64::consts::PI
}

fn default_psi_ub() -> f64 {
    4.0 * std::f64::consts::PI
}

/// Serialized form of [`VesselParams`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VesselParamsSpec {
    pub mass_matrix: [[f64; 3]; 3],
    pub damping_linear: [f64; 3],
    pub damping_quadratic: [f64; 3],
    pub control_bounds: ControlBounds,
    pub state_bounds: StateBounds,
    pub r_max: f64,
    pub r_turn_min: f64,
}

/// Inertia, damping and actuator/state limits of the vessel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VesselParamsSpec", into = "VesselParamsSpec")]
pub struct VesselParams {
    mass_matrix: [[f64; 3]; 3],
    mass_inverse: [[f64; 3]; 3],
    pub damping_linear: [f64; 3],
    pub damping_quadratic: [f64; 3],
    pub control_bounds: ControlBounds,
    pub state_bounds: StateBounds,
    pub r_max: f64,
    pub min_turn_radius: f64,
}

impl TryFrom<VesselParamsSpec> for VesselParams {
    type Error = PlanError;

    fn try_from(spec: VesselParamsSpec) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| spec.mass_matrix[i][j]);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(PlanError::InvalidParams("mass matrix has non-finite entries".into()));
        }
        if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
            return Err(PlanError::InvalidParams("mass matrix is not symmetric".into()));
        }
        let eig = m.symmetric_eigenvalues();
        if eig.iter().any(|&e| e <= 0.0) {
            return Err(PlanError::InvalidParams(format!(
                "mass matrix is not positive definite (eigenvalues {:?})",
                eig.as_slice()
            )));
        }
        let inv = m
            .try_inverse()
            .ok_or_else(|| PlanError::InvalidParams("mass matrix is singular".into()))?;
        if spec
            .damping_linear
            .iter()
            .chain(spec.damping_quadratic.iter())
            .any(|&d| !(d >= 0.0))
        {
            return Err(PlanError::InvalidParams(
                "damping coefficients must be nonnegative".into(),
            ));
        }
        let cb = &spec.control_bounds;
        let sb = &spec.state_bounds;
        let pairs = [
            ("X", cb.x_lb, cb.x_ub),
            ("N", cb.n_lb, cb.n_ub),
            ("u", sb.u_lb, sb.u_ub),
            ("v", sb.v_lb, sb.v_ub),
            ("r", sb.r_lb, sb.r_ub),
            ("psi", sb.psi_lb, sb.psi_ub),
        ];
        for (name, lb, ub) in pairs {
            if !(lb <= ub) {
                return Err(PlanError::InvalidParams(format!("bound on {name}: {lb} > {ub}")));
            }
        }
        if !(spec.r_max > 0.0) {
            return Err(PlanError::InvalidParams("r_max must be positive".into()));
        }
        if !(spec.r_turn_min > 0.0) {
            return Err(PlanError::InvalidParams("r_turn_min must be positive".into()));
        }
        let mut mass_inverse = [[0.0; 3]; 3];
        for (i, row) in mass_inverse.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[(i, j)];
            }
        }
        Ok(Self {
            mass_matrix: spec.mass_matrix,
            mass_inverse,
            damping_linear: spec.damping_linear,
            damping_quadratic: spec.damping_quadratic,
            control_bounds: spec.control_bounds,
            state_bounds: spec.state_bounds,
            r_max: spec.r_max,
            min_turn_radius: spec.r_turn_min,
        })
    }
}

impl From<VesselParams> for VesselParamsSpec {
    fn from(p: VesselParams) -> Self {
        Self {
            mass_matrix: p.mass_matrix,
            damping_linear: p.damping_linear,
            damping_quadratic: p.damping_quadratic,
            control_bounds: p.control_bounds,
            state_bounds: p.state_bounds,
            r_max: p.r_max,
            r_turn_min: p.min_turn_radius,
        }
    }
}

impl Default for VesselParams {
    /// Representative 8 m class high-speed craft: diagonal inertia including
    /// added mass, linear plus quadratic damping.
    fn default() -> Self {
        let r_max = 40f64.to_radians();
        VesselParams::try_from(VesselParamsSpec {
            mass_matrix: [[3980.0, 0.0, 0.0], [0.0, 3980.0, 0.0], [0.0, 0.0, 19703.0]],
            damping_linear: [50.0, 200.0, 1281.0],
            damping_quadratic: [135.0, 2000.0, 0.0],
            control_bounds: ControlBounds {
                x_lb: -6550.0,
                x_ub: 13100.0,
                n_lb: -4000.0,
                n_ub: 4000.0,
            },
            state_bounds: StateBounds {
                u_lb: 0.0,
                u_ub: 10.0,
                v_lb: -4.0,
                v_ub: 4.0,
                r_lb: -r_max,
                r_ub: r_max,
                psi_lb: default_psi_lb(),
                psi_ub: default_psi_ub(),
            },
            r_max,
            r_turn_min: 24.5,
        })
        .expect("default vessel parameters are valid")
    }
}

impl VesselParams {
    pub fn mass_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.mass_matrix[i][j])
    }

    pub fn mass_inverse(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.mass_inverse[i][j])
    }

    /// `C(nu)` for the given body velocities.
    pub fn coriolis(&self, nu: [f64; 3]) -> Matrix3<f64> {
        let p = self.mass_matrix() * nalgebra::Vector3::from(nu);
        Matrix3::new(0.0, 0.0, -p[1], 0.0, 0.0, p[0], p[1], -p[0], 0.0)
    }
}

/// Running-cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostWeightsSpec")]
pub struct CostWeights {
    pub k_e: f64,
    pub k_t: f64,
    pub a_t: f64,
    pub b_t: f64,
    /// Half-width of the smooth absolute-value surrogate.
    pub abs_smoothing: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct CostWeightsSpec {
    pub k_e: f64,
    pub k_t: f64,
    pub a_t: f64,
    pub b_t: f64,
    #[serde(default = "default_abs_smoothing")]
    pub abs_smoothing: f64,
}

fn default_abs_smoothing() -> f64 {
    1e-3
}

impl TryFrom<CostWeightsSpec> for CostWeights {
    type Error = PlanError;
    fn try_from(s: CostWeightsSpec) -> Result<Self> {
        CostWeights::new(s.k_e, s.k_t, s.a_t, s.b_t, s.abs_smoothing)
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            k_e: 3.5e-4,
            k_t: 800.0,
            a_t: 112.0,
            b_t: 6.25e-5,
            abs_smoothing: default_abs_smoothing(),
        }
    }
}

impl CostWeights {
    pub fn new(k_e: f64, k_t: f64, a_t: f64, b_t: f64, abs_smoothing: f64) -> Result<Self> {
        for (name, v) in [
            ("k_e", k_e),
            ("k_t", k_t),
            ("a_t", a_t),
            ("b_t", b_t),
            ("abs_smoothing", abs_smoothing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlanError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            k_e,
            k_t,
            a_t,
            b_t,
            abs_smoothing,
        })
    }

    fn turn_shape<T: Scalar>(&self, r: T) -> T {
        let r2 = r * r;
        r2 * self.a_t + 1.0 - (-(r2 / self.b_t)).exp()
    }

    /// Normalizer of the turn-rate term, its value at `r_max`.
    pub fn turn_normalizer(&self, r_max: f64) -> f64 {
        self.turn_shape(r_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl State {
    pub fn new(x: f64, y: f64, psi: f64, u: f64, v: f64, r: f64) -> Self {
        Self { x, y, psi, u, v, r }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.x, self.y, self.psi, self.u, self.v, self.r]
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub tau_x: f64,
    pub tau_n: f64,
}

impl Control {
    pub fn new(tau_x: f64, tau_n: f64) -> Self {
        Self { tau_x, tau_n }
    }

    pub fn to_array(&self) -> [f64; CONTROL_DIM] {
        [self.tau_x, self.tau_n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentedState {
    pub state: State,
    pub cost: f64,
}

impl AugmentedState {
    pub fn new(state: State, cost: f64) -> Self {
        Self { state, cost }
    }

    pub fn to_array(&self) -> [f64; AUG_DIM] {
        let s = self.state.to_array();
        [s[0], s[1], s[2], s[3], s[4], s[5], self.cost]
    }

    pub fn from_array(a: [f64; AUG_DIM]) -> Self {
        Self {
            state: State::new(a[0], a[1], a[2], a[3], a[4], a[5]),
            cost: a[6],
        }
    }
}

/// `R(psi)`.
pub fn rotation(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn dynamics_generic<T: Scalar>(
    p: &VesselParams,
    x: &[T; STATE_DIM],
    tau: &[T; CONTROL_DIM],
) -> [T; STATE_DIM] {
    let (psi, u, v, r) = (x[2], x[3], x[4], x[5]);
    let (s, c) = (psi.sin(), psi.cos());
    let nu = [u, v, r];

    let m = &p.mass_matrix;
    let p1 = u * m[0][0] + v * m[0][1] + r * m[0][2];
    let p2 = u * m[1][0] + v * m[1][1] + r * m[1][2];
    // C(nu) nu
    let cnu = [-(p2 * r), p1 * r, p2 * u - p1 * v];

    let dl = &p.damping_linear;
    let dq = &p.damping_quadratic;
    let mut rhs = [T::cst(0.0); 3];
    for i in 0..3 {
        let damping = nu[i] * dl[i] + nu[i] * nu[i].abs() * dq[i];
        rhs[i] = -cnu[i] - damping;
    }
    rhs[0] = rhs[0] + tau[0];
    rhs[2] = rhs[2] + tau[1];

    let mi = &p.mass_inverse;
    let mut nu_dot = [T::cst(0.0); 3];
    for (i, out) in nu_dot.iter_mut().enumerate() {
        *out = rhs[0] * mi[i][0] + rhs[1] * mi[i][1] + rhs[2] * mi[i][2];
    }

    [u * c - v * s, u * s + v * c, r, nu_dot[0], nu_dot[1], nu_dot[2]]
}

/// State derivative `f(x, u)`.
pub fn dynamics(params: &VesselParams, x: &State, u: &Control) -> [f64; STATE_DIM] {
    dynamics_generic(params, &x.to_array(), &u.to_array())
}

#[inline]
fn smooth_abs<T: Scalar>(s: T, delta: f64) -> T {
    (s * s + delta * delta).sqrt() - delta
}

/// Unweighted energy and normalized turn-rate terms `(F_e, F_t)`.
pub(crate) fn cost_terms_generic<T: Scalar>(
    w: &CostWeights,
    p: &VesselParams,
    x: &[T; STATE_DIM],
    tau: &[T; CONTROL_DIM],
) -> (T, T) {
    let (u, r) = (x[3], x[5]);
    let energy = smooth_abs(u * tau[0], w.abs_smoothing) + smooth_abs(r * tau[1], w.abs_smoothing);
    let turn = w.turn_shape(r) / w.turn_normalizer(p.r_max);
    (energy, turn)
}

pub(crate) fn cost_generic<T: Scalar>(
    w: &CostWeights,
    p: &VesselParams,
    x: &[T; STATE_DIM],
    tau: &[T; CONTROL_DIM],
) -> T {
    let (e, t) = cost_terms_generic(w, p, x, tau);
    e * w.k_e + t * w.k_t
}

/// Running cost `F(x, u)`.
pub fn cost_to_go(weights: &CostWeights, params: &VesselParams, x: &State, u: &Control) -> f64 {
    cost_generic(weights, params, &x.to_array(), &u.to_array())
}

/// Energy integrand `F_e` (smoothed) and normalized turn integrand `F_t`.
pub fn cost_terms(weights: &CostWeights, params: &VesselParams, x: &State, u: &Control) -> (f64, f64) {
    cost_terms_generic(weights, params, &x.to_array(), &u.to_array())
}

/// Normalized turn-rate term `F_t(r)`.
pub fn turn_cost(weights: &CostWeights, params: &VesselParams, r: f64) -> f64 {
    weights.turn_shape(r) / weights.turn_normalizer(params.r_max)
}

fn augmented_rhs<T: Scalar>(
    p: &VesselParams,
    w: &CostWeights,
    z: &[T; AUG_DIM],
    tau: &[T; CONTROL_DIM],
) -> [T; AUG_DIM] {
    let x = [z[0], z[1], z[2], z[3], z[4], z[5]];
    let f = dynamics_generic(p, &x, tau);
    let j = cost_generic(w, p, &x, tau);
    [f[0], f[1], f[2], f[3], f[4], f[5], j]
}

/// Classical RK4 on the augmented system over `[0, h]` with `substeps`
/// equal sub-intervals and the control held constant.
pub(crate) fn rk4_generic<T: Scalar>(
    p: &VesselParams,
    w: &CostWeights,
    z0: &[T; AUG_DIM],
    tau: &[T; CONTROL_DIM],
    h: f64,
    substeps: usize,
) -> [T; AUG_DIM] {
    let dt = h / substeps as f64;
    let mut z = *z0;
    for _ in 0..substeps {
        let k1 = augmented_rhs(p, w, &z, tau);
        let k2 = augmented_rhs(p, w, &axpy(&z, &k1, 0.5 * dt), tau);
        let k3 = augmented_rhs(p, w, &axpy(&z, &k2, 0.5 * dt), tau);
        let k4 = augmented_rhs(p, w, &axpy(&z, &k3, dt), tau);
        for i in 0..AUG_DIM {
            z[i] = z[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
    }
    z
}

#[inline]
fn axpy<T: Scalar>(z: &[T; AUG_DIM], k: &[T; AUG_DIM], a: f64) -> [T; AUG_DIM] {
    let mut out = *z;
    for i in 0..AUG_DIM {
        out[i] = z[i] + k[i] * a;
    }
    out
}

/// Discrete shooting map `z_{k+1} = F(z_k, u_k)`.
pub fn shooting_map(
    params: &VesselParams,
    weights: &CostWeights,
    z: &AugmentedState,
    u: &Control,
    h: f64,
    substeps: usize,
) -> AugmentedState {
    let substeps = substeps.max(1);
    AugmentedState::from_array(rk4_generic(params, weights, &z.to_array(), &u.to_array(), h, substeps))
}

/// Surge force holding `u_nom` in steady straight motion.
pub fn steady_state_thrust(params: &VesselParams, u_nom: f64) -> f64 {
    params.damping_linear[0] * u_nom + params.damping_quadratic[0] * u_nom * u_nom.abs()
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
