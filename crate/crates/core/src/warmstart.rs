//! Time parametrization of the geometric path into an initial guess.
//!
//! The vessel is assumed to move along the path at constant surge
//! `u_nom = L_path / t_max` with zero sway and the path's piecewise-constant
//! turn rate. Inputs are held at the steady-state surge thrust and zero yaw
//! moment. The cost channel is the running integral of the cost-to-go along
//! this (dynamically inconsistent) trajectory.

use std::io::Write;

use crate::error::{PlanError, Result};
use crate::ocp_transcription::Layout;
use crate::path_smoother::GeomPath;
use crate::vessel_model::{
    cost_terms, dynamics, steady_state_thrust, wrap_angle, AugmentedState, Control, CostWeights, State, VesselParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmSample {
    pub t: f64,
    pub z: AugmentedState,
    pub u: Control,
    /// Running integral of the unweighted energy term.
    pub energy: f64,
    /// Running integral of the normalized turn term.
    pub turn: f64,
}

#[derive(Debug, Clone)]
pub struct WarmTrajectory {
    pub t_max: f64,
    pub u_nom: f64,
    pub samples: Vec<WarmSample>,
}

fn sample_state(g: &GeomPath, element: usize, s: f64, u_nom: f64) -> State {
    let p = g.eval_in_element(element, s, u_nom);
    State::new(p.position.x, p.position.y, p.gamma, u_nom, 0.0, p.turn_rate)
}

/// Lift the path into a trajectory with `samples` uniformly spaced times.
pub fn lift(
    g: &GeomPath,
    t_max: f64,
    params: &VesselParams,
    weights: &CostWeights,
    samples: usize,
) -> Result<WarmTrajectory> {
    if !(t_max > 0.0) {
        return Err(PlanError::InvalidParams("t_max must be positive".into()));
    }
    if samples < 2 {
        return Err(PlanError::InvalidParams("need at least two samples".into()));
    }
    let u_nom = g.total_length / t_max;
    if u_nom > params.state_bounds.u_ub {
        return Err(PlanError::InfeasibleSpeed {
            u_nom,
            u_max: params.state_bounds.u_ub,
        });
    }
    let control = Control::new(steady_state_thrust(params, u_nom), 0.0);
    let offsets = g.element_offsets();
    let length = g.total_length;

    let mut out = Vec::with_capacity(samples);
    let (mut energy, mut turn) = (0.0, 0.0);
    let mut prev_s = 0.0;
    for i in 0..samples {
        let t = t_max * i as f64 / (samples - 1) as f64;
        let s = (u_nom * t).min(length);
        if i > 0 {
            // Trapezoid on each piece between element joints, so the
            // piecewise-constant turn rate is integrated without smearing.
            let mut a = prev_s;
            let mut e = g.element_at(a);
            while a < s {
                let b = offsets.get(e + 1).copied().unwrap_or(f64::INFINITY).min(s);
                if b > a {
                    let dt = if u_nom > 0.0 { (b - a) / u_nom } else { 0.0 };
                    let (ea, ta) = cost_terms(weights, params, &sample_state(g, e, a, u_nom), &control);
                    let (eb, tb) = cost_terms(weights, params, &sample_state(g, e, b, u_nom), &control);
                    energy += 0.5 * dt * (ea + eb);
                    turn += 0.5 * dt * (ta + tb);
                }
                a = b;
                e += 1;
                if e >= g.elements.len() {
                    break;
                }
            }
        }
        prev_s = s;
        let state = sample_state(g, g.element_at(s), s, u_nom);
        out.push(WarmSample {
            t,
            z: AugmentedState::new(state, weights.k_e * energy + weights.k_t * turn),
            u: control,
            energy,
            turn,
        });
    }
    Ok(WarmTrajectory {
        t_max,
        u_nom,
        samples: out,
    })
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

impl WarmTrajectory {
    /// Sample linearly interpolated at time `t`.
    pub fn interpolate(&self, t: f64) -> WarmSample {
        let n = self.samples.len();
        let t = t.clamp(0.0, self.t_max);
        let pos = self.samples.partition_point(|s| s.t <= t);
        if pos == 0 {
            return self.samples[0];
        }
        if pos >= n {
            return self.samples[n - 1];
        }
        let (a, b) = (&self.samples[pos - 1], &self.samples[pos]);
        let f = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
        if f == 0.0 {
            return *a;
        }
        let za = a.z.to_array();
        let zb = b.z.to_array();
        let mut z = [0.0; 7];
        for i in 0..7 {
            z[i] = lerp(za[i], zb[i], f);
        }
        WarmSample {
            t,
            z: AugmentedState::from_array(z),
            u: Control::new(lerp(a.u.tau_x, b.u.tau_x, f), lerp(a.u.tau_n, b.u.tau_n, f)),
            energy: lerp(a.energy, b.energy, f),
            turn: lerp(a.turn, b.turn, f),
        }
    }

    /// Samples on the optimal-control grid `t_k = k t_max / n_ocp`.
    pub fn grid_samples(&self, n_ocp: usize) -> Vec<WarmSample> {
        (0..=n_ocp)
            .map(|k| self.interpolate(self.t_max * k as f64 / n_ocp as f64))
            .collect()
    }

    /// Initial decision vector in the `[z_0, u_0, z_1, ..., u_{N-1}, z_N]`
    /// layout.
    pub fn sample_to_grid(&self, n_ocp: usize) -> Vec<f64> {
        let n_ocp = n_ocp.max(1);
        let layout = Layout::new(n_ocp);
        let mut w = vec![0.0; layout.n_vars()];
        for (k, s) in self.grid_samples(n_ocp).iter().enumerate() {
            layout.z_mut(&mut w, k).copy_from_slice(&s.z.to_array());
            if k < n_ocp {
                layout.u_mut(&mut w, k).copy_from_slice(&s.u.to_array());
            }
        }
        w
    }

    pub fn final_cost(&self) -> f64 {
        self.samples.last().map(|s| s.z.cost).unwrap_or(0.0)
    }

    /// Largest `|x_dot - f(x, u)|` over sample intervals (finite differences).
    /// Nonzero in general: the lifted trajectory ignores the vessel dynamics.
    pub fn dynamics_residual(&self, params: &VesselParams) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            if dt <= 0.0 {
                continue;
            }
            let a = w[0].z.state.to_array();
            let b = w[1].z.state.to_array();
            let f = dynamics(params, &w[0].z.state, &w[0].u);
            for i in 0..6 {
                worst = worst.max(((b[i] - a[i]) / dt - f[i]).abs());
            }
        }
        worst
    }

    /// `t,x,y,psi_wrapped,psi,u,v,r,tau_x,tau_n,J` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,psi_wrapped,psi,u,v,r,tau_x,tau_n,J")?;
        for s in &self.samples {
            let x = &s.z.state;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t,
                x.x,
                x.y,
                wrap_angle(x.psi),
                x.psi,
                x.u,
                x.v,
                x.r,
                s.u.tau_x,
                s.u.tau_n,
                s.z.cost
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_smoother::{connect_waypoints, WaypointPath};
    use crate::Point2;

    fn straight() -> GeomPath {
        let wp = WaypointPath {
            waypoints: vec![Point2::new(10.0, 20.0), Point2::new(310.0, 420.0)],
        };
        connect_waypoints(&wp, 10.0, 24.5).unwrap()
    }

    #[test]
    fn straight_line_lift() {
        let p = VesselParams::default();
        let w = CostWeights::default();
        let g = straight();
        let tr = lift(&g, 100.0, &p, &w, 11).unwrap();
        assert!((tr.u_nom - 5.0).abs() < 1e-12);
        let first = tr.samples[0];
        assert_eq!(first.z.cost, 0.0);
        assert_eq!((first.z.state.x, first.z.state.y), (10.0, 20.0));
        let last = tr.samples.last().unwrap();
        assert!((last.z.state.x - 310.0).abs() < 1e-9);
        assert!((last.z.state.y - 420.0).abs() < 1e-9);
        // constant integrand: J linear in t
        let rate = last.z.cost / 100.0;
        for s in &tr.samples {
            assert!((s.z.cost - rate * s.t).abs() < 1e-9 * last.z.cost);
            assert_eq!(s.z.state.v, 0.0);
            assert_eq!(s.u.tau_n, 0.0);
        }
    }

    #[test]
    fn speed_limit_enforced() {
        let p = VesselParams::default();
        let r = lift(&straight(), 1.0, &p, &CostWeights::default(), 5);
        assert!(matches!(r, Err(PlanError::InfeasibleSpeed { .. })));
    }

    #[test]
    fn grid_copy_and_layout() {
        let p = VesselParams::default();
        let w = CostWeights::default();
        let tr = lift(&straight(), 100.0, &p, &w, 11).unwrap();
        let v = tr.sample_to_grid(10);
        assert_eq!(v.len(), 11 * 7 + 10 * 2);
        let layout = Layout::new(10);
        for k in 0..=10 {
            assert_eq!(layout.z(&v, k), &tr.samples[k].z.to_array()[..]);
        }
        assert_eq!(layout.z(&v, 10)[6], tr.final_cost());
        assert!(tr.dynamics_residual(&p).is_finite());
    }
}
