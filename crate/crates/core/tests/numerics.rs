mod common;

use asv_planner::vessel_model::{cost_terms, cost_to_go, dynamics, rotation, shooting_map, turn_cost};
use asv_planner::{
    g_o, AugmentedState, Control, CostWeights, EllipseObstacle, ObstacleSet, Point2, State, VesselParams,
};
use common::{g_o_boundary_max, jacobian_vs_fd, rk4_orders, turn_cost_endpoints_exact};
use nalgebra::Matrix3;
use proptest::prelude::*;

#[test]
fn rk4_converges_with_fourth_order() {
    let orders = rk4_orders();
    assert!(orders.iter().all(|&p| p >= 3.8), "{orders:?}");
}

#[test]
fn forward_mode_jacobian_matches_central_differences() {
    let rep = jacobian_vs_fd(100, 0xD1FF);
    assert!(rep.max_relative_error <= 1e-5, "{rep:?}");
    assert!(rep.max_outside_structure <= 1e-7, "{rep:?}");
}

#[test]
fn turn_cost_is_normalized_exactly() {
    assert!(turn_cost_endpoints_exact());
}

#[test]
fn obstacle_constraint_vanishes_on_the_boundary() {
    assert!(g_o_boundary_max(10_000, 0xB0) <= 1e-12);
}

fn kinetic_energy(p: &VesselParams, s: &State) -> f64 {
    let nu = nalgebra::Vector3::new(s.u, s.v, s.r);
    0.5 * nu.dot(&(p.mass_matrix() * nu))
}

#[test]
fn unforced_motion_loses_kinetic_energy() {
    let p = VesselParams::default();
    let w = CostWeights::default();
    let mut z = AugmentedState::new(State::new(0.0, 0.0, 0.2, 6.0, -1.5, 0.3), 0.0);
    let mut ke = kinetic_energy(&p, &z.state);
    for _ in 0..10_000 {
        z = shooting_map(&p, &w, &z, &Control::new(0.0, 0.0), 0.01, 1);
        let next = kinetic_energy(&p, &z.state);
        assert!(next <= ke, "{next} > {ke}");
        ke = next;
    }
}

fn state() -> impl Strategy<Value = State> {
    (
        -1e3f64..1e3,
        -1e3f64..1e3,
        -6.0f64..6.0,
        0.0f64..10.0,
        -3.0f64..3.0,
        -0.6f64..0.6,
    )
        .prop_map(|(x, y, psi, u, v, r)| State::new(x, y, psi, u, v, r))
}

fn control() -> impl Strategy<Value = Control> {
    (-6550.0f64..13100.0, -4000.0f64..4000.0).prop_map(|(a, b)| Control::new(a, b))
}

fn ellipse() -> impl Strategy<Value = EllipseObstacle> {
    (
        -500.0f64..500.0,
        -500.0f64..500.0,
        1.0f64..300.0,
        1.0f64..300.0,
        -4.0f64..4.0,
    )
        .prop_map(|(x, y, a, b, al)| EllipseObstacle::new(x, y, a, b, al).unwrap())
}

proptest! {
    #[test]
    fn rotation_is_orthogonal(psi in -20.0f64..20.0) {
        let r = rotation(psi);
        prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-14);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn dynamics_are_heading_equivariant(s in state(), u in control(), d in -3.0f64..3.0) {
        let p = VesselParams::default();
        let f = dynamics(&p, &s, &u);
        let g = dynamics(&p, &State { psi: s.psi + d, ..s }, &u);
        let (c, sn) = (d.cos(), d.sin());
        prop_assert!((g[0] - (c * f[0] - sn * f[1])).abs() <= 1e-9);
        prop_assert!((g[1] - (sn * f[0] + c * f[1])).abs() <= 1e-9);
        for i in 2..6 {
            prop_assert_eq!(f[i], g[i]);
        }
        let moved = dynamics(&p, &State { x: s.x + 100.0, y: s.y - 50.0, ..s }, &u);
        prop_assert_eq!(f, moved);
    }

    #[test]
    fn running_cost_is_even_and_nonnegative(s in state(), u in control()) {
        let p = VesselParams::default();
        let w = CostWeights::default();
        let f = cost_to_go(&w, &p, &s, &u);
        prop_assert!(f >= 0.0);
        let flipped = cost_to_go(&w, &p, &State { r: -s.r, ..s }, &u);
        prop_assert!((f - flipped).abs() <= 1e-12 * f.max(1.0));
        let (e, t) = cost_terms(&w, &p, &s, &u);
        prop_assert!(e >= 0.0 && t >= 0.0);
    }

    #[test]
    fn turn_cost_grows_with_rate(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let p = VesselParams::default();
        let w = CostWeights::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(turn_cost(&w, &p, lo) <= turn_cost(&w, &p, hi));
        prop_assert_eq!(turn_cost(&w, &p, hi), turn_cost(&w, &p, -hi));
    }

    #[test]
    fn constraint_sign_matches_collision(o in ellipse(), x in -900.0f64..900.0, y in -900.0f64..900.0) {
        let set = ObstacleSet::new(vec![o], 1e-6, 0.0).unwrap();
        let q = o.quadratic(x, y);
        prop_assume!((q - 1.0).abs() > 1e-9);
        let inside = set.point_in_collision(x, y, false);
        prop_assert_eq!(g_o(&o, 1e-6, x, y) > 0.0, q < 1.0);
        prop_assert_eq!(inside, q < 1.0);
    }

    #[test]
    fn constraint_is_rotation_invariant(o in ellipse(), x in -900.0f64..900.0, y in -900.0f64..900.0, th in -4.0f64..4.0) {
        let (c, s) = (th.cos(), th.sin());
        let rot = |px: f64, py: f64| (c * px - s * py, s * px + c * py);
        let (cx, cy) = rot(o.x_c, o.y_c);
        let turned = EllipseObstacle::new(cx, cy, o.x_a, o.y_a, o.alpha + th).unwrap();
        let (rx, ry) = rot(x, y);
        let (a, b) = (g_o(&o, 1e-6, x, y), g_o(&turned, 1e-6, rx, ry));
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn segment_test_agrees_with_dense_sampling(
        o in ellipse(),
        a in (-900.0f64..900.0, -900.0f64..900.0),
        b in (-900.0f64..900.0, -900.0f64..900.0),
    ) {
        let set = ObstacleSet::new(vec![o], 1e-6, 0.0).unwrap();
        let (p1, p2) = (Point2::new(a.0, a.1), Point2::new(b.0, b.1));
        let q_min = (0..=4000)
            .map(|i| {
                let p = p1 + (p2 - p1) * (i as f64 / 4000.0);
                o.quadratic(p.x, p.y)
            })
            .fold(f64::INFINITY, f64::min);
        let exact = set.segment_in_collision(p1, p2, false);
        if q_min < 1.0 - 1e-9 {
            prop_assert!(exact);
        }
        if exact {
            prop_assert!(q_min < 1.0 + 1e-3, "q_min {}", q_min);
        }
    }
}
