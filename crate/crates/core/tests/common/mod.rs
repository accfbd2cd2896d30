//! Oracles shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::path::PathBuf;

use asv_planner::astar::astar_nodes;
use asv_planner::nlp_solver::NonlinearProgram;
use asv_planner::obstacle_map::EllipseObstacle;
use asv_planner::vessel_model::{cost_to_go, dynamics, shooting_map, turn_cost};
use asv_planner::{
    astar_search, build_grid, connect_waypoints, g_o, reduce_waypoints, transcribe, AugmentedState, BoundaryConditions,
    Control, CostWeights, MapBounds, ObstacleSet, Point2, Scenario, State, VesselParams, WaypointPath,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn two_island() -> Scenario {
    Scenario::load(scenario_path("two_island.toml")).expect("shipped scenario loads")
}

// ---------------------------------------------------------------- A*

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Shortest 8-connected path length between two nodes of a `size x size`
/// unit grid at the origin, or `None` if unreachable.
pub fn dijkstra(set: &ObstacleSet, size: usize, s: (usize, usize), g: (usize, usize)) -> Option<f64> {
    let pos = |i: usize| Point2::new((i / size) as f64, (i % size) as f64);
    let free = |i: usize| {
        let p = pos(i);
        !set.point_in_collision(p.x, p.y, true)
    };
    let (src, dst) = (s.0 * size + s.1, g.0 * size + g.1);
    let mut dist = vec![f64::INFINITY; size * size];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry(0.0, src));
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == dst {
            return Some(d);
        }
        let (x, y) = ((i / size) as i64, (i % size) as i64);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                    continue;
                }
                let j = nx as usize * size + ny as usize;
                if !free(i) || !free(j) || set.segment_in_collision(pos(i), pos(j), true) {
                    continue;
                }
                let nd = d + ((dx * dx + dy * dy) as f64).sqrt();
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
    }
    None
}

pub fn random_obstacles(rng: &mut StdRng, size: f64, count: std::ops::RangeInclusive<usize>) -> ObstacleSet {
    let n = rng.gen_range(count);
    let obstacles = (0..n)
        .map(|_| {
            EllipseObstacle::new(
                rng.gen_range(0.1 * size..0.9 * size),
                rng.gen_range(0.1 * size..0.9 * size),
                rng.gen_range(0.05 * size..0.3 * size),
                rng.gen_range(0.03 * size..0.2 * size),
                rng.gen_range(0.0..PI),
            )
            .unwrap()
        })
        .collect();
    ObstacleSet::new(obstacles, 1e-6, 0.0).unwrap()
}

pub fn unit_bounds(size: usize) -> MapBounds {
    MapBounds {
        x_min: 0.0,
        x_max: (size - 1) as f64,
        y_min: 0.0,
        y_max: (size - 1) as f64,
    }
}

#[derive(Debug, Default)]
pub struct AstarReport {
    pub cases: usize,
    pub mismatches: usize,
    pub unreachable: usize,
    pub bad_edges: usize,
}

/// A* against Dijkstra on `cases` random `size x size` unit grids.
pub fn astar_vs_dijkstra(cases: usize, size: usize, seed: u64) -> AstarReport {
    let bounds = unit_bounds(size);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rep = AstarReport::default();
    while rep.cases < cases {
        let set = random_obstacles(&mut rng, size as f64, 1..=4);
        let grid = build_grid(&set, &bounds, 1.0).unwrap();
        let pick = |rng: &mut StdRng| loop {
            let n = (rng.gen_range(0..size), rng.gen_range(0..size));
            if !grid.is_blocked(n) {
                break n;
            }
        };
        let (s, g) = (pick(&mut rng), pick(&mut rng));
        rep.cases += 1;
        match (dijkstra(&set, size, s, g), astar_nodes(&grid, &set, s, g)) {
            (Some(d), Ok(path)) => {
                if (path.length - d).abs() > 1e-9 || path.nodes.first() != Some(&s) || path.nodes.last() != Some(&g) {
                    rep.mismatches += 1;
                }
                let mut len = 0.0;
                for w in path.nodes.windows(2) {
                    let (a, b) = (grid.position(w[0]), grid.position(w[1]));
                    let step = (b - a).norm();
                    if set.segment_in_collision(a, b, true) || !(step > 0.0 && step <= 2f64.sqrt() + 1e-12) {
                        rep.bad_edges += 1;
                    }
                    len += step;
                }
                if (len - path.length).abs() > 1e-9 {
                    rep.mismatches += 1;
                }
            }
            (None, Err(_)) => rep.unreachable += 1,
            _ => rep.mismatches += 1,
        }
    }
    rep
}

// ---------------------------------------------------------- waypoints

fn subsequence_free(pts: &[Point2], idx: &[usize], set: &ObstacleSet) -> bool {
    idx.windows(2)
        .all(|w| !set.segment_in_collision(pts[w[0]], pts[w[1]], true))
}

/// Size of the smallest collision-free subsequence of `pts` keeping both
/// endpoints, by enumerating every subset of the interior points.
pub fn brute_force_min(pts: &[Point2], set: &ObstacleSet) -> usize {
    let n = pts.len();
    if n <= 2 {
        return n;
    }
    let interior = n - 2;
    let mut best = n;
    for mask in 0u32..(1 << interior) {
        let k = mask.count_ones() as usize + 2;
        if k >= best {
            continue;
        }
        let mut idx = vec![0];
        idx.extend((0..interior).filter(|b| mask & (1 << b) != 0).map(|b| b + 1));
        idx.push(n - 1);
        if subsequence_free(pts, &idx, set) {
            best = k;
        }
    }
    best
}

/// A deduplicated start + A* + goal polyline with 3 to 12 points.
pub fn random_reduction_instance(rng: &mut StdRng) -> (Vec<Point2>, ObstacleSet) {
    const SIZE: usize = 12;
    let bounds = unit_bounds(SIZE);
    loop {
        let set = random_obstacles(rng, SIZE as f64, 1..=3);
        let grid = build_grid(&set, &bounds, 1.0).unwrap();
        let s = Point2::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..(SIZE - 1) as f64));
        let g = Point2::new(
            rng.gen_range(8.0..(SIZE - 1) as f64),
            rng.gen_range(0.0..(SIZE - 1) as f64),
        );
        if set.point_in_collision(s.x, s.y, true) || set.point_in_collision(g.x, g.y, true) {
            continue;
        }
        let Ok(path) = astar_search(&grid, &set, s, g) else {
            continue;
        };
        let mut raw = vec![s];
        raw.extend(path.points(&grid));
        raw.push(g);
        raw.dedup();
        if (3..=12).contains(&raw.len()) && set.segment_in_collision(s, g, true) {
            return (raw, set);
        }
    }
}

#[derive(Debug, Default)]
pub struct ReductionReport {
    pub cases: usize,
    pub mismatches: usize,
    pub largest_input: usize,
    /// Instances whose minimum keeps at least one interior point.
    pub with_corners: usize,
}

pub fn reduction_vs_brute_force(cases: usize, seed: u64) -> ReductionReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rep = ReductionReport::default();
    for _ in 0..cases {
        let (raw, set) = random_reduction_instance(&mut rng);
        let reduced = reduce_waypoints(&raw, &set);
        rep.cases += 1;
        rep.largest_input = rep.largest_input.max(raw.len());
        let best = brute_force_min(&raw, &set);
        if reduced.waypoints.len() != best {
            rep.mismatches += 1;
        }
        if best > 2 {
            rep.with_corners += 1;
        }
    }
    rep
}

// ----------------------------------------------------------- geometry

/// Random waypoint polyline with legs long enough for most corners to fit.
pub fn random_waypoints(rng: &mut StdRng) -> WaypointPath {
    let n = rng.gen_range(2..=7);
    let mut p = Point2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
    let mut heading: f64 = rng.gen_range(-PI..PI);
    let mut pts = vec![p];
    for _ in 1..n {
        heading += rng.gen_range(-2.8..2.8);
        let len = rng.gen_range(40.0..400.0);
        p += nalgebra::Vector2::new(heading.cos(), heading.sin()) * len;
        pts.push(p);
    }
    WaypointPath { waypoints: pts }
}

#[derive(Debug, Default)]
pub struct GeometryReport {
    pub sets: usize,
    pub rejected: usize,
    pub max_tangent_jump: f64,
    pub max_position_jump: f64,
    pub max_rate_excess: f64,
    pub max_length_error: f64,
    pub max_rate_fd_error: f64,
}

/// Composite Simpson rule of `f` over `[a, b]` with `panels` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Checks continuity, turn-rate bound and arc length of `sets` random paths.
pub fn geometry_suite(sets: usize, seed: u64) -> GeometryReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rep = GeometryReport::default();
    while rep.sets < sets {
        let wp = random_waypoints(&mut rng);
        let r_acc = rng.gen_range(5.0..60.0);
        let r_min = rng.gen_range(5.0..50.0);
        let Ok(g) = connect_waypoints(&wp, r_acc, r_min) else {
            rep.rejected += 1;
            continue;
        };
        rep.sets += 1;
        let u_nom = rng.gen_range(0.5..8.0);
        let offsets = g.element_offsets().to_vec();
        for e in 1..g.elements.len() {
            let before = g.eval_in_element(e - 1, offsets[e], u_nom);
            let after = g.eval_in_element(e, offsets[e], u_nom);
            rep.max_tangent_jump = rep.max_tangent_jump.max((before.gamma - after.gamma).abs());
            rep.max_position_jump = rep.max_position_jump.max((before.position - after.position).norm());
        }
        let bound = u_nom / r_min;
        for k in 0..=200 {
            let s = g.total_length * k as f64 / 200.0;
            let p = g.eval(s, u_nom).unwrap();
            rep.max_rate_excess = rep.max_rate_excess.max((p.turn_rate.abs() - bound) / bound);
            // d gamma / ds * u_nom, away from element joints.
            let h = 1e-4;
            let e = g.element_at(s);
            let (lo, hi) = (offsets[e], offsets.get(e + 1).copied().unwrap_or(g.total_length));
            if s - h > lo && s + h < hi {
                let dg = (g.eval(s + h, u_nom).unwrap().gamma - g.eval(s - h, u_nom).unwrap().gamma) / (2.0 * h);
                rep.max_rate_fd_error = rep.max_rate_fd_error.max((dg * u_nom - p.turn_rate).abs());
            }
        }
        let len = g.total_length;
        let h = 1e-5 * len.max(1.0);
        let speed = |s: f64| {
            let a = (s - h).max(0.0);
            let b = (s + h).min(len);
            let pa = g.eval(a, u_nom).unwrap().position;
            let pb = g.eval(b, u_nom).unwrap().position;
            (pb - pa).norm() / (b - a)
        };
        let simpson_len = simpson(speed, 0.0, len, 10_000);
        rep.max_length_error = rep.max_length_error.max((simpson_len - len).abs() / len);
    }
    rep
}

// ----------------------------------------------------------- kernels

pub fn nominal_state() -> (State, Control) {
    (State::new(10.0, -5.0, 0.3, 4.0, 0.3, 0.05), Control::new(2500.0, 900.0))
}

/// Empirical convergence orders of the shooting map on a 5 s interval,
/// measured against a 256-substep reference.
pub fn rk4_orders() -> Vec<f64> {
    let p = VesselParams::default();
    let w = CostWeights::default();
    let (x, u) = nominal_state();
    let z0 = AugmentedState::new(x, 0.0);
    let reference = shooting_map(&p, &w, &z0, &u, 5.0, 256).to_array();
    let err = |n: usize| {
        let z = shooting_map(&p, &w, &z0, &u, 5.0, n).to_array();
        z.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [2, 4, 8, 16].iter().map(|&n| err(n)).collect();
    errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect()
}

pub fn small_problem() -> asv_planner::NlpProblem {
    let boundary = BoundaryConditions {
        start: Point2::new(0.0, 0.0),
        start_surge: 3.0,
        goal: Point2::new(400.0, 60.0),
        t_max: 60.0,
        map: MapBounds {
            x_min: -100.0,
            x_max: 500.0,
            y_min: -200.0,
            y_max: 200.0,
        },
    };
    let obstacles = ObstacleSet::new(
        vec![
            EllipseObstacle::new(150.0, 20.0, 60.0, 30.0, 0.4).unwrap(),
            EllipseObstacle::new(280.0, 60.0, 40.0, 70.0, -0.7).unwrap(),
        ],
        1e-6,
        0.0,
    )
    .unwrap();
    transcribe(
        &boundary,
        &VesselParams::default(),
        &CostWeights::default(),
        &obstacles,
        10,
        4,
    )
    .unwrap()
}

pub fn random_decision_vector(p: &asv_planner::NlpProblem, rng: &mut StdRng) -> Vec<f64> {
    let layout = p.layout;
    let mut w = vec![0.0; layout.n_vars()];
    for k in 0..=layout.n_ocp {
        let z = [
            rng.gen_range(0.0..400.0),
            rng.gen_range(-100.0..150.0),
            rng.gen_range(-PI..PI),
            rng.gen_range(0.5..6.0),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(0.0..1e4),
        ];
        layout.z_mut(&mut w, k).copy_from_slice(&z);
        if k < layout.n_ocp {
            layout
                .u_mut(&mut w, k)
                .copy_from_slice(&[rng.gen_range(-3000.0..8000.0), rng.gen_range(-2000.0..2000.0)]);
        }
    }
    w
}

#[derive(Debug, Default)]
pub struct JacobianReport {
    pub max_relative_error: f64,
    /// Largest finite-difference entry outside the declared structure.
    pub max_outside_structure: f64,
}

/// Forward-mode Jacobian against central differences.
pub fn jacobian_vs_fd(samples: usize, seed: u64) -> JacobianReport {
    let p = small_problem();
    let n = p.n_vars();
    let m = p.n_constraints();
    let structure = p.jacobian_structure().to_vec();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut rep = JacobianReport::default();
    for _ in 0..samples {
        let w = random_decision_vector(&p, &mut rng);
        let (_, jac) = p.eval_constraints_and_jacobian(&w).unwrap();
        let mut dense = vec![0.0; m * n];
        let mut declared = vec![false; m * n];
        for (k, &(r, c)) in structure.iter().enumerate() {
            dense[r * n + c] += jac[k];
            declared[r * n + c] = true;
        }
        let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
        for c in 0..n {
            let h = 1e-6 * w[c].abs().max(1.0);
            let mut wp = w.clone();
            wp[c] += h;
            p.constraints(&wp, &mut gp);
            wp[c] = w[c] - h;
            p.constraints(&wp, &mut gm);
            for r in 0..m {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                if declared[r * n + c] {
                    let ad = dense[r * n + c];
                    let rel = (ad - fd).abs() / fd.abs().max(1.0);
                    rep.max_relative_error = rep.max_relative_error.max(rel);
                } else {
                    rep.max_outside_structure = rep.max_outside_structure.max(fd.abs());
                }
            }
        }
    }
    rep
}

/// Largest `|g_o|` at boundary points of random ellipses.
pub fn g_o_boundary_max(samples: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (xa, ya) = (rng.gen_range(5.0..500.0), rng.gen_range(5.0..500.0));
        let alpha = rng.gen_range(-PI..PI);
        let o = EllipseObstacle::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3), xa, ya, alpha).unwrap();
        let th = rng.gen_range(0.0..2.0 * PI);
        let (lx, ly) = (xa * th.cos(), ya * th.sin());
        let x = o.x_c + alpha.cos() * lx - alpha.sin() * ly;
        let y = o.y_c + alpha.sin() * lx + alpha.cos() * ly;
        worst = worst.max(g_o(&o, 1e-6, x, y).abs());
    }
    worst
}

pub fn turn_cost_endpoints_exact() -> bool {
    let p = VesselParams::default();
    let w = CostWeights::default();
    turn_cost(&w, &p, 0.0) == 0.0 && turn_cost(&w, &p, p.r_max) == 1.0 && turn_cost(&w, &p, -p.r_max) == 1.0
}

// ---------------------------------------------------------- roll-out

fn aug_rhs(p: &VesselParams, w: &CostWeights, z: &[f64; 7], u: &Control) -> [f64; 7] {
    let x = State::new(z[0], z[1], z[2], z[3], z[4], z[5]);
    let f = dynamics(p, &x, u);
    [f[0], f[1], f[2], f[3], f[4], f[5], cost_to_go(w, p, &x, u)]
}

/// Classical RK4 written out independently of the library integrator.
pub fn rk4(p: &VesselParams, w: &CostWeights, z0: [f64; 7], u: &Control, h: f64, substeps: usize) -> [f64; 7] {
    let dt = h / substeps as f64;
    let mut z = z0;
    let add = |z: &[f64; 7], k: &[f64; 7], a: f64| std::array::from_fn::<f64, 7, _>(|i| z[i] + a * k[i]);
    for _ in 0..substeps {
        let k1 = aug_rhs(p, w, &z, u);
        let k2 = aug_rhs(p, w, &add(&z, &k1, dt / 2.0), u);
        let k3 = aug_rhs(p, w, &add(&z, &k2, dt / 2.0), u);
        let k4 = aug_rhs(p, w, &add(&z, &k3, dt), u);
        for i in 0..7 {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z
}

/// Largest per-step mismatch between the returned states and an
/// independent RK4 step from the previous returned state.
pub fn resimulation_error(s: &Scenario, traj: &asv_planner::pipeline::Trajectory) -> f64 {
    let p = s.params();
    let h = s.t_max / s.n_ocp as f64;
    let mut worst = 0.0f64;
    for k in 0..traj.u.len() {
        let next = rk4(&p, &s.weights, traj.z[k].to_array(), &traj.u[k], h, s.k_ocp);
        let got = traj.z[k + 1].to_array();
        for i in 0..7 {
            worst = worst.max((next[i] - got[i]).abs());
        }
    }
    worst
}

pub fn single_island() -> Scenario {
    Scenario::load(scenario_path("single_island.toml")).expect("shipped scenario loads")
}
