//! Shortest piecewise-linear paths on a uniform grid.
//!
//! Nodes sit at `origin + (i, j) * spacing`. Moves are 8-connected and an edge
//! is usable only if both end nodes are free and the straight edge does not
//! enter an (inflated) obstacle. Edge cost and heuristic are both Euclidean
//! distance, so the heuristic is consistent and the first time the goal is
//! popped its cost is optimal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::obstacle_map::ObstacleSet;
use crate::Point2;

/// Axis-aligned map rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl MapBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min;
        if ok {
            Ok(())
        } else {
            Err(PlanError::DegenerateBounds(format!("{self:?}")))
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

pub type NodeIndex = (usize, usize);

#[derive(Debug, Clone)]
pub struct Grid {
    pub origin: Point2,
    pub spacing: f64,
    pub width: usize,
    pub height: usize,
    blocked: Vec<bool>,
}

pub const NEIGHBOR_OFFSETS: [(isize, isize); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl Grid {
    pub fn position(&self, (i, j): NodeIndex) -> Point2 {
        Point2::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    fn flat(&self, (i, j): NodeIndex) -> usize {
        i * self.height + j
    }

    pub fn is_blocked(&self, n: NodeIndex) -> bool {
        self.blocked[self.flat(n)]
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    /// Neighbors of `n` inside the grid, in a fixed order.
    pub fn neighbors(&self, (i, j): NodeIndex) -> impl Iterator<Item = NodeIndex> + '_ {
        NEIGHBOR_OFFSETS.iter().filter_map(move |&(di, dj)| {
            let ni = i as isize + di;
            let nj = j as isize + dj;
            (ni >= 0 && nj >= 0 && (ni as usize) < self.width && (nj as usize) < self.height)
                .then_some((ni as usize, nj as usize))
        })
    }

    /// Whether the straight edge between two nodes may be traversed.
    pub fn edge_free(&self, set: &ObstacleSet, a: NodeIndex, b: NodeIndex) -> bool {
        !self.is_blocked(a)
            && !self.is_blocked(b)
            && !set.segment_in_collision(self.position(a), self.position(b), true)
    }

    /// Nearest free node within one grid spacing whose connecting segment to
    /// `p` is collision free.
    pub fn snap(&self, set: &ObstacleSet, p: Point2, which: &'static str) -> Result<NodeIndex> {
        let fail = PlanError::SnapFailed { which, x: p.x, y: p.y };
        let fi = ((p.x - self.origin.x) / self.spacing).floor();
        let fj = ((p.y - self.origin.y) / self.spacing).floor();
        if !fi.is_finite() || !fj.is_finite() {
            return Err(fail);
        }
        let mut best: Option<(f64, NodeIndex)> = None;
        for di in -1..=2 {
            for dj in -1..=2 {
                let (ci, cj) = (fi as i64 + di, fj as i64 + dj);
                if ci < 0 || cj < 0 || ci as usize >= self.width || cj as usize >= self.height {
                    continue;
                }
                let n = (ci as usize, cj as usize);
                let d = (self.position(n) - p).norm();
                if d > self.spacing * (1.0 + 1e-12) || self.is_blocked(n) {
                    continue;
                }
                if set.segment_in_collision(p, self.position(n), true) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bd, bn)) => d < bd || (d == bd && n < bn),
                };
                if better {
                    best = Some((d, n));
                }
            }
        }
        best.map(|(_, n)| n).ok_or(fail)
    }

    /// Grid dump: `i,j,x,y,blocked`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,x,y,blocked")?;
        for i in 0..self.width {
            for j in 0..self.height {
                let p = self.position((i, j));
                writeln!(w, "{},{},{},{},{}", i, j, p.x, p.y, self.is_blocked((i, j)) as u8)?;
            }
        }
        Ok(())
    }
}

/// Uniform grid over `bounds`; a node is blocked iff it lies inside an
/// inflated obstacle.
pub fn build_grid(set: &ObstacleSet, bounds: &MapBounds, spacing: f64) -> Result<Grid> {
    bounds.validate()?;
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(PlanError::InvalidParams(format!(
            "grid spacing must be positive, got {spacing}"
        )));
    }
    let width = ((bounds.x_max - bounds.x_min) / spacing + 1e-9).floor() as usize + 1;
    let height = ((bounds.y_max - bounds.y_min) / spacing + 1e-9).floor() as usize + 1;
    if width < 2 || height < 2 {
        return Err(PlanError::DegenerateBounds(format!(
            "grid of {width}x{height} nodes; need at least 2x2"
        )));
    }
    let origin = Point2::new(bounds.x_min, bounds.y_min);
    let mut blocked = Vec::with_capacity(width * height);
    for i in 0..width {
        for j in 0..height {
            let x = origin.x + i as f64 * spacing;
            let y = origin.y + j as f64 * spacing;
            blocked.push(set.point_in_collision(x, y, true));
        }
    }
    Ok(Grid {
        origin,
        spacing,
        width,
        height,
        blocked,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub nodes: Vec<NodeIndex>,
    pub length: f64,
}

impl GridPath {
    pub fn points(&self, grid: &Grid) -> Vec<Point2> {
        self.nodes.iter().map(|&n| grid.position(n)).collect()
    }

    /// `(straight moves, diagonal moves)`.
    pub fn move_counts(&self) -> (usize, usize) {
        self.nodes.windows(2).fold((0, 0), |(s, d), w| {
            let diag = w[0].0 != w[1].0 && w[0].1 != w[1].1;
            if diag {
                (s, d + 1)
            } else {
                (s + 1, d)
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    h: f64,
    node: NodeIndex,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: smallest f, then smallest h, then smallest
    // node index must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// A* between the nodes that `start` and `goal` snap to.
pub fn astar_search(grid: &Grid, set: &ObstacleSet, start: Point2, goal: Point2) -> Result<GridPath> {
    let s = grid.snap(set, start, "start")?;
    let g = grid.snap(set, goal, "goal")?;
    astar_nodes(grid, set, s, g)
}

/// A* between two grid nodes.
pub fn astar_nodes(grid: &Grid, set: &ObstacleSet, start: NodeIndex, goal: NodeIndex) -> Result<GridPath> {
    let goal_pos = grid.position(goal);
    let heuristic = |n: NodeIndex| (grid.position(n) - goal_pos).norm();
    let n_nodes = grid.node_count();
    let mut g_cost = vec![f64::INFINITY; n_nodes];
    let mut parent: Vec<Option<NodeIndex>> = vec![None; n_nodes];
    let mut closed = vec![false; n_nodes];
    let mut open = BinaryHeap::new();

    if grid.is_blocked(start) || grid.is_blocked(goal) {
        return Err(PlanError::NoPathFound);
    }
    g_cost[grid.flat(start)] = 0.0;
    let h0 = heuristic(start);
    open.push(OpenEntry {
        f: h0,
        h: h0,
        node: start,
    });

    while let Some(OpenEntry { node, .. }) = open.pop() {
        let idx = grid.flat(node);
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if node == goal {
            let mut nodes = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[grid.flat(cur)] {
                nodes.push(p);
                cur = p;
            }
            nodes.reverse();
            let length = nodes
                .windows(2)
                .map(|w| (grid.position(w[1]) - grid.position(w[0])).norm())
                .sum();
            return Ok(GridPath { nodes, length });
        }
        let base = g_cost[idx];
        let here = grid.position(node);
        for nb in grid.neighbors(node) {
            let nidx = grid.flat(nb);
            if closed[nidx] || !grid.edge_free(set, node, nb) {
                continue;
            }
            let tentative = base + (grid.position(nb) - here).norm();
            if tentative < g_cost[nidx] {
                g_cost[nidx] = tentative;
                parent[nidx] = Some(node);
                let h = heuristic(nb);
                open.push(OpenEntry {
                    f: tentative + h,
                    h,
                    node: nb,
                });
            }
        }
    }
    Err(PlanError::NoPathFound)
}
