//! Wall-aware distance-to-goal used by the progress term.
//!
//! Shortest-path distances are computed with Dijkstra over free grid cells on
//! a 16-connected lattice (no corner cutting). Cells whose clearance is below
//! the robot radius are reached in a second pass so that the field is finite
//! everywhere a robot can physically be.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use glam::DVec2;

use crate::world::OccupancyGrid;

const MOVES: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

/// Navigation function toward a fixed goal position.
#[derive(Clone, Debug)]
pub struct NavigationField {
    goal: DVec2,
    /// `None` when the grid has no obstacles and the field is Euclidean.
    field: Option<Field>,
}

#[derive(Clone, Debug)]
struct Field {
    width: usize,
    height: usize,
    resolution: f64,
    origin: DVec2,
    values: Vec<f64>,
}

/// Non-negative floats order like their bit patterns.
fn key(d: f64) -> Reverse<u64> {
    Reverse(d.to_bits())
}

impl NavigationField {
    /// Euclidean distance to `goal`.
    pub fn euclidean(goal: DVec2) -> Self {
        Self { goal, field: None }
    }

    pub fn new(grid: &OccupancyGrid, goal: DVec2, clearance: f64) -> Self {
        if !grid.has_obstacles() {
            return Self::euclidean(goal);
        }
        let (w, h) = (grid.width(), grid.height());
        let res = grid.resolution();
        let idx = |i: usize, j: usize| j * w + i;
        let free = |i: usize, j: usize| !grid.occupied(i, j);
        let roomy = |i: usize, j: usize| free(i, j) && grid.cell_distance(i, j) >= clearance;

        let mut values = vec![f64::INFINITY; w * h];
        let mut heap = BinaryHeap::new();
        let g = grid.to_cell_coords(goal);
        let (gi, gj) = (g.x.round() as i64, g.y.round() as i64);
        for dj in -2..=2 {
            for di in -2..=2 {
                let (i, j) = (gi + di, gj + dj);
                if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                let d = grid.cell_center(i, j).distance(goal);
                if free(i, j) && d <= 2.0 * res {
                    values[idx(i, j)] = d;
                    heap.push((key(d), idx(i, j)));
                }
            }
        }

        let relax = |values: &mut Vec<f64>,
                     heap: &mut BinaryHeap<(Reverse<u64>, usize)>,
                     into: &dyn Fn(usize, usize) -> bool| {
            while let Some((Reverse(bits), k)) = heap.pop() {
                let d = f64::from_bits(bits);
                if d > values[k] {
                    continue;
                }
                let (i, j) = ((k % w) as i64, (k / w) as i64);
                for &(di, dj) in &MOVES {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                        continue;
                    }
                    let (ni, nj) = (ni as usize, nj as usize);
                    if !into(ni, nj) {
                        continue;
                    }
                    // Every cell swept by the move must be free.
                    let swept = match (di.abs(), dj.abs()) {
                        (1, 1) => free(ni, j as usize) && free(i as usize, nj),
                        (2, 1) => {
                            let mi = (i + di / 2) as usize;
                            free(mi, j as usize) && free(mi, nj)
                        }
                        (1, 2) => {
                            let mj = (j + dj / 2) as usize;
                            free(i as usize, mj) && free(ni, mj)
                        }
                        _ => true,
                    };
                    if !swept {
                        continue;
                    }
                    let nd = d + res * ((di * di + dj * dj) as f64).sqrt();
                    let nk = idx(ni, nj);
                    if nd < values[nk] {
                        values[nk] = nd;
                        heap.push((key(nd), nk));
                    }
                }
            }
        };

        relax(&mut values, &mut heap, &roomy);
        // Second pass fills the band close to walls without changing the
        // values already settled in roomy space.
        for (k, &v) in values.iter().enumerate() {
            if v.is_finite() {
                heap.push((key(v), k));
            }
        }
        let band = |i: usize, j: usize| free(i, j) && !roomy(i, j);
        relax(&mut values, &mut heap, &band);

        Self {
            goal,
            field: Some(Field {
                width: w,
                height: h,
                resolution: res,
                origin: grid.origin(),
                values,
            }),
        }
    }

    pub fn goal(&self) -> DVec2 {
        self.goal
    }

    /// Path distance from `p` to the goal.
    pub fn distance(&self, p: DVec2) -> f64 {
        let euclid = p.distance(self.goal);
        let Some(f) = &self.field else {
            return euclid;
        };
        let c = (p - f.origin) / f.resolution;
        let max = DVec2::new((f.width - 1) as f64, (f.height - 1) as f64);
        let clamped = c.clamp(DVec2::ZERO, max);
        let outside = (c - clamped).length() * f.resolution;
        let i0 = (clamped.x.floor() as usize).min(f.width.saturating_sub(2));
        let j0 = (clamped.y.floor() as usize).min(f.height.saturating_sub(2));
        let i1 = (i0 + 1).min(f.width - 1);
        let j1 = (j0 + 1).min(f.height - 1);
        let at = |i: usize, j: usize| f.values[j * f.width + i];
        let corners = [(i0, j0), (i1, j0), (i0, j1), (i1, j1)];
        let d = if corners.iter().all(|&(i, j)| at(i, j).is_finite()) {
            let fx = clamped.x - i0 as f64;
            let fy = clamped.y - j0 as f64;
            let bottom = at(i0, j0) + (at(i1, j0) - at(i0, j0)) * fx;
            let top = at(i0, j1) + (at(i1, j1) - at(i0, j1)) * fx;
            bottom + (top - bottom) * fy
        } else {
            // Next to a wall: best finite neighbour plus the hop to it.
            let q = f.origin + clamped * f.resolution;
            let (ci, cj) = (clamped.x.round() as i64, clamped.y.round() as i64);
            let mut best = f64::INFINITY;
            for dj in -2..=2 {
                for di in -2..=2 {
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= f.width as i64 || j >= f.height as i64 {
                        continue;
                    }
                    let v = at(i as usize, j as usize);
                    if v.is_finite() {
                        let center = f.origin + f.resolution * DVec2::new(i as f64, j as f64);
                        best = best.min(v + center.distance(q));
                    }
                }
            }
            best
        };
        if d.is_finite() {
            d + outside
        } else {
            // Enclosed or inside an obstacle: no path exists.
            euclid
        }
    }
}
