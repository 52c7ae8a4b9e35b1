//! Static occupancy grid with an exact Euclidean distance field, dynamic disk
//! obstacles, clearance queries and time-to-collision.

use std::sync::Arc;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-to-collision values beyond this are reported as `f64::INFINITY`.
pub const TTC_HORIZON: f64 = 100.0;

/// Speeds below this never collide with static geometry.
const MIN_SPEED: f64 = 1e-9;

/// Binary occupancy grid. Cell `(i, j)` is column `i`, row `j` and its centre
/// sits at `origin + resolution * (i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: DVec2,
    cells: Vec<bool>,
    distance_field: Vec<f64>,
    any_occupied: bool,
}

impl OccupancyGrid {
    /// Builds a grid from row-major occupancy (`cells[j * width + i]`) and
    /// computes its distance field.
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: DVec2,
        cells: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Grid("grid has zero area".into()));
        }
        if cells.len() != width * height {
            return Err(Error::Grid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Grid("resolution must be positive".into()));
        }
        let mut grid = Self {
            width,
            height,
            resolution,
            origin,
            any_occupied: cells.iter().any(|&c| c),
            cells,
            distance_field: Vec::new(),
        };
        grid.distance_field = build_distance_field(&grid);
        Ok(grid)
    }

    /// Parses ASCII rows (`#` occupied, `.` free). The first row is the top
    /// of the map (largest `y`).
    pub fn from_ascii<S: AsRef<str>>(rows: &[S], resolution: f64, origin: DVec2) -> Result<Self> {
        let height = rows.len();
        let width = rows
            .first()
            .map(|r| r.as_ref().chars().count())
            .unwrap_or(0);
        let mut cells = vec![false; width * height];
        for (k, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::Grid(format!(
                    "row {k} has length {} but row 0 has {width}",
                    row.chars().count()
                )));
            }
            let j = height - 1 - k;
            for (i, c) in row.chars().enumerate() {
                cells[j * width + i] = match c {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::Grid(format!(
                            "row {k} column {i}: unexpected character {other:?}"
                        )))
                    }
                };
            }
        }
        Self::new(width, height, resolution, origin, cells)
    }

    /// Obstacle-free grid covering `[origin, origin + size]`.
    pub fn empty(width: usize, height: usize, resolution: f64, origin: DVec2) -> Result<Self> {
        Self::new(
            width,
            height,
            resolution,
            origin,
            vec![false; width * height],
        )
    }

    pub fn to_ascii(&self) -> Vec<String> {
        (0..self.height)
            .rev()
            .map(|j| {
                (0..self.width)
                    .map(|i| if self.occupied(i, j) { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> DVec2 {
        self.origin
    }

    pub fn has_obstacles(&self) -> bool {
        self.any_occupied
    }

    pub fn occupied(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.width + i]
    }

    /// Distance in meters from cell `(i, j)` to the nearest occupied cell
    /// centre, `f64::INFINITY` on a free grid.
    pub fn cell_distance(&self, i: usize, j: usize) -> f64 {
        self.distance_field[j * self.width + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> DVec2 {
        self.origin + self.resolution * DVec2::new(i as f64, j as f64)
    }

    /// Continuous cell coordinates of a world point.
    pub fn to_cell_coords(&self, p: DVec2) -> DVec2 {
        (p - self.origin) / self.resolution
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: DVec2) -> Option<(usize, usize)> {
        let c = self.to_cell_coords(p).round();
        if c.x < 0.0 || c.y < 0.0 || c.x >= self.width as f64 || c.y >= self.height as f64 {
            None
        } else {
            Some((c.x as usize, c.y as usize))
        }
    }

    /// Lower and upper corners of the cell-centre rectangle.
    pub fn bounds(&self) -> (DVec2, DVec2) {
        (
            self.origin,
            self.cell_center(self.width - 1, self.height - 1),
        )
    }

    /// Bilinearly interpolated distance field. Points outside the grid are
    /// projected onto it and the projection distance added.
    pub fn distance_at(&self, p: DVec2) -> f64 {
        if !self.any_occupied {
            return f64::INFINITY;
        }
        let c = self.to_cell_coords(p);
        let max = DVec2::new((self.width - 1) as f64, (self.height - 1) as f64);
        let clamped = c.clamp(DVec2::ZERO, max);
        let outside = (c - clamped).length() * self.resolution;
        let i0 = (clamped.x.floor() as usize).min(self.width.saturating_sub(2));
        let j0 = (clamped.y.floor() as usize).min(self.height.saturating_sub(2));
        let i1 = (i0 + 1).min(self.width - 1);
        let j1 = (j0 + 1).min(self.height - 1);
        let fx = clamped.x - i0 as f64;
        let fy = clamped.y - j0 as f64;
        let d00 = self.cell_distance(i0, j0);
        let d10 = self.cell_distance(i1, j0);
        let d01 = self.cell_distance(i0, j1);
        let d11 = self.cell_distance(i1, j1);
        let bottom = d00 + (d10 - d00) * fx;
        let top = d01 + (d11 - d01) * fx;
        bottom + (top - bottom) * fy + outside
    }
}

/// Stand-in for "no occupied cell" inside the transform.
const FAR: f64 = 1e30;

/// Squared 1-D distance transform of a sampled function (lower envelope of
/// parabolas, Felzenszwalb-Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..f.len() {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance transform of the occupied cells, in meters.
pub fn build_distance_field(grid: &OccupancyGrid) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    if !grid.any_occupied {
        return vec![f64::INFINITY; w * h];
    }
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut sq: Vec<f64> = grid
        .cells
        .iter()
        .map(|&c| if c { 0.0 } else { FAR })
        .collect();
    // Columns.
    for i in 0..w {
        for j in 0..h {
            f[j] = sq[j * w + i];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for j in 0..h {
            sq[j * w + i] = out[j];
        }
    }
    // Rows.
    for j in 0..h {
        f[..w].copy_from_slice(&sq[j * w..(j + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        sq[j * w..(j + 1) * w].copy_from_slice(&out[..w]);
    }
    sq.into_iter()
        .map(|d| {
            if d >= FAR {
                f64::INFINITY
            } else {
                d.sqrt() * grid.resolution
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: DVec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Motion {
    /// `position` is valid at time `epoch`.
    ConstantVelocity {
        position: DVec2,
        velocity: DVec2,
        #[serde(default)]
        epoch: f64,
    },
    /// Piecewise-linear script, held at the end points outside its span.
    Scripted { waypoints: Vec<Waypoint> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub id: String,
    pub radius: f64,
    pub motion: Motion,
}

impl DynamicObstacle {
    pub fn constant_velocity(
        id: impl Into<String>,
        position: DVec2,
        velocity: DVec2,
        radius: f64,
    ) -> Self {
        Self {
            id: id.into(),
            radius,
            motion: Motion::ConstantVelocity {
                position,
                velocity,
                epoch: 0.0,
            },
        }
    }

    pub fn scripted(id: impl Into<String>, waypoints: Vec<Waypoint>, radius: f64) -> Self {
        Self {
            id: id.into(),
            radius,
            motion: Motion::Scripted { waypoints },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "obstacle `{}`: radius must be positive",
                self.id
            )));
        }
        if let Motion::Scripted { waypoints } = &self.motion {
            if waypoints.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "obstacle `{}`: empty script",
                    self.id
                )));
            }
            if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return Err(Error::InvalidConfig(format!(
                    "obstacle `{}`: waypoints must be strictly time-ordered",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Velocity assumed when extrapolating from time `t`.
    pub fn velocity_at(&self, t: f64) -> DVec2 {
        match &self.motion {
            Motion::ConstantVelocity { velocity, .. } => *velocity,
            Motion::Scripted { waypoints } => {
                match waypoints.windows(2).find(|w| t >= w[0].t && t < w[1].t) {
                    Some(w) => (w[1].position - w[0].position) / (w[1].t - w[0].t),
                    None => DVec2::ZERO,
                }
            }
        }
    }
}

/// Predicted obstacle centre at time `t`.
pub fn predict_obstacle(obstacle: &DynamicObstacle, t: f64) -> DVec2 {
    match &obstacle.motion {
        Motion::ConstantVelocity {
            position,
            velocity,
            epoch,
        } => *position + *velocity * (t - epoch),
        Motion::Scripted { waypoints } => {
            let first = waypoints[0];
            let last = waypoints[waypoints.len() - 1];
            if t <= first.t {
                return first.position;
            }
            if t >= last.t {
                return last.position;
            }
            let k = waypoints.partition_point(|w| w.t <= t);
            let (a, b) = (waypoints[k - 1], waypoints[k]);
            a.position.lerp(b.position, (t - a.t) / (b.t - a.t))
        }
    }
}

/// Immutable snapshot used for one planning cycle.
#[derive(Clone, Debug)]
pub struct World {
    pub grid: Arc<OccupancyGrid>,
    pub obstacles: Vec<DynamicObstacle>,
    pub robot_radius: f64,
}

impl World {
    pub fn new(
        grid: Arc<OccupancyGrid>,
        obstacles: Vec<DynamicObstacle>,
        robot_radius: f64,
    ) -> Self {
        Self {
            grid,
            obstacles,
            robot_radius,
        }
    }
}

/// Clearance `d_o` between the robot disk at `point` and the nearest hazard
/// at time `t`; zero means contact.
pub fn distance_to_nearest(world: &World, point: DVec2, t: f64) -> f64 {
    let mut d = world.grid.distance_at(point);
    for o in &world.obstacles {
        d = d.min(point.distance(predict_obstacle(o, t)) - o.radius);
    }
    (d - world.robot_radius).max(0.0)
}

/// First time `s > 0` at which two disks at relative offset `dp` moving with
/// relative velocity `dv` touch (combined radius `reach`).
pub fn disk_time_to_collision(dp: DVec2, dv: DVec2, reach: f64) -> f64 {
    let c = dp.length_squared() - reach * reach;
    if c <= 0.0 {
        return 0.0;
    }
    let a = dv.length_squared();
    let b = dp.dot(dv);
    if a == 0.0 || b >= 0.0 {
        return f64::INFINITY;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    // Smaller root of a s^2 + 2 b s + c, written to avoid cancellation.
    let s = c / (-b + disc.sqrt());
    if s > TTC_HORIZON {
        f64::INFINITY
    } else {
        s
    }
}

/// Time until the robot disk moving at `velocity` from `position` touches
/// occupied grid space. Sphere-traces the distance field, never stepping
/// less than half a cell, then bisects the bracketing interval.
pub fn static_time_to_collision(
    grid: &OccupancyGrid,
    robot_radius: f64,
    position: DVec2,
    velocity: DVec2,
) -> f64 {
    let speed = velocity.length();
    if speed < MIN_SPEED || !grid.has_obstacles() {
        return f64::INFINITY;
    }
    let dir = velocity / speed;
    let min_step = 0.5 * grid.resolution();
    let max_arc = TTC_HORIZON * speed;
    let mut s = 0.0;
    let mut prev = 0.0;
    loop {
        let gap = grid.distance_at(position + dir * s) - robot_radius;
        if gap <= 0.0 {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..12 {
                let mid = 0.5 * (lo + hi);
                if grid.distance_at(position + dir * mid) <= robot_radius {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi / speed;
        }
        prev = s;
        s += gap.max(min_step);
        if s > max_arc {
            return f64::INFINITY;
        }
    }
}

/// Seconds until contact if the robot and all obstacles hold their current
/// velocities; zero when already in contact, `f64::INFINITY` if never.
pub fn time_to_collision(world: &World, position: DVec2, velocity: DVec2, t0: f64) -> f64 {
    if distance_to_nearest(world, position, t0) == 0.0 {
        return 0.0;
    }
    let mut ttc = static_time_to_collision(&world.grid, world.robot_radius, position, velocity);
    for o in &world.obstacles {
        let dp = position - predict_obstacle(o, t0);
        let dv = velocity - o.velocity_at(t0);
        ttc = ttc.min(disk_time_to_collision(
            dp,
            dv,
            world.robot_radius + o.radius,
        ));
    }
    ttc
}
