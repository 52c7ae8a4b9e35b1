//! Metrics, trace tables and SVG figures.
//!
//! Every writer here is deterministic: the same inputs produce the same
//! bytes.

use std::fmt::Write as _;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::ScenarioConfig;
use crate::simulator::{Outcome, SimResult, TraceRow};
use crate::world::OccupancyGrid;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub id: String,
    pub mode: String,
    pub outcome: Outcome,
    pub time_to_goal: Option<f64>,
    pub path_length: f64,
    pub min_clearance: Option<f64>,
    pub mean_linear_accel: f64,
    pub mean_angular_accel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub simulated_time: f64,
    pub agents: Vec<AgentMetrics>,
    pub contacts: usize,
    pub replans: usize,
}

pub fn metrics(scenario: &ScenarioConfig, result: &SimResult) -> Metrics {
    let agents = scenario
        .agents
        .iter()
        .zip(&result.agents)
        .map(|(spec, a)| AgentMetrics {
            id: a.id.clone(),
            mode: spec.cost.mode.as_str().to_string(),
            outcome: a.outcome,
            time_to_goal: a.time_to_goal,
            path_length: a.path_length,
            min_clearance: a.min_clearance,
            mean_linear_accel: a.smoothness.mean_linear_accel,
            mean_angular_accel: a.smoothness.mean_angular_accel,
        })
        .collect();
    let simulated_time = result
        .traces
        .iter()
        .filter_map(|t| t.last())
        .map(|r| r.t)
        .fold(0.0, f64::max);
    Metrics {
        schema_version: SCHEMA_VERSION,
        scenario: result.scenario.clone(),
        seed: scenario.seed,
        simulated_time,
        agents,
        contacts: result.contacts.len(),
        replans: result.replan_log.len(),
    }
}

pub const TRACE_HEADER: &str = "t,x,y,heading,v,omega,d_o,nf_distance";

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "inf".to_string()
    }
}

/// One agent's trace as CSV with [`TRACE_HEADER`]. Infinite clearance is
/// written as `inf`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let cells = [r.t, r.x, r.y, r.heading, r.v, r.omega, r.d_o, r.nf_distance].map(num);
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Inverse of [`trace_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Validation("trace CSV header mismatch".into()));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|c| {
                    if c == "inf" {
                        Ok(f64::INFINITY)
                    } else {
                        c.parse()
                    }
                })
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Validation(format!("trace CSV row {}: {e}", k + 2)))?;
            if v.len() != 8 {
                return Err(Error::Validation(format!(
                    "trace CSV row {}: expected 8 cells",
                    k + 2
                )));
            }
            Ok(TraceRow {
                t: v[0],
                x: v[1],
                y: v[2],
                heading: v[3],
                v: v[4],
                omega: v[5],
                d_o: v[6],
                nf_distance: v[7],
            })
        })
        .collect()
}

/// Layers drawn over the map, back to front: candidates (gray), obstacle
/// tracks (red), agent paths (blue), start and goal markers.
#[derive(Clone, Debug, Default)]
pub struct Figure {
    pub candidates: Vec<Vec<DVec2>>,
    pub obstacle_tracks: Vec<(Vec<DVec2>, f64)>,
    pub paths: Vec<Vec<DVec2>>,
    /// `(position, radius)` of agents at their final positions.
    pub agents: Vec<(DVec2, f64)>,
    pub goals: Vec<DVec2>,
}

impl Figure {
    pub fn from_result(scenario: &ScenarioConfig, result: &SimResult) -> Self {
        let obstacle_tracks = result
            .obstacle_traces
            .iter()
            .zip(&scenario.scripted_obstacles)
            .map(|((_, samples), o)| {
                (
                    samples.iter().map(|s| DVec2::new(s[1], s[2])).collect(),
                    o.radius,
                )
            })
            .collect();
        Self {
            candidates: result
                .fans
                .iter()
                .flat_map(|f| f.candidates.iter().cloned())
                .collect(),
            obstacle_tracks,
            paths: result
                .traces
                .iter()
                .map(|t| t.iter().map(TraceRow::position).collect())
                .collect(),
            agents: result
                .traces
                .iter()
                .zip(&scenario.agents)
                .filter_map(|(t, a)| t.last().map(|r| (r.position(), a.radius)))
                .collect(),
            goals: scenario.agents.iter().map(|a| a.goal.position()).collect(),
        }
    }
}

const PX_PER_M: f64 = 40.0;

/// Renders `figure` over `grid`, with obstacles in black.
pub fn render_svg(grid: &OccupancyGrid, figure: &Figure) -> String {
    let res = grid.resolution();
    let (lo, hi) = grid.bounds();
    let lo = lo - DVec2::splat(0.5 * res);
    let hi = hi + DVec2::splat(0.5 * res);
    let size = (hi - lo) * PX_PER_M;
    let px = |p: DVec2| DVec2::new((p.x - lo.x) * PX_PER_M, (hi.y - p.y) * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        size.x.ceil(),
        size.y.ceil(),
        size.x,
        size.y
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    s.push_str("<g fill=\"black\" shape-rendering=\"crispEdges\">\n");
    let cell = res * PX_PER_M;
    for j in 0..grid.height() {
        let mut i = 0;
        while i < grid.width() {
            if !grid.occupied(i, j) {
                i += 1;
                continue;
            }
            let start = i;
            while i < grid.width() && grid.occupied(i, j) {
                i += 1;
            }
            let corner = px(grid.cell_center(start, j) + DVec2::new(-0.5 * res, 0.5 * res));
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                corner.x,
                corner.y,
                cell * (i - start) as f64,
                cell
            );
        }
    }
    s.push_str("</g>\n");

    let polyline = |s: &mut String, pts: &[DVec2], style: &str| {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let q = px(p);
                format!("{:.2},{:.2}", q.x, q.y)
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" {style}/>"#, coords.join(" "));
    };
    s.push_str("<g id=\"candidates\">\n");
    for c in &figure.candidates {
        polyline(
            &mut s,
            c,
            r##"fill="none" stroke="#999999" stroke-width="1""##,
        );
    }
    s.push_str("</g>\n<g id=\"obstacles\">\n");
    for (track, radius) in &figure.obstacle_tracks {
        polyline(
            &mut s,
            track,
            r##"fill="none" stroke="#d62728" stroke-width="2""##,
        );
        if let Some(&last) = track.last() {
            let q = px(last);
            let _ = writeln!(
                s,
                r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#d62728"/>"##,
                q.x,
                q.y,
                radius * PX_PER_M
            );
        }
    }
    s.push_str("</g>\n<g id=\"paths\">\n");
    for p in &figure.paths {
        polyline(
            &mut s,
            p,
            r##"fill="none" stroke="#1f77b4" stroke-width="2""##,
        );
    }
    for &(p, r) in &figure.agents {
        let q = px(p);
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#1f77b4"/>"##,
            q.x,
            q.y,
            r * PX_PER_M
        );
    }
    for &g in &figure.goals {
        let q = px(g);
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#2ca02c"/>"##,
            q.x, q.y
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let rows = vec![TraceRow {
            t: 0.2,
            x: 1.0 / 3.0,
            y: -2.5,
            heading: 0.1,
            v: 0.5,
            omega: -0.25,
            d_o: f64::INFINITY,
            nf_distance: 3.75,
        }];
        assert_eq!(parse_trace_csv(&trace_csv(&rows)).unwrap(), rows);
        assert!(parse_trace_csv("t,x\n").is_err());
    }

    #[test]
    fn svg_is_well_formed_for_empty_figure() {
        let grid = OccupancyGrid::from_ascii(&["#..", "..#"], 0.5, DVec2::ZERO).unwrap();
        let svg = render_svg(&grid, &Figure::default());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 3);
    }
}
