//! Acceptance checks, one line of output per criterion.
//!
//! Run with `cargo test -p mpepc-core --test acceptance`. Exits non-zero if
//! any criterion fails.

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use glam::DVec2;
use mpepc::cost::{
    collision_probability, modified_collision_probability, terminal_value, trajectory_cost,
    CostBreakdown, CostContext, CostParams,
};
use mpepc::geometry::{
    control_law_curvature, egocentric_coords, velocity_modulation, wrap_angle, ControlGains, Pose,
};
use mpepc::kinematics::{control_command, rollout, PlannerConfig, RobotState, TrajectoryParam};
use mpepc::navigation::NavigationField;
use mpepc::optimizer::{evaluate_candidate, plan, OptimizerConfig, PlanSettings};
use mpepc::scenarios::{builtin, BuiltinParams, ScenarioConfig};
use mpepc::simulator::{run, Outcome, SimOptions, SimResult};
use mpepc::world::{disk_time_to_collision, DynamicObstacle, OccupancyGrid, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const RADIUS: f64 = 0.35;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn params(pairs: &[(&str, &str)]) -> BuiltinParams {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn scenario(name: &str, pairs: &[(&str, &str)]) -> ScenarioConfig {
    builtin(name, &params(pairs)).expect("builtin scenario")
}

fn within_rel(bound: f64) -> f64 {
    1e-12 * bound.abs().max(1e-300)
}

/// The T-junction map with the parked robot as a static disk.
fn t_corridor_world(extra: Vec<DynamicObstacle>) -> (Arc<OccupancyGrid>, World, Pose) {
    let tc = scenario("t_corridor", &[]);
    let grid = Arc::new(tc.map.to_grid().unwrap());
    let mut obstacles = vec![DynamicObstacle::constant_velocity(
        "parked",
        tc.agents[1].start.position(),
        DVec2::ZERO,
        tc.agents[1].radius,
    )];
    obstacles.extend(extra);
    let world = World::new(grid.clone(), obstacles, RADIUS);
    (grid, world, tc.agents[0].goal)
}

fn random_free_state(rng: &mut ChaCha8Rng, world: &World, grid: &OccupancyGrid) -> RobotState {
    let (lo, hi) = grid.bounds();
    loop {
        let p = DVec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if mpepc::world::distance_to_nearest(world, p, 0.0) > 0.05 {
            return RobotState {
                pose: Pose::from_position(p, rng.gen_range(-PI..PI)),
                v: rng.gen_range(0.0..1.0),
                omega: rng.gen_range(-0.5..0.5),
                t: 0.0,
            };
        }
    }
}

fn random_param(rng: &mut ChaCha8Rng, planner: &PlannerConfig) -> TrajectoryParam {
    TrajectoryParam {
        r: rng.gen_range(0.0..planner.r_max()),
        theta: rng.gen_range(-PI..PI),
        delta: rng.gen_range(-PI..PI),
        v_max: rng.gen_range(0.0..planner.v_limit),
    }
}

fn survivability_non_increasing(b: &CostBreakdown) -> bool {
    let mut prev = 1.0;
    b.segments.iter().all(|s| {
        let ok = s.p_s <= prev;
        prev = s.p_s;
        ok
    })
}

fn max_step_displacement(states: &[RobotState]) -> f64 {
    states
        .windows(2)
        .map(|w| w[1].pose.position().distance(w[0].pose.position()))
        .fold(0.0, f64::max)
}

/// 1: anticipatory discount stays between `(1 - a) p_c` and `p_c`, and never
/// lowers survivability.
fn collision_bounds() -> Check {
    let mut r = rng(1);
    let n_pairs = 10_000;
    for _ in 0..n_pairs {
        let p = CostParams {
            a: r.gen_range(0.0..1.0),
            sigma_d: r.gen_range(0.05..1.0),
            sigma_inv_ttc: r.gen_range(0.05..2.0),
            ..CostParams::default()
        };
        let d_o = if r.gen_bool(0.1) {
            0.0
        } else {
            r.gen_range(0.0..3.0)
        };
        let ttc = match r.gen_range(0..10) {
            0 => 0.0,
            1 => f64::INFINITY,
            _ => r.gen_range(0.0..30.0),
        };
        let pc = collision_probability(d_o, &p);
        let pt = modified_collision_probability(d_o, ttc, &p);
        ensure!(
            pt <= pc + within_rel(pc) && pt >= (1.0 - p.a) * pc - within_rel(pc),
            "pair d_o={d_o} ttc={ttc}: p~={pt} outside [{}, {pc}]",
            (1.0 - p.a) * pc
        );
    }

    let planner = PlannerConfig::default();
    let (grid, world, goal) = t_corridor_world(vec![DynamicObstacle::constant_velocity(
        "walker",
        DVec2::new(-3.0, 0.9),
        DVec2::new(0.6, 0.0),
        RADIUS,
    )]);
    let nav = NavigationField::new(&grid, goal.position(), RADIUS);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: goal.position(),
        v_limit: planner.v_limit,
    };
    let ds = CostParams::default();
    let base = CostParams::baseline();
    let n_traj = 500;
    let mut segments = 0;
    for _ in 0..n_traj {
        let start = random_free_state(&mut r, &world, &grid);
        let traj = rollout(&start, &random_param(&mut r, &planner), &planner).unwrap();
        let bd = trajectory_cost(&traj, &ctx, &ds).unwrap();
        let bb = trajectory_cost(&traj, &ctx, &base).unwrap();
        for (s, sb) in bd.segments.iter().zip(&bb.segments) {
            let pc = s.p_c_distance;
            ensure!(pc == sb.p_c, "distance term differs between modes");
            ensure!(
                s.p_c <= pc + within_rel(pc) && s.p_c >= (1.0 - ds.a) * pc - within_rel(pc),
                "segment p~={} outside [{}, {pc}]",
                s.p_c,
                (1.0 - ds.a) * pc
            );
            ensure!(
                s.p_s >= sb.p_s - within_rel(sb.p_s),
                "p~_s={} below p_s={}",
                s.p_s,
                sb.p_s
            );
            segments += 1;
        }
    }
    Ok(format!(
        "{n_pairs} pairs, {n_traj} trajectories ({segments} segments)"
    ))
}

/// Map with a wall along `y = 0` and the robot touching it.
fn contact_setup() -> (Arc<OccupancyGrid>, RobotState, Pose) {
    let grid = Arc::new(
        OccupancyGrid::new(
            80,
            60,
            0.1,
            DVec2::new(-4.0, -1.0),
            (0..80 * 60).map(|k| k / 80 < 10).collect(),
        )
        .unwrap(),
    );
    let start = RobotState::at_rest(Pose::new(0.0, 0.15, 0.3), 0.0);
    (grid, start, Pose::new(2.0, 3.0, 0.0))
}

/// 2: a first segment in contact zeroes survivability for the whole horizon.
fn contact_zeroes_survivability() -> Check {
    let (grid, start, goal) = contact_setup();
    let world = World::new(grid.clone(), vec![], RADIUS);
    let nav = NavigationField::new(&grid, goal.position(), RADIUS);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: goal.position(),
        v_limit: 1.0,
    };
    let planner = PlannerConfig::default();
    let mut r = rng(2);
    let mut checked = 0;
    for k in 0..500 {
        let z = if k == 0 {
            TrajectoryParam::NULL
        } else {
            random_param(&mut r, &planner)
        };
        let traj = rollout(&start, &z, &planner).unwrap();
        for params in [CostParams::default(), CostParams::baseline()] {
            let b = trajectory_cost(&traj, &ctx, &params).unwrap();
            ensure!(b.segments[0].d_o == 0.0, "start is not in contact");
            ensure!(
                b.segments.iter().all(|s| s.p_s == 0.0),
                "{:?}: nonzero survivability for {z:?}",
                params.mode
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} in-contact evaluations, both modes"))
}

/// 3: from an in-contact start both modes price every candidate the same,
/// the terminal term vanishes and the robot holds still.
fn contact_start_halts() -> Check {
    let (grid, start, goal) = contact_setup();
    let world = World::new(grid.clone(), vec![], RADIUS);
    let nav = NavigationField::new(&grid, goal.position(), RADIUS);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: goal.position(),
        v_limit: 1.0,
    };
    let planner = PlannerConfig::default();
    let ds = CostParams::default();
    let base = CostParams::baseline();
    let mut state = start;
    let mut compared = 0;
    let cycles = (10.0 / planner.step).round() as u64;
    for cycle in 0..cycles {
        let optimizer = OptimizerConfig {
            seed: cycle,
            ..OptimizerConfig::default()
        };
        let settings = PlanSettings {
            planner: &planner,
            cost: &ds,
            optimizer: &optimizer,
        };
        let result = plan(&state, &goal, &ctx, &settings, None).unwrap();
        for c in &result.evaluated {
            let (_, bd) = evaluate_candidate(&c.param, &state, &ctx, &planner, &ds).unwrap();
            let (_, bb) = evaluate_candidate(&c.param, &state, &ctx, &planner, &base).unwrap();
            ensure!(
                bd.total == bb.total,
                "totals differ for {:?}: {} vs {}",
                c.param,
                bd.total,
                bb.total
            );
            let jt = bd.terminal.map_or(f64::NAN, |t| t.j_terminal);
            ensure!(jt == 0.0, "j_terminal = {jt} for {:?}", c.param);
            compared += 1;
        }
        ensure!(
            result.best_param.is_null(),
            "cycle {cycle}: argmin {:?} is not the null candidate",
            result.best_param
        );
        state = result.best_trajectory.states[1];
    }
    let moved = state.pose.position().distance(start.pose.position());
    ensure!(moved < 1e-9, "robot moved {moved} m");
    Ok(format!(
        "{cycles} cycles, {compared} candidates equal across modes, displacement {moved:.1e} m"
    ))
}

/// 4: survivability never increases along a trajectory, and no step covers
/// more than `v_limit h`.
fn monotone_and_bounded() -> Check {
    let planner = PlannerConfig::default();
    let bound = planner.v_limit * planner.step * (1.0 + 1e-12);
    let (grid, world, goal) = t_corridor_world(vec![]);
    let nav = NavigationField::new(&grid, goal.position(), RADIUS);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: goal.position(),
        v_limit: planner.v_limit,
    };
    let mut r = rng(4);
    let mut candidates = 0;
    for k in 0..20 {
        let state = random_free_state(&mut r, &world, &grid);
        for params in [CostParams::default(), CostParams::baseline()] {
            let optimizer = OptimizerConfig {
                seed: k,
                ..OptimizerConfig::default()
            };
            let settings = PlanSettings {
                planner: &planner,
                cost: &params,
                optimizer: &optimizer,
            };
            let result = plan(&state, &goal, &ctx, &settings, None).unwrap();
            for c in &result.evaluated {
                let (traj, b) =
                    evaluate_candidate(&c.param, &state, &ctx, &planner, &params).unwrap();
                ensure!(
                    survivability_non_increasing(&b),
                    "survivability rose along {:?}",
                    c.param
                );
                let d = max_step_displacement(&traj.states);
                ensure!(d <= bound, "candidate step {d} exceeds {bound}");
                candidates += 1;
            }
        }
    }
    let mut executed = 0;
    for name in ["t_corridor", "narrow_corridor", "circle"] {
        let result = run(&scenario(name, &[]), &SimOptions::default()).unwrap();
        for trace in &result.traces {
            for w in trace.windows(2) {
                let d = w[1].position().distance(w[0].position());
                ensure!(d <= bound, "{name}: executed step {d} exceeds {bound}");
                executed += 1;
            }
        }
    }
    Ok(format!(
        "{candidates} candidates, {executed} executed steps"
    ))
}

/// 5: terminal cost bounds.
fn terminal_bounds() -> Check {
    let p = CostParams::default();
    let mut r = rng(5);
    let n = 1_000_000;
    let pick = |r: &mut ChaCha8Rng| match r.gen_range(0..8) {
        0 => 0.0,
        1 => f64::INFINITY,
        2 => r.gen_range(0.0..1e-2),
        _ => r.gen_range(0.0..1e3),
    };
    for _ in 0..n {
        let ttg = pick(&mut r);
        let ttc = pick(&mut r);
        let ps = if r.gen_bool(0.1) {
            1.0
        } else {
            r.gen_range(0.0..=1.0)
        };
        let j = terminal_value(ttg, ttc, ps, &p).j_terminal;
        ensure!(
            (-1.0..=0.0).contains(&j),
            "j_terminal({ttg}, {ttc}, {ps}) = {j}"
        );
    }
    let j_min = terminal_value(f64::INFINITY, f64::INFINITY, 1.0, &p).j_terminal;
    ensure!(j_min == -1.0, "j_terminal(inf, inf, 1) = {j_min}");
    let j_two = terminal_value(f64::INFINITY, 2.0, 1.0, &p).j_terminal;
    ensure!(
        (j_two + 1.0 / E).abs() <= 1e-9,
        "j_terminal at ttc=2 is {j_two}"
    );
    Ok(format!(
        "{n} samples in [-1, 0]; -1 attained; ttc=2 gives {j_two:.12}"
    ))
}

fn edt_oracle(r: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let (w, h) = (64, 64);
    let density = r.gen_range(0.005..0.2);
    let cells: Vec<bool> = (0..w * h).map(|_| r.gen_bool(density)).collect();
    let occupied: Vec<(i64, i64)> = (0..w * h)
        .filter(|&k| cells[k])
        .map(|k| ((k % w) as i64, (k / w) as i64))
        .collect();
    let res = 0.05;
    let grid = OccupancyGrid::new(w, h, res, DVec2::ZERO, cells).unwrap();
    for j in 0..h {
        for i in 0..w {
            let brute = occupied
                .iter()
                .map(|&(a, b)| ((a - i as i64).pow(2) + (b - j as i64).pow(2)) as f64)
                .fold(f64::INFINITY, f64::min)
                .sqrt()
                * res;
            let got = grid.cell_distance(i, j);
            ensure!(got == brute, "cell ({i}, {j}): {got} vs {brute}");
        }
    }
    Ok(())
}

fn simulated_ttc(dp: DVec2, dv: DVec2, reach: f64) -> f64 {
    let dt = 1e-4;
    let mut s = 0.0;
    while s <= 100.0 {
        if (dp + dv * s).length() <= reach {
            return s;
        }
        s += dt;
    }
    f64::INFINITY
}

/// The five fixed scenes for the dense-grid comparison.
fn dense_scenes() -> Vec<(Arc<OccupancyGrid>, Vec<DynamicObstacle>, RobotState, Pose)> {
    let tc = scenario("t_corridor", &[]);
    let tgrid = Arc::new(tc.map.to_grid().unwrap());
    let parked = || {
        vec![DynamicObstacle::constant_velocity(
            "p",
            tc.agents[1].start.position(),
            DVec2::ZERO,
            RADIUS,
        )]
    };
    let open = Arc::new(OccupancyGrid::empty(200, 200, 0.1, DVec2::splat(-10.0)).unwrap());
    let rest = |x, y, th| RobotState::at_rest(Pose::new(x, y, th), 0.0);
    vec![
        (
            open.clone(),
            vec![],
            rest(0.0, 0.0, 0.0),
            Pose::new(4.0, 0.0, 0.0),
        ),
        (
            open.clone(),
            vec![],
            rest(0.0, 0.0, 0.0),
            Pose::new(-3.0, 2.0, PI),
        ),
        (
            open,
            vec![DynamicObstacle::constant_velocity(
                "o",
                DVec2::new(4.0, 0.0),
                DVec2::new(-0.5, 0.0),
                RADIUS,
            )],
            RobotState {
                v: 0.5,
                ..rest(0.0, 0.0, 0.0)
            },
            Pose::new(6.0, 0.0, 0.0),
        ),
        (
            tgrid.clone(),
            parked(),
            rest(0.0, -2.0, PI / 2.0),
            tc.agents[0].goal,
        ),
        (
            tgrid,
            parked(),
            RobotState {
                v: 0.3,
                ..rest(0.2, 0.6, 0.4)
            },
            tc.agents[0].goal,
        ),
    ]
}

/// Forward-Euler integration of the commands produced every `h`, at `h/100`.
fn fine_rollout(start: &RobotState, z: &TrajectoryParam, cfg: &PlannerConfig) -> Pose {
    let target = mpepc::geometry::target_from_param(&start.pose, z);
    let sub = 100;
    let dt = cfg.step / sub as f64;
    let mut state = *start;
    for _ in 0..cfg.steps() {
        let (v, omega) = control_command(&state, &target, z.v_max, cfg);
        let (mut x, mut y, mut th) = (state.pose.x, state.pose.y, state.pose.heading);
        for _ in 0..sub {
            x += v * th.cos() * dt;
            y += v * th.sin() * dt;
            th += omega * dt;
        }
        state = RobotState {
            pose: Pose::new(x, y, wrap_angle(th)),
            v,
            omega,
            t: state.t + cfg.step,
        };
    }
    state.pose
}

/// 6: independent oracles for the distance field, disk TTC, optimizer and
/// rollout.
fn oracles() -> Check {
    let mut r = rng(6);
    for _ in 0..20 {
        edt_oracle(&mut r)?;
    }

    let mut worst_ttc: f64 = 0.0;
    for _ in 0..1000 {
        let dp = DVec2::new(r.gen_range(-8.0..8.0), r.gen_range(-8.0..8.0));
        let dv = DVec2::new(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let reach = r.gen_range(0.2..1.5);
        let analytic = disk_time_to_collision(dp, dv, reach);
        let sim = simulated_ttc(dp, dv, reach);
        if analytic.is_infinite() || sim.is_infinite() {
            ensure!(
                analytic.is_infinite() && sim.is_infinite(),
                "dp={dp} dv={dv}: {analytic} vs {sim}"
            );
            continue;
        }
        worst_ttc = worst_ttc.max((analytic - sim).abs());
    }
    ensure!(worst_ttc <= 2e-3, "TTC deviates by {worst_ttc} s");

    let planner = PlannerConfig::default();
    let cost = CostParams::default();
    let mut worst_gap = f64::NEG_INFINITY;
    for (k, (grid, obstacles, state, goal)) in dense_scenes().into_iter().enumerate() {
        let world = World::new(grid.clone(), obstacles, RADIUS);
        let nav = NavigationField::new(&grid, goal.position(), RADIUS);
        let ctx = CostContext {
            world: &world,
            nav: &nav,
            goal: goal.position(),
            v_limit: planner.v_limit,
        };
        let optimizer = OptimizerConfig::default();
        let settings = PlanSettings {
            planner: &planner,
            cost: &cost,
            optimizer: &optimizer,
        };
        let best = plan(&state, &goal, &ctx, &settings, None)
            .unwrap()
            .best_cost;
        let mut grid_best = f64::INFINITY;
        for i in 0..=40 {
            for j in 0..=20 {
                for l in 0..=20 {
                    for m in 0..=10 {
                        let z = TrajectoryParam {
                            r: planner.r_max() * i as f64 / 40.0,
                            theta: -PI + 2.0 * PI * j as f64 / 20.0,
                            delta: -PI + 2.0 * PI * l as f64 / 20.0,
                            v_max: planner.v_limit * m as f64 / 10.0,
                        };
                        let c = evaluate_candidate(&z, &state, &ctx, &planner, &cost)
                            .unwrap()
                            .1
                            .total;
                        grid_best = grid_best.min(c);
                    }
                }
            }
        }
        ensure!(
            best <= grid_best + 1e-6,
            "scene {k}: planner {best} vs grid {grid_best}"
        );
        worst_gap = worst_gap.max(best - grid_best);
    }

    let mut worst_pos: f64 = 0.0;
    for _ in 0..50 {
        let start = RobotState {
            pose: Pose::new(0.0, 0.0, r.gen_range(-PI..PI)),
            v: r.gen_range(0.0..1.0),
            omega: r.gen_range(-1.0..1.0),
            t: 0.0,
        };
        let z = random_param(&mut r, &planner);
        let coarse = rollout(&start, &z, &planner).unwrap();
        let fine = fine_rollout(&start, &z, &planner);
        worst_pos = worst_pos.max(coarse.terminal().pose.position().distance(fine.position()));
    }
    ensure!(
        worst_pos <= 0.05,
        "rollout terminal differs by {worst_pos} m"
    );

    Ok(format!(
        "EDT exact on 20 grids; TTC max dev {worst_ttc:.1e} s; optimizer - grid <= {worst_gap:.3}; rollout dev {worst_pos:.1e} m"
    ))
}

fn outcome(result: &SimResult, id: &str) -> Outcome {
    result.agent(id).expect("agent").outcome
}

fn min_pairwise_clearance(scenario: &ScenarioConfig, result: &SimResult) -> f64 {
    let len = result.traces.iter().map(Vec::len).max().unwrap_or(0);
    let mut best = f64::INFINITY;
    for k in 0..len {
        let at = |i: usize| result.traces[i][k.min(result.traces[i].len() - 1)].position();
        for i in 0..result.traces.len() {
            for j in i + 1..result.traces.len() {
                let d =
                    at(i).distance(at(j)) - scenario.agents[i].radius - scenario.agents[j].radius;
                best = best.min(d);
            }
        }
    }
    best
}

/// 7: the deadlock scenarios, crowd swaps and the ablation.
fn scenarios() -> Check {
    let mut report = Vec::new();

    let tc_ds = run(
        &scenario("t_corridor", &[("mode", "ds")]),
        &SimOptions::default(),
    )
    .unwrap();
    let robot = tc_ds.agent("robot").unwrap();
    ensure!(
        robot.outcome == Outcome::Reached,
        "(a) t_corridor ds: {:?}",
        robot.outcome
    );
    ensure!(
        tc_ds.contacts.is_empty(),
        "(a) t_corridor ds: {} contacts",
        tc_ds.contacts.len()
    );
    let tc_base = run(
        &scenario("t_corridor", &[("mode", "mpepc")]),
        &SimOptions::default(),
    )
    .unwrap();
    ensure!(
        outcome(&tc_base, "robot") == Outcome::Deadlocked,
        "(a) t_corridor baseline: {:?}",
        outcome(&tc_base, "robot")
    );
    report.push(format!(
        "(a) ds reached in {:.1} s, baseline deadlocked",
        robot.time_to_goal.unwrap_or(f64::NAN)
    ));

    let nc = run(
        &scenario("narrow_corridor", &[("mode", "ds")]),
        &SimOptions::default(),
    )
    .unwrap();
    ensure!(
        nc.all_reached(),
        "(b) narrow_corridor ds: {:?}",
        nc.agents.iter().map(|a| a.outcome).collect::<Vec<_>>()
    );
    ensure!(
        nc.contacts.is_empty(),
        "(b) narrow_corridor ds: {} contacts",
        nc.contacts.len()
    );
    let nc_base = run(
        &scenario("narrow_corridor", &[("mode", "mpepc")]),
        &SimOptions::default(),
    )
    .unwrap();
    report.push(format!(
        "(b) ds both reached, baseline {}",
        nc_base
            .agents
            .iter()
            .map(|a| a.outcome.as_str())
            .collect::<Vec<_>>()
            .join("/")
    ));

    for n in ["4", "10"] {
        let sc = scenario("circle", &[("n", n)]);
        let result = run(&sc, &SimOptions::default()).unwrap();
        ensure!(result.all_reached(), "(c) circle({n}): not all reached");
        ensure!(
            result.contacts.is_empty(),
            "(c) circle({n}): {} contacts",
            result.contacts.len()
        );
        let gap = min_pairwise_clearance(&sc, &result);
        ensure!(gap > 0.0, "(c) circle({n}): min pairwise clearance {gap}");
        report.push(format!("(c) circle({n}) all reached, min gap {gap:.3} m"));
    }

    let mut ablated = scenario("t_corridor", &[("mode", "ds")]);
    for a in &mut ablated.agents {
        a.cost.a = 0.0;
        a.cost.terminal = false;
    }
    let ab = run(&ablated, &SimOptions::default()).unwrap();
    ensure!(
        outcome(&ab, "robot") == Outcome::Deadlocked,
        "(d) ablation: {:?}",
        outcome(&ab, "robot")
    );
    report.push("(d) ablation deadlocked".into());
    Ok(report.join("; "))
}

/// Integrates the continuous closed loop toward a fixed target.
fn converge(start: Pose, target: &Pose, gains: &ControlGains, limit: f64) -> Option<f64> {
    let dt = 1e-3;
    let mut pose = start;
    let mut t = 0.0;
    while t <= limit {
        let c = egocentric_coords(&pose, target);
        if c.r < 0.05 {
            return Some(t);
        }
        let kappa = control_law_curvature(&c, gains);
        let v = velocity_modulation(kappa, 1.0, c.r, gains);
        pose = Pose::new(
            pose.x + v * pose.heading.cos() * dt,
            pose.y + v * pose.heading.sin() * dt,
            wrap_angle(pose.heading + kappa * v * dt),
        );
        t += dt;
    }
    None
}

/// 8: the control law drives any start pose onto the target.
fn attractor() -> Check {
    let gains = ControlGains::default();
    let target = Pose::new(0.0, 0.0, 0.0);
    let mut r = rng(8);
    let mut slowest: f64 = 0.0;
    for k in 0..200 {
        let dist = r.gen_range(0.5..10.0);
        let bearing = r.gen_range(-PI..PI);
        let start = Pose::from_position(dist * DVec2::from_angle(bearing), r.gen_range(-PI..PI));
        match converge(start, &target, &gains, 60.0) {
            Some(t) => slowest = slowest.max(t),
            None => return Err(format!("start {k} {start:?} did not converge within 60 s")),
        }
    }
    Ok(format!("200 starts, slowest {slowest:.1} s"))
}

/// 9: planning latency at default budgets.
fn plan_latency() -> Check {
    let planner = PlannerConfig::default();
    let cost = CostParams::default();
    let (grid, world, goal) = t_corridor_world(vec![DynamicObstacle::constant_velocity(
        "walker",
        DVec2::new(-3.0, 0.9),
        DVec2::new(0.6, 0.0),
        RADIUS,
    )]);
    let nav = NavigationField::new(&grid, goal.position(), RADIUS);
    let ctx = CostContext {
        world: &world,
        nav: &nav,
        goal: goal.position(),
        v_limit: planner.v_limit,
    };
    let mut r = rng(9);
    let mut times = Vec::new();
    for k in 0..31 {
        let state = random_free_state(&mut r, &world, &grid);
        let optimizer = OptimizerConfig {
            seed: k,
            ..OptimizerConfig::default()
        };
        let settings = PlanSettings {
            planner: &planner,
            cost: &cost,
            optimizer: &optimizer,
        };
        let started = Instant::now();
        let result = plan(&state, &goal, &ctx, &settings, None).unwrap();
        times.push(started.elapsed().as_secs_f64());
        ensure!(
            result.evaluated.len() >= optimizer.n_global_samples,
            "only {} evaluations",
            result.evaluated.len()
        );
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2] * 1e3;
    ensure!(median < 200.0, "median plan time {median:.1} ms");
    Ok(format!("median {median:.1} ms over {} cycles", times.len()))
}

fn main() {
    let checks: [(u32, &str, fn() -> Check); 9] = [
        (1, "collision probability bounds", collision_bounds),
        (
            2,
            "contact zeroes survivability",
            contact_zeroes_survivability,
        ),
        (3, "in-contact start halts", contact_start_halts),
        (
            4,
            "monotone survivability, bounded steps",
            monotone_and_bounded,
        ),
        (5, "terminal cost bounds", terminal_bounds),
        (6, "oracle equivalences", oracles),
        (7, "scenario reproduction", scenarios),
        (8, "control-law attractor", attractor),
        (9, "planning latency", plan_latency),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} PASS [{name}] {detail} ({secs:.1} s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} FAIL [{name}] {why} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
