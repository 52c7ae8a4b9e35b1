//! Per-cycle selection of the trajectory parameter.
//!
//! A global phase evaluates a fixed set of candidates (halting, warm start,
//! direct-to-goal) plus randomly shifted Halton samples over the parameter
//! box; a local phase runs bounded Nelder-Mead from the best few. The two
//! angular dimensions are handled on the unwrapped line and wrapped only when
//! a candidate is evaluated, so the simplex never sees a seam at `+-pi`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{trajectory_cost, CostBreakdown, CostContext, CostParams};
use crate::error::{Error, Result};
use crate::geometry::{egocentric_coords, wrap_angle, Pose};
use crate::kinematics::{rollout, PlannerConfig, RobotState, Trajectory, TrajectoryParam};

/// Inclusive `[lo, hi]` box for `(r, theta, delta, v_max)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub r: [f64; 2],
    pub theta: [f64; 2],
    pub delta: [f64; 2],
    pub v_max: [f64; 2],
}

impl ParamBounds {
    pub fn for_planner(cfg: &PlannerConfig) -> Self {
        Self {
            r: [0.0, cfg.r_max()],
            theta: [-PI, PI],
            delta: [-PI, PI],
            v_max: [0.0, cfg.v_limit],
        }
    }

    fn dims(&self) -> [[f64; 2]; 4] {
        [self.r, self.theta, self.delta, self.v_max]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::InvalidConfig(
                "parameter bounds must satisfy lo <= hi".into(),
            ));
        }
        if self.r[0] < 0.0 || self.v_max[0] < 0.0 {
            return Err(Error::InvalidConfig(
                "r and v_max bounds must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Clamps `r` and `v_max` and wraps the angles.
    pub fn project(&self, x: [f64; 4]) -> TrajectoryParam {
        TrajectoryParam {
            r: x[0].clamp(self.r[0], self.r[1]),
            theta: project_angle(x[1], self.theta),
            delta: project_angle(x[2], self.delta),
            v_max: x[3].clamp(self.v_max[0], self.v_max[1]),
        }
    }
}

/// Angle bounds covering the full circle wrap; narrower ones clamp.
fn project_angle(a: f64, [lo, hi]: [f64; 2]) -> f64 {
    if hi - lo >= 2.0 * PI - 1e-12 {
        wrap_angle(a)
    } else {
        wrap_angle(a).clamp(lo, hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub n_global_samples: usize,
    pub n_refine_seeds: usize,
    pub refine_max_evals: usize,
    pub seed: u64,
    /// Defaults to [`ParamBounds::for_planner`].
    pub bounds: Option<ParamBounds>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_global_samples: 400,
            n_refine_seeds: 8,
            refine_max_evals: 120,
            seed: 0,
            bounds: None,
        }
    }
}

impl OptimizerConfig {
    pub fn bounds_for(&self, planner: &PlannerConfig) -> ParamBounds {
        self.bounds
            .unwrap_or_else(|| ParamBounds::for_planner(planner))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_global_samples == 0 {
            return Err(Error::InvalidConfig(
                "n_global_samples must be positive".into(),
            ));
        }
        if self.n_refine_seeds > self.n_global_samples {
            return Err(Error::InvalidConfig(
                "n_refine_seeds exceeds n_global_samples".into(),
            ));
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }
}

/// Planner and cost settings for one agent.
#[derive(Clone, Copy, Debug)]
pub struct PlanSettings<'a> {
    pub planner: &'a PlannerConfig,
    pub cost: &'a CostParams,
    pub optimizer: &'a OptimizerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub param: TrajectoryParam,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub best_param: TrajectoryParam,
    pub best_cost: f64,
    pub best_trajectory: Trajectory,
    pub best_breakdown: CostBreakdown,
    /// Every candidate evaluated this cycle, in evaluation order.
    pub evaluated: Vec<Candidate>,
}

/// Rolls out `z` from `current` and prices the result.
pub fn evaluate_candidate(
    z: &TrajectoryParam,
    current: &RobotState,
    ctx: &CostContext<'_>,
    planner: &PlannerConfig,
    cost: &CostParams,
) -> Result<(Trajectory, CostBreakdown)> {
    let traj = rollout(current, z, planner)?;
    let breakdown = trajectory_cost(&traj, ctx, cost)?;
    Ok((traj, breakdown))
}

/// Total order used to pick the winner: cost, then `(r, theta, delta, v_max)`
/// lexicographically. Since `r >= 0`, the halting candidate wins cost ties.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then_with(|| a.param.r.total_cmp(&b.param.r))
        .then_with(|| a.param.theta.total_cmp(&b.param.theta))
        .then_with(|| a.param.delta.total_cmp(&b.param.delta))
        .then_with(|| a.param.v_max.total_cmp(&b.param.v_max))
}

/// Radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut result = 0.0;
    let mut f = inv_base;
    while index > 0 {
        result += (index % base) as f64 * f;
        index /= base;
        f *= inv_base;
    }
    result
}

/// `count` points of the 4-D Halton sequence in `[0, 1)^4`, rotated by a
/// seeded random shift (Cranley-Patterson).
pub fn shifted_halton(count: usize, seed: u64) -> Vec<[f64; 4]> {
    const BASES: [u64; 4] = [2, 3, 5, 7];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
    (1..=count as u64)
        .map(|k| std::array::from_fn(|d| (radical_inverse(k, BASES[d]) + shift[d]).fract()))
        .collect()
}

/// Bounded Nelder-Mead on `f` starting from `x0`, spending at most
/// `max_evals` evaluations. Returns every evaluated point with its value.
pub fn nelder_mead<F>(
    f: F,
    x0: [f64; 4],
    step: [f64; 4],
    fx0: f64,
    max_evals: usize,
) -> Vec<([f64; 4], f64)>
where
    F: Fn(&[f64; 4]) -> f64,
{
    let mut history = Vec::new();
    let eval = |x: [f64; 4], history: &mut Vec<([f64; 4], f64)>| {
        let v = f(&x);
        history.push((x, v));
        v
    };
    let mut simplex: Vec<([f64; 4], f64)> = vec![(x0, fx0)];
    for d in 0..4 {
        if history.len() >= max_evals {
            return history;
        }
        let mut x = x0;
        x[d] += step[d];
        let v = eval(x, &mut history);
        simplex.push((x, v));
    }
    let by_value = |a: &([f64; 4], f64), b: &([f64; 4], f64)| a.1.total_cmp(&b.1);
    while history.len() < max_evals {
        simplex.sort_by(by_value);
        let worst = simplex[4];
        let centroid: [f64; 4] =
            std::array::from_fn(|d| simplex[..4].iter().map(|p| p.0[d]).sum::<f64>() / 4.0);
        let along = |t: f64| -> [f64; 4] {
            std::array::from_fn(|d| centroid[d] + t * (worst.0[d] - centroid[d]))
        };

        let xr = along(-1.0);
        let fr = eval(xr, &mut history);
        if fr < simplex[0].1 {
            if history.len() >= max_evals {
                simplex[4] = (xr, fr);
                break;
            }
            let xe = along(-2.0);
            let fe = eval(xe, &mut history);
            simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (xr, fr);
        } else {
            if history.len() >= max_evals {
                break;
            }
            let outside = fr < worst.1;
            let xc = along(if outside { -0.5 } else { 0.5 });
            let fc = eval(xc, &mut history);
            if fc < if outside { fr } else { worst.1 } {
                simplex[4] = (xc, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0;
                for k in 1..5 {
                    if history.len() >= max_evals {
                        break;
                    }
                    let x: [f64; 4] =
                        std::array::from_fn(|d| best[d] + 0.5 * (simplex[k].0[d] - best[d]));
                    let v = eval(x, &mut history);
                    simplex[k] = (x, v);
                }
            }
        }
    }
    history
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a per-cycle seed from a base seed and a cycle/agent index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix_seed(base, index)
}

/// Derives a seed from a base seed and a name, independent of where the name
/// sits in any list.
pub fn derive_named_seed(base: u64, name: &str) -> u64 {
    name.bytes()
        .fold(mix_seed(base, name.len() as u64), |acc, b| {
            mix_seed(acc, b as u64)
        })
}

/// Headings in the forward fan of anchors.
const FAN_HEADINGS: usize = 20;

/// The fixed candidates evaluated every cycle before sampling: halting, the
/// warm start, straight at the goal, and a fan of targets straight ahead
/// (`delta = 0`) at full speed. The cost valley around `delta = 0` is narrow
/// near obstacles, so random samples alone tend to miss it.
pub fn anchor_candidates(
    current: &RobotState,
    goal: &Pose,
    bounds: &ParamBounds,
    planner: &PlannerConfig,
    warm_start: Option<TrajectoryParam>,
) -> Vec<TrajectoryParam> {
    let mut anchors = vec![TrajectoryParam::NULL];
    if let Some(w) = warm_start {
        anchors.push(bounds.project(w.to_array()));
    }
    let c = egocentric_coords(&current.pose, goal);
    anchors.push(bounds.project([c.r, c.theta, c.delta, planner.v_limit]));
    for r in [0.25 * planner.r_max(), 0.5 * planner.r_max()] {
        for k in 0..FAN_HEADINGS {
            let theta = -PI + 2.0 * PI * k as f64 / FAN_HEADINGS as f64;
            anchors.push(bounds.project([r, theta, 0.0, planner.v_limit]));
        }
    }
    anchors
}

/// Chooses the trajectory parameter minimising the expected cost.
///
/// The halting candidate is always evaluated, so a result is always
/// produced. Deterministic for a fixed `optimizer.seed`.
pub fn plan(
    current: &RobotState,
    goal: &Pose,
    ctx: &CostContext<'_>,
    settings: &PlanSettings<'_>,
    warm_start: Option<TrajectoryParam>,
) -> Result<PlanResult> {
    let PlanSettings {
        planner,
        cost,
        optimizer,
    } = *settings;
    let bounds = optimizer.bounds_for(planner);
    let price = |z: &TrajectoryParam| -> Result<f64> {
        let (_, breakdown) = evaluate_candidate(z, current, ctx, planner, cost)?;
        Ok(breakdown.total)
    };

    let mut params = anchor_candidates(current, goal, &bounds, planner, warm_start);
    let n_samples = optimizer.n_global_samples.saturating_sub(params.len());
    let lo = bounds.dims().map(|[lo, _]| lo);
    let span = bounds.dims().map(|[lo, hi]| hi - lo);
    params.extend(
        shifted_halton(n_samples, optimizer.seed)
            .into_iter()
            .map(|u| bounds.project(std::array::from_fn(|d| lo[d] + u[d] * span[d]))),
    );

    let costs: Vec<f64> = params.par_iter().map(price).collect::<Result<_>>()?;
    let mut evaluated: Vec<Candidate> = params
        .into_iter()
        .zip(costs)
        .map(|(param, cost)| Candidate { param, cost })
        .collect();

    let mut ranked: Vec<&Candidate> = evaluated.iter().collect();
    ranked.sort_by(|a, b| candidate_order(a, b));
    let mut seeds: Vec<Candidate> = Vec::new();
    for c in ranked {
        if seeds.len() >= optimizer.n_refine_seeds {
            break;
        }
        if !seeds.iter().any(|s| s.param == c.param) {
            seeds.push(c.clone());
        }
    }

    let step = [0.1 * span[0].max(1e-3), 0.4, 0.4, 0.15 * span[3].max(1e-3)];
    let refined: Vec<Vec<Candidate>> = seeds
        .par_iter()
        .map(|seed| {
            let objective = |x: &[f64; 4]| price(&bounds.project(*x)).unwrap_or(f64::INFINITY);
            nelder_mead(
                objective,
                seed.param.to_array(),
                step,
                seed.cost,
                optimizer.refine_max_evals,
            )
            .into_iter()
            .map(|(x, cost)| Candidate {
                param: bounds.project(x),
                cost,
            })
            .collect()
        })
        .collect();
    evaluated.extend(refined.into_iter().flatten());

    let best = evaluated
        .iter()
        .min_by(|a, b| candidate_order(a, b))
        .expect("halting candidate is always evaluated")
        .clone();
    let (best_trajectory, best_breakdown) =
        evaluate_candidate(&best.param, current, ctx, planner, cost)?;
    Ok(PlanResult {
        best_param: best.param,
        best_cost: best.cost,
        best_trajectory,
        best_breakdown,
        evaluated,
    })
}
