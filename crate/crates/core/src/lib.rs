//! Model predictive equilibrium point control for differential-drive robots
//! with an anticipatory, survivability-aware cost.
//!
//! The planner searches a four-dimensional trajectory parameter
//! `(r, theta, delta, v_max)` describing a target pose in the robot's
//! egocentric frame and a speed cap. Each candidate is rolled out with a
//! smooth feedback control law and priced by [`cost::trajectory_cost`].
//!
//! ```
//! use mpepc::scenarios::{builtin, BuiltinParams};
//! use mpepc::simulator::{run, SimOptions};
//!
//! let scenario = builtin("open_field", &BuiltinParams::new()).unwrap();
//! let result = run(&scenario, &SimOptions::default()).unwrap();
//! assert!(result.all_reached());
//! ```

pub mod cost;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod landscape;
pub mod navigation;
pub mod optimizer;
pub mod report;
pub mod scenarios;
pub mod simulator;
pub mod world;

pub use cost::{CostMode, CostParams};
pub use error::{Error, Result};
pub use geometry::Pose;
pub use kinematics::{PlannerConfig, RobotState, Trajectory, TrajectoryParam};
pub use optimizer::{plan, OptimizerConfig, PlanResult};
pub use scenarios::ScenarioConfig;
pub use simulator::{run, Outcome, SimOptions, SimResult};
pub use world::{OccupancyGrid, World};

/// The guide in `book/`, compiled so its examples stay in step with the code.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/control-law.md")]
    mod control_law {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
}
