//! Closed-loop simulation: world geometry, vehicle kinematics, scenario
//! builders and run metrics.

mod dynamics;
mod metrics;
mod runner;
mod scenario;
mod world;

pub use dynamics::{
    check_collision, clearance, step_physics, DroneState, SimConfig, MAX_VERTICAL_SPEED,
};
pub use metrics::{compute_metrics, RunMetrics};
pub use runner::{run_scenario, Termination, TickRecord, Trace, TRACE_HEADER};
pub use scenario::{make_scenario, ScenarioConfig, ScenarioKind, ScenarioParams};
pub use world::{MovingObstacle, Trigger, Waypoint, World};
