use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Mode;

use super::dynamics::{clearance, DroneState, SimConfig};
use super::runner::{Termination, Trace};
use super::world::World;

/// Speed below which a finished run counts as stopped, m/s.
const STOPPED_SPEED: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub crashed: bool,
    pub crash_position: Option<[f64; 2]>,
    pub flight_time_s: f64,
    /// Path length over the recorded ticks and the final state.
    pub distance_m: f64,
    /// Smallest gap between the vehicle disc and geometry at its height.
    pub min_clearance_m: f64,
    /// Gap to the nearest geometry when the run ended at rest.
    pub final_stop_distance_m: Option<f64>,
    pub turnarounds: usize,
    pub termination: Termination,
}

pub fn compute_metrics(trace: &Trace, world: &World) -> Result<RunMetrics> {
    let first = trace
        .ticks
        .first()
        .ok_or_else(|| Error::Domain("cannot compute metrics of an empty trace".into()))?;
    let cfg = SimConfig {
        collision_radius: trace.collision_radius,
        ..SimConfig::default()
    };
    let gap = |s: &DroneState| {
        let scene = world.scene_at(s.time_s, &trace.trigger_times);
        clearance(s, &scene, &cfg).unwrap_or(f64::INFINITY)
    };

    let states: Vec<&DroneState> = trace
        .ticks
        .iter()
        .map(|t| &t.state)
        .chain([&trace.final_state])
        .collect();
    let distance_m = states
        .windows(2)
        .map(|w| (w[1].position - w[0].position).norm())
        .sum();
    let min_clearance_m = states.iter().map(|s| gap(s)).fold(f64::INFINITY, f64::min);

    let crashed = trace.termination == Termination::Crashed;
    let final_stop_distance_m = (!crashed && trace.final_state.v_forward.abs() < STOPPED_SPEED)
        .then(|| gap(&trace.final_state))
        .filter(|g| g.is_finite());

    let turnarounds = trace
        .ticks
        .windows(2)
        .filter(|w| w[1].command.mode == Mode::TurnAround && w[0].command.mode != Mode::TurnAround)
        .count()
        + usize::from(first.command.mode == Mode::TurnAround);

    Ok(RunMetrics {
        crashed,
        crash_position: trace.crash_position.map(|p| [p.x, p.y]),
        flight_time_s: trace.final_state.time_s - first.state.time_s,
        distance_m,
        min_clearance_m,
        final_stop_distance_m,
        turnarounds,
        termination: trace.termination,
    })
}
