use std::io::Write;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::policy::{decide_detailed, Command, DeadEndHistory};
use crate::sensor::{apply_noise, raycast_frame, DepthFrame, RandomStream};

use super::dynamics::{check_collision, step_physics, DroneState};
use super::metrics::{compute_metrics, RunMetrics};
use super::scenario::ScenarioConfig;

pub const TRACE_HEADER: &str =
    "time_s,x,y,height,yaw,v_forward,yaw_rate,v_vertical,mode,min_group_distance_mm";

/// One control tick: the state the frame was taken in and what was decided.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub state: DroneState,
    /// First 8 bytes of the SHA-256 of the frame encoding, hex.
    pub frame_digest: String,
    pub command: Command,
    pub nearest_group_mm: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Crashed,
    Landed,
    GoalReached,
    OutOfBounds,
    DurationElapsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub ticks: Vec<TickRecord>,
    /// State after the last tick's physics.
    pub final_state: DroneState,
    pub termination: Termination,
    pub crash_position: Option<Point2<f64>>,
    /// When each moving obstacle's trigger fired.
    pub trigger_times: Vec<Option<f64>>,
    pub collision_radius: f64,
}

impl Trace {
    /// CSV with one row per control tick. Position columns are the sensed
    /// state, velocity columns and mode are the tick's command.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for t in &self.ticks {
            let s = &t.state;
            let c = &t.command;
            let nearest = t.nearest_group_mm.map_or(-1, i32::from);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                s.time_s,
                s.position.x,
                s.position.y,
                s.height,
                s.yaw,
                c.v_forward,
                c.yaw_rate,
                c.v_vertical,
                c.mode,
                nearest
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

fn frame_digest(frame: &DepthFrame) -> String {
    let hash = Sha256::digest(frame.to_bytes());
    hash[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the closed loop: sense, decide, integrate, check collisions.
///
/// Ends on a crash, a completed landing, reaching the goal region, leaving the
/// world bounds, or after `sim.duration_s`.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    cfg: &RunConfig,
    seed: u64,
) -> Result<(Trace, RunMetrics)> {
    scenario.validate()?;
    cfg.validate()?;
    let world = &scenario.world;
    let sim = &cfg.sim;
    let period = sim.control_period_s();
    let dt = period / sim.physics_substeps as f64;
    let max_ticks = (sim.duration_s / period - 1e-9).ceil() as u64;

    let mut rng = RandomStream::new(seed);
    let mut state = DroneState::from_pose(&scenario.start);
    let mut history = DeadEndHistory::default();
    let mut fired: Vec<Option<f64>> = vec![None; world.moving_obstacles.len()];
    let mut ticks = Vec::with_capacity(max_ticks as usize);
    let mut termination = Termination::DurationElapsed;
    let mut crash_position = None;

    for k in 0..max_ticks {
        let now = k as f64 * period;
        state.time_s = now;
        world.update_triggers(&state.position, now, &mut fired);
        let scene = world.scene_at(now, &fired);
        let ideal = raycast_frame(
            &scene,
            &state.pose(),
            &cfg.sensor,
            cfg.noise.reflectivity_cutoff_deg,
        );
        let timestamp_ms = (now * 1000.0).round() as u64;
        let frame = apply_noise(&ideal, &cfg.noise, &cfg.sensor, &mut rng, timestamp_ms);
        let decision = decide_detailed(
            &frame,
            &state,
            &history,
            now,
            &cfg.policy,
            &cfg.perception,
            &cfg.sensor,
        );
        ticks.push(TickRecord {
            state,
            frame_digest: frame_digest(&frame),
            command: decision.command,
            nearest_group_mm: decision.nearest_group_mm(),
        });
        history = decision.history;

        let mut crashed = false;
        for _ in 0..sim.physics_substeps {
            state = step_physics(&state, &decision.command, dt, sim)?;
            let scene = if world.moving_obstacles.is_empty() {
                scene.clone()
            } else {
                world.scene_at(state.time_s, &fired)
            };
            if check_collision(&state, &scene, sim) {
                crashed = true;
                break;
            }
        }
        if !crashed {
            state.time_s = (k + 1) as f64 * period;
        }

        if crashed {
            termination = Termination::Crashed;
            crash_position = Some(state.position);
            break;
        }
        if decision.command.mode == crate::policy::Mode::Land && state.height <= 0.005 {
            termination = Termination::Landed;
            break;
        }
        if scenario.goal.is_some_and(|g| g.contains(&state.position)) {
            termination = Termination::GoalReached;
            break;
        }
        if !world.bounds.contains(&state.position) {
            termination = Termination::OutOfBounds;
            break;
        }
    }

    let trace = Trace {
        ticks,
        final_state: state,
        termination,
        crash_position,
        trigger_times: fired,
        collision_radius: sim.collision_radius,
    };
    let metrics = compute_metrics(&trace, world)?;
    Ok((trace, metrics))
}
