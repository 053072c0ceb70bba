use std::f64::consts::PI;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Wall;
use crate::policy::Command;
use crate::sensor::DronePose;

/// Vertical speed limit applied to commanded climb/descent, m/s.
pub const MAX_VERTICAL_SPEED: f64 = 0.5;

/// Half-height of the slab used for collision height overlap, m.
const COLLISION_HALF_HEIGHT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub control_rate_hz: f64,
    pub physics_substeps: usize,
    pub a_max: f64,
    pub a_min: f64,
    pub yaw_accel_limit: f64,
    pub collision_radius: f64,
    pub duration_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            control_rate_hz: 15.0,
            physics_substeps: 10,
            a_max: 1.5,
            a_min: -20.0,
            yaw_accel_limit: 8.0,
            collision_radius: 0.05,
            duration_s: 60.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_rate_hz > 0.0 && self.control_rate_hz.is_finite()) {
            return Err(Error::config("sim.control_rate_hz", "must be positive"));
        }
        if self.physics_substeps == 0 {
            return Err(Error::config("sim.physics_substeps", "must be >= 1"));
        }
        if !(self.a_max > 0.0) {
            return Err(Error::config("sim.a_max", "must be positive"));
        }
        if !(self.a_min < 0.0) {
            return Err(Error::config("sim.a_min", "must be negative"));
        }
        if !(self.yaw_accel_limit > 0.0) {
            return Err(Error::config("sim.yaw_accel_limit", "must be positive"));
        }
        if !(self.collision_radius >= 0.0) {
            return Err(Error::config("sim.collision_radius", "must be >= 0"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("sim.duration_s", "must be positive"));
        }
        Ok(())
    }

    pub fn control_period_s(&self) -> f64 {
        1.0 / self.control_rate_hz
    }
}

/// Ground-truth vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Point2<f64>,
    pub height: f64,
    /// Heading in `(-pi, pi]`, counter-clockwise from +x.
    pub yaw: f64,
    /// Body-frame forward speed.
    pub v_forward: f64,
    pub yaw_rate: f64,
    pub v_vertical: f64,
    pub time_s: f64,
}

impl DroneState {
    pub fn hovering(x: f64, y: f64, height: f64, yaw: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            height,
            yaw: normalize_angle(yaw),
            v_forward: 0.0,
            yaw_rate: 0.0,
            v_vertical: 0.0,
            time_s: 0.0,
        }
    }

    pub fn from_pose(pose: &DronePose) -> Self {
        Self::hovering(pose.position.x, pose.position.y, pose.height, pose.yaw)
    }

    pub fn pose(&self) -> DronePose {
        DronePose {
            position: self.position,
            height: self.height,
            yaw: self.yaw,
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub(crate) fn normalize_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One explicit-Euler step of the unicycle-plus-height model.
///
/// Forward speed approaches the command within `[a_min, a_max] * dt`, yaw rate
/// within the yaw acceleration limit; climb rate follows the command directly,
/// clamped to [`MAX_VERTICAL_SPEED`].
pub fn step_physics(
    state: &DroneState,
    cmd: &Command,
    dt: f64,
    cfg: &SimConfig,
) -> Result<DroneState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let mut next = *state;
    next.position.x += state.v_forward * state.yaw.cos() * dt;
    next.position.y += state.v_forward * state.yaw.sin() * dt;
    next.yaw = normalize_angle(state.yaw + state.yaw_rate * dt);
    next.height = (state.height + state.v_vertical * dt).max(0.0);

    next.v_forward += (cmd.v_forward - state.v_forward).clamp(cfg.a_min * dt, cfg.a_max * dt);
    let yaw_step = cfg.yaw_accel_limit * dt;
    next.yaw_rate += (cmd.yaw_rate - state.yaw_rate).clamp(-yaw_step, yaw_step);
    next.v_vertical = cmd
        .v_vertical
        .clamp(-MAX_VERTICAL_SPEED, MAX_VERTICAL_SPEED);
    next.time_s += dt;
    Ok(next)
}

fn overlaps_height(wall: &Wall, height: f64) -> bool {
    wall.spans_height(
        height - COLLISION_HALF_HEIGHT,
        height + COLLISION_HALF_HEIGHT,
    )
}

/// Distance from the vehicle disc to the nearest wall at its height; negative
/// when overlapping. `None` when nothing is at that height.
pub fn clearance(state: &DroneState, scene: &[Wall], cfg: &SimConfig) -> Option<f64> {
    scene
        .iter()
        .filter(|w| overlaps_height(w, state.height))
        .map(|w| w.distance_to(&state.position) - cfg.collision_radius)
        .reduce(f64::min)
}

/// True when the vehicle disc touches any wall spanning its height.
pub fn check_collision(state: &DroneState, scene: &[Wall], cfg: &SimConfig) -> bool {
    clearance(state, scene, cfg).is_some_and(|c| c < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SurfaceClass;
    use crate::policy::Mode;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cmd(v: f64, w: f64, vz: f64) -> Command {
        Command {
            v_forward: v,
            yaw_rate: w,
            v_vertical: vz,
            mode: Mode::Cruise,
        }
    }

    #[test]
    fn acceleration_limit() {
        let cfg = SimConfig::default();
        let s = DroneState::hovering(0.0, 0.0, 0.4, 0.0);
        let n = step_physics(&s, &cmd(1.0, 0.0, 0.0), 1.0 / 15.0, &cfg).unwrap();
        assert_relative_eq!(n.v_forward, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn braking_limit() {
        let cfg = SimConfig::default();
        let s = DroneState {
            v_forward: 2.0,
            ..DroneState::hovering(0.0, 0.0, 0.4, 0.0)
        };
        let n = step_physics(&s, &cmd(0.0, 0.0, 0.0), 0.1, &cfg).unwrap();
        assert_relative_eq!(n.v_forward, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_command_only_advances_time() {
        let cfg = SimConfig::default();
        let s = DroneState::hovering(1.0, 2.0, 0.4, 0.3);
        let n = step_physics(&s, &cmd(0.0, 0.0, 0.0), 0.05, &cfg).unwrap();
        assert_eq!(n, DroneState { time_s: 0.05, ..s });
    }

    #[test]
    fn rejects_non_positive_dt() {
        let s = DroneState::hovering(0.0, 0.0, 0.4, 0.0);
        assert!(step_physics(&s, &cmd(0.0, 0.0, 0.0), 0.0, &SimConfig::default()).is_err());
        assert!(step_physics(&s, &cmd(0.0, 0.0, 0.0), -1.0, &SimConfig::default()).is_err());
    }

    #[test]
    fn vertical_speed_is_clamped_and_height_floor() {
        let cfg = SimConfig::default();
        let s = DroneState::hovering(0.0, 0.0, 0.01, 0.0);
        let n = step_physics(&s, &cmd(0.0, 0.0, -3.0), 0.1, &cfg).unwrap();
        assert_relative_eq!(n.v_vertical, -0.5);
        let n = step_physics(&n, &cmd(0.0, 0.0, -3.0), 0.1, &cfg).unwrap();
        assert_eq!(n.height, 0.0);
    }

    #[test]
    fn yaw_wraps() {
        let cfg = SimConfig::default();
        let s = DroneState {
            yaw_rate: 1.0,
            ..DroneState::hovering(0.0, 0.0, 0.4, PI - 0.01)
        };
        let n = step_physics(&s, &cmd(0.0, 1.0, 0.0), 0.1, &cfg).unwrap();
        assert!(n.yaw < 0.0 && n.yaw > -PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
    }

    #[test]
    fn collision_examples() {
        let cfg = SimConfig::default();
        let wall = Wall::new([1.0, -1.0], [1.0, 1.0], 0.0, 2.0, SurfaceClass::Matte);
        let far = DroneState::hovering(0.0, 0.0, 0.4, 0.0);
        assert!(!check_collision(&far, &[wall], &cfg));
        let near = DroneState::hovering(0.97, 0.0, 0.4, 0.0);
        assert!(check_collision(&near, &[wall], &cfg));
        let high = Wall::new([1.0, -1.0], [1.0, 1.0], 0.6, 0.8, SurfaceClass::Matte);
        assert!(!check_collision(&near, &[high], &cfg));
        assert_eq!(clearance(&near, &[high], &cfg), None);
        assert_relative_eq!(clearance(&far, &[wall], &cfg).unwrap(), 0.95);
    }

    proptest! {
        #[test]
        fn speed_change_respects_limits(
            v0 in -1.0f64..3.0,
            target in -1.0f64..3.0,
            dt in 0.001f64..0.2,
        ) {
            let cfg = SimConfig::default();
            let s = DroneState { v_forward: v0, ..DroneState::hovering(0.0, 0.0, 0.4, 0.0) };
            let n = step_physics(&s, &cmd(target, 0.0, 0.0), dt, &cfg).unwrap();
            let dv = n.v_forward - v0;
            prop_assert!(dv <= cfg.a_max * dt + 1e-12 && dv >= cfg.a_min * dt - 1e-12);
            // Never passes the commanded value.
            prop_assert!((n.v_forward - target) * (v0 - target) >= -1e-12);
        }

        #[test]
        fn zero_command_keeps_position(x in -5.0f64..5.0, y in -5.0f64..5.0, yaw in -3.0f64..3.0, steps in 1usize..50) {
            let cfg = SimConfig::default();
            let mut s = DroneState::hovering(x, y, 0.4, yaw);
            for _ in 0..steps {
                s = step_physics(&s, &cmd(0.0, 0.0, 0.0), 0.01, &cfg).unwrap();
            }
            prop_assert_eq!(s.position, Point2::new(x, y));
        }
    }
}
