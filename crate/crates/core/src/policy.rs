//! Zone-based decision tree turning depth frames into flight commands.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::{
    group, group_features, threshold, GroupGeometry, ObjectGroup, PerceptionConfig, Side,
};
use crate::sensor::{DepthFrame, SensorConfig, COLS, ROWS};
use crate::sim::DroneState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub d_fear: f64,
    pub d_short: f64,
    pub d_med: f64,
    pub d_long: f64,
    pub v_back: f64,
    pub v_slow: f64,
    pub v_med: f64,
    pub v_fast: f64,
    /// Forward speed with nothing in the danger or caution zones.
    pub v_max: f64,
    pub omega_slow: f64,
    pub omega_fast: f64,
    pub cruise_height: f64,
    pub v_vertical: f64,
    /// Proportional gain of the height-hold loop, 1/s.
    pub height_gain: f64,
    pub d_vert: f64,
    pub ceiling_rows: Vec<usize>,
    pub ground_rows: Vec<usize>,
    pub danger_cols: Vec<usize>,
    pub caution_cols: Vec<usize>,
    /// When false the yaw rate is held at zero outside of turn-arounds.
    pub steering_enabled: bool,
    pub deadend_flip_count: usize,
    pub deadend_window_s: f64,
    pub battery_budget_s: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_fear: 0.15,
            d_short: 0.4,
            d_med: 0.7,
            d_long: 1.4,
            v_back: -0.2,
            v_slow: 0.15,
            v_med: 0.4,
            v_fast: 0.85,
            v_max: 1.0,
            omega_slow: 0.7,
            omega_fast: 1.0,
            cruise_height: 0.4,
            v_vertical: 0.2,
            height_gain: 1.0,
            d_vert: 0.3,
            ceiling_rows: vec![0],
            ground_rows: vec![7],
            danger_cols: vec![3, 4],
            caution_cols: vec![2, 5],
            steering_enabled: true,
            deadend_flip_count: 4,
            deadend_window_s: 3.0,
            battery_budget_s: 440.0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("d_fear", self.d_fear),
            ("d_short", self.d_short),
            ("d_med", self.d_med),
            ("d_long", self.d_long),
            ("v_back", self.v_back),
            ("v_slow", self.v_slow),
            ("v_med", self.v_med),
            ("v_fast", self.v_fast),
            ("v_max", self.v_max),
            ("omega_slow", self.omega_slow),
            ("omega_fast", self.omega_fast),
            ("cruise_height", self.cruise_height),
            ("v_vertical", self.v_vertical),
            ("height_gain", self.height_gain),
            ("d_vert", self.d_vert),
            ("deadend_window_s", self.deadend_window_s),
            ("battery_budget_s", self.battery_budget_s),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("policy.{name}"), "must be finite"));
            }
        }
        if !(0.0 < self.d_fear
            && self.d_fear < self.d_short
            && self.d_short < self.d_med
            && self.d_med < self.d_long)
        {
            return Err(Error::config(
                "policy.d_fear",
                "need 0 < d_fear < d_short < d_med < d_long",
            ));
        }
        if self.v_back >= 0.0 {
            return Err(Error::config("policy.v_back", "must be negative"));
        }
        if !(0.0 <= self.v_slow && self.v_slow < self.v_med && self.v_med < self.v_fast) {
            return Err(Error::config(
                "policy.v_med",
                "need 0 <= v_slow < v_med < v_fast",
            ));
        }
        if self.v_max <= 0.0 {
            return Err(Error::config("policy.v_max", "must be positive"));
        }
        if !(0.0 < self.omega_slow && self.omega_slow <= self.omega_fast) {
            return Err(Error::config(
                "policy.omega_slow",
                "need 0 < omega_slow <= omega_fast",
            ));
        }
        if self.cruise_height <= 0.0 {
            return Err(Error::config("policy.cruise_height", "must be positive"));
        }
        if self.v_vertical < 0.0 || self.height_gain < 0.0 {
            return Err(Error::config(
                "policy.v_vertical",
                "vertical speed and gain must be >= 0",
            ));
        }
        if self.d_vert <= 0.0 {
            return Err(Error::config("policy.d_vert", "must be positive"));
        }
        for (name, set, bound) in [
            ("ceiling_rows", &self.ceiling_rows, ROWS),
            ("ground_rows", &self.ground_rows, ROWS),
            ("danger_cols", &self.danger_cols, COLS),
            ("caution_cols", &self.caution_cols, COLS),
        ] {
            if let Some(bad) = set.iter().find(|i| **i >= bound) {
                return Err(Error::config(
                    format!("policy.{name}"),
                    format!("index {bad} out of range"),
                ));
            }
        }
        if self
            .danger_cols
            .iter()
            .any(|c| self.caution_cols.contains(c))
        {
            return Err(Error::config(
                "policy.caution_cols",
                "must not overlap danger_cols",
            ));
        }
        if self
            .ceiling_rows
            .iter()
            .any(|r| self.ground_rows.contains(r))
        {
            return Err(Error::config(
                "policy.ground_rows",
                "must not overlap ceiling_rows",
            ));
        }
        if self.deadend_flip_count < 2 {
            return Err(Error::config("policy.deadend_flip_count", "must be >= 2"));
        }
        if self.deadend_window_s <= 0.0 {
            return Err(Error::config("policy.deadend_window_s", "must be positive"));
        }
        if self.battery_budget_s <= 0.0 {
            return Err(Error::config("policy.battery_budget_s", "must be positive"));
        }
        Ok(())
    }

    /// Scheduled length of a 180 degree turn at `omega_fast`.
    pub fn turnaround_duration_s(&self) -> f64 {
        PI / self.omega_fast
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneKind {
    Ceiling,
    Ground,
    Danger,
    Caution,
    Periphery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub kind: ZoneKind,
    pub side: Side,
}

/// Row rules take precedence over column rules.
pub fn classify_zone(row: usize, col: usize, cfg: &PolicyConfig) -> Zone {
    let kind = if cfg.ceiling_rows.contains(&row) {
        ZoneKind::Ceiling
    } else if cfg.ground_rows.contains(&row) {
        ZoneKind::Ground
    } else if cfg.danger_cols.contains(&col) {
        ZoneKind::Danger
    } else if cfg.caution_cols.contains(&col) {
        ZoneKind::Caution
    } else {
        ZoneKind::Periphery
    };
    let side = if col < COLS / 2 {
        Side::Left
    } else {
        Side::Right
    };
    Zone { kind, side }
}

/// The two zones whose obstacles slow the drone down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReactionZone {
    Danger,
    Caution,
}

/// Commanded forward speed for an obstacle `d` meters away.
pub fn forward_velocity(d: f64, zone: ReactionZone, cfg: &PolicyConfig) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("obstacle distance {d} must be >= 0")));
    }
    let lerp = |d0: f64, v0: f64, d1: f64, v1: f64| v0 + (d - d0) / (d1 - d0) * (v1 - v0);
    let v = if d < cfg.d_fear {
        cfg.v_back
    } else if d < cfg.d_short {
        0.0
    } else if d < cfg.d_long {
        match zone {
            ReactionZone::Caution => lerp(cfg.d_short, cfg.v_slow, cfg.d_long, cfg.v_fast),
            ReactionZone::Danger if d < cfg.d_med => {
                lerp(cfg.d_short, cfg.v_slow, cfg.d_med, cfg.v_med)
            }
            ReactionZone::Danger => lerp(cfg.d_med, cfg.v_med, cfg.d_long, cfg.v_fast),
        }
    } else {
        cfg.v_fast
    };
    Ok(v.min(cfg.v_max))
}

/// Yaw rate steering away from the obstacle; positive turns left.
///
/// Centered obstacles are passed on the right.
pub fn steering_rate(geometry: &GroupGeometry, d: f64, cfg: &PolicyConfig) -> f64 {
    let magnitude = if d < cfg.d_med {
        cfg.omega_fast
    } else {
        cfg.omega_slow
    };
    match geometry.side {
        Side::Right => magnitude,
        Side::Left | Side::Center => -magnitude,
    }
}

/// Climb or descent rate when the closest group sits entirely in the ground or
/// ceiling rows within `d_vert`; `None` when height adjustment does not apply.
pub fn height_adjust(groups: &[ObjectGroup], cfg: &PolicyConfig) -> Option<f64> {
    let closest = groups.iter().min_by_key(|g| g.min_distance_mm)?;
    if closest.min_distance_m() >= cfg.d_vert {
        return None;
    }
    let all_ground = closest
        .pixels
        .iter()
        .all(|(r, _)| cfg.ground_rows.contains(r));
    let all_ceiling = closest
        .pixels
        .iter()
        .all(|(r, _)| cfg.ceiling_rows.contains(r));
    if all_ground {
        Some(cfg.v_vertical)
    } else if all_ceiling {
        Some(-cfg.v_vertical)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Cruise,
    SlowSteer,
    StopSteer,
    Backward,
    HeightAdjust,
    TurnAround,
    Land,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Cruise,
        Mode::SlowSteer,
        Mode::StopSteer,
        Mode::Backward,
        Mode::HeightAdjust,
        Mode::TurnAround,
        Mode::Land,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cruise => "Cruise",
            Mode::SlowSteer => "SlowSteer",
            Mode::StopSteer => "StopSteer",
            Mode::Backward => "Backward",
            Mode::HeightAdjust => "HeightAdjust",
            Mode::TurnAround => "TurnAround",
            Mode::Land => "Land",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub v_forward: f64,
    /// Positive is counter-clockwise (left).
    pub yaw_rate: f64,
    pub v_vertical: f64,
    pub mode: Mode,
}

impl Command {
    pub fn steer_sign(&self) -> i8 {
        if self.yaw_rate > 0.0 {
            1
        } else if self.yaw_rate < 0.0 {
            -1
        } else {
            0
        }
    }
}

/// Recent steering reversals, used to detect dead ends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeadEndHistory {
    /// `(time_s, sign)` of each change of steering direction.
    pub recent_steer_signs: Vec<(f64, i8)>,
    /// Sign of the last recorded entry; survives window pruning.
    pub last_sign: Option<i8>,
    pub turnaround_active_until: Option<f64>,
}

impl DeadEndHistory {
    pub fn turnaround_active(&self, now: f64) -> bool {
        self.turnaround_active_until.is_some_and(|t| now < t)
    }
}

/// Records a steering sign and reports whether a turn-around should start.
///
/// Every entry marks a change of steering direction, so `deadend_flip_count`
/// entries inside the window mean the drone has been swinging left and right.
pub fn update_deadend(
    history: &DeadEndHistory,
    commanded_sign: i8,
    now: f64,
    cfg: &PolicyConfig,
) -> (DeadEndHistory, bool) {
    let mut next = history.clone();
    if commanded_sign != 0 && next.last_sign != Some(commanded_sign.signum()) {
        next.recent_steer_signs.push((now, commanded_sign.signum()));
        next.last_sign = Some(commanded_sign.signum());
    }
    next.recent_steer_signs
        .retain(|(t, _)| now - t <= cfg.deadend_window_s);
    if next.recent_steer_signs.len() >= cfg.deadend_flip_count {
        next.recent_steer_signs.clear();
        next.last_sign = None;
        next.turnaround_active_until = Some(now + cfg.turnaround_duration_s());
        return (next, true);
    }
    (next, false)
}

/// Everything `decide` computed for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub command: Command,
    pub history: DeadEndHistory,
    /// Groups found in the frame; empty when perception was skipped.
    pub groups: Vec<ObjectGroup>,
}

impl Decision {
    pub fn nearest_group_mm(&self) -> Option<u16> {
        self.groups.iter().map(|g| g.min_distance_mm).min()
    }
}

/// Runs perception and the decision tree on one frame.
pub fn decide(
    frame: &DepthFrame,
    state: &DroneState,
    history: &DeadEndHistory,
    elapsed_s: f64,
    cfg: &PolicyConfig,
    pcfg: &PerceptionConfig,
    scfg: &SensorConfig,
) -> (Command, DeadEndHistory) {
    let d = decide_detailed(frame, state, history, elapsed_s, cfg, pcfg, scfg);
    (d.command, d.history)
}

pub fn decide_detailed(
    frame: &DepthFrame,
    state: &DroneState,
    history: &DeadEndHistory,
    elapsed_s: f64,
    cfg: &PolicyConfig,
    pcfg: &PerceptionConfig,
    scfg: &SensorConfig,
) -> Decision {
    let now = frame.timestamp_ms as f64 / 1000.0;
    let hold = cfg.height_gain * (cfg.cruise_height - state.height);
    let turn = Command {
        v_forward: 0.0,
        yaw_rate: cfg.omega_fast,
        v_vertical: hold,
        mode: Mode::TurnAround,
    };

    if elapsed_s > cfg.battery_budget_s {
        return Decision {
            command: Command {
                v_forward: 0.0,
                yaw_rate: 0.0,
                v_vertical: -cfg.v_vertical,
                mode: Mode::Land,
            },
            history: history.clone(),
            groups: Vec::new(),
        };
    }

    let mut history = history.clone();
    if history.turnaround_active(now) {
        return Decision {
            command: turn,
            history,
            groups: Vec::new(),
        };
    }
    history.turnaround_active_until = None;

    let occupancy = threshold(frame, pcfg);
    let groups = group(&occupancy, frame, pcfg);
    let cruise = Command {
        v_forward: cfg.v_max,
        yaw_rate: 0.0,
        v_vertical: hold,
        mode: Mode::Cruise,
    };

    let command = if groups.is_empty() {
        cruise
    } else if let Some(v_vertical) = height_adjust(&groups, cfg) {
        Command {
            v_forward: cfg.v_slow.min(cfg.v_max),
            yaw_rate: 0.0,
            v_vertical,
            mode: Mode::HeightAdjust,
        }
    } else if let Some((target, zone)) = nearest_reacting_group(&groups, cfg) {
        let d = target.min_distance_m();
        let v_forward = forward_velocity(d, zone, cfg).expect("distances are non-negative");
        let geometry = group_features(target, scfg);
        let yaw_rate = if cfg.steering_enabled {
            steering_rate(&geometry, d, cfg)
        } else {
            0.0
        };
        let mode = if d < cfg.d_fear {
            Mode::Backward
        } else if d < cfg.d_short {
            Mode::StopSteer
        } else {
            Mode::SlowSteer
        };
        Command {
            v_forward,
            yaw_rate,
            v_vertical: hold,
            mode,
        }
    } else {
        cruise
    };

    let (history, trigger) = update_deadend(&history, command.steer_sign(), now, cfg);
    Decision {
        command: if trigger { turn } else { command },
        history,
        groups,
    }
}

/// Closest group with at least one pixel in the danger or caution zone.
fn nearest_reacting_group<'a>(
    groups: &'a [ObjectGroup],
    cfg: &PolicyConfig,
) -> Option<(&'a ObjectGroup, ReactionZone)> {
    groups.iter().find_map(|g| {
        let mut zone = None;
        for &(r, c) in &g.pixels {
            match classify_zone(r, c, cfg).kind {
                ZoneKind::Danger => return Some((g, ReactionZone::Danger)),
                ZoneKind::Caution => zone = Some(ReactionZone::Caution),
                _ => {}
            }
        }
        zone.map(|z| (g, z))
    })
}
