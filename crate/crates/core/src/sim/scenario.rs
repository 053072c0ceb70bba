use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{Rect, SurfaceClass, Wall};
use crate::sensor::DronePose;

use super::world::{MovingObstacle, Trigger, Waypoint, World};

pub type ScenarioParams = BTreeMap<String, f64>;

const CRUISE_HEIGHT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    WallBrake,
    DynamicPerson,
    Pipe,
    Maze,
    Deadend,
    OpenRoom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::WallBrake,
        ScenarioKind::DynamicPerson,
        ScenarioKind::Pipe,
        ScenarioKind::Maze,
        ScenarioKind::Deadend,
        ScenarioKind::OpenRoom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::WallBrake => "wall_brake",
            ScenarioKind::DynamicPerson => "dynamic_person",
            ScenarioKind::Pipe => "pipe",
            ScenarioKind::Maze => "maze",
            ScenarioKind::Deadend => "deadend",
            ScenarioKind::OpenRoom => "open_room",
        }
    }

    /// Accepted parameters and their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            ScenarioKind::WallBrake => &[
                ("v_max", 1.0),
                ("start_distance", 3.5),
                ("duration_s", 12.0),
            ],
            ScenarioKind::DynamicPerson => &[
                ("v_max", 1.0),
                ("trigger_distance", 1.5),
                ("person_speed", 2.0),
                ("lateral_offset", 1.0),
                ("person_x", 6.0),
                ("duration_s", 10.0),
            ],
            ScenarioKind::Pipe => &[
                ("v_max", 1.0),
                ("width", 0.75),
                ("length", 4.0),
                ("entry_gap", 1.0),
                ("duration_s", 40.0),
            ],
            ScenarioKind::Maze => &[("v_max", 1.0), ("duration_s", 460.0)],
            ScenarioKind::Deadend => &[
                ("v_max", 1.0),
                ("depth", 2.0),
                ("width", 1.0),
                ("duration_s", 40.0),
            ],
            ScenarioKind::OpenRoom => &[("v_max", 1.0), ("duration_s", 120.0)],
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("kind", format!("unknown scenario kind `{s}`")))
    }
}

/// A runnable experiment: geometry, start pose, optional goal region and the
/// config overrides the experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub params: ScenarioParams,
    pub world: World,
    pub start: DronePose,
    /// Reaching this region ends the run successfully.
    #[serde(default)]
    pub goal: Option<Rect>,
    /// Partial run configuration layered over the user's config.
    #[serde(default)]
    pub overrides: Value,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        let s = &self.start;
        if ![s.position.x, s.position.y, s.height, s.yaw]
            .iter()
            .all(|v| v.is_finite())
            || s.height < 0.0
        {
            return Err(Error::config(
                "start",
                "pose must be finite with height >= 0",
            ));
        }
        if !self.world.bounds.contains(&s.position) {
            return Err(Error::config(
                "start",
                "start position outside world bounds",
            ));
        }
        if let Some(goal) = &self.goal {
            if !goal.is_valid() {
                return Err(Error::config("goal", "invalid rectangle"));
            }
        }
        if !(self.overrides.is_object() || self.overrides.is_null()) {
            return Err(Error::config("overrides", "must be a JSON object"));
        }
        Ok(())
    }

    /// Layers `base` (a user config, possibly partial) and this scenario's
    /// overrides, then `extra` (command-line flags).
    pub fn resolve_config(&self, base: &Value, extra: &Value) -> Result<RunConfig> {
        RunConfig::layered([base, &self.overrides, extra])
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        sc.validate()?;
        Ok(sc)
    }
}

fn box_walls(cx: f64, cy: f64, hx: f64, hy: f64, z_max: f64, surface: SurfaceClass) -> Vec<Wall> {
    let rect = Rect::new([cx - hx, cy - hy], [cx + hx, cy + hy]);
    rect.edges()
        .into_iter()
        .map(|(a, b)| Wall {
            a,
            b,
            z_min: 0.0,
            z_max,
            surface,
        })
        .collect()
}

fn room_walls(width: f64, depth: f64, height: f64) -> Vec<Wall> {
    Rect::new([0.0, 0.0], [width, depth])
        .edges()
        .into_iter()
        .map(|(a, b)| Wall {
            a,
            b,
            z_min: 0.0,
            z_max: height,
            surface: SurfaceClass::Matte,
        })
        .collect()
}

fn resolve_params(kind: ScenarioKind, given: &ScenarioParams) -> Result<ScenarioParams> {
    let defaults = kind.default_params();
    let mut out: ScenarioParams = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in given {
        if !out.contains_key(k) {
            let known: Vec<_> = defaults.iter().map(|(k, _)| *k).collect();
            return Err(Error::config(
                format!("params.{k}"),
                format!("not a parameter of {kind} (expected one of {known:?})"),
            ));
        }
        if !v.is_finite() || *v <= 0.0 {
            return Err(Error::config(
                format!("params.{k}"),
                format!("{v} must be positive"),
            ));
        }
        out.insert(k.clone(), *v);
    }
    Ok(out)
}

/// Builds one of the stock experiments. Missing parameters take their
/// defaults; unknown or non-positive ones are rejected.
pub fn make_scenario(kind: ScenarioKind, params: &ScenarioParams) -> Result<ScenarioConfig> {
    let p = resolve_params(kind, params)?;
    let v_max = p["v_max"];
    let duration = p["duration_s"];
    let mut overrides = json!({
        "policy": {"v_max": v_max},
        "sim": {"duration_s": duration},
    });
    let matte = SurfaceClass::Matte;

    let (world, start, goal) = match kind {
        ScenarioKind::WallBrake => {
            // 1.2 m x 1.3 m cardboard panel; steering off to isolate braking.
            let d = p["start_distance"];
            overrides["policy"]["steering_enabled"] = json!(false);
            let world = World {
                walls: vec![Wall::new([d, -0.6], [d, 0.6], 0.0, 1.3, matte)],
                moving_obstacles: vec![],
                bounds: Rect::new([-2.0, -3.0], [d + 2.0, 3.0]),
            };
            (world, DronePose::new(0.0, 0.0, CRUISE_HEIGHT, 0.0), None)
        }
        ScenarioKind::DynamicPerson => {
            // A 0.5 m wide person steps into the flight path once the drone
            // is within `trigger_distance` of the spot they step into.
            let (px, offset, speed) = (p["person_x"], p["lateral_offset"], p["person_speed"]);
            let half_depth = 0.15;
            if px - half_depth - p["trigger_distance"] <= 0.0 {
                return Err(Error::config(
                    "params.person_x",
                    "person must stand beyond the trigger distance",
                ));
            }
            let person = MovingObstacle {
                half_extents: [half_depth, 0.25],
                z_min: 0.0,
                z_max: 1.8,
                surface: matte,
                waypoints: vec![
                    Waypoint(0.0, [px, offset]),
                    Waypoint(offset / speed, [px, 0.0]),
                ],
                trigger: Some(Trigger {
                    center: [px - half_depth, 0.0],
                    radius: p["trigger_distance"],
                }),
            };
            let world = World {
                walls: vec![],
                moving_obstacles: vec![person],
                bounds: Rect::new([-2.0, -4.0], [px + 4.0, 4.0]),
            };
            (world, DronePose::new(0.0, 0.0, CRUISE_HEIGHT, 0.0), None)
        }
        ScenarioKind::Pipe => {
            let (w, len, gap) = (p["width"], p["length"], p["entry_gap"]);
            let (x0, x1) = (gap, gap + len);
            let world = World {
                walls: vec![
                    Wall::new([x0, w / 2.0], [x1, w / 2.0], 0.0, 1.0, matte),
                    Wall::new([x0, -w / 2.0], [x1, -w / 2.0], 0.0, 1.0, matte),
                ],
                moving_obstacles: vec![],
                bounds: Rect::new([-3.0, -3.0], [x1 + 3.0, 3.0]),
            };
            let goal = Rect::new([x1 + 0.2, -3.0], [x1 + 3.0, 3.0]);
            (
                world,
                DronePose::new(0.0, 0.0, CRUISE_HEIGHT, 0.0),
                Some(goal),
            )
        }
        ScenarioKind::Deadend => {
            let (depth, w) = (p["depth"], p["width"]);
            let world = World {
                walls: vec![
                    Wall::new([0.0, w / 2.0], [depth, w / 2.0], 0.0, 1.0, matte),
                    Wall::new([0.0, -w / 2.0], [depth, -w / 2.0], 0.0, 1.0, matte),
                    Wall::new([depth, -w / 2.0], [depth, w / 2.0], 0.0, 1.0, matte),
                ],
                moving_obstacles: vec![],
                bounds: Rect::new([-4.0, -4.0], [depth + 1.0, 4.0]),
            };
            let goal = Rect::new([-4.0, -4.0], [-0.5, 4.0]);
            (
                world,
                DronePose::new(0.1, 0.0, CRUISE_HEIGHT, 0.0),
                Some(goal),
            )
        }
        ScenarioKind::Maze => {
            // Closed cardboard room; every obstacle 0.6 - 0.8 m high.
            let mut walls = room_walls(6.0, 5.0, 0.8);
            walls.push(Wall::new([2.0, 0.0], [2.0, 2.2], 0.0, 0.7, matte));
            walls.push(Wall::new([4.0, 5.0], [4.0, 2.8], 0.0, 0.7, matte));
            walls.extend(box_walls(3.0, 3.8, 0.3, 0.3, 0.6, matte));
            walls.extend(box_walls(4.9, 1.2, 0.4, 0.25, 0.8, matte));
            walls.extend(box_walls(1.0, 3.6, 0.25, 0.4, 0.65, matte));
            let world = World {
                walls,
                moving_obstacles: vec![],
                bounds: Rect::new([0.0, 0.0], [6.0, 5.0]),
            };
            (world, DronePose::new(0.8, 1.0, CRUISE_HEIGHT, 0.0), None)
        }
        ScenarioKind::OpenRoom => {
            // 11 m x 6 m meeting room: tables on thin reflective legs,
            // reflective chair columns and a couple of matte cabinets.
            let mut walls = room_walls(11.0, 6.0, 2.5);
            for &(cx, cy) in &[(3.0, 1.8), (3.0, 4.2), (7.5, 3.0)] {
                let (hx, hy) = (0.8, 0.4);
                for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    walls.extend(box_walls(
                        cx + sx * (hx - 0.05),
                        cy + sy * (hy - 0.05),
                        0.02,
                        0.02,
                        0.75,
                        SurfaceClass::Reflective,
                    ));
                }
                for mut w in box_walls(cx, cy, hx, hy, 0.75, matte) {
                    w.z_min = 0.70;
                    walls.push(w);
                }
            }
            for &(cx, cy) in &[(5.2, 1.0), (5.2, 5.0), (9.5, 1.5)] {
                walls.extend(box_walls(cx, cy, 0.03, 0.03, 0.9, SurfaceClass::Reflective));
            }
            walls.extend(box_walls(10.5, 5.2, 0.3, 0.6, 1.8, matte));
            walls.extend(box_walls(0.5, 5.5, 0.4, 0.3, 1.2, matte));
            let world = World {
                walls,
                moving_obstacles: vec![],
                bounds: Rect::new([0.0, 0.0], [11.0, 6.0]),
            };
            (world, DronePose::new(1.0, 3.0, CRUISE_HEIGHT, 0.0), None)
        }
    };

    let sc = ScenarioConfig {
        kind,
        params: p,
        world,
        start,
        goal,
        overrides,
    };
    sc.validate()?;
    Ok(sc)
}
