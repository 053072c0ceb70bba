use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rect, SurfaceClass, Wall};

/// `(time_s, [x, y])` stop of a scripted obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint(pub f64, pub [f64; 2]);

/// Starts an obstacle's schedule once the drone comes within `radius` of
/// `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Axis-aligned box following a waypoint schedule.
///
/// Schedule times are absolute, or relative to the trigger instant when a
/// trigger is set. Before the first and after the last waypoint the box rests
/// at that waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObstacle {
    pub half_extents: [f64; 2],
    pub z_min: f64,
    pub z_max: f64,
    #[serde(default)]
    pub surface: SurfaceClass,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub trigger: Option<Trigger>,
}

impl MovingObstacle {
    pub fn position_at(&self, local_t: f64) -> Point2<f64> {
        let wps = &self.waypoints;
        let first = wps[0];
        if local_t <= first.0 {
            return Point2::from(first.1);
        }
        for w in wps.windows(2) {
            let (a, b) = (w[0], w[1]);
            if local_t <= b.0 {
                let f = (local_t - a.0) / (b.0 - a.0);
                return Point2::new(
                    a.1[0] + f * (b.1[0] - a.1[0]),
                    a.1[1] + f * (b.1[1] - a.1[1]),
                );
            }
        }
        Point2::from(wps[wps.len() - 1].1)
    }

    /// Schedule-local time, or `None` while still waiting for its trigger.
    fn local_time(&self, t: f64, fired_at: Option<f64>) -> Option<f64> {
        match (self.trigger, fired_at) {
            (None, _) => Some(t),
            (Some(_), Some(t0)) => Some(t - t0),
            (Some(_), None) => None,
        }
    }

    pub fn footprint_at(&self, t: f64, fired_at: Option<f64>) -> Rect {
        let c = match self.local_time(t, fired_at) {
            Some(lt) => self.position_at(lt),
            None => Point2::from(self.waypoints[0].1),
        };
        let [hx, hy] = self.half_extents;
        Rect::new([c.x - hx, c.y - hy], [c.x + hx, c.y + hy])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub moving_obstacles: Vec<MovingObstacle>,
    pub bounds: Rect,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        if !self.bounds.is_valid() {
            return Err(Error::config(
                "world.bounds",
                "min must be below max and finite",
            ));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !w.is_finite() || w.z_min > w.z_max {
                return Err(Error::config(
                    format!("world.walls[{i}]"),
                    "non-finite or inverted height span",
                ));
            }
        }
        for (i, m) in self.moving_obstacles.iter().enumerate() {
            let field = format!("world.moving_obstacles[{i}]");
            if m.waypoints.is_empty() {
                return Err(Error::config(field, "needs at least one waypoint"));
            }
            if m.waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::config(
                    field,
                    "waypoint times must be strictly increasing",
                ));
            }
            let finite = m.half_extents.iter().all(|v| v.is_finite() && *v > 0.0)
                && m.z_min <= m.z_max
                && m.waypoints
                    .iter()
                    .all(|w| w.0.is_finite() && w.1.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::config(field, "non-finite geometry"));
            }
        }
        Ok(())
    }

    /// Static walls plus the four sides of every moving box at time `t`.
    pub fn scene_at(&self, t: f64, fired_at: &[Option<f64>]) -> Vec<Wall> {
        let mut scene = self.walls.clone();
        for (i, m) in self.moving_obstacles.iter().enumerate() {
            let rect = m.footprint_at(t, fired_at.get(i).copied().flatten());
            for (a, b) in rect.edges() {
                scene.push(Wall {
                    a,
                    b,
                    z_min: m.z_min,
                    z_max: m.z_max,
                    surface: m.surface,
                });
            }
        }
        scene
    }

    /// Fires every pending trigger whose zone contains `position`.
    pub fn update_triggers(&self, position: &Point2<f64>, t: f64, fired_at: &mut [Option<f64>]) {
        for (m, fired) in self.moving_obstacles.iter().zip(fired_at.iter_mut()) {
            if let (Some(trig), None) = (m.trigger, *fired) {
                if (position - Point2::from(trig.center)).norm() <= trig.radius {
                    *fired = Some(t);
                }
            }
        }
    }
}
