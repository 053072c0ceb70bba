//! Planar geometry with height spans: the 2.5-D world the simulated sensor sees.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

/// Optical class of a surface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceClass {
    /// Diffuse surface (cardboard, painted walls); returns at any incidence.
    #[default]
    Matte,
    /// Specular surface (chromed metal, glass); only returns near-frontal light.
    Reflective,
}

/// A vertical wall piece: a 2-D segment extruded over `[z_min, z_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
    pub z_min: f64,
    pub z_max: f64,
    #[serde(default)]
    pub surface: SurfaceClass,
}

impl Wall {
    pub fn new(a: [f64; 2], b: [f64; 2], z_min: f64, z_max: f64, surface: SurfaceClass) -> Self {
        Self {
            a: Point2::new(a[0], a[1]),
            b: Point2::new(b[0], b[1]),
            z_min,
            z_max,
            surface,
        }
    }

    pub fn spans_height(&self, lo: f64, hi: f64) -> bool {
        self.z_min <= hi && lo <= self.z_max
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn is_finite(&self) -> bool {
        [
            self.a.x, self.a.y, self.b.x, self.b.y, self.z_min, self.z_max,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Euclidean distance from `p` to the closest point of the segment.
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        point_segment_distance(p, &self.a, &self.b)
    }
}

/// Where a horizontal ray meets a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Ray parameter: hit point is `origin + t * dir`.
    pub t: f64,
    /// Angle between the ray and the segment normal, in `[0, pi/2]`.
    pub incidence: f64,
}

/// Intersects the ray `origin + t * dir` (t > 0) with segment `[a, b]`.
///
/// `dir` need not be unit length; `t` is expressed in multiples of it.
pub fn ray_segment(
    origin: &Point2<f64>,
    dir: &Vector2<f64>,
    a: &Point2<f64>,
    b: &Point2<f64>,
) -> Option<RayHit> {
    let edge = b - a;
    let denom = cross(dir, &edge);
    if denom.abs() < 1e-12 {
        return None;
    }
    let rel = a - origin;
    let t = cross(&rel, &edge) / denom;
    let s = cross(&rel, dir) / denom;
    if t <= 1e-12 || !(0.0..=1.0).contains(&s) {
        return None;
    }
    let normal = Vector2::new(-edge.y, edge.x);
    let cos_inc = (dir.dot(&normal)).abs() / (dir.norm() * normal.norm());
    Some(RayHit {
        t,
        incidence: cos_inc.clamp(0.0, 1.0).acos(),
    })
}

pub fn point_segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let edge = b - a;
    let len2 = edge.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&edge) / len2).clamp(0.0, 1.0);
    (p - (a + edge * s)).norm()
}

fn cross(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Axis-aligned rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self {
            min: Point2::new(min[0], min[1]),
            max: Point2::new(max[0], max[1]),
        }
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn is_valid(&self) -> bool {
        self.min.x.is_finite()
            && self.min.y.is_finite()
            && self.max.x.is_finite()
            && self.max.y.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
    }

    /// The four edges, counter-clockwise from the min corner.
    pub fn edges(&self) -> [(Point2<f64>, Point2<f64>); 4] {
        let p0 = self.min;
        let p1 = Point2::new(self.max.x, self.min.y);
        let p2 = self.max;
        let p3 = Point2::new(self.min.x, self.max.y);
        [(p0, p1), (p1, p2), (p2, p3), (p3, p0)]
    }
}
