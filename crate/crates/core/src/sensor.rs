//! Simulated 8x8 multi-zone time-of-flight sensor.
//!
//! Frames are produced in two stages: [`raycast_frame`] computes exact
//! axis-projected distances against the world, then [`apply_noise`] adds the
//! per-pixel bias, Gaussian noise and validity dropout measured on the real
//! part.

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ray_segment, SurfaceClass, Wall};

pub const ROWS: usize = 8;
pub const COLS: usize = 8;

/// Row-major 8x8 pixel grid; row 0 is the top, column 0 the left.
pub type Grid<T> = [[T; COLS]; ROWS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub rows: usize,
    pub cols: usize,
    pub max_range_mm: f64,
    pub frame_rate_hz: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov_h_deg: 45.0,
            fov_v_deg: 45.0,
            rows: ROWS,
            cols: COLS,
            max_range_mm: 4000.0,
            frame_rate_hz: 15.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows != ROWS || self.cols != COLS {
            return Err(Error::config(
                "sensor.rows",
                "only the 8x8 mode is supported",
            ));
        }
        for (name, v) in [
            ("sensor.fov_h_deg", self.fov_h_deg),
            ("sensor.fov_v_deg", self.fov_v_deg),
        ] {
            if !(v > 0.0 && v <= 90.0) {
                return Err(Error::config(name, format!("{v} not in (0, 90]")));
            }
        }
        if !(self.max_range_mm > 0.0 && self.max_range_mm <= u16::MAX as f64) {
            return Err(Error::config(
                "sensor.max_range_mm",
                "must be in (0, 65535]",
            ));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(Error::config("sensor.frame_rate_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn max_range_m(&self) -> f64 {
        self.max_range_mm / 1000.0
    }

    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }

    /// Horizontal angle of a column boundary; `edge` runs from 0 (left edge
    /// of column 0) to 8 (right edge of column 7).
    pub fn column_edge_azimuth(&self, edge: f64) -> f64 {
        (edge / COLS as f64 - 0.5) * self.fov_h_deg.to_radians()
    }
}

/// Ray direction through the center of pixel `(row, col)`.
///
/// Azimuth is positive to the right of the flight direction, elevation
/// positive upward.
pub fn pixel_direction(row: usize, col: usize, cfg: &SensorConfig) -> Result<(f64, f64)> {
    if row >= ROWS || col >= COLS {
        return Err(Error::Index { row, col });
    }
    let az = ((col as f64 + 0.5) / COLS as f64 - 0.5) * cfg.fov_h_deg.to_radians();
    let el = (0.5 - (row as f64 + 0.5) / ROWS as f64) * cfg.fov_v_deg.to_radians();
    Ok((az, el))
}

/// Position and heading of the sensor origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DronePose {
    pub position: Point2<f64>,
    pub height: f64,
    pub yaw: f64,
}

impl DronePose {
    pub fn new(x: f64, y: f64, height: f64, yaw: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            height,
            yaw,
        }
    }
}

/// An exact return before noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealReturn {
    /// Distance along the optical axis.
    pub distance_mm: f64,
    pub surface: SurfaceClass,
    /// Angle between the pixel ray and the surface normal.
    pub incidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealFrame {
    pub pixels: Grid<Option<IdealReturn>>,
}

impl IdealFrame {
    pub fn empty() -> Self {
        Self {
            pixels: [[None; COLS]; ROWS],
        }
    }

    /// Every pixel returns `distance_mm` off a frontal matte surface.
    pub fn uniform(distance_mm: f64) -> Self {
        Self {
            pixels: [[Some(IdealReturn {
                distance_mm,
                surface: SurfaceClass::Matte,
                incidence: 0.0,
            }); COLS]; ROWS],
        }
    }
}

/// One sensor reading. Invalid pixels hold distance 0 in memory and -1 when
/// serialized; their distance is never a measurement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DepthFrame {
    pub distance_mm: Grid<u16>,
    pub valid: Grid<bool>,
    pub timestamp_ms: u64,
}

impl DepthFrame {
    pub fn all_invalid(timestamp_ms: u64) -> Self {
        Self {
            distance_mm: [[0; COLS]; ROWS],
            valid: [[false; COLS]; ROWS],
            timestamp_ms,
        }
    }

    /// All 64 pixels valid at the same distance.
    pub fn uniform(distance_mm: u16, timestamp_ms: u64) -> Self {
        Self {
            distance_mm: [[distance_mm; COLS]; ROWS],
            valid: [[true; COLS]; ROWS],
            timestamp_ms,
        }
    }

    pub fn set(&mut self, row: usize, col: usize, distance_mm: Option<u16>) {
        match distance_mm {
            Some(d) => {
                self.distance_mm[row][col] = d;
                self.valid[row][col] = true;
            }
            None => {
                self.distance_mm[row][col] = 0;
                self.valid[row][col] = false;
            }
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u16> {
        self.valid[row][col].then_some(self.distance_mm[row][col])
    }

    /// Stable byte encoding: timestamp then, per pixel, the distance with
    /// invalid pixels encoded as 0xFFFF.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + ROWS * COLS * 2);
        out.extend_from_slice(&self.timestamp_ms.to_le_bytes());
        for r in 0..ROWS {
            for c in 0..COLS {
                let v = if self.valid[r][c] {
                    self.distance_mm[r][c]
                } else {
                    u16::MAX
                };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Casts one center ray per pixel and reports axis-projected distances.
///
/// Reflective surfaces hit beyond `reflectivity_cutoff_deg` of incidence give
/// no return, as do surfaces beyond the configured range.
pub fn raycast_frame(
    walls: &[Wall],
    pose: &DronePose,
    cfg: &SensorConfig,
    reflectivity_cutoff_deg: f64,
) -> IdealFrame {
    let mut frame = IdealFrame::empty();
    let forward = Vector2::new(pose.yaw.cos(), pose.yaw.sin());
    let right = Vector2::new(pose.yaw.sin(), -pose.yaw.cos());
    let max_range_m = cfg.max_range_m();
    let cutoff = reflectivity_cutoff_deg.to_radians();

    for row in 0..ROWS {
        for col in 0..COLS {
            let (az, el) = pixel_direction(row, col, cfg).expect("index in range");
            let (tan_az, tan_el) = (az.tan(), el.tan());
            let dir = forward + right * tan_az;
            let mut best: Option<(f64, &Wall, f64)> = None;
            for wall in walls {
                let Some(hit) = ray_segment(&pose.position, &dir, &wall.a, &wall.b) else {
                    continue;
                };
                if best.is_some_and(|(t, _, _)| hit.t >= t) {
                    continue;
                }
                let z = pose.height + hit.t * tan_el;
                if z < wall.z_min || z > wall.z_max {
                    continue;
                }
                best = Some((hit.t, wall, hit.incidence));
            }
            let Some((t, wall, flat_incidence)) = best else {
                continue;
            };
            if t > max_range_m {
                continue;
            }
            // Tilt the horizontal incidence by the ray's elevation.
            let horizontal = dir.norm();
            let cos_inc = flat_incidence.cos() * horizontal
                / (horizontal * horizontal + tan_el * tan_el).sqrt();
            let incidence = cos_inc.clamp(0.0, 1.0).acos();
            if wall.surface == SurfaceClass::Reflective && incidence > cutoff {
                continue;
            }
            frame.pixels[row][col] = Some(IdealReturn {
                distance_mm: t * 1000.0,
                surface: wall.surface,
                incidence,
            });
        }
    }
    frame
}

/// A `(distance, probability)` point of the validity-vs-distance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityKnot(pub f64, pub f64);

impl ValidityKnot {
    pub fn distance_m(&self) -> f64 {
        self.0
    }

    pub fn probability(&self) -> f64 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub bias_grid: Grid<f64>,
    pub sigma_grid: Grid<f64>,
    pub validity_knots: Vec<ValidityKnot>,
    pub reflectivity_cutoff_deg: f64,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            bias_grid: default_bias_grid(),
            sigma_grid: default_sigma_grid(),
            validity_knots: vec![
                ValidityKnot(0.2, 0.99),
                ValidityKnot(2.0, 0.95),
                ValidityKnot(2.6, 0.55),
                ValidityKnot(3.0, 0.30),
                ValidityKnot(4.0, 0.0),
            ],
            reflectivity_cutoff_deg: 30.0,
            rng_seed: 0,
        }
    }
}

fn is_corner(r: usize, c: usize) -> bool {
    (r == 0 || r == ROWS - 1) && (c == 0 || c == COLS - 1)
}

/// Mean error: left-to-right gradient 19 -> 32 mm, corners 10 mm higher,
/// spanning 19..=42 mm overall.
pub fn default_bias_grid() -> Grid<f64> {
    let mut g = [[0.0; COLS]; ROWS];
    for (r, row) in g.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = 19.0 + 13.0 * c as f64 / (COLS - 1) as f64;
            if is_corner(r, c) {
                *v += 10.0;
            }
        }
    }
    g
}

/// Standard deviation: 3.4 mm at the center rising quadratically to 7.3 mm
/// at the corners.
pub fn default_sigma_grid() -> Grid<f64> {
    let center = (ROWS as f64 - 1.0) / 2.0;
    let max_r2 = 2.0 * center * center;
    let mut g = [[0.0; COLS]; ROWS];
    for (r, row) in g.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let r2 = (r as f64 - center).powi(2) + (c as f64 - center).powi(2);
            *v = 3.4 + (7.3 - 3.4) * r2 / max_r2;
        }
    }
    g
}

impl NoiseConfig {
    /// No bias, no noise, every return valid out to `max_range_m`.
    pub fn ideal(max_range_m: f64) -> Self {
        Self {
            bias_grid: [[0.0; COLS]; ROWS],
            sigma_grid: [[0.0; COLS]; ROWS],
            validity_knots: vec![ValidityKnot(0.0, 1.0), ValidityKnot(max_range_m, 1.0)],
            reflectivity_cutoff_deg: 30.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, sensor: &SensorConfig) -> Result<()> {
        for (r, row) in self.sigma_grid.iter().enumerate() {
            for (c, s) in row.iter().enumerate() {
                if !(*s >= 0.0 && s.is_finite()) {
                    return Err(Error::config(
                        format!("noise.sigma_grid[{r}][{c}]"),
                        "must be >= 0",
                    ));
                }
                if !self.bias_grid[r][c].is_finite() {
                    return Err(Error::config(
                        format!("noise.bias_grid[{r}][{c}]"),
                        "must be finite",
                    ));
                }
            }
        }
        if self.validity_knots.is_empty() {
            return Err(Error::config(
                "noise.validity_knots",
                "at least one knot required",
            ));
        }
        for (i, k) in self.validity_knots.iter().enumerate() {
            if !(0.0..=1.0).contains(&k.probability()) || !(k.distance_m() >= 0.0) {
                return Err(Error::config(
                    format!("noise.validity_knots[{i}]"),
                    "distance must be >= 0 and probability in [0, 1]",
                ));
            }
        }
        for (i, w) in self.validity_knots.windows(2).enumerate() {
            if w[1].distance_m() <= w[0].distance_m() || w[1].probability() > w[0].probability() {
                return Err(Error::config(
                    format!("noise.validity_knots[{}]", i + 1),
                    "knots must have increasing distance and non-increasing probability",
                ));
            }
        }
        let last = self.validity_knots.last().expect("non-empty");
        if last.distance_m() > sensor.max_range_m() + 1e-9 {
            return Err(Error::config(
                "noise.validity_knots",
                "last knot lies beyond the sensor's max range",
            ));
        }
        if !(0.0..=90.0).contains(&self.reflectivity_cutoff_deg) {
            return Err(Error::config(
                "noise.reflectivity_cutoff_deg",
                "must be in [0, 90]",
            ));
        }
        Ok(())
    }
}

/// Probability that a return at `distance_m` is flagged valid.
///
/// Piecewise-linear over the knots, flat before the first knot and zero past
/// the last one. Reflective surfaces beyond the cutoff angle never validate.
pub fn validity_probability(
    distance_m: f64,
    surface: SurfaceClass,
    incidence: f64,
    noise: &NoiseConfig,
) -> f64 {
    let knots = &noise.validity_knots;
    let Some(last) = knots.last() else {
        return 0.0;
    };
    if distance_m > last.distance_m() || distance_m.is_nan() {
        return 0.0;
    }
    let base = match knots.iter().position(|k| k.distance_m() >= distance_m) {
        Some(0) => knots[0].probability(),
        Some(i) => {
            let (lo, hi) = (knots[i - 1], knots[i]);
            let f = (distance_m - lo.distance_m()) / (hi.distance_m() - lo.distance_m());
            lo.probability() + f * (hi.probability() - lo.probability())
        }
        None => 0.0,
    };
    let attenuation = match surface {
        SurfaceClass::Matte => 1.0,
        SurfaceClass::Reflective if incidence <= noise.reflectivity_cutoff_deg.to_radians() => 1.0,
        SurfaceClass::Reflective => 0.0,
    };
    (base * attenuation).clamp(0.0, 1.0)
}

/// Seeded random stream used for sensor noise.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Corrupts an ideal frame with bias, Gaussian noise and validity dropout.
///
/// Exactly two draws are taken per pixel in row-major order, whether or not
/// the pixel returned, so the stream position never depends on the scene.
pub fn apply_noise(
    ideal: &IdealFrame,
    noise: &NoiseConfig,
    cfg: &SensorConfig,
    rng: &mut RandomStream,
    timestamp_ms: u64,
) -> DepthFrame {
    let mut out = DepthFrame::all_invalid(timestamp_ms);
    for r in 0..ROWS {
        for c in 0..COLS {
            let u = rng.uniform();
            let z = rng.standard_normal();
            let Some(ret) = ideal.pixels[r][c] else {
                continue;
            };
            let p =
                validity_probability(ret.distance_mm / 1000.0, ret.surface, ret.incidence, noise);
            if u >= p {
                continue;
            }
            let measured = ret.distance_mm + noise.bias_grid[r][c] + noise.sigma_grid[r][c] * z;
            let mm = measured.round().clamp(1.0, cfg.max_range_mm);
            out.set(r, c, Some(mm as u16));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wall_at(d: f64, half_width: f64) -> Vec<Wall> {
        vec![Wall::new(
            [d, -half_width],
            [d, half_width],
            -10.0,
            10.0,
            SurfaceClass::Matte,
        )]
    }

    #[test]
    fn pixel_direction_corner_and_edge_values() {
        let cfg = SensorConfig::default();
        let (az, _) = pixel_direction(4, 7, &cfg).unwrap();
        assert_relative_eq!(az.to_degrees(), 19.6875, epsilon = 1e-12);
        let (az, el) = pixel_direction(0, 0, &cfg).unwrap();
        assert_relative_eq!(az.to_degrees(), -19.6875, epsilon = 1e-12);
        assert_relative_eq!(el.to_degrees(), 19.6875, epsilon = 1e-12);
        let (a33, e33) = pixel_direction(3, 3, &cfg).unwrap();
        let (a44, e44) = pixel_direction(4, 4, &cfg).unwrap();
        assert_relative_eq!(a33, -a44);
        assert_relative_eq!(e33, -e44);
    }

    #[test]
    fn pixel_direction_rejects_out_of_range() {
        let cfg = SensorConfig::default();
        assert!(matches!(
            pixel_direction(8, 0, &cfg),
            Err(Error::Index { row: 8, col: 0 })
        ));
        assert!(pixel_direction(0, 8, &cfg).is_err());
    }

    #[test]
    fn pixel_direction_is_antisymmetric() {
        let cfg = SensorConfig::default();
        for r in 0..ROWS {
            for c in 0..COLS {
                let (a, e) = pixel_direction(r, c, &cfg).unwrap();
                let (a2, e2) = pixel_direction(7 - r, 7 - c, &cfg).unwrap();
                assert_relative_eq!(a, -a2, epsilon = 1e-15);
                assert_relative_eq!(e, -e2, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn frontal_wall_reads_constant_projected_distance() {
        let cfg = SensorConfig::default();
        let frame = raycast_frame(
            &wall_at(1.0, 5.0),
            &DronePose::new(0.0, 0.0, 0.4, 0.0),
            &cfg,
            30.0,
        );
        for row in &frame.pixels {
            for px in row {
                assert_relative_eq!(px.unwrap().distance_mm, 1000.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn frontal_wall_is_constant_for_any_heading() {
        let cfg = SensorConfig::default();
        let yaw = 2.1_f64;
        let (f, l) = ((yaw.cos(), yaw.sin()), (-yaw.sin(), yaw.cos()));
        let center = (3.0 + 1.7 * f.0, -2.0 + 1.7 * f.1);
        let wall = Wall::new(
            [center.0 - 5.0 * l.0, center.1 - 5.0 * l.1],
            [center.0 + 5.0 * l.0, center.1 + 5.0 * l.1],
            -10.0,
            10.0,
            SurfaceClass::Matte,
        );
        let frame = raycast_frame(&[wall], &DronePose::new(3.0, -2.0, 0.4, yaw), &cfg, 30.0);
        for row in &frame.pixels {
            for px in row {
                assert_relative_eq!(px.unwrap().distance_mm, 1700.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn wall_beyond_range_gives_no_return() {
        let cfg = SensorConfig::default();
        let frame = raycast_frame(
            &wall_at(5.0, 10.0),
            &DronePose::new(0.0, 0.0, 0.4, 0.0),
            &cfg,
            30.0,
        );
        assert!(frame.pixels.iter().flatten().all(Option::is_none));
    }

    #[test]
    fn empty_world_gives_no_return() {
        let frame = raycast_frame(
            &[],
            &DronePose::new(0.0, 0.0, 0.4, 0.0),
            &SensorConfig::default(),
            30.0,
        );
        assert_eq!(frame, IdealFrame::empty());
    }

    #[test]
    fn narrow_wall_misses_outer_columns() {
        // Column 7 reaches 1.4 * tan(19.6875 deg) = 0.5006 m to the side.
        let cfg = SensorConfig::default();
        let frame = raycast_frame(
            &wall_at(1.4, 0.5),
            &DronePose::new(0.0, 0.0, 0.4, 0.0),
            &cfg,
            30.0,
        );
        for row in &frame.pixels {
            assert!(row[0].is_none());
            assert!(row[7].is_none());
            for px in &row[1..7] {
                assert_relative_eq!(px.unwrap().distance_mm, 1400.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn column_seven_on_the_right_of_heading() {
        // Wall only on the right-hand side (negative y when facing +x).
        let cfg = SensorConfig::default();
        let walls = vec![Wall::new(
            [1.0, -2.0],
            [1.0, -0.3],
            -10.0,
            10.0,
            SurfaceClass::Matte,
        )];
        let frame = raycast_frame(&walls, &DronePose::new(0.0, 0.0, 0.4, 0.0), &cfg, 30.0);
        assert!(frame.pixels[4][7].is_some());
        assert!(frame.pixels[4][0].is_none());
    }

    #[test]
    fn height_span_limits_rows() {
        let cfg = SensorConfig::default();
        let walls = vec![Wall::new(
            [1.0, -5.0],
            [1.0, 5.0],
            0.6,
            0.8,
            SurfaceClass::Matte,
        )];
        let frame = raycast_frame(&walls, &DronePose::new(0.0, 0.0, 0.4, 0.0), &cfg, 30.0);
        // Only upward rays between +11.3 and +21.8 deg of elevation reach z in [0.6, 0.8].
        for (r, row) in frame.pixels.iter().enumerate() {
            let (_, el) = pixel_direction(r, 0, &cfg).unwrap();
            let z = 0.4 + el.tan();
            assert_eq!(row[3].is_some(), (0.6..=0.8).contains(&z), "row {r}");
        }
    }

    #[test]
    fn reflective_surface_vanishes_at_steep_incidence() {
        let cfg = SensorConfig::default();
        let frontal = vec![Wall::new(
            [0.5, -5.0],
            [0.5, 5.0],
            -10.0,
            10.0,
            SurfaceClass::Reflective,
        )];
        let frame = raycast_frame(&frontal, &DronePose::new(0.0, 0.0, 0.4, 0.0), &cfg, 30.0);
        assert!(frame.pixels.iter().flatten().all(Option::is_some));
        let frame = raycast_frame(&frontal, &DronePose::new(0.0, 0.0, 0.4, 1.0), &cfg, 30.0);
        assert!(frame.pixels.iter().flatten().all(Option::is_none));
        let mut matte = frontal.clone();
        matte[0].surface = SurfaceClass::Matte;
        let frame = raycast_frame(&matte, &DronePose::new(0.0, 0.0, 0.4, 1.0), &cfg, 30.0);
        assert!(frame.pixels.iter().flatten().all(Option::is_some));
    }

    #[test]
    fn nearest_surface_wins() {
        let cfg = SensorConfig::default();
        let mut walls = wall_at(2.0, 5.0);
        walls.extend(wall_at(1.0, 5.0));
        let frame = raycast_frame(&walls, &DronePose::new(0.0, 0.0, 0.4, 0.0), &cfg, 30.0);
        assert_relative_eq!(
            frame.pixels[4][4].unwrap().distance_mm,
            1000.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn validity_default_curve_anchors() {
        let noise = NoiseConfig::default();
        let m = SurfaceClass::Matte;
        assert!(validity_probability(1.0, m, 0.0, &noise) >= 0.95);
        assert!(validity_probability(2.6, m, 0.0, &noise) >= 0.5);
        assert_eq!(validity_probability(4.5, m, 0.0, &noise), 0.0);
        assert_eq!(
            validity_probability(4.5, SurfaceClass::Reflective, 0.3, &noise),
            0.0
        );
        assert_relative_eq!(validity_probability(0.0, m, 0.0, &noise), 0.99);
    }

    #[test]
    fn validity_reflective_attenuation() {
        let noise = NoiseConfig::default();
        let p = validity_probability(1.0, SurfaceClass::Reflective, 0.1, &noise);
        assert_relative_eq!(
            p,
            validity_probability(1.0, SurfaceClass::Matte, 0.0, &noise)
        );
        assert_eq!(
            validity_probability(1.0, SurfaceClass::Reflective, 0.7, &noise),
            0.0
        );
    }

    #[test]
    fn default_grids_match_characterized_ranges() {
        let noise = NoiseConfig::default();
        let bias: Vec<f64> = noise.bias_grid.iter().flatten().copied().collect();
        let sigma: Vec<f64> = noise.sigma_grid.iter().flatten().copied().collect();
        let (bmin, bmax) = bias
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        let (smin, smax) = sigma
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert_relative_eq!(bmin, 19.0);
        assert_relative_eq!(bmax, 42.0);
        assert!((3.4..3.5).contains(&smin));
        assert_relative_eq!(smax, 7.3);
        assert_relative_eq!(noise.sigma_grid[0][0], 7.3);
        assert!(noise.bias_grid[3][0] < noise.bias_grid[3][7]);
        noise.validate(&SensorConfig::default()).unwrap();
    }

    #[test]
    fn noise_config_validation_rejects_bad_knots() {
        let sensor = SensorConfig::default();
        let mut n = NoiseConfig {
            validity_knots: vec![ValidityKnot(1.0, 0.5), ValidityKnot(2.0, 0.9)],
            ..Default::default()
        };
        assert!(matches!(n.validate(&sensor), Err(Error::Config { .. })));
        n.validity_knots = vec![ValidityKnot(1.0, 1.5)];
        assert!(n.validate(&sensor).is_err());
        n.validity_knots = vec![ValidityKnot(5.0, 0.0)];
        assert!(n.validate(&sensor).is_err());
        let mut n = NoiseConfig::default();
        n.sigma_grid[2][2] = -1.0;
        assert!(n.validate(&sensor).is_err());
    }

    #[test]
    fn identity_noise_is_identity() {
        let cfg = SensorConfig::default();
        let noise = NoiseConfig::ideal(cfg.max_range_m());
        let mut ideal = IdealFrame::uniform(1234.0);
        ideal.pixels[2][5] = None;
        let frame = apply_noise(&ideal, &noise, &cfg, &mut RandomStream::new(7), 99);
        for r in 0..ROWS {
            for c in 0..COLS {
                if (r, c) == (2, 5) {
                    assert_eq!(frame.get(r, c), None);
                } else {
                    assert_eq!(frame.get(r, c), Some(1234));
                }
            }
        }
        assert_eq!(frame.timestamp_ms, 99);
    }

    #[test]
    fn same_seed_same_frame() {
        let cfg = SensorConfig::default();
        let noise = NoiseConfig::default();
        let ideal = raycast_frame(
            &wall_at(1.3, 5.0),
            &DronePose::new(0.0, 0.0, 0.4, 0.1),
            &cfg,
            30.0,
        );
        let a = apply_noise(&ideal, &noise, &cfg, &mut RandomStream::new(42), 0);
        let b = apply_noise(&ideal, &noise, &cfg, &mut RandomStream::new(42), 0);
        let c = apply_noise(&ideal, &noise, &cfg, &mut RandomStream::new(43), 0);
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn no_return_is_always_invalid() {
        let cfg = SensorConfig::default();
        let noise = NoiseConfig::ideal(4.0);
        let frame = apply_noise(
            &IdealFrame::empty(),
            &noise,
            &cfg,
            &mut RandomStream::new(1),
            0,
        );
        assert!(frame.valid.iter().flatten().all(|v| !v));
    }

    #[test]
    fn monte_carlo_statistics_match_configuration() {
        let cfg = SensorConfig::default();
        let noise = NoiseConfig::default();
        let ideal = IdealFrame::uniform(1000.0);
        let mut rng = RandomStream::new(2024);
        let n_frames = 10_000;
        let mut sum = [[0.0; COLS]; ROWS];
        let mut sum2 = [[0.0; COLS]; ROWS];
        let mut count = [[0usize; COLS]; ROWS];
        for _ in 0..n_frames {
            let f = apply_noise(&ideal, &noise, &cfg, &mut rng, 0);
            for r in 0..ROWS {
                for c in 0..COLS {
                    if let Some(d) = f.get(r, c) {
                        let e = d as f64 - 1000.0;
                        sum[r][c] += e;
                        sum2[r][c] += e * e;
                        count[r][c] += 1;
                    }
                }
            }
        }
        for r in 0..ROWS {
            for c in 0..COLS {
                let n = count[r][c] as f64;
                let mean = sum[r][c] / n;
                let sd = ((sum2[r][c] - n * mean * mean) / (n - 1.0)).sqrt();
                let (bias, sigma) = (noise.bias_grid[r][c], noise.sigma_grid[r][c]);
                assert!(
                    (mean - bias).abs() <= 0.2 * bias,
                    "pixel ({r},{c}) mean {mean} vs {bias}"
                );
                assert!(
                    (sd - sigma).abs() <= 0.2 * sigma,
                    "pixel ({r},{c}) sd {sd} vs {sigma}"
                );
            }
        }
    }

    #[test]
    fn config_defaults_validate_and_reject_4x4() {
        let mut cfg = SensorConfig::default();
        cfg.validate().unwrap();
        cfg.rows = 4;
        assert!(cfg.validate().is_err());
        let cfg = SensorConfig {
            fov_h_deg: 120.0,
            ..SensorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
