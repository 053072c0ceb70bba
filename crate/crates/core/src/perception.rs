//! Occupancy thresholding and connected-pixel grouping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::{DepthFrame, Grid, SensorConfig, COLS, ROWS};

/// Pixel adjacency used when growing groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &NEIGHBORS_4,
            Connectivity::Eight => &NEIGHBORS_8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub occupancy_threshold_mm: u16,
    pub connectivity: Connectivity,
    pub min_group_size: usize,
    pub max_groups: usize,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            occupancy_threshold_mm: 2000,
            connectivity: Connectivity::Eight,
            min_group_size: 2,
            max_groups: 4,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.occupancy_threshold_mm == 0 {
            return Err(Error::config(
                "perception.occupancy_threshold_mm",
                "must be > 0",
            ));
        }
        if self.min_group_size == 0 {
            return Err(Error::config("perception.min_group_size", "must be >= 1"));
        }
        if self.max_groups == 0 {
            return Err(Error::config("perception.max_groups", "must be >= 1"));
        }
        Ok(())
    }
}

/// Binary frame of pixels close enough to count as obstacles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyFrame {
    pub occupied: Grid<bool>,
    pub source_timestamp_ms: u64,
}

impl OccupancyFrame {
    pub fn from_grid(occupied: Grid<bool>, source_timestamp_ms: u64) -> Self {
        Self {
            occupied,
            source_timestamp_ms,
        }
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().flatten().filter(|o| **o).count()
    }
}

/// Marks valid pixels at or below the occupancy threshold.
pub fn threshold(frame: &DepthFrame, cfg: &PerceptionConfig) -> OccupancyFrame {
    let mut occupied = [[false; COLS]; ROWS];
    for r in 0..ROWS {
        for c in 0..COLS {
            occupied[r][c] =
                frame.valid[r][c] && frame.distance_mm[r][c] <= cfg.occupancy_threshold_mm;
        }
    }
    OccupancyFrame {
        occupied,
        source_timestamp_ms: frame.timestamp_ms,
    }
}

/// A connected cluster of occupied pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectGroup {
    pub min_row: usize,
    pub max_row: usize,
    pub min_col: usize,
    pub max_col: usize,
    pub pixel_count: usize,
    /// Mean `(row, col)` of the member pixels.
    pub centroid: (f64, f64),
    pub min_distance_mm: u16,
    /// Member pixels in row-major order.
    pub pixels: Vec<(usize, usize)>,
}

impl ObjectGroup {
    fn from_pixels(mut pixels: Vec<(usize, usize)>, depths: &DepthFrame) -> Self {
        pixels.sort_unstable();
        let n = pixels.len();
        let (mut min_row, mut max_row, mut min_col, mut max_col) = (ROWS, 0, COLS, 0);
        let (mut sum_r, mut sum_c) = (0usize, 0usize);
        let mut min_distance_mm = u16::MAX;
        for &(r, c) in &pixels {
            min_row = min_row.min(r);
            max_row = max_row.max(r);
            min_col = min_col.min(c);
            max_col = max_col.max(c);
            sum_r += r;
            sum_c += c;
            min_distance_mm = min_distance_mm.min(depths.distance_mm[r][c]);
        }
        Self {
            min_row,
            max_row,
            min_col,
            max_col,
            pixel_count: n,
            centroid: (sum_r as f64 / n as f64, sum_c as f64 / n as f64),
            min_distance_mm,
            pixels,
        }
    }

    pub fn min_distance_m(&self) -> f64 {
        self.min_distance_mm as f64 / 1000.0
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.pixels.binary_search(&(row, col)).is_ok()
    }

    fn priority_key(&self) -> (u16, usize, usize) {
        (self.min_distance_mm, self.min_row, self.min_col)
    }
}

/// Counters collected while grouping one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupingStats {
    /// Pixels pushed onto the traversal stack.
    pub pixels_visited: usize,
    /// Components found before the size filter and the group cap.
    pub components: usize,
}

/// Clusters occupied pixels into groups, nearest first.
///
/// Components smaller than `min_group_size` are dropped. When more than
/// `max_groups` remain, the nearest ones are kept; ties go to the smaller
/// `(min_row, min_col)`.
pub fn group(
    frame: &OccupancyFrame,
    depths: &DepthFrame,
    cfg: &PerceptionConfig,
) -> Vec<ObjectGroup> {
    group_counted(frame, depths, cfg).0
}

pub fn group_counted(
    frame: &OccupancyFrame,
    depths: &DepthFrame,
    cfg: &PerceptionConfig,
) -> (Vec<ObjectGroup>, GroupingStats) {
    let offsets = cfg.connectivity.offsets();
    let mut visited = [[false; COLS]; ROWS];
    let mut stats = GroupingStats::default();
    let mut groups = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::with_capacity(ROWS * COLS);

    for r in 0..ROWS {
        for c in 0..COLS {
            if !frame.occupied[r][c] || visited[r][c] {
                continue;
            }
            visited[r][c] = true;
            stats.pixels_visited += 1;
            stack.push((r, c));
            let mut members = Vec::new();
            while let Some((pr, pc)) = stack.pop() {
                members.push((pr, pc));
                for &(dr, dc) in offsets {
                    let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                    if nr < 0 || nc < 0 || nr >= ROWS as isize || nc >= COLS as isize {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if frame.occupied[nr][nc] && !visited[nr][nc] {
                        visited[nr][nc] = true;
                        stats.pixels_visited += 1;
                        stack.push((nr, nc));
                    }
                }
            }
            stats.components += 1;
            if members.len() >= cfg.min_group_size {
                groups.push(ObjectGroup::from_pixels(members, depths));
            }
        }
    }

    groups.sort_by_key(ObjectGroup::priority_key);
    groups.truncate(cfg.max_groups);
    (groups, stats)
}

/// Which half of the field of view a group sits in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Center,
}

/// Angular and metric extent of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupGeometry {
    /// Azimuth of the left edge of the leftmost column (negative = left).
    pub azimuth_left: f64,
    pub azimuth_right: f64,
    pub azimuth_span: f64,
    /// Lateral extent at the group's minimum distance.
    pub lateral_width_m: f64,
    pub side: Side,
}

pub fn group_features(group: &ObjectGroup, cfg: &SensorConfig) -> GroupGeometry {
    let azimuth_left = cfg.column_edge_azimuth(group.min_col as f64);
    let azimuth_right = cfg.column_edge_azimuth(group.max_col as f64 + 1.0);
    let center = (COLS as f64 - 1.0) / 2.0;
    let side = match group.centroid.1.partial_cmp(&center) {
        Some(std::cmp::Ordering::Less) => Side::Left,
        Some(std::cmp::Ordering::Greater) => Side::Right,
        _ => Side::Center,
    };
    GroupGeometry {
        azimuth_left,
        azimuth_right,
        azimuth_span: azimuth_right - azimuth_left,
        lateral_width_m: lateral_width(group.min_distance_m(), azimuth_left, azimuth_right),
        side,
    }
}

/// Width subtended between two azimuths at axis-projected distance `d`.
pub fn lateral_width(distance_m: f64, azimuth_left: f64, azimuth_right: f64) -> f64 {
    distance_m * (azimuth_right.tan() - azimuth_left.tan())
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Label-propagation connected components, independent of the DFS.
    use super::*;

    /// Partition of occupied pixels into components of at least `min_size`,
    /// each as a sorted pixel list; components sorted by first pixel.
    pub fn components(
        occ: &Grid<bool>,
        conn: Connectivity,
        min_size: usize,
    ) -> Vec<Vec<(usize, usize)>> {
        let mut label = [[usize::MAX; COLS]; ROWS];
        for r in 0..ROWS {
            for c in 0..COLS {
                if occ[r][c] {
                    label[r][c] = r * COLS + c;
                }
            }
        }
        // Repeat min-label relaxation until a fixed point.
        loop {
            let mut changed = false;
            for r in 0..ROWS {
                for c in 0..COLS {
                    if !occ[r][c] {
                        continue;
                    }
                    for r2 in 0..ROWS {
                        for c2 in 0..COLS {
                            if !occ[r2][c2] || (r, c) == (r2, c2) {
                                continue;
                            }
                            let dr = r.abs_diff(r2);
                            let dc = c.abs_diff(c2);
                            let adjacent = match conn {
                                Connectivity::Four => dr + dc == 1,
                                Connectivity::Eight => dr <= 1 && dc <= 1,
                            };
                            if adjacent && label[r2][c2] < label[r][c] {
                                label[r][c] = label[r2][c2];
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut by_label: std::collections::BTreeMap<usize, Vec<(usize, usize)>> =
            Default::default();
        for r in 0..ROWS {
            for c in 0..COLS {
                if occ[r][c] {
                    by_label.entry(label[r][c]).or_default().push((r, c));
                }
            }
        }
        let mut out: Vec<_> = by_label
            .into_values()
            .filter(|g| g.len() >= min_size)
            .collect();
        for g in &mut out {
            g.sort_unstable();
        }
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame_from(occ: &Grid<bool>) -> (OccupancyFrame, DepthFrame) {
        let mut depths = DepthFrame::all_invalid(0);
        for r in 0..ROWS {
            for c in 0..COLS {
                if occ[r][c] {
                    depths.set(r, c, Some(500 + (r * COLS + c) as u16));
                }
            }
        }
        (OccupancyFrame::from_grid(*occ, 0), depths)
    }

    fn uncapped(conn: Connectivity) -> PerceptionConfig {
        PerceptionConfig {
            connectivity: conn,
            max_groups: ROWS * COLS,
            ..PerceptionConfig::default()
        }
    }

    fn partition(groups: &[ObjectGroup]) -> Vec<Vec<(usize, usize)>> {
        let mut p: Vec<_> = groups.iter().map(|g| g.pixels.clone()).collect();
        p.sort();
        p
    }

    #[test]
    fn threshold_rules() {
        let cfg = PerceptionConfig::default();
        assert_eq!(threshold(&DepthFrame::uniform(3000, 0), &cfg).count(), 0);
        assert_eq!(threshold(&DepthFrame::uniform(2000, 0), &cfg).count(), 64);
        let mut f = DepthFrame::uniform(3000, 5);
        f.distance_mm[1][1] = 500;
        f.valid[1][1] = false;
        let occ = threshold(&f, &cfg);
        assert!(!occ.occupied[1][1]);
        assert_eq!(occ.source_timestamp_ms, 5);
    }

    #[test]
    fn empty_and_singleton_frames_yield_nothing() {
        let cfg = PerceptionConfig::default();
        let mut occ = [[false; COLS]; ROWS];
        let (f, d) = frame_from(&occ);
        assert!(group(&f, &d, &cfg).is_empty());
        occ[3][3] = true;
        let (f, d) = frame_from(&occ);
        assert!(group(&f, &d, &cfg).is_empty());
    }

    #[test]
    fn full_frame_is_one_group() {
        let cfg = PerceptionConfig::default();
        let (f, d) = frame_from(&[[true; COLS]; ROWS]);
        let g = group(&f, &d, &cfg);
        assert_eq!(g.len(), 1);
        let g = &g[0];
        assert_eq!(g.pixel_count, 64);
        assert_eq!((g.min_row, g.max_row, g.min_col, g.max_col), (0, 7, 0, 7));
        assert_eq!(g.centroid, (3.5, 3.5));
        assert_eq!(g.min_distance_mm, 500);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let mut occ = [[false; COLS]; ROWS];
        occ[2][2] = true;
        occ[3][3] = true;
        let (f, d) = frame_from(&occ);
        assert_eq!(group(&f, &d, &uncapped(Connectivity::Eight)).len(), 1);
        assert!(group(&f, &d, &uncapped(Connectivity::Four)).is_empty());
    }

    #[test]
    fn overflow_keeps_nearest_groups_in_order() {
        // Six horizontal pairs in separate rows/cols; distances chosen per pair.
        let mut depths = DepthFrame::all_invalid(0);
        let pairs = [
            ((0, 0), 900),
            ((0, 4), 300),
            ((3, 0), 700),
            ((3, 4), 300),
            ((6, 0), 100),
            ((6, 4), 1500),
        ];
        let mut occ = [[false; COLS]; ROWS];
        for &((r, c), d) in &pairs {
            for cc in [c, c + 1] {
                occ[r][cc] = true;
                depths.set(r, cc, Some(d));
            }
        }
        let f = OccupancyFrame::from_grid(occ, 0);
        let groups = group(&f, &depths, &PerceptionConfig::default());
        let keys: Vec<_> = groups
            .iter()
            .map(|g| (g.min_distance_mm, g.min_row, g.min_col))
            .collect();
        assert_eq!(
            keys,
            vec![(100, 6, 0), (300, 0, 4), (300, 3, 4), (700, 3, 0)]
        );
    }

    #[test]
    fn group_borders_and_min_distance() {
        let mut depths = DepthFrame::all_invalid(0);
        let mut occ = [[false; COLS]; ROWS];
        for (r, c, d) in [(2, 3, 800), (3, 3, 650), (3, 4, 700), (4, 5, 900)] {
            occ[r][c] = true;
            depths.set(r, c, Some(d));
        }
        let g = &group(
            &OccupancyFrame::from_grid(occ, 0),
            &depths,
            &PerceptionConfig::default(),
        )[0];
        assert_eq!((g.min_row, g.max_row, g.min_col, g.max_col), (2, 4, 3, 5));
        assert_eq!(g.min_distance_mm, 650);
        assert_eq!(g.pixel_count, 4);
        assert_relative_eq!(g.centroid.0, 3.0);
        assert_relative_eq!(g.centroid.1, 3.75);
        assert!(g.contains(4, 5) && !g.contains(4, 4));
    }

    #[test]
    fn exhaustive_4x4_matches_oracle() {
        for conn in [Connectivity::Eight, Connectivity::Four] {
            let cfg = uncapped(conn);
            for mask in 0u32..(1 << 16) {
                let mut occ = [[false; COLS]; ROWS];
                for bit in 0..16 {
                    occ[bit / 4 + 2][bit % 4 + 2] = mask & (1 << bit) != 0;
                }
                let (f, d) = frame_from(&occ);
                let (groups, stats) = group_counted(&f, &d, &cfg);
                assert!(stats.pixels_visited <= 64);
                assert_eq!(
                    partition(&groups),
                    oracle::components(&occ, conn, 2),
                    "mask {mask:#06x}"
                );
            }
        }
    }

    #[test]
    fn random_frames_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = uncapped(Connectivity::Eight);
        for _ in 0..2_000 {
            let density: f64 = rng.random();
            let mut occ = [[false; COLS]; ROWS];
            for cell in occ.iter_mut().flatten() {
                *cell = rng.random::<f64>() < density;
            }
            let (f, d) = frame_from(&occ);
            assert_eq!(
                partition(&group(&f, &d, &cfg)),
                oracle::components(&occ, Connectivity::Eight, 2)
            );
        }
    }

    #[test]
    fn features_side_and_width() {
        let cfg = SensorConfig::default();
        let mk = |cols: &[usize], d: u16| {
            let mut depths = DepthFrame::all_invalid(0);
            let mut occ = [[false; COLS]; ROWS];
            for &c in cols {
                for r in 3..5 {
                    occ[r][c] = true;
                    depths.set(r, c, Some(d));
                }
            }
            group(
                &OccupancyFrame::from_grid(occ, 0),
                &depths,
                &PerceptionConfig::default(),
            )[0]
            .clone()
        };
        let g = group_features(&mk(&[3, 4], 1400), &cfg);
        assert_relative_eq!(
            g.lateral_width_m,
            2.0 * 1.4 * 5.625_f64.to_radians().tan(),
            epsilon = 1e-12
        );
        assert_relative_eq!(g.lateral_width_m, 0.2758, epsilon = 1e-4);
        assert_eq!(g.side, Side::Center);
        assert_eq!(group_features(&mk(&[0, 1, 2], 800), &cfg).side, Side::Left);
        assert_eq!(group_features(&mk(&[5, 6], 800), &cfg).side, Side::Right);
        let g = group_features(&mk(&[2, 3, 4, 5], 1400), &cfg);
        assert_relative_eq!(g.azimuth_span, 22.5_f64.to_radians(), epsilon = 1e-12);
    }

    #[test]
    fn connectivity_serde() {
        let cfg: PerceptionConfig = serde_json::from_str(r#"{"connectivity": 4}"#).unwrap();
        assert_eq!(cfg.connectivity, Connectivity::Four);
        assert!(serde_json::from_str::<PerceptionConfig>(r#"{"connectivity": 6}"#).is_err());
    }

    fn arb_frame() -> impl Strategy<Value = DepthFrame> {
        prop::collection::vec(prop::option::of(1u16..4000), 64).prop_map(|px| {
            let mut f = DepthFrame::all_invalid(0);
            for (i, d) in px.into_iter().enumerate() {
                f.set(i / COLS, i % COLS, d);
            }
            f
        })
    }

    proptest! {
        #[test]
        fn raising_a_distance_never_adds_occupancy(frame in arb_frame(), idx in 0usize..64, bump in 0u16..3000) {
            let cfg = PerceptionConfig::default();
            let (r, c) = (idx / COLS, idx % COLS);
            let before = threshold(&frame, &cfg);
            let mut raised = frame.clone();
            raised.distance_mm[r][c] = raised.distance_mm[r][c].saturating_add(bump);
            let after = threshold(&raised, &cfg);
            for rr in 0..ROWS {
                for cc in 0..COLS {
                    prop_assert!(!after.occupied[rr][cc] || before.occupied[rr][cc]);
                }
            }
        }

        #[test]
        fn groups_partition_occupied_pixels(frame in arb_frame()) {
            let cfg = uncapped(Connectivity::Eight);
            let occ = threshold(&frame, &cfg);
            let (groups, stats) = group_counted(&occ, &frame, &cfg);
            prop_assert!(stats.pixels_visited <= 64);
            let mut seen = [[false; COLS]; ROWS];
            for g in &groups {
                prop_assert!(g.pixel_count >= 2);
                prop_assert_eq!(g.pixel_count, g.pixels.len());
                let min_d = g.pixels.iter().map(|&(r, c)| frame.distance_mm[r][c]).min().unwrap();
                prop_assert_eq!(g.min_distance_mm, min_d);
                for &(r, c) in &g.pixels {
                    prop_assert!(occ.occupied[r][c]);
                    prop_assert!(!seen[r][c]);
                    seen[r][c] = true;
                }
            }
            for w in groups.windows(2) {
                prop_assert!(w[0].priority_key() <= w[1].priority_key());
            }
            let again = group(&occ, &frame, &cfg);
            prop_assert_eq!(groups, again);
        }
    }
}
