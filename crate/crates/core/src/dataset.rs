//! Flight logs on disk and offline replay through the policy.
//!
//! A log directory holds `tof.csv`, `state.csv`, an optional `commands.csv`
//! and `meta.json`. Timestamps are integer milliseconds and strictly increase
//! within each stream; streams may run at different rates.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::perception::PerceptionConfig;
use crate::policy::{decide, Command, DeadEndHistory, Mode, PolicyConfig};
use crate::sensor::{DepthFrame, SensorConfig, COLS, ROWS};
use crate::sim::DroneState;

pub const SCHEMA_VERSION: u64 = 1;
pub const TOF_FILE: &str = "tof.csv";
pub const STATE_FILE: &str = "state.csv";
pub const COMMANDS_FILE: &str = "commands.csv";
pub const META_FILE: &str = "meta.json";

const STATE_HEADER: [&str; 10] = [
    "timestamp_ms",
    "x",
    "y",
    "z",
    "roll",
    "pitch",
    "yaw",
    "vx",
    "vy",
    "vz",
];
const COMMANDS_HEADER: [&str; 5] = [
    "timestamp_ms",
    "v_forward",
    "yaw_rate",
    "v_vertical",
    "mode",
];

/// Header of `tof.csv`: `timestamp_ms,d00,...,d77`, row-major.
pub fn tof_header() -> Vec<String> {
    let mut h = vec!["timestamp_ms".to_string()];
    for r in 0..ROWS {
        for c in 0..COLS {
            h.push(format!("d{r}{c}"));
        }
    }
    h
}

/// One row of `state.csv`. Velocities are in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSample {
    pub timestamp_ms: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl StateSample {
    pub fn from_drone_state(state: &DroneState) -> Self {
        let (s, c) = state.yaw.sin_cos();
        Self {
            timestamp_ms: (state.time_s * 1000.0).round() as u64,
            x: state.position.x,
            y: state.position.y,
            z: state.height,
            roll: 0.0,
            pitch: 0.0,
            yaw: state.yaw,
            vx: state.v_forward * c,
            vy: state.v_forward * s,
            vz: state.v_vertical,
        }
    }

    /// The planar state the policy sees; forward speed is the world velocity
    /// projected on the heading.
    pub fn to_drone_state(&self) -> DroneState {
        let (s, c) = self.yaw.sin_cos();
        DroneState {
            v_forward: self.vx * c + self.vy * s,
            v_vertical: self.vz,
            time_s: self.timestamp_ms as f64 / 1000.0,
            ..DroneState::hovering(self.x, self.y, self.z, self.yaw)
        }
    }

    fn values(&self) -> [f64; 9] {
        [
            self.x, self.y, self.z, self.roll, self.pitch, self.yaw, self.vx, self.vy, self.vz,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedCommand {
    pub timestamp_ms: u64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogBundle {
    pub tof: Vec<DepthFrame>,
    pub state: Vec<StateSample>,
    pub commands: Option<Vec<TimedCommand>>,
    /// Free-form metadata such as recording name or config digest.
    /// `schema_version` is managed by the reader and writer.
    pub meta: BTreeMap<String, Value>,
}

impl LogBundle {
    pub fn validate(&self, sensor: &SensorConfig) -> Result<()> {
        let file = PathBuf::from(TOF_FILE);
        check_monotone(self.tof.iter().map(|f| f.timestamp_ms), &file)?;
        for (i, frame) in self.tof.iter().enumerate() {
            check_frame(frame, sensor).map_err(|reason| Error::Validation {
                file: file.clone(),
                line: i as u64 + 2,
                reason,
            })?;
        }
        let file = PathBuf::from(STATE_FILE);
        check_monotone(self.state.iter().map(|s| s.timestamp_ms), &file)?;
        for (i, s) in self.state.iter().enumerate() {
            if s.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    file,
                    line: i as u64 + 2,
                    reason: "non-finite state value".into(),
                });
            }
        }
        if let Some(commands) = &self.commands {
            let file = PathBuf::from(COMMANDS_FILE);
            check_monotone(commands.iter().map(|c| c.timestamp_ms), &file)?;
            for (i, c) in commands.iter().enumerate() {
                let cmd = &c.command;
                if ![cmd.v_forward, cmd.yaw_rate, cmd.v_vertical]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::Validation {
                        file,
                        line: i as u64 + 2,
                        reason: "non-finite command value".into(),
                    });
                }
            }
        }
        if self.meta.contains_key("schema_version") {
            return Err(Error::Validation {
                file: META_FILE.into(),
                line: 1,
                reason: "`schema_version` is reserved".into(),
            });
        }
        Ok(())
    }
}

fn check_frame(frame: &DepthFrame, sensor: &SensorConfig) -> std::result::Result<(), String> {
    for r in 0..ROWS {
        for c in 0..COLS {
            if let Some(d) = frame.get(r, c) {
                if d == 0 || f64::from(d) > sensor.max_range_mm {
                    return Err(format!(
                        "pixel d{r}{c} = {d} mm outside (0, {}]",
                        sensor.max_range_mm
                    ));
                }
            }
        }
    }
    Ok(())
}

fn check_monotone(stamps: impl Iterator<Item = u64>, file: &Path) -> Result<()> {
    let mut prev: Option<u64> = None;
    for (i, t) in stamps.enumerate() {
        if prev.is_some_and(|p| t <= p) {
            return Err(Error::Validation {
                file: file.to_path_buf(),
                line: i as u64 + 2,
                reason: format!("timestamp {t} does not increase"),
            });
        }
        prev = Some(t);
    }
    Ok(())
}

pub fn write_log(bundle: &LogBundle, dir: &Path) -> Result<()> {
    write_log_with(bundle, dir, &SensorConfig::default())
}

/// Writes the bundle, replacing any previous log in `dir`.
pub fn write_log_with(bundle: &LogBundle, dir: &Path, sensor: &SensorConfig) -> Result<()> {
    bundle.validate(sensor)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut rows = vec![tof_header()];
    for f in &bundle.tof {
        let mut row = vec![f.timestamp_ms.to_string()];
        for r in 0..ROWS {
            for c in 0..COLS {
                row.push(f.get(r, c).map_or("-1".to_string(), |d| d.to_string()));
            }
        }
        rows.push(row);
    }
    write_csv(&dir.join(TOF_FILE), &rows)?;

    let mut rows = vec![STATE_HEADER.map(String::from).to_vec()];
    for s in &bundle.state {
        let mut row = vec![s.timestamp_ms.to_string()];
        row.extend(s.values().iter().map(|v| v.to_string()));
        rows.push(row);
    }
    write_csv(&dir.join(STATE_FILE), &rows)?;

    let commands_path = dir.join(COMMANDS_FILE);
    match &bundle.commands {
        Some(commands) => write_commands(commands, &commands_path)?,
        None => match fs::remove_file(&commands_path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => {
                return Err(Error::io(&commands_path, e))
            }
            _ => {}
        },
    }

    let mut meta = serde_json::Map::new();
    meta.insert("schema_version".into(), SCHEMA_VERSION.into());
    meta.extend(bundle.meta.iter().map(|(k, v)| (k.clone(), v.clone())));
    let text = serde_json::to_string_pretty(&Value::Object(meta)).expect("json map serializes");
    let path = dir.join(META_FILE);
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes a command series in the `commands.csv` layout.
pub fn write_commands(commands: &[TimedCommand], path: &Path) -> Result<()> {
    let mut rows = vec![COMMANDS_HEADER.map(String::from).to_vec()];
    rows.extend(commands.iter().map(|c| {
        vec![
            c.timestamp_ms.to_string(),
            c.command.v_forward.to_string(),
            c.command.yaw_rate.to_string(),
            c.command.v_vertical.to_string(),
            c.command.mode.to_string(),
        ]
    }));
    write_csv(path, &rows)
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn read_log(dir: &Path) -> Result<LogBundle> {
    read_log_with(dir, &SensorConfig::default())
}

/// Reads and validates a log; any malformed row fails the whole read.
pub fn read_log_with(dir: &Path, sensor: &SensorConfig) -> Result<LogBundle> {
    let tof = read_rows(&dir.join(TOF_FILE), &tof_header(), |fields| {
        let mut frame = DepthFrame::all_invalid(parse_field(&fields[0], "timestamp_ms")?);
        for (i, text) in fields[1..].iter().enumerate() {
            let (r, c) = (i / COLS, i % COLS);
            let name = format!("d{r}{c}");
            let v: i64 = parse_field(text, &name)?;
            match v {
                -1 => {}
                0..=65535 => frame.set(r, c, Some(v as u16)),
                _ => return Err(format!("`{name}` = {v} is neither -1 nor a distance in mm")),
            }
        }
        Ok(frame)
    })?;

    let state = read_rows(
        &dir.join(STATE_FILE),
        &STATE_HEADER.map(String::from),
        |fields| {
            let mut v = [0.0; 9];
            for (slot, (text, name)) in v.iter_mut().zip(fields[1..].iter().zip(&STATE_HEADER[1..]))
            {
                *slot = parse_field(text, name)?;
            }
            Ok(StateSample {
                timestamp_ms: parse_field(&fields[0], "timestamp_ms")?,
                x: v[0],
                y: v[1],
                z: v[2],
                roll: v[3],
                pitch: v[4],
                yaw: v[5],
                vx: v[6],
                vy: v[7],
                vz: v[8],
            })
        },
    )?;

    let commands_path = dir.join(COMMANDS_FILE);
    let commands = if commands_path.exists() {
        Some(read_rows(
            &commands_path,
            &COMMANDS_HEADER.map(String::from),
            |fields| {
                Ok(TimedCommand {
                    timestamp_ms: parse_field(&fields[0], "timestamp_ms")?,
                    command: Command {
                        v_forward: parse_field(&fields[1], "v_forward")?,
                        yaw_rate: parse_field(&fields[2], "yaw_rate")?,
                        v_vertical: parse_field(&fields[3], "v_vertical")?,
                        mode: fields[4].parse::<Mode>()?,
                    },
                })
            },
        )?)
    } else {
        None
    };

    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let parse_err = |line: u64, reason: String| Error::Parse {
        file: meta_path.clone(),
        line,
        reason,
    };
    let mut meta: BTreeMap<String, Value> =
        serde_json::from_str(&text).map_err(|e| parse_err(e.line() as u64, e.to_string()))?;
    match meta.remove("schema_version") {
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(parse_err(1, format!("unsupported schema_version {v}"))),
        None => return Err(parse_err(1, "missing schema_version".into())),
    }

    let bundle = LogBundle {
        tof,
        state,
        commands,
        meta,
    };
    bundle.validate(sensor).map_err(|e| match e {
        Error::Validation { file, line, reason } => Error::Validation {
            file: dir.join(file),
            line,
            reason,
        },
        other => other,
    })?;
    Ok(bundle)
}

/// Parses a CSV file whose first row must equal `header`; errors carry the
/// 1-based line number.
fn read_rows<T>(
    path: &Path,
    header: &[String],
    parse: impl Fn(&[String]) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let parse_err = |line: u64, reason: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        reason,
    };
    let mut out = Vec::new();
    let mut seen_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_string()).collect();
        if !seen_header {
            if fields != header {
                return Err(parse_err(
                    line,
                    format!("expected header `{}`", header.join(",")),
                ));
            }
            seen_header = true;
            continue;
        }
        if fields.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", header.len(), fields.len()),
            ));
        }
        out.push(parse(&fields).map_err(|reason| parse_err(line, reason))?);
    }
    if !seen_header {
        return Err(parse_err(1, "empty file".into()));
    }
    Ok(out)
}

fn parse_field<T: FromStr>(text: &str, name: &str) -> std::result::Result<T, String> {
    text.parse()
        .map_err(|_| format!("cannot parse `{name}` from `{text}`"))
}

/// Runs every recorded frame through the policy, one command per frame.
///
/// Each frame is paired with the latest state sample at or before its
/// timestamp; frames before the first sample use a hover at cruise height.
/// Battery time counts from the first frame.
pub fn replay(
    bundle: &LogBundle,
    pcfg: &PerceptionConfig,
    cfg: &PolicyConfig,
    sensor: &SensorConfig,
) -> Vec<TimedCommand> {
    let Some(first) = bundle.tof.first() else {
        return Vec::new();
    };
    let mut history = DeadEndHistory::default();
    let mut next_state = 0;
    let mut out = Vec::with_capacity(bundle.tof.len());
    for frame in &bundle.tof {
        while next_state < bundle.state.len()
            && bundle.state[next_state].timestamp_ms <= frame.timestamp_ms
        {
            next_state += 1;
        }
        let state = match next_state {
            0 => DroneState {
                time_s: frame.timestamp_ms as f64 / 1000.0,
                ..DroneState::hovering(0.0, 0.0, cfg.cruise_height, 0.0)
            },
            i => bundle.state[i - 1].to_drone_state(),
        };
        let elapsed = (frame.timestamp_ms - first.timestamp_ms) as f64 / 1000.0;
        let (command, h) = decide(frame, &state, &history, elapsed, cfg, pcfg, sensor);
        history = h;
        out.push(TimedCommand {
            timestamp_ms: frame.timestamp_ms,
            command,
        });
    }
    out
}
