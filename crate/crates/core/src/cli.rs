//! Command-line front end.
//!
//! Exit codes: 0 on success (including a commanded landing), 1 on usage,
//! configuration or I/O errors, 2 when a simulated run ends in a crash.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::dataset::{read_log_with, replay, write_commands};
use crate::error::{Error, Result};
use crate::geometry::{SurfaceClass, Wall};
use crate::sensor::{
    apply_noise, raycast_frame, DronePose, Grid, NoiseConfig, RandomStream, COLS, ROWS,
};
use crate::sim::{make_scenario, run_scenario, ScenarioConfig, ScenarioKind, ScenarioParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CRASH: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tofnav",
    version,
    about = "Obstacle avoidance with an 8x8 time-of-flight sensor"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run one scenario and write trace.csv, metrics.json and resolved_config.json.
    Simulate {
        /// Scenario JSON file, or a scenario kind name for its defaults.
        #[arg(long)]
        scenario: String,
        /// Scenario parameter for a kind name, as key=value.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        v_max: Option<f64>,
        /// Defaults to noise.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the noise model with a noiseless, always-valid sensor.
        #[arg(long)]
        ideal_sensor: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run trials for each maximum velocity and write a summary table.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        v_max: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        ideal_sensor: bool,
        /// Run trials one after another instead of in parallel.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feed a recorded log through perception and the policy.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo the sensor model against a flat wall.
    Characterize {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Wall distances in meters; defaults to 0.2, 0.4, ..., 3.0.
        #[arg(long, value_delimiter = ',')]
        distances: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Defaults to noise.rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Write a scenario file for a kind, printing it when --out is absent.
    Gen {
        #[arg(long)]
        kind: String,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn execute(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Simulate {
            scenario,
            params,
            config,
            v_max,
            seed,
            ideal_sensor,
            out,
        } => {
            let sc = load_scenario(&scenario, &params)?;
            let base = load_config_value(config.as_deref())?;
            let cfg = sc.resolve_config(&base, &flag_layer(v_max, ideal_sensor))?;
            let seed = seed.unwrap_or(cfg.noise.rng_seed);
            let (trace, metrics) = run_scenario(&sc, &cfg, seed)?;

            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_file(&out.join("trace.csv"), &trace.to_csv_string())?;
            write_file(&out.join("metrics.json"), &to_pretty_json(&metrics))?;
            write_file(&out.join("resolved_config.json"), &to_pretty_json(&cfg))?;
            if metrics.crashed {
                let p = metrics.crash_position.unwrap_or_default();
                eprintln!(
                    "crashed at ({:.3}, {:.3}) after {:.2} s",
                    p[0], p[1], metrics.flight_time_s
                );
                return Ok(EXIT_CRASH);
            }
            Ok(EXIT_OK)
        }
        Cmd::Sweep {
            scenario,
            params,
            config,
            v_max,
            trials,
            base_seed,
            ideal_sensor,
            serial,
            out,
        } => {
            let sc = load_scenario(&scenario, &params)?;
            let mut base = load_config_value(config.as_deref())?;
            if ideal_sensor {
                crate::config::merge(&mut base, &flag_layer(None, true));
            }
            let rows = sweep(&sc, &base, &v_max, trials, base_seed, !serial)?;
            write_file(&out, &sweep_csv(&rows))?;
            Ok(EXIT_OK)
        }
        Cmd::Replay { log, config, out } => {
            let cfg = RunConfig::layered([&load_config_value(config.as_deref())?])?;
            let bundle = read_log_with(&log, &cfg.sensor)?;
            let commands = replay(&bundle, &cfg.perception, &cfg.policy, &cfg.sensor);
            write_commands(&commands, &out)?;
            Ok(EXIT_OK)
        }
        Cmd::Characterize {
            config,
            distances,
            samples,
            seed,
            out,
        } => {
            let cfg = RunConfig::layered([&load_config_value(config.as_deref())?])?;
            let distances = if distances.is_empty() {
                (1..=15).map(|k| k as f64 * 0.2).collect()
            } else {
                distances
            };
            let seed = seed.unwrap_or(cfg.noise.rng_seed);
            let rows = characterize(&cfg, &distances, samples, seed)?;
            write_file(&out, &characterize_csv(&rows))?;
            Ok(EXIT_OK)
        }
        Cmd::Scenario {
            action: ScenarioCmd::Gen { kind, params, out },
        } => {
            let kind: ScenarioKind = kind.parse()?;
            let sc = make_scenario(kind, &parse_params(&params)?)?;
            let text = to_pretty_json(&sc);
            match out {
                Some(path) => write_file(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(EXIT_OK)
        }
    }
}

fn flag_layer(v_max: Option<f64>, ideal_sensor: bool) -> Value {
    let mut layer = json!({});
    if let Some(v) = v_max {
        layer["policy"] = json!({ "v_max": v });
    }
    if ideal_sensor {
        let sensor = crate::sensor::SensorConfig::default();
        layer["noise"] =
            serde_json::to_value(NoiseConfig::ideal(sensor.max_range_m())).expect("serializes");
    }
    layer
}

fn to_pretty_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a user config file as a raw layer; no file means all defaults.
/// The file is checked on its own so later layers cannot mask its errors.
pub fn load_config_value(path: Option<&Path>) -> Result<Value> {
    let Some(path) = path else {
        return Ok(Value::Null);
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::config("<root>", format!("{}: {e}", path.display())))?;
    RunConfig::layered([&value])?;
    Ok(value)
}

fn parse_params(raw: &[String]) -> Result<ScenarioParams> {
    raw.iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::config("params", format!("expected KEY=VALUE, got `{kv}`"))
            })?;
            let v: f64 = v.parse().map_err(|_| {
                Error::config(format!("params.{k}"), format!("not a number: `{v}`"))
            })?;
            Ok((k.to_string(), v))
        })
        .collect()
}

/// A scenario file path, or a kind name built with `params`.
pub fn load_scenario(arg: &str, params: &[String]) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        if !params.is_empty() {
            return Err(Error::config(
                "params",
                "--param only applies to scenario kind names",
            ));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return ScenarioConfig::from_json_str(&text);
    }
    let kind: ScenarioKind = arg.parse().map_err(|_| {
        Error::config(
            "scenario",
            format!("`{arg}` is neither a file nor a scenario kind"),
        )
    })?;
    make_scenario(kind, &parse_params(params)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub v_max: f64,
    pub trials: u64,
    pub crashes: u64,
    pub mean_flight_time_s: f64,
    pub std_flight_time_s: f64,
    pub mean_distance_m: f64,
    pub std_distance_m: f64,
    pub mean_min_clearance_m: f64,
    pub std_min_clearance_m: f64,
}

pub const SWEEP_HEADER: &str = "v_max,trials,crashes,mean_flight_time_s,std_flight_time_s,mean_distance_m,std_distance_m,mean_min_clearance_m,std_min_clearance_m";

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `trials` seeds (`base_seed + i`) per maximum velocity. Results are
/// assembled in (v_max, trial) order, so `parallel` never changes the output.
pub fn sweep(
    scenario: &ScenarioConfig,
    base: &Value,
    v_max_list: &[f64],
    trials: u64,
    base_seed: u64,
    parallel: bool,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let mut speeds = v_max_list.to_vec();
    speeds.sort_by(f64::total_cmp);
    let configs = speeds
        .iter()
        .map(|&v| scenario.resolve_config(base, &flag_layer(Some(v), false)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..speeds.len())
        .flat_map(|i| (0..trials).map(move |t| (i, t)))
        .collect();
    let run =
        |&(i, t): &(usize, u64)| run_scenario(scenario, &configs[i], base_seed + t).map(|(_, m)| m);
    let metrics = if parallel {
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };

    Ok(speeds
        .iter()
        .zip(metrics.chunks(trials as usize))
        .map(|(&v_max, ms)| {
            let col = |f: fn(&crate::sim::RunMetrics) -> f64| ms.iter().map(f).collect::<Vec<_>>();
            let (mean_flight_time_s, std_flight_time_s) = mean_std(&col(|m| m.flight_time_s));
            let (mean_distance_m, std_distance_m) = mean_std(&col(|m| m.distance_m));
            let (mean_min_clearance_m, std_min_clearance_m) = mean_std(&col(|m| m.min_clearance_m));
            SweepRow {
                v_max,
                trials,
                crashes: ms.iter().filter(|m| m.crashed).count() as u64,
                mean_flight_time_s,
                std_flight_time_s,
                mean_distance_m,
                std_distance_m,
                mean_min_clearance_m,
                std_min_clearance_m,
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.v_max,
            r.trials,
            r.crashes,
            r.mean_flight_time_s,
            r.std_flight_time_s,
            r.mean_distance_m,
            r.std_distance_m,
            r.mean_min_clearance_m,
            r.std_min_clearance_m
        );
    }
    out
}

/// Per-pixel sensor statistics at one wall distance. Error statistics are
/// `None` for pixels that never returned a valid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizeRow {
    pub distance_m: f64,
    pub mean_error_mm: Grid<Option<f64>>,
    pub sigma_mm: Grid<Option<f64>>,
    pub validity: Grid<f64>,
}

/// Samples `samples` frames of a frontal matte wall at each distance from a
/// single random stream seeded with `seed`.
pub fn characterize(
    cfg: &RunConfig,
    distances: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<CharacterizeRow>> {
    if samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::config(
            "distances",
            format!("{d} is not a positive distance"),
        ));
    }
    cfg.validate()?;
    let pose = DronePose::new(0.0, 0.0, 0.4, 0.0);
    let mut rng = RandomStream::new(seed);
    let period_ms = 1000.0 / cfg.sensor.frame_rate_hz;
    let mut rows = Vec::with_capacity(distances.len());
    for &d in distances {
        let wall = Wall::new([d, -50.0], [d, 50.0], -50.0, 50.0, SurfaceClass::Matte);
        let ideal = raycast_frame(
            &[wall],
            &pose,
            &cfg.sensor,
            cfg.noise.reflectivity_cutoff_deg,
        );
        let mut errors: Vec<Vec<f64>> = (0..ROWS * COLS)
            .map(|_| Vec::with_capacity(samples))
            .collect();
        for k in 0..samples {
            let frame = apply_noise(
                &ideal,
                &cfg.noise,
                &cfg.sensor,
                &mut rng,
                (k as f64 * period_ms).round() as u64,
            );
            for r in 0..ROWS {
                for c in 0..COLS {
                    if let (Some(m), Some(truth)) = (frame.get(r, c), ideal.pixels[r][c]) {
                        errors[r * COLS + c].push(f64::from(m) - truth.distance_mm);
                    }
                }
            }
        }
        let mut row = CharacterizeRow {
            distance_m: d,
            mean_error_mm: [[None; COLS]; ROWS],
            sigma_mm: [[None; COLS]; ROWS],
            validity: [[0.0; COLS]; ROWS],
        };
        for (i, e) in errors.iter().enumerate() {
            let (r, c) = (i / COLS, i % COLS);
            row.validity[r][c] = e.len() as f64 / samples as f64;
            if e.is_empty() {
                continue;
            }
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = if e.len() > 1 {
                e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            row.mean_error_mm[r][c] = Some(mean);
            row.sigma_mm[r][c] = Some(var.sqrt());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `distance_m`, then 64 mean errors, 64 standard deviations and 64 validity
/// fractions, each row-major. Pixels without valid samples leave the error
/// columns empty.
pub fn characterize_csv(rows: &[CharacterizeRow]) -> String {
    let pixels = || (0..ROWS).flat_map(|r| (0..COLS).map(move |c| (r, c)));
    let mut header = vec!["distance_m".to_string()];
    for prefix in ["mean_error_mm", "sigma_mm", "validity"] {
        header.extend(pixels().map(|(r, c)| format!("{prefix}_{r}{c}")));
    }
    let mut out = header.join(",") + "\n";
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in rows {
        let mut fields = vec![row.distance_m.to_string()];
        fields.extend(pixels().map(|(r, c)| opt(row.mean_error_mm[r][c])));
        fields.extend(pixels().map(|(r, c)| opt(row.sigma_mm[r][c])));
        fields.extend(pixels().map(|(r, c)| row.validity[r][c].to_string()));
        out += &fields.join(",");
        out.push('\n');
    }
    out
}
