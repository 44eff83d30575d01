//! Run artifacts: `trace.csv`, `predictions.csv`, `metrics.json`, `manifest.json`.
//!
//! `trace.csv` columns, one row per step:
//!
//! ```text
//! step, time,
//! per UAV i:      uav{i}_x, uav{i}_y, uav{i}_z, uav{i}_roll, uav{i}_pitch, uav{i}_yaw,
//!                 uav{i}_mode, uav{i}_feasible
//! per obstacle j: obs{j}_x, obs{j}_y, obs{j}_z, obs{j}_mx, obs{j}_my, obs{j}_mz
//! ```
//!
//! `predictions.csv` columns:
//! `time, observer, obstacle, step, pred_x, pred_y, pred_z, true_x, true_y, true_z, error`.
//!
//! Floats are written with 9 significant digits; lines end in `\n`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::kinematics::{Mode, Pose};
use crate::scenarios::{
    convergence_errors, distance_report, summarize_predictions, DistanceReport, PredictionRow,
    PredictionSummary, SimulationTrace, StepRecord,
};
use crate::{Error, Result, Vec3};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats `x` rounded to 9 significant digits, shortest form.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    // Avoid "-0".
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

fn push_vec(line: &mut String, v: &Vec3) {
    for c in v.iter() {
        line.push(',');
        line.push_str(&fmt_f64(*c));
    }
}

pub fn trace_header(n_uav: usize, n_obs: usize) -> String {
    let mut h = String::from("step,time");
    for i in 0..n_uav {
        for f in ["x", "y", "z", "roll", "pitch", "yaw", "mode", "feasible"] {
            let _ = write!(h, ",uav{i}_{f}");
        }
    }
    for j in 0..n_obs {
        for f in ["x", "y", "z", "mx", "my", "mz"] {
            let _ = write!(h, ",obs{j}_{f}");
        }
    }
    h
}

pub fn trace_csv(records: &[StepRecord]) -> String {
    let (n_uav, n_obs) = records.first().map(|r| (r.poses.len(), r.obstacles.len())).unwrap_or((0, 0));
    let mut out = trace_header(n_uav, n_obs);
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{}", r.step, fmt_f64(r.time));
        for ((p, m), f) in r.poses.iter().zip(&r.modes).zip(&r.feasible) {
            push_vec(&mut out, &p.position);
            push_vec(&mut out, &p.attitude);
            let _ = write!(out, ",{},{}", m, u8::from(*f));
        }
        for (o, m) in r.obstacles.iter().zip(&r.measured) {
            push_vec(&mut out, o);
            push_vec(&mut out, m);
        }
        out.push('\n');
    }
    out
}

pub const PREDICTIONS_HEADER: &str =
    "time,observer,obstacle,step,pred_x,pred_y,pred_z,true_x,true_y,true_z,error";

pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 96 + 80);
    out.push_str(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{},{}", fmt_f64(r.time), r.observer, r.obstacle, r.step);
        push_vec(&mut out, &r.predicted);
        push_vec(&mut out, &r.truth);
        let _ = writeln!(out, ",{}", fmt_f64(r.error()));
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format { line, message: message.into() }
}

/// Parses a `trace.csv` back into step records.
pub fn parse_trace_csv(text: &str) -> Result<Vec<StepRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_err(1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "step" || cols[1] != "time" {
        return Err(format_err(1, "header must start with `step,time`"));
    }
    let n_uav = cols.iter().filter(|c| c.starts_with("uav") && c.ends_with("_x")).count();
    let n_obs = cols.iter().filter(|c| c.starts_with("obs") && c.ends_with("_x")).count();
    if header != trace_header(n_uav, n_obs) {
        return Err(format_err(1, "unrecognised column layout"));
    }
    let width = cols.len();

    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(format_err(line_no, format!("expected {width} fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .map_err(|e| format_err(line_no, format!("column `{}`: {e}", cols[k])))
        };
        let vec_at = |k: usize| -> Result<Vec3> { Ok(Vec3::new(num(k)?, num(k + 1)?, num(k + 2)?)) };
        let step = fields[0].parse::<usize>().map_err(|e| format_err(line_no, format!("column `step`: {e}")))?;
        let mut rec = StepRecord {
            step,
            time: num(1)?,
            poses: Vec::with_capacity(n_uav),
            modes: Vec::with_capacity(n_uav),
            feasible: Vec::with_capacity(n_uav),
            obstacles: Vec::with_capacity(n_obs),
            measured: Vec::with_capacity(n_obs),
        };
        for u in 0..n_uav {
            let k = 2 + 8 * u;
            rec.poses.push(Pose::new(vec_at(k)?, vec_at(k + 3)?));
            let mode = fields[k + 6]
                .parse::<u8>()
                .ok()
                .and_then(|m| Mode::new(m).ok())
                .ok_or_else(|| format_err(line_no, format!("bad mode `{}`", fields[k + 6])))?;
            rec.modes.push(mode);
            rec.feasible.push(match fields[k + 7] {
                "1" => true,
                "0" => false,
                other => return Err(format_err(line_no, format!("bad feasibility flag `{other}`"))),
            });
        }
        for o in 0..n_obs {
            let k = 2 + 8 * n_uav + 6 * o;
            rec.obstacles.push(vec_at(k)?);
            rec.measured.push(vec_at(k + 3)?);
        }
        records.push(rec);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyFloor {
    /// `r_rob + r_obs`.
    pub uav_obstacle: f64,
    /// `2 r_rob`.
    pub uav_uav: f64,
}

impl SafetyFloor {
    pub fn of(cfg: &ScenarioConfig) -> Self {
        Self { uav_obstacle: cfg.uav.radius + cfg.obstacles.radius, uav_uav: 2.0 * cfg.uav.radius }
    }

    pub fn violated_by(&self, d: &DistanceReport) -> bool {
        d.uav_obstacle.is_some_and(|m| m.distance < self.uav_obstacle)
            || d.uav_uav.is_some_and(|m| m.distance < self.uav_uav)
    }
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub records: usize,
    pub safety_floor: SafetyFloor,
    pub distances: DistanceReport,
    pub safety_violated: bool,
    /// Final distance of each UAV from its reference (m).
    pub convergence_errors: Vec<f64>,
    /// Steps at which some UAV had no feasible sequence.
    pub infeasible_steps: usize,
    pub prediction: PredictionSummary,
    /// RMS per-axis noise std fed to the predictors (m).
    pub injected_std_rms: f64,
}

pub fn run_metrics(trace: &SimulationTrace) -> Result<RunMetrics> {
    let floor = SafetyFloor::of(&trace.config);
    let distances = distance_report(&trace.records)?;
    Ok(RunMetrics {
        records: trace.records.len(),
        safety_floor: floor,
        safety_violated: floor.violated_by(&distances),
        distances,
        convergence_errors: convergence_errors(trace),
        infeasible_steps: trace.records.iter().filter(|r| r.feasible.iter().any(|f| !f)).count(),
        prediction: summarize_predictions(&trace.predictions),
        injected_std_rms: trace.injected_std_rms,
    })
}

/// Contents of `manifest.json`. Loading `config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub runtime_seconds: f64,
}

impl RunManifest {
    pub fn new(config: ScenarioConfig, runtime_seconds: f64) -> Self {
        let config = config.resolved();
        Self { artifact_version: ARTIFACT_VERSION.to_string(), seed: config.seed, config, runtime_seconds }
    }
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Writes all four artifacts into `dir` (created if missing) and returns the metrics.
pub fn write_run(dir: &Path, trace: &SimulationTrace, runtime_seconds: f64) -> Result<RunMetrics> {
    fs::create_dir_all(dir)?;
    let metrics = run_metrics(trace)?;
    fs::write(dir.join("trace.csv"), trace_csv(&trace.records))?;
    fs::write(dir.join("predictions.csv"), predictions_csv(&trace.predictions))?;
    fs::write(dir.join("metrics.json"), json(&metrics))?;
    fs::write(dir.join("manifest.json"), json(&RunManifest::new(trace.config.clone(), runtime_seconds)))?;
    Ok(metrics)
}
