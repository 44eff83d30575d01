//! `ksmpc`: run a scenario and write its artifacts.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use ksmpc_core::config::{ConfigBuilder, ScenarioConfig, PRESETS};
use ksmpc_core::output::write_run;
use ksmpc_core::scenarios::run_simulation;

#[derive(Debug, Parser)]
#[command(name = "ksmpc", version, about = "Multi-UAV switched MPC with Koopman obstacle prediction")]
struct Args {
    /// Scenario file (key = value text or JSON; a manifest.json also works).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Start from a named preset instead of the defaults.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,

    /// Output directory.
    #[arg(long, env = "KSMPC_OUT", default_value = "out")]
    out: PathBuf,

    /// RNG seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,

    /// Override one key, e.g. `--set sim.duration=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Observe and predict only; UAVs hold position.
    #[arg(long)]
    prediction_only: bool,
}

fn load(args: &Args) -> Result<ScenarioConfig, String> {
    let base = match &args.preset {
        Some(name) => ScenarioConfig::preset(name).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    let mut builder = ConfigBuilder::new(&base);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let res = if text.trim_start().starts_with('{') { builder.apply_json(&text) } else { builder.apply_text(&text) };
        res.map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for o in &args.overrides {
        builder.apply_override(o).map_err(|e| format!("--set {o}: {e}"))?;
    }
    if let Some(seed) = args.seed {
        builder.apply_override(&format!("seed={seed}")).map_err(|e| e.to_string())?;
    }
    if args.prediction_only {
        builder.apply_override("sim.prediction_only=true").map_err(|e| e.to_string())?;
    }
    builder.build().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ksmpc: {e}");
            return ExitCode::from(1);
        }
    };
    let start = Instant::now();
    let trace = match run_simulation(&cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ksmpc: simulation failed: {e}");
            return ExitCode::from(1);
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    let metrics = match write_run(&args.out, &trace, runtime) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("ksmpc: writing {}: {e}", args.out.display());
            return ExitCode::from(1);
        }
    };

    let d = &metrics.distances;
    if let Some(m) = d.uav_obstacle {
        println!("min uav-obstacle distance {:.4} m at t={:.2} s (uav {}, obstacle {})", m.distance, m.time, m.a, m.b);
    }
    if let Some(m) = d.uav_uav {
        println!("min uav-uav distance {:.4} m at t={:.2} s (uavs {}, {})", m.distance, m.time, m.a, m.b);
    }
    if metrics.prediction.per_point.count > 0 {
        let p = metrics.prediction.per_point;
        println!("prediction rmse {:.5} m, mae {:.5} m, max {:.5} m over {} points", p.rmse, p.mae, p.max_err, p.count);
    }
    println!("wrote {} records to {} in {runtime:.1} s", metrics.records, args.out.display());
    if metrics.safety_violated {
        eprintln!("ksmpc: safety floor violated");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
