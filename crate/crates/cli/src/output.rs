//! CSV and manifest writers. Numbers use Rust's `Display`, which is
//! locale-independent and round-trips `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use odrpo::{EvalSummary, IterationRecord, TrainConfig};
use serde::Serialize;

pub const CURVE_HEADER: &str =
    "iteration,reward_mean,reward_std,beta_star,dual_value,constraint,primal_gain,wall_ms";
pub const AGGREGATE_HEADER: &str = "iteration,reward_mean,reward_std,seeds";
pub const TAXI_EVAL_HEADER: &str = "dropoff_rate,illegal_rate,mean_timesteps,mean_return";
pub const EVAL_HEADER: &str = "mean_return,std_return,mean_timesteps";
pub const SWEEP_HEADER: &str = "delta,seed,last10_reward";

pub fn curve_csv(records: &[IterationRecord], timing: bool) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.episode_reward_mean,
            r.episode_reward_std,
            r.beta_star,
            r.dual_value,
            r.constraint_value,
            r.primal_gain,
            if timing { r.wall_ms } else { 0 }
        );
    }
    out
}

/// Per-iteration mean and population standard deviation of the episode
/// reward across seeds.
pub fn aggregate_csv(runs: &[Vec<IterationRecord>]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    for i in 0..len {
        let values: Vec<f64> = runs.iter().map(|r| r[i].episode_reward_mean).collect();
        let (mean, std) = odrpo::trainer::mean_std(&values);
        let _ = writeln!(
            out,
            "{},{mean},{std},{}",
            runs[0][i].iteration,
            values.len()
        );
    }
    out
}

pub fn eval_csv(summary: &EvalSummary) -> String {
    match (summary.dropoff_rate, summary.illegal_rate) {
        (Some(dropoff), Some(illegal)) => format!(
            "{TAXI_EVAL_HEADER}\n{dropoff},{illegal},{},{}\n",
            summary.mean_timesteps, summary.mean_return
        ),
        _ => format!(
            "{EVAL_HEADER}\n{},{},{}\n",
            summary.mean_return, summary.std_return, summary.mean_timesteps
        ),
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub configs: Vec<TrainConfig>,
    pub start_time: String,
    pub build: String,
    pub outputs: Vec<PathBuf>,
}

impl<'a> RunManifest<'a> {
    pub fn new(command: &'a str, configs: Vec<TrainConfig>, outputs: Vec<PathBuf>) -> Self {
        Self {
            command,
            configs,
            start_time: chrono::Utc::now().to_rfc3339(),
            build: format!("odrpo {}", env!("CARGO_PKG_VERSION")),
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), &(json + "\n"))
    }
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)
}
