use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use odrpo::{EnvId, Method, TrainConfig, ValueKind};

#[derive(Debug, Parser)]
#[command(
    name = "odrpo",
    version,
    about = "Tabular trust-region policy optimization"
)]
pub struct Cli {
    /// Flat `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent and write its learning curve and final policy.
    Train(TrainArgs),
    /// Roll out a saved policy and report episode statistics.
    Evaluate(EvaluateArgs),
    /// Train once per (delta, seed) pair and tabulate final rewards.
    Sweep(SweepArgs),
    /// Check both dual solvers against the brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub env: EnvId,
    #[arg(long, default_value = "kl")]
    pub method: Method,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Episodes per iteration.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "value")]
    pub value_kind: Option<ValueKind>,
    /// Value-function learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Inclusive seed range such as `1..5`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedRange>,
    /// Reuse the multiplier of earlier iterations instead of solving each time.
    #[arg(long)]
    pub warm_start_beta: bool,
    #[arg(long)]
    pub warm_start_after: Option<usize>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Write 0 to the wall_ms column so reruns give identical CSV files.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated trust-region radii.
    #[arg(long = "delta", value_delimiter = ',', required = true)]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub env: EnvId,
    /// Policy table as written by `train`.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid intervals for the oracle scan.
    #[arg(long, default_value_t = 20_000, value_parser = clap::value_parser!(u64).range(1000..))]
    pub grid: u64,
    /// Scale every solved multiplier by 1.1; verification must then fail.
    #[arg(long)]
    pub inject_bug: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn iter(self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let bad = || format!("expected a seed range like `1..5`, got `{s}`");
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
        None => (s, s),
    };
    let first: u64 = a.trim().parse().map_err(|_| bad())?;
    let last: u64 = b.trim().parse().map_err(|_| bad())?;
    if last < first {
        return Err(bad());
    }
    Ok(SeedRange { first, last })
}

impl RunArgs {
    pub fn seeds(&self) -> Vec<u64> {
        match (self.seeds, self.seed) {
            (Some(range), _) => range.iter().collect(),
            (None, Some(seed)) => vec![seed],
            (None, None) => vec![0],
        }
    }

    pub fn config(&self, delta: Option<f64>, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::new(self.env, self.method);
        c.seed = seed;
        if let Some(v) = delta {
            c.delta = v;
        }
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.batch {
            c.batch = v;
        }
        if let Some(v) = self.value_kind {
            c.value_kind = v;
        }
        if let Some(v) = self.lr {
            c.value_lr = v;
        }
        if let Some(v) = self.warm_start_after {
            c.warm_start_after = v;
        }
        c.beta_warm_start = self.warm_start_beta;
        c
    }
}

/// Splices entries of a `--config` file into `argv` as long flags.
///
/// Entries go right after the subcommand; a key is skipped when the same
/// flag (or its `seed`/`seeds` counterpart) already appears on the command
/// line, so explicit flags win.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            path = Some(iter.next().ok_or("--config needs a path")?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let present = |flag: &str| {
        rest.iter()
            .any(|a| a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected `key = value`", n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        let flag = format!("--{key}");
        let twin = match key.as_str() {
            "seed" => Some("--seeds"),
            "seeds" => Some("--seed"),
            _ => None,
        };
        if present(&flag) || twin.is_some_and(present) {
            continue;
        }
        match value {
            "true" => injected.push(flag),
            "false" => {}
            _ => {
                injected.push(flag);
                injected.push(value.to_string());
            }
        }
    }
    // Program name, then the subcommand (first non-flag argument).
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len(), |i| i + 2);
    rest.splice(at..at, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(
            parse_seeds("1..5").unwrap(),
            SeedRange { first: 1, last: 5 }
        );
        assert_eq!(
            parse_seeds("1..=5").unwrap(),
            SeedRange { first: 1, last: 5 }
        );
        assert_eq!(parse_seeds("3").unwrap(), SeedRange { first: 3, last: 3 });
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn config_file_entries_yield_to_flags() {
        let dir = std::env::temp_dir().join(format!("odrpo-args-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "# defaults\nenv = nchain\ndelta = 0.5\nwarm_start_beta = true\nseeds = 1..3\n",
        )
        .unwrap();
        let argv: Vec<String> = [
            "odrpo", "train", "--delta", "0.2", "--seed", "4", "--config",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([path.display().to_string()])
        .collect();
        let out = expand_config(argv).unwrap();
        assert_eq!(
            out,
            [
                "odrpo",
                "train",
                "--env",
                "nchain",
                "--warm-start-beta",
                "--delta",
                "0.2",
                "--seed",
                "4"
            ]
        );
        std::fs::remove_dir_all(dir).unwrap();
    }
}
