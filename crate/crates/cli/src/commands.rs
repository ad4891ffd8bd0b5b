use std::fs;
use std::path::PathBuf;

use odrpo::oracle::{verify, VerifyConfig};
use odrpo::trainer::last_fraction_mean;
use odrpo::{evaluate, train, TabularPolicy, TrainConfig};
use rayon::prelude::*;

use crate::args::{Cli, Command, EvaluateArgs, SweepArgs, TrainArgs, VerifyArgs};
use crate::output::{self, RunManifest};
use crate::CliError;

/// Fraction of the run averaged for the final-reward summary.
const TAIL: f64 = 0.1;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn validated(configs: &[TrainConfig]) -> Result<(), CliError> {
    for c in configs {
        c.validate()?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let run = &args.run;
    let seeds = run.seeds();
    let configs: Vec<TrainConfig> = seeds.iter().map(|&s| run.config(args.delta, s)).collect();
    validated(&configs)?;
    let multi = seeds.len() > 1;
    let dir_for = |seed: u64| {
        if multi {
            run.out.join(format!("seed-{seed}"))
        } else {
            run.out.clone()
        }
    };
    let mut outputs: Vec<PathBuf> = seeds
        .iter()
        .flat_map(|&s| [dir_for(s).join("curve.csv"), dir_for(s).join("policy.txt")])
        .collect();
    if multi {
        outputs.push(run.out.join("aggregate.csv"));
    }
    fs::create_dir_all(&run.out)?;
    RunManifest::new("train", configs.clone(), outputs).write(&run.out)?;

    let results: Vec<_> = configs
        .into_par_iter()
        .map(|config| {
            let seed = config.seed;
            let outcome = train(config)?;
            let dir = dir_for(seed);
            output::write_file(
                &dir.join("curve.csv"),
                &output::curve_csv(&outcome.records, !run.no_timing),
            )?;
            output::write_file(&dir.join("policy.txt"), &outcome.policy.to_text())?;
            Ok::<_, CliError>((seed, outcome.records))
        })
        .collect::<Result<_, _>>()?;

    for (seed, records) in &results {
        println!(
            "seed {seed}: last-10% mean reward {:.3}",
            last_fraction_mean(records, TAIL)
        );
    }
    if multi {
        let runs: Vec<_> = results.into_iter().map(|(_, r)| r).collect();
        output::write_file(
            &run.out.join("aggregate.csv"),
            &output::aggregate_csv(&runs),
        )?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.policy)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.policy.display())))?;
    let policy = TabularPolicy::from_text(&text)
        .map_err(|e| CliError::Usage(format!("malformed policy {}: {e}", args.policy.display())))?;
    let summary = evaluate(&policy, args.env, args.episodes, args.seed)?;
    let csv = output::eval_csv(&summary);
    print!("{csv}");
    output::write_file(&args.out.join("eval.csv"), &csv)?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let run = &args.run;
    let mut configs = Vec::new();
    for &delta in &args.deltas {
        for seed in run.seeds() {
            configs.push(run.config(Some(delta), seed));
        }
    }
    validated(&configs)?;
    fs::create_dir_all(&run.out)?;
    let sweep_path = run.out.join("sweep.csv");
    RunManifest::new("sweep", configs.clone(), vec![sweep_path.clone()]).write(&run.out)?;

    let rows: Vec<String> = configs
        .into_par_iter()
        .map(|c| {
            let (delta, seed) = (c.delta, c.seed);
            let outcome = train(c)?;
            Ok::<_, CliError>(format!(
                "{delta},{seed},{}",
                last_fraction_mean(&outcome.records, TAIL)
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut csv = String::from(output::SWEEP_HEADER);
    csv.push('\n');
    for row in rows {
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    output::write_file(&sweep_path, &csv)?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    if args.instances == 0 {
        println!("no instances to verify");
        return Ok(());
    }
    let report = verify(&VerifyConfig {
        instances: args.instances,
        seed: args.seed,
        grid_points: args.grid as usize,
        inject_bug: args.inject_bug,
    });
    println!("instances: {}", report.instances);
    println!("max kl duality gap: {:e}", report.max_kl_gap);
    println!("max wass duality gap: {:e}", report.max_wass_gap);
    println!(
        "max constraint violation: {:e}",
        report.max_constraint_violation
    );
    println!(
        "max dual excess over oracle: {:e}",
        report.max_oracle_excess
    );
    println!(
        "local multiplier rule checks: {} ({} failed)",
        report.local_beta_checks,
        report
            .failures
            .iter()
            .filter(|f| f.reason.starts_with("local rule"))
            .count()
    );
    println!(
        "wasserstein boundary ties (gap check skipped): {}",
        report.boundary_ties
    );
    println!("elapsed: {:.2} s", report.elapsed.as_secs_f64());
    if report.passed() {
        println!("PASS");
        return Ok(());
    }
    println!("FAIL: {} check(s) breached", report.failures.len());
    for f in report.failures.iter().take(10) {
        println!("instance {} [{}]: {}", f.index, f.method, f.reason);
        println!("{}", f.instance.to_json());
    }
    Err(CliError::Verification)
}
