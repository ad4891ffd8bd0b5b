//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! Runs are sequential so the per-run time limits measure a single run.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use odrpo::oracle::{kl_gradient_check, verify, VerifyConfig};
use odrpo::trainer::last_fraction_mean;
use odrpo::{
    evaluate, train, EnvId, EvalSummary, IterationRecord, Method, TabularPolicy, TrainConfig,
    Trainer,
};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const EVAL_EPISODES: usize = 1000;

const VERIFY_LIMIT: Duration = Duration::from_secs(60);
const GRADIENT_LIMIT: Duration = Duration::from_secs(10);
const SHORT_RUN_LIMIT: Duration = Duration::from_secs(180);
const TAXI_RUN_LIMIT: Duration = Duration::from_secs(900);

const CLIFF_FLOOR: f64 = -90.0;
const NCHAIN_FLOOR: f64 = 3000.0;
const TAXI_FLOOR: f64 = -80.0;
const TAXI_DROPOFF_FLOOR: f64 = 0.90;
const TAXI_TIMESTEPS_CEILING: f64 = 40.0;
const WASS_DROPOFF_FLOOR: f64 = 0.5;
const CLIFF_THRESHOLD: f64 = -60.0;
/// Window of the trailing mean used to decide when a run reaches a threshold.
const THRESHOLD_WINDOW: usize = 10;

const TINY_DELTA: f64 = 1e-9;
const TINY_DELTA_ITERATIONS: usize = 50;
const TINY_DELTA_DRIFT: f64 = 1e-3;
const HUGE_DELTA: f64 = 1e3;
const ARGMAX_TV: f64 = 1e-6;

struct Run {
    seed: u64,
    records: Vec<IterationRecord>,
    policy: TabularPolicy,
    elapsed: Duration,
}

impl Run {
    fn last10(&self) -> f64 {
        last_fraction_mean(&self.records, 0.1)
    }

    /// First iteration whose trailing mean reaches `threshold`.
    fn reaches(&self, threshold: f64) -> Option<usize> {
        let means: Vec<f64> = self.records.iter().map(|r| r.episode_reward_mean).collect();
        means
            .windows(THRESHOLD_WINDOW)
            .position(|w| w.iter().sum::<f64>() / w.len() as f64 >= threshold)
            .map(|i| i + THRESHOLD_WINDOW - 1)
    }
}

fn runs(env: EnvId, method: Method) -> Vec<Run> {
    SEEDS
        .iter()
        .map(|&seed| {
            let started = Instant::now();
            let outcome = train(TrainConfig {
                seed,
                ..TrainConfig::new(env, method)
            })
            .expect("training failed");
            let run = Run {
                seed,
                records: outcome.records,
                policy: outcome.policy,
                elapsed: started.elapsed(),
            };
            println!(
                "  {env} {}: seed {seed} last-10% {:.2} ({:.1} s)",
                method.as_str(),
                run.last10(),
                run.elapsed.as_secs_f64()
            );
            run
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn slowest(runs: &[Run]) -> Duration {
    runs.iter().map(|r| r.elapsed).max().unwrap_or_default()
}

fn taxi_eval(runs: &[Run]) -> Vec<EvalSummary> {
    runs.iter()
        .map(|r| evaluate(&r.policy, EnvId::Taxi, EVAL_EPISODES, 1000 + r.seed).unwrap())
        .collect()
}

struct Outcome {
    results: Vec<(u8, bool)>,
}

impl Outcome {
    fn report(&mut self, criterion: u8, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {criterion}: {tag}  {detail}");
        self.results.push((criterion, pass));
    }
}

fn criterion_1(out: &mut Outcome) {
    let report = verify(&VerifyConfig::default());
    let pass = report.passed() && report.elapsed <= VERIFY_LIMIT;
    out.report(
        1,
        pass,
        format!(
            "verify {} instances: max gap kl {:.1e} wass {:.1e}, max constraint excess {:.1e}, \
             max oracle excess {:.1e}, {} local-β checks, {} boundary ties, {} failures ({:.1} s)",
            report.instances,
            report.max_kl_gap,
            report.max_wass_gap,
            report.max_constraint_violation,
            report.max_oracle_excess,
            report.local_beta_checks,
            report.boundary_ties,
            report.failures.len(),
            report.elapsed.as_secs_f64()
        ),
    );
}

fn criterion_2(out: &mut Outcome) {
    let started = Instant::now();
    let check = kl_gradient_check(1000, 0);
    let elapsed = started.elapsed();
    out.report(
        2,
        check.max_rel_error <= 1e-5 && elapsed <= GRADIENT_LIMIT,
        format!(
            "gradient check over {} pairs: max relative error {:.2e} ({:.2} s)",
            check.pairs,
            check.max_rel_error,
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_3(out: &mut Outcome, kl: &[Run], wass: &[Run]) {
    let (m_kl, m_wass) = (
        mean(kl.iter().map(Run::last10)),
        mean(wass.iter().map(Run::last10)),
    );
    let slow = slowest(kl).max(slowest(wass));
    out.report(
        3,
        m_kl >= CLIFF_FLOOR && m_wass >= CLIFF_FLOOR && slow <= SHORT_RUN_LIMIT,
        format!(
            "cliffwalking last-10% mean: kl {m_kl:.2}, wass {m_wass:.2} (floor {CLIFF_FLOOR}; slowest run {:.1} s)",
            slow.as_secs_f64()
        ),
    );
}

fn criterion_4(out: &mut Outcome, kl: &[Run]) {
    let m = mean(kl.iter().map(Run::last10));
    out.report(
        4,
        m >= NCHAIN_FLOOR && slowest(kl) <= SHORT_RUN_LIMIT,
        format!(
            "nchain kl last-10% mean {m:.1} (floor {NCHAIN_FLOOR}; slowest run {:.1} s)",
            slowest(kl).as_secs_f64()
        ),
    );
}

fn criterion_5(out: &mut Outcome, kl: &[Run], evals: &[EvalSummary]) {
    let m = mean(kl.iter().map(Run::last10));
    let dropoff = mean(evals.iter().map(|e| e.dropoff_rate.unwrap()));
    let steps = mean(evals.iter().map(|e| e.mean_timesteps));
    out.report(
        5,
        m >= TAXI_FLOOR
            && dropoff >= TAXI_DROPOFF_FLOOR
            && steps <= TAXI_TIMESTEPS_CEILING
            && slowest(kl) <= TAXI_RUN_LIMIT,
        format!(
            "taxi kl last-10% mean {m:.2} (floor {TAXI_FLOOR}); eval dropoff {dropoff:.3}, \
             timesteps {steps:.2}; slowest run {:.1} s",
            slowest(kl).as_secs_f64()
        ),
    );
}

fn criterion_6(
    out: &mut Outcome,
    kl_evals: &[EvalSummary],
    wass_evals: &[EvalSummary],
    cliff_kl: &[Run],
    cliff_wass: &[Run],
) {
    let wass_dropoff = mean(wass_evals.iter().map(|e| e.dropoff_rate.unwrap()));
    let wass_steps = mean(wass_evals.iter().map(|e| e.mean_timesteps));
    let kl_steps = mean(kl_evals.iter().map(|e| e.mean_timesteps));
    let reach: Vec<(Option<usize>, Option<usize>)> = cliff_kl
        .iter()
        .zip(cliff_wass)
        .map(|(k, w)| (k.reaches(CLIFF_THRESHOLD), w.reaches(CLIFF_THRESHOLD)))
        .collect();
    let kl_first = reach
        .iter()
        .filter(|(k, w)| match (k, w) {
            (Some(k), Some(w)) => k <= w,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    let fmt = |x: &Option<usize>| x.map_or("never".to_string(), |i| i.to_string());
    let detail: Vec<String> = reach
        .iter()
        .map(|(k, w)| format!("{}/{}", fmt(k), fmt(w)))
        .collect();
    out.report(
        6,
        wass_dropoff >= WASS_DROPOFF_FLOOR && wass_steps >= kl_steps && kl_first >= 3,
        format!(
            "taxi wass dropoff {wass_dropoff:.3} (floor {WASS_DROPOFF_FLOOR}), timesteps wass \
             {wass_steps:.2} vs kl {kl_steps:.2}; cliffwalking iterations to {CLIFF_THRESHOLD} \
             kl/wass [{}], kl no later on {kl_first}/5",
            detail.join(", ")
        ),
    );
}

fn criterion_7(out: &mut Outcome) {
    let mut drift: f64 = 0.0;
    let mut wass_drift: f64 = 0.0;
    for env in EnvId::ALL {
        let spec = env.spec();
        let start = TabularPolicy::uniform(spec.n_states, spec.n_actions);
        for &seed in &SEEDS {
            for method in [Method::Kl, Method::Wass] {
                let outcome = train(TrainConfig {
                    delta: TINY_DELTA,
                    iterations: TINY_DELTA_ITERATIONS,
                    seed,
                    ..TrainConfig::new(env, method)
                })
                .unwrap();
                let d = outcome.policy.max_abs_diff(&start);
                match method {
                    Method::Kl => drift = drift.max(d),
                    Method::Wass => wass_drift = wass_drift.max(d),
                }
            }
        }
    }

    let mut worst_tv: f64 = 0.0;
    let mut checked = 0;
    for env in EnvId::ALL {
        for &seed in &SEEDS {
            let mut trainer = Trainer::new(TrainConfig {
                delta: HUGE_DELTA,
                iterations: 1,
                seed,
                ..TrainConfig::new(env, Method::Kl)
            })
            .unwrap();
            let report = trainer.step().unwrap();
            for s in 0..env.spec().n_states {
                if report.visitation.get(s) == 0.0 {
                    continue;
                }
                let row = report.advantages.row(s);
                let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if row.iter().filter(|&&a| a == top).count() != 1 {
                    continue;
                }
                let best = row.iter().position(|&a| a == top).unwrap();
                let tv = 0.5
                    * (0..row.len())
                        .map(|a| {
                            (trainer.policy().prob(s, a) - f64::from(u8::from(a == best))).abs()
                        })
                        .sum::<f64>();
                worst_tv = worst_tv.max(tv);
                checked += 1;
            }
        }
    }
    out.report(
        7,
        drift <= TINY_DELTA_DRIFT && worst_tv <= ARGMAX_TV,
        format!(
            "δ = {TINY_DELTA:e}: max drift after {TINY_DELTA_ITERATIONS} kl iterations {drift:.2e} \
             (bound {TINY_DELTA_DRIFT:e}; wass {wass_drift:.2e}); δ = {HUGE_DELTA:e}: max TV to \
             argmax {worst_tv:.1e} over {checked} visited states"
        ),
    );
}

fn main() -> ExitCode {
    let mut out = Outcome {
        results: Vec::new(),
    };
    criterion_1(&mut out);
    criterion_2(&mut out);

    let cliff_kl = runs(EnvId::CliffWalking, Method::Kl);
    let cliff_wass = runs(EnvId::CliffWalking, Method::Wass);
    criterion_3(&mut out, &cliff_kl, &cliff_wass);

    let nchain_kl = runs(EnvId::NChain, Method::Kl);
    criterion_4(&mut out, &nchain_kl);

    let taxi_kl = runs(EnvId::Taxi, Method::Kl);
    let taxi_kl_evals = taxi_eval(&taxi_kl);
    criterion_5(&mut out, &taxi_kl, &taxi_kl_evals);

    let taxi_wass = runs(EnvId::Taxi, Method::Wass);
    let taxi_wass_evals = taxi_eval(&taxi_wass);
    criterion_6(
        &mut out,
        &taxi_kl_evals,
        &taxi_wass_evals,
        &cliff_kl,
        &cliff_wass,
    );

    criterion_7(&mut out);

    let failed: Vec<String> = out
        .results
        .iter()
        .filter(|(_, pass)| !pass)
        .map(|(c, _)| c.to_string())
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", out.results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
