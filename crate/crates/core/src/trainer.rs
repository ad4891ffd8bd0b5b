//! The actor-critic training loop: sample, fit values, estimate advantages
//! and visitation, solve the trust-region dual, update the policy.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dro::{
    kl, primal_gain, wass, DualResult, GroundDistance, KlProblem, KlSolverConfig, WassProblem,
};
use crate::envs::{sample_trajectories, EnvId, Trajectory};
use crate::error::{OdrpoError, Result};
use crate::estimation::{
    compute_returns, estimate_advantages, estimate_visitation, AdvantageEstimate, ValueEstimator,
    ValueKind, VisitationWeights,
};
use crate::policy::TabularPolicy;

/// Trust-region metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kl,
    Wass,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kl => "kl",
            Method::Wass => "wass",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = OdrpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Method::Kl),
            "wass" => Ok(Method::Wass),
            _ => Err(OdrpoError::InvalidConfig(format!(
                "unknown method `{s}` (expected kl or wass)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvId,
    pub method: Method,
    pub gamma: f64,
    /// Trust-region radius under normalized visitation weights.
    pub delta: f64,
    pub iterations: usize,
    /// Episodes collected per iteration.
    pub batch: usize,
    pub value_lr: f64,
    pub value_kind: ValueKind,
    pub seed: u64,
    /// Reuse the multiplier from earlier iterations instead of solving.
    pub beta_warm_start: bool,
    pub warm_start_after: usize,
    pub eval_episodes: usize,
}

impl TrainConfig {
    /// Per-environment defaults.
    pub fn new(env: EnvId, method: Method) -> Self {
        let (batch, iterations) = match env {
            EnvId::Taxi => (60, 2000),
            EnvId::NChain => (1, 500),
            EnvId::CliffWalking => (3, 1000),
        };
        Self {
            env,
            method,
            gamma: 0.9,
            delta: default_delta(env, method),
            iterations,
            batch,
            value_lr: 1e-2,
            value_kind: ValueKind::Tabular,
            seed: 0,
            beta_warm_start: false,
            warm_start_after: 5,
            eval_episodes: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(OdrpoError::InvalidConfig(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return fail(format!("delta must be positive, got {}", self.delta));
        }
        if self.iterations == 0 || self.batch == 0 || self.eval_episodes == 0 {
            return fail("iterations, batch and eval_episodes must be positive".into());
        }
        if !(self.value_lr > 0.0 && self.value_lr.is_finite()) {
            return fail(format!(
                "value learning rate must be positive, got {}",
                self.value_lr
            ));
        }
        if self.beta_warm_start && self.warm_start_after == 0 {
            return fail("warm_start_after must be positive".into());
        }
        Ok(())
    }
}

/// Trust-region radius used when none is given.
///
/// KL budgets are in nats and stay small so the policy keeps exploring.
/// Wasserstein budgets are moved probability mass; vertex transport plans
/// move whole actions at once, so the budget has to cover the mass of a
/// typical state-action pair where visitation concentrates.
pub fn default_delta(env: EnvId, method: Method) -> f64 {
    match (method, env) {
        (Method::Kl, _) => 0.003,
        (Method::Wass, EnvId::Taxi) => 0.01,
        (Method::Wass, EnvId::CliffWalking) => 0.06,
        (Method::Wass, EnvId::NChain) => 0.1,
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub episode_reward_mean: f64,
    pub episode_reward_std: f64,
    pub beta_star: f64,
    pub dual_value: f64,
    /// Measured `E_ρ[d(π_{k+1}(·|s), π_k(·|s))]`.
    pub constraint_value: f64,
    pub primal_gain: f64,
    pub wall_ms: u64,
}

impl IterationRecord {
    /// Equality on every field except the wall-clock time.
    pub fn same_run(&self, other: &Self) -> bool {
        Self {
            wall_ms: 0,
            ..self.clone()
        } == Self {
            wall_ms: 0,
            ..other.clone()
        }
    }
}

/// Everything computed during one iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub record: IterationRecord,
    pub episode_rewards: Vec<f64>,
    pub advantages: AdvantageEstimate,
    pub visitation: VisitationWeights,
    pub dual: DualResult,
    /// Whether the multiplier came from the warm-start cache.
    pub warm_started: bool,
}

pub struct TrainOutcome {
    pub policy: TabularPolicy,
    pub value: ValueEstimator,
    pub records: Vec<IterationRecord>,
}

/// Stateful driver; `train` is `Trainer::new` followed by `iterations` steps.
pub struct Trainer {
    config: TrainConfig,
    policy: TabularPolicy,
    value: ValueEstimator,
    rng: ChaCha8Rng,
    records: Vec<IterationRecord>,
    cached_beta: Option<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.env.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let value = match config.value_kind {
            ValueKind::Tabular => ValueEstimator::tabular(spec.n_states, config.value_lr),
            ValueKind::Mlp => ValueEstimator::mlp(spec.n_states, config.value_lr, &mut rng),
        };
        Ok(Self {
            policy: TabularPolicy::uniform(spec.n_states, spec.n_actions),
            value,
            rng,
            records: Vec::with_capacity(config.iterations),
            cached_beta: None,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }

    pub fn value(&self) -> &ValueEstimator {
        &self.value
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn step(&mut self) -> Result<IterationReport> {
        let started = Instant::now();
        let cfg = &self.config;
        let spec = cfg.env.spec();

        let trajs = sample_trajectories(cfg.env, &self.policy, cfg.batch, &mut self.rng)?;
        let returns = trajs
            .iter()
            .map(|t| compute_returns(t, cfg.gamma))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(usize, f64)> = trajs
            .iter()
            .zip(&returns)
            .flat_map(|(t, gs)| t.steps.iter().map(|s| s.state).zip(gs.iter().copied()))
            .collect();
        self.value.update(&pairs)?;
        let advantages = estimate_advantages(&trajs, &returns, &self.value, spec.n_actions)?;
        let visitation = estimate_visitation(&trajs, cfg.gamma, spec.n_states)?;

        let iteration = self.records.len();
        let warm = cfg.beta_warm_start && iteration >= cfg.warm_start_after;
        let warm_beta = match (warm, self.cached_beta) {
            (true, Some(beta)) => Some(beta * self.rng.random_range(0.9..=1.1)),
            _ => None,
        };
        let hop_seed = self.rng.next_u64();

        let (dual, updated, constraint, gain) = match cfg.method {
            Method::Kl => {
                let problem = KlProblem::new(&visitation, &self.policy, &advantages, cfg.delta)?;
                let dual = match warm_beta {
                    Some(beta) => fixed_beta(beta, kl::kl_dual_objective(&problem, beta)),
                    None => kl::kl_solve_beta(
                        &problem,
                        &KlSolverConfig {
                            seed: hop_seed,
                            ..KlSolverConfig::default()
                        },
                    ),
                };
                let updated = kl::kl_policy_update(&problem, dual.beta_star);
                let constraint = kl::kl_constraint(&problem, &updated);
                let gain = primal_gain(problem.region(), &updated);
                (dual, updated, constraint, gain)
            }
            Method::Wass => {
                let problem = WassProblem::new(
                    &visitation,
                    &self.policy,
                    &advantages,
                    cfg.delta,
                    GroundDistance::ZeroOne,
                )?;
                let dual = match warm_beta {
                    Some(beta) => fixed_beta(beta, wass::wass_dual_objective(&problem, beta)),
                    None => wass::wass_solve_beta(&problem),
                };
                let assignment = wass::wass_assignment(&problem, dual.beta_star);
                let constraint = wass::transport_cost(&problem, &assignment);
                let updated = wass::wass_policy_update(&problem, dual.beta_star);
                let gain = primal_gain(problem.region(), &updated);
                (dual, updated, constraint, gain)
            }
        };
        if warm_beta.is_none() {
            self.cached_beta = Some(dual.beta_star);
        }
        self.policy = updated;

        let episode_rewards: Vec<f64> = trajs.iter().map(Trajectory::total_reward).collect();
        let (mean, std) = mean_std(&episode_rewards);
        let record = IterationRecord {
            iteration,
            episode_reward_mean: mean,
            episode_reward_std: std,
            beta_star: dual.beta_star,
            dual_value: dual.dual_value,
            constraint_value: constraint,
            primal_gain: gain,
            wall_ms: started.elapsed().as_millis() as u64,
        };
        self.records.push(record.clone());
        Ok(IterationReport {
            record,
            episode_rewards,
            advantages,
            visitation,
            dual,
            warm_started: warm_beta.is_some(),
        })
    }

    pub fn run(mut self) -> Result<TrainOutcome> {
        while self.records.len() < self.config.iterations {
            self.step()?;
        }
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            policy: self.policy,
            value: self.value,
            records: self.records,
        }
    }
}

fn fixed_beta(beta: f64, dual_value: f64) -> DualResult {
    DualResult {
        beta_star: beta,
        dual_value,
        evaluations: 1,
        hops: 0,
        candidates: 0,
        vertex_constraint: None,
        boundary_tie: false,
    }
}

/// Runs the full loop for `config.iterations` iterations.
pub fn train(config: TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(config)?.run()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean episode reward over the last `fraction` of iterations (at least one).
///
/// Every iteration collects the same number of episodes, so this is also the
/// mean over the last `fraction` of episodes.
pub fn last_fraction_mean(records: &[IterationRecord], fraction: f64) -> f64 {
    let n = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len().max(1));
    let tail = &records[records.len().saturating_sub(n)..];
    tail.iter().map(|r| r.episode_reward_mean).sum::<f64>() / tail.len() as f64
}

/// Aggregate statistics of a policy rolled out with sampled actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: EnvId,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_timesteps: f64,
    /// Taxi only: mean number of successful drop-offs per episode.
    pub dropoff_rate: Option<f64>,
    /// Taxi only: mean number of illegal pickups/drop-offs per episode.
    pub illegal_rate: Option<f64>,
}

pub fn evaluate(
    policy: &TabularPolicy,
    env: EnvId,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(OdrpoError::Empty("evaluation episodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs = sample_trajectories(env, policy, episodes, &mut rng)?;
    let returns: Vec<f64> = trajs.iter().map(Trajectory::total_reward).collect();
    let (mean_return, std_return) = mean_std(&returns);
    let n = episodes as f64;
    let mean_timesteps = trajs.iter().map(|t| t.len() as f64).sum::<f64>() / n;
    let count = |reward: f64| {
        trajs
            .iter()
            .map(|t| t.rewards().filter(|&r| r == reward).count() as f64)
            .sum::<f64>()
            / n
    };
    let (dropoff_rate, illegal_rate) = if env == EnvId::Taxi {
        (
            Some(count(crate::envs::taxi::REWARD_DROPOFF)),
            Some(count(crate::envs::taxi::REWARD_ILLEGAL)),
        )
    } else {
        (None, None)
    };
    Ok(EvalSummary {
        env,
        episodes,
        mean_return,
        std_return,
        mean_timesteps,
        dropoff_rate,
        illegal_rate,
    })
}
