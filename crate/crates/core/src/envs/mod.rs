//! Tabular benchmark environments and episode sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OdrpoError, Result};
use crate::policy::TabularPolicy;

pub mod cliff_walking;
pub mod nchain;
pub mod taxi;

pub use cliff_walking::CliffWalking;
pub use nchain::NChain;
pub use taxi::Taxi;

/// Sizes of a finite MDP plus its episode limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MdpSpec {
    pub name: &'static str,
    pub n_states: usize,
    pub n_actions: usize,
    pub max_episode_steps: usize,
}

/// One outcome of taking an action: `P(next_state, reward | state, action) = prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Stateless description of an environment's start distribution, transition
/// kernel and rewards.
///
/// `transitions` enumerates the analytic table; `sample_transition` draws from
/// it. The two are written separately and cross-checked by the test suite.
pub trait Dynamics: Send + Sync {
    fn spec(&self) -> &MdpSpec;
    fn start_distribution(&self) -> Vec<(usize, f64)>;
    fn sample_start(&self, rng: &mut dyn RngCore) -> usize;
    fn transitions(&self, state: usize, action: usize) -> Vec<Transition>;
    fn sample_transition(&self, state: usize, action: usize, rng: &mut dyn RngCore) -> Transition;
}

/// Environment selector by string ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Taxi,
    NChain,
    CliffWalking,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Taxi, EnvId::NChain, EnvId::CliffWalking];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Taxi => "taxi",
            EnvId::NChain => "nchain",
            EnvId::CliffWalking => "cliffwalking",
        }
    }

    pub fn dynamics(self) -> Box<dyn Dynamics> {
        match self {
            EnvId::Taxi => Box::new(Taxi::default()),
            EnvId::NChain => Box::new(NChain::default()),
            EnvId::CliffWalking => Box::new(CliffWalking::default()),
        }
    }

    pub fn spec(self) -> MdpSpec {
        *self.dynamics().spec()
    }

    /// Every `(state, action)` outcome as CSV, one row per transition in
    /// state-major order. Floats use the shortest representation that
    /// round-trips, so the table is exact.
    pub fn transition_table_csv(self) -> String {
        use std::fmt::Write;
        let dynamics = self.dynamics();
        let spec = dynamics.spec();
        let mut out = String::from("state,action,prob,next_state,reward,terminal\n");
        for s in 0..spec.n_states {
            for a in 0..spec.n_actions {
                for t in dynamics.transitions(s, a) {
                    let _ = writeln!(
                        out,
                        "{s},{a},{},{},{},{}",
                        t.prob, t.next_state, t.reward, t.terminal as u8
                    );
                }
            }
        }
        out
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = OdrpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "taxi" => Ok(EnvId::Taxi),
            "nchain" => Ok(EnvId::NChain),
            "cliffwalking" => Ok(EnvId::CliffWalking),
            _ => Err(OdrpoError::UnknownEnv(s.to_string())),
        }
    }
}

/// Result of a single `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    /// True when the episode is over, by a terminal state or the step limit.
    pub done: bool,
    /// True only when a terminal state was reached.
    pub terminated: bool,
}

/// A running environment instance: dynamics plus the episode cursor.
pub struct Env {
    dynamics: Box<dyn Dynamics>,
    state: usize,
    steps: usize,
    done: bool,
}

impl Env {
    pub fn new(id: EnvId) -> Self {
        Self::from_dynamics(id.dynamics())
    }

    pub fn from_dynamics(dynamics: Box<dyn Dynamics>) -> Self {
        Self {
            dynamics,
            state: 0,
            steps: 0,
            // Stepping is only legal after a reset.
            done: true,
        }
    }

    pub fn spec(&self) -> &MdpSpec {
        self.dynamics.spec()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn reset(&mut self, rng: &mut dyn RngCore) -> usize {
        self.state = self.dynamics.sample_start(rng);
        self.steps = 0;
        self.done = false;
        self.state
    }

    pub fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepOutcome> {
        if self.done {
            return Err(OdrpoError::EpisodeFinished);
        }
        let n_actions = self.spec().n_actions;
        if action >= n_actions {
            return Err(OdrpoError::InvalidAction { action, n_actions });
        }
        let t = self.dynamics.sample_transition(self.state, action, rng);
        self.state = t.next_state;
        self.steps += 1;
        self.done = t.terminal || self.steps >= self.spec().max_episode_steps;
        Ok(StepOutcome {
            next_state: t.next_state,
            reward: t.reward,
            done: self.done,
            terminated: t.terminal,
        })
    }
}

/// One `(s_t, a_t, r_t)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// A complete episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// True if the episode reached a terminal state before the step limit.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }
}

fn check_dims(spec: &MdpSpec, policy: &TabularPolicy) -> Result<()> {
    if policy.n_states() != spec.n_states || policy.n_actions() != spec.n_actions {
        return Err(OdrpoError::DimensionMismatch(format!(
            "policy is {}x{}, environment `{}` is {}x{}",
            policy.n_states(),
            policy.n_actions(),
            spec.name,
            spec.n_states,
            spec.n_actions
        )));
    }
    Ok(())
}

/// Runs one episode of `policy` from a fresh reset.
pub fn run_episode(
    env: &mut Env,
    policy: &TabularPolicy,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    check_dims(env.spec(), policy)?;
    let mut state = env.reset(rng);
    let mut steps = Vec::new();
    loop {
        let action = policy.sample_action(state, rng);
        let out = env.step(action, rng)?;
        steps.push(Step {
            state,
            action,
            reward: out.reward,
        });
        if out.done {
            return Ok(Trajectory {
                steps,
                terminated: out.terminated,
            });
        }
        state = out.next_state;
    }
}

/// Samples `count` episodes of `policy`.
///
/// One sub-seed per episode is drawn from `rng` up front, so the result does
/// not depend on how the episodes are scheduled across threads.
pub fn sample_trajectories<R: Rng + ?Sized>(
    id: EnvId,
    policy: &TabularPolicy,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    check_dims(&id.spec(), policy)?;
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    seeds
        .into_par_iter()
        .map(|seed| {
            let mut episode_rng = ChaCha8Rng::seed_from_u64(seed);
            let mut env = Env::new(id);
            run_episode(&mut env, policy, &mut episode_rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_satisfy_invariants() {
        for id in EnvId::ALL {
            let spec = id.spec();
            assert!(spec.n_states >= 1);
            assert!(spec.n_actions >= 2);
            assert!(spec.max_episode_steps >= 1);
            assert_eq!(spec.name, id.as_str());
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
        }
        assert!("frozenlake".parse::<EnvId>().is_err());
    }

    #[test]
    fn fixed_start_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(Env::new(EnvId::CliffWalking).reset(&mut rng), 36);
        assert_eq!(Env::new(EnvId::NChain).reset(&mut rng), 0);
    }

    #[test]
    fn stepping_a_finished_episode_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = Env::new(EnvId::CliffWalking);
        assert_eq!(env.step(0, &mut rng), Err(OdrpoError::EpisodeFinished));
        env.reset(&mut rng);
        // Up, then right eleven times, then down reaches the goal.
        env.step(cliff_walking::UP, &mut rng).unwrap();
        for _ in 0..11 {
            env.step(cliff_walking::RIGHT, &mut rng).unwrap();
        }
        let out = env.step(cliff_walking::DOWN, &mut rng).unwrap();
        assert!(out.done && out.terminated);
        assert_eq!(env.step(0, &mut rng), Err(OdrpoError::EpisodeFinished));
    }

    #[test]
    fn invalid_action_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = Env::new(EnvId::NChain);
        env.reset(&mut rng);
        assert!(matches!(
            env.step(2, &mut rng),
            Err(OdrpoError::InvalidAction { action: 2, .. })
        ));
    }

    #[test]
    fn zero_count_gives_no_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TabularPolicy::uniform(5, 2);
        assert!(sample_trajectories(EnvId::NChain, &p, 0, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = TabularPolicy::uniform(5, 2);
        assert!(matches!(
            sample_trajectories(EnvId::Taxi, &p, 1, &mut rng),
            Err(OdrpoError::DimensionMismatch(_))
        ));
    }
}
