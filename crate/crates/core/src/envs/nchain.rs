//! NChain (NChain-v0 semantics): five states in a row.
//!
//! Action 0 moves forward (reward 0, or 10 while staying at the last state);
//! action 1 returns to state 0 with reward 2. With probability 0.2 the agent
//! slips and the opposite action is executed. There is no terminal state;
//! episodes are truncated after 1000 steps.

use rand::Rng;

use super::{Dynamics, MdpSpec, Transition};

pub const N_STATES: usize = 5;
pub const N_ACTIONS: usize = 2;
pub const MAX_STEPS: usize = 1000;
pub const SLIP: f64 = 0.2;
pub const SMALL: f64 = 2.0;
pub const LARGE: f64 = 10.0;

pub const FORWARD: usize = 0;
pub const BACK: usize = 1;

#[derive(Debug, Clone)]
pub struct NChain {
    spec: MdpSpec,
}

impl Default for NChain {
    fn default() -> Self {
        Self {
            spec: MdpSpec {
                name: "nchain",
                n_states: N_STATES,
                n_actions: N_ACTIONS,
                max_episode_steps: MAX_STEPS,
            },
        }
    }
}

fn executed(state: usize, executed_action: usize, prob: f64) -> Transition {
    let (next_state, reward) = if executed_action == BACK {
        (0, SMALL)
    } else if state < N_STATES - 1 {
        (state + 1, 0.0)
    } else {
        (state, LARGE)
    };
    Transition {
        prob,
        next_state,
        reward,
        terminal: false,
    }
}

impl Dynamics for NChain {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn start_distribution(&self) -> Vec<(usize, f64)> {
        vec![(0, 1.0)]
    }

    fn sample_start(&self, _rng: &mut dyn rand::RngCore) -> usize {
        0
    }

    fn transitions(&self, state: usize, action: usize) -> Vec<Transition> {
        vec![
            executed(state, action, 1.0 - SLIP),
            executed(state, 1 - action, SLIP),
        ]
    }

    fn sample_transition(
        &self,
        state: usize,
        action: usize,
        rng: &mut dyn rand::RngCore,
    ) -> Transition {
        let slipped = rng.random::<f64>() < SLIP;
        let action = if slipped { 1 - action } else { action };
        executed(state, action, 1.0)
    }
}
