//! CliffWalking (CliffWalking-v0 semantics): a 4×12 grid.
//!
//! State index is `row * 12 + col`. The agent starts at 36 (bottom-left) and
//! the goal is 47 (bottom-right); cells 37..=46 are the cliff. Actions: 0 up,
//! 1 right, 2 down, 3 left; moves off the grid leave the agent in place.
//! Every step costs −1; entering the cliff costs −100 and teleports the agent
//! back to the start without ending the episode. Reaching the goal terminates.
//! The versioned environment has no step limit; a 10 000 step cap stops
//! policies that never reach the goal.

use super::{Dynamics, MdpSpec, Transition};

pub const ROWS: usize = 4;
pub const COLS: usize = 12;
pub const N_STATES: usize = ROWS * COLS;
pub const N_ACTIONS: usize = 4;
pub const MAX_STEPS: usize = 10_000;
pub const START: usize = 36;
pub const GOAL: usize = 47;

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

pub const REWARD_STEP: f64 = -1.0;
pub const REWARD_CLIFF: f64 = -100.0;

pub fn is_cliff(state: usize) -> bool {
    (37..=46).contains(&state)
}

#[derive(Debug, Clone)]
pub struct CliffWalking {
    spec: MdpSpec,
}

impl Default for CliffWalking {
    fn default() -> Self {
        Self {
            spec: MdpSpec {
                name: "cliffwalking",
                n_states: N_STATES,
                n_actions: N_ACTIONS,
                max_episode_steps: MAX_STEPS,
            },
        }
    }
}

fn apply(state: usize, action: usize) -> Transition {
    let (row, col) = (state / COLS, state % COLS);
    let (row, col) = match action {
        UP => (row.saturating_sub(1), col),
        RIGHT => (row, (col + 1).min(COLS - 1)),
        DOWN => ((row + 1).min(ROWS - 1), col),
        LEFT => (row, col.saturating_sub(1)),
        _ => unreachable!("action validated by caller"),
    };
    let next = row * COLS + col;
    if is_cliff(next) {
        Transition {
            prob: 1.0,
            next_state: START,
            reward: REWARD_CLIFF,
            terminal: false,
        }
    } else {
        Transition {
            prob: 1.0,
            next_state: next,
            reward: REWARD_STEP,
            terminal: next == GOAL,
        }
    }
}

impl Dynamics for CliffWalking {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn start_distribution(&self) -> Vec<(usize, f64)> {
        vec![(START, 1.0)]
    }

    fn sample_start(&self, _rng: &mut dyn rand::RngCore) -> usize {
        START
    }

    fn transitions(&self, state: usize, action: usize) -> Vec<Transition> {
        vec![apply(state, action)]
    }

    fn sample_transition(
        &self,
        state: usize,
        action: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Transition {
        apply(state, action)
    }
}
