//! Taxi (Taxi-v3 semantics): a 5×5 grid with four landmarks.
//!
//! ```text
//! +---------+
//! |R: | : :G|
//! | : | : : |
//! | : : : : |
//! | | : | : |
//! |Y| : |B: |
//! +---------+
//! ```
//!
//! State index: `((row * 5 + col) * 5 + passenger) * 4 + destination`, where
//! `passenger ∈ 0..4` names a landmark (R, G, Y, B) and `passenger = 4` means
//! the passenger is in the taxi. Actions: 0 south, 1 north, 2 east, 3 west,
//! 4 pickup, 5 drop-off.
//!
//! Rewards: −1 per step, +20 for a drop-off at the destination with the
//! passenger aboard (terminal), −10 for an illegal pickup or drop-off. A
//! drop-off at a non-destination landmark with the passenger aboard leaves
//! the passenger there (reward −1). Episodes start uniformly over the 300
//! states with the taxi anywhere, the passenger at a landmark and the
//! destination at a different landmark. Episodes are truncated after 200 steps.

use rand::Rng;

use super::{Dynamics, MdpSpec, Transition};

pub const N_STATES: usize = 500;
pub const N_ACTIONS: usize = 6;
pub const MAX_STEPS: usize = 200;

pub const REWARD_STEP: f64 = -1.0;
pub const REWARD_DROPOFF: f64 = 20.0;
pub const REWARD_ILLEGAL: f64 = -10.0;

pub const SOUTH: usize = 0;
pub const NORTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const PICKUP: usize = 4;
pub const DROPOFF: usize = 5;

/// Landmark cells R, G, Y, B as (row, col).
pub const LANDMARKS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

const MAP: [&[u8; 11]; 5] = [
    b"|R: | : :G|",
    b"| : | : : |",
    b"| : : : : |",
    b"| | : | : |",
    b"|Y| : |B: |",
];

/// Decoded Taxi state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiState {
    pub row: usize,
    pub col: usize,
    /// Landmark index, or 4 when riding in the taxi.
    pub passenger: usize,
    pub destination: usize,
}

impl TaxiState {
    pub fn encode(self) -> usize {
        ((self.row * 5 + self.col) * 5 + self.passenger) * 4 + self.destination
    }

    pub fn decode(index: usize) -> Self {
        let destination = index % 4;
        let rest = index / 4;
        let passenger = rest % 5;
        let rest = rest / 5;
        Self {
            row: rest / 5,
            col: rest % 5,
            passenger,
            destination,
        }
    }

    /// Whether an episode may begin in this state.
    pub fn is_start(self) -> bool {
        self.passenger < 4 && self.passenger != self.destination
    }
}

#[derive(Debug, Clone)]
pub struct Taxi {
    spec: MdpSpec,
    starts: Vec<usize>,
}

impl Default for Taxi {
    fn default() -> Self {
        let starts = (0..N_STATES)
            .filter(|&s| TaxiState::decode(s).is_start())
            .collect();
        Self {
            spec: MdpSpec {
                name: "taxi",
                n_states: N_STATES,
                n_actions: N_ACTIONS,
                max_episode_steps: MAX_STEPS,
            },
            starts,
        }
    }
}

impl Taxi {
    fn apply(state: usize, action: usize) -> Transition {
        let TaxiState {
            mut row,
            mut col,
            mut passenger,
            destination,
        } = TaxiState::decode(state);
        let mut reward = REWARD_STEP;
        let mut terminal = false;
        let here = (row, col);
        match action {
            SOUTH => row = (row + 1).min(4),
            NORTH => row = row.saturating_sub(1),
            EAST => {
                if MAP[row][2 * col + 2] == b':' {
                    col = (col + 1).min(4);
                }
            }
            WEST => {
                if MAP[row][2 * col] == b':' {
                    col = col.saturating_sub(1);
                }
            }
            PICKUP => {
                if passenger < 4 && LANDMARKS[passenger] == here {
                    passenger = 4;
                } else {
                    reward = REWARD_ILLEGAL;
                }
            }
            DROPOFF => {
                if passenger == 4 && LANDMARKS[destination] == here {
                    passenger = destination;
                    reward = REWARD_DROPOFF;
                    terminal = true;
                } else if let (4, Some(idx)) =
                    (passenger, LANDMARKS.iter().position(|&l| l == here))
                {
                    passenger = idx;
                } else {
                    reward = REWARD_ILLEGAL;
                }
            }
            _ => unreachable!("action validated by caller"),
        }
        Transition {
            prob: 1.0,
            next_state: TaxiState {
                row,
                col,
                passenger,
                destination,
            }
            .encode(),
            reward,
            terminal,
        }
    }
}

impl Dynamics for Taxi {
    fn spec(&self) -> &MdpSpec {
        &self.spec
    }

    fn start_distribution(&self) -> Vec<(usize, f64)> {
        let p = 1.0 / self.starts.len() as f64;
        self.starts.iter().map(|&s| (s, p)).collect()
    }

    fn sample_start(&self, rng: &mut dyn rand::RngCore) -> usize {
        self.starts[rng.random_range(0..self.starts.len())]
    }

    fn transitions(&self, state: usize, action: usize) -> Vec<Transition> {
        vec![Self::apply(state, action)]
    }

    fn sample_transition(
        &self,
        state: usize,
        action: usize,
        _rng: &mut dyn rand::RngCore,
    ) -> Transition {
        Self::apply(state, action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(row: usize, col: usize, passenger: usize, destination: usize) -> usize {
        TaxiState {
            row,
            col,
            passenger,
            destination,
        }
        .encode()
    }

    #[test]
    fn encoding_is_a_bijection() {
        for s in 0..N_STATES {
            assert_eq!(TaxiState::decode(s).encode(), s);
        }
    }

    #[test]
    fn start_states_enumerated_by_brute_force() {
        let taxi = Taxi::default();
        let mut brute = Vec::new();
        for row in 0..5 {
            for col in 0..5 {
                for passenger in 0..4 {
                    for destination in 0..4 {
                        if passenger != destination {
                            brute.push(state(row, col, passenger, destination));
                        }
                    }
                }
            }
        }
        brute.sort_unstable();
        assert_eq!(brute.len(), 300);
        assert_eq!(taxi.starts, brute);
    }

    #[test]
    fn successful_dropoff_terminates_with_plus_twenty() {
        // Passenger aboard, taxi at G which is the destination.
        let t = Taxi::apply(state(0, 4, 4, 1), DROPOFF);
        assert_eq!(t.reward, 20.0);
        assert!(t.terminal);
        assert_eq!(TaxiState::decode(t.next_state).passenger, 1);
    }

    #[test]
    fn illegal_pickup_and_dropoff_cost_ten() {
        let t = Taxi::apply(state(2, 2, 0, 1), PICKUP);
        assert_eq!((t.reward, t.terminal), (-10.0, false));
        assert_eq!(t.next_state, state(2, 2, 0, 1));
        let t = Taxi::apply(state(0, 0, 0, 1), DROPOFF);
        assert_eq!((t.reward, t.terminal), (-10.0, false));
    }

    #[test]
    fn legal_pickup_and_wrong_landmark_dropoff() {
        let t = Taxi::apply(state(4, 0, 2, 1), PICKUP);
        assert_eq!(t.reward, -1.0);
        assert_eq!(t.next_state, state(4, 0, 4, 1));
        let t = Taxi::apply(state(4, 3, 4, 1), DROPOFF);
        assert_eq!((t.reward, t.terminal), (-1.0, false));
        assert_eq!(t.next_state, state(4, 3, 3, 1));
    }

    #[test]
    fn walls_block_horizontal_moves() {
        // Wall between columns 1 and 2 on the top row.
        assert_eq!(
            Taxi::apply(state(0, 1, 0, 1), EAST).next_state,
            state(0, 1, 0, 1)
        );
        assert_eq!(
            Taxi::apply(state(0, 2, 0, 1), WEST).next_state,
            state(0, 2, 0, 1)
        );
        // Open between columns 1 and 2 on the middle row.
        assert_eq!(
            Taxi::apply(state(2, 1, 0, 1), EAST).next_state,
            state(2, 2, 0, 1)
        );
        // Edges clamp.
        assert_eq!(
            Taxi::apply(state(0, 3, 0, 1), NORTH).next_state,
            state(0, 3, 0, 1)
        );
        assert_eq!(
            Taxi::apply(state(4, 4, 0, 1), EAST).next_state,
            state(4, 4, 0, 1)
        );
    }
}
