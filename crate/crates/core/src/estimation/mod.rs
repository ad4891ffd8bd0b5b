//! Monte Carlo returns, value fitting, advantage and visitation estimates.

use serde::{Deserialize, Serialize};

use crate::envs::Trajectory;
use crate::error::{OdrpoError, Result};

mod value;

pub use value::{Mlp, ValueEstimator, ValueKind, MLP_HIDDEN};

/// Per-(state, action) advantage table with a mask of observed pairs.
///
/// Unobserved pairs hold 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimate {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    visited: Vec<bool>,
}

impl AdvantageEstimate {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
            visited: vec![false; n_states * n_actions],
        }
    }

    /// Builds a fully-visited estimate from explicit rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(OdrpoError::Empty("advantage rows"));
        }
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(OdrpoError::DimensionMismatch(
                "ragged advantage rows".into(),
            ));
        }
        let values: Vec<f64> = rows.concat();
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(OdrpoError::NonFinite(format!("advantage {v}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            visited: vec![true; values.len()],
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.n_actions;
        &self.values[start..start + self.n_actions]
    }

    pub fn is_visited(&self, state: usize, action: usize) -> bool {
        self.visited[state * self.n_actions + action]
    }

    /// Whether any action was observed in `state`.
    pub fn state_visited(&self, state: usize) -> bool {
        let start = state * self.n_actions;
        self.visited[start..start + self.n_actions]
            .iter()
            .any(|&v| v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_{s,a} |Â(s,a)|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(min, max)` over all entries.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Normalized discounted state-visitation weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitationWeights {
    weights: Vec<f64>,
}

impl VisitationWeights {
    /// Normalizes non-negative raw weights to sum to one.
    pub fn from_unnormalized(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(OdrpoError::Empty("visitation weights"));
        }
        if let Some(w) = raw.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(OdrpoError::NonFinite(format!("visitation weight {w}")));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(OdrpoError::Empty("visitation weights sum to zero"));
        }
        Ok(Self {
            weights: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n_states: usize) -> Self {
        Self {
            weights: vec![1.0 / n_states as f64; n_states],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, state: usize) -> f64 {
        self.weights[state]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Discounted returns `G_t = r_t + γ G_{t+1}` for every step of `traj`.
pub fn compute_returns(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(OdrpoError::Empty("trajectory"));
    }
    let mut returns = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (g, step) in returns.iter_mut().zip(&traj.steps).rev() {
        acc = step.reward + gamma * acc;
        *g = acc;
    }
    Ok(returns)
}

/// Mean of `G_t − V(s_t)` over the samples of each observed `(s, a)` pair.
pub fn estimate_advantages(
    trajs: &[Trajectory],
    returns: &[Vec<f64>],
    estimator: &ValueEstimator,
    n_actions: usize,
) -> Result<AdvantageEstimate> {
    if trajs.len() != returns.len() {
        return Err(OdrpoError::DimensionMismatch(format!(
            "{} trajectories but {} return lists",
            trajs.len(),
            returns.len()
        )));
    }
    let n_states = estimator.n_states();
    let mut sums = vec![0.0; n_states * n_actions];
    let mut counts = vec![0u32; n_states * n_actions];
    for (traj, gs) in trajs.iter().zip(returns) {
        if traj.len() != gs.len() {
            return Err(OdrpoError::DimensionMismatch(format!(
                "trajectory of length {} paired with {} returns",
                traj.len(),
                gs.len()
            )));
        }
        for (step, &g) in traj.steps.iter().zip(gs) {
            if step.state >= n_states || step.action >= n_actions {
                return Err(OdrpoError::DimensionMismatch(format!(
                    "step ({}, {}) outside a {n_states}x{n_actions} table",
                    step.state, step.action
                )));
            }
            let idx = step.state * n_actions + step.action;
            sums[idx] += g - estimator.value(step.state);
            counts[idx] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / f64::from(c) } else { 0.0 })
        .collect();
    Ok(AdvantageEstimate {
        n_states,
        n_actions,
        values,
        visited: counts.iter().map(|&c| c > 0).collect(),
    })
}

/// Accumulates `γ^t / |D|` per visited state and normalizes.
pub fn estimate_visitation(
    trajs: &[Trajectory],
    gamma: f64,
    n_states: usize,
) -> Result<VisitationWeights> {
    if trajs.iter().all(Trajectory::is_empty) {
        return Err(OdrpoError::Empty("trajectory set"));
    }
    let scale = 1.0 / trajs.len() as f64;
    let mut raw = vec![0.0; n_states];
    for traj in trajs {
        let mut discount = 1.0;
        for step in &traj.steps {
            if step.state >= n_states {
                return Err(OdrpoError::DimensionMismatch(format!(
                    "state {} outside {n_states} states",
                    step.state
                )));
            }
            raw[step.state] += discount * scale;
            discount *= gamma;
        }
    }
    VisitationWeights::from_unnormalized(raw)
}
