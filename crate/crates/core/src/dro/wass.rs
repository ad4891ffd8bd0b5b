//! Wasserstein trust region over a finite action set.
//!
//! Dual: `min_{β ≥ 0} βδ + Σ_s ρ(s) Σ_i π(a_i|s) (Â(s,a_{j*}) − β d(a_{j*}, a_i))`
//! with `j*(s,i) = argmax_j Â(s,a_j) − β d(a_j, a_i)`. The optimal policy moves
//! all of `π(a_i|s)` to `a_{j*(s,i)}` at `β*`.
//!
//! Under the 0/1 ground distance the dual is piecewise linear and convex in
//! `β`, with breakpoints exactly at the per-state gaps
//! `gap(s,i) = max_j Â(s,a_j) − Â(s,a_i)`, which makes an exact global search
//! possible by enumerating them.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use super::{DualResult, TrustRegion};
use crate::error::{OdrpoError, Result};
use crate::estimation::{AdvantageEstimate, VisitationWeights};
use crate::policy::TabularPolicy;

/// Points of the fallback grid used for general ground distances.
pub const GENERAL_GRID_POINTS: usize = 100_000;

/// Ground distance between actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroundDistance {
    /// `d(a, a') = 0` if `a = a'`, else 1.
    ZeroOne,
    /// Explicit symmetric `n × n` table, row-major.
    Matrix { n: usize, d: Vec<f64> },
}

impl GroundDistance {
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(OdrpoError::DimensionMismatch(
                "ground distance must be square".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                let ok = d.is_finite()
                    && if i == j {
                        d == 0.0
                    } else {
                        d > 0.0 && d == rows[j][i]
                    };
                if !ok {
                    return Err(OdrpoError::InvalidConfig(format!(
                        "ground distance entry ({i}, {j}) = {d} violates d(a,a)=0, symmetry or positivity"
                    )));
                }
            }
        }
        Ok(GroundDistance::Matrix {
            n,
            d: rows.concat(),
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            GroundDistance::ZeroOne => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
            GroundDistance::Matrix { n, d } => d[i * n + j],
        }
    }

    pub fn is_zero_one(&self) -> bool {
        matches!(self, GroundDistance::ZeroOne)
    }

    fn min_positive(&self) -> f64 {
        match self {
            GroundDistance::ZeroOne => 1.0,
            GroundDistance::Matrix { d, .. } => d
                .iter()
                .copied()
                .filter(|&x| x > 0.0)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WassProblem<'a> {
    region: TrustRegion<'a>,
    ground: GroundDistance,
}

impl<'a> Deref for WassProblem<'a> {
    type Target = TrustRegion<'a>;

    fn deref(&self) -> &Self::Target {
        &self.region
    }
}

impl<'a> WassProblem<'a> {
    pub fn new(
        rho: &'a VisitationWeights,
        policy: &'a TabularPolicy,
        advantages: &'a AdvantageEstimate,
        delta: f64,
        ground: GroundDistance,
    ) -> Result<Self> {
        let region = TrustRegion::new(rho, policy, advantages, delta)?;
        if let GroundDistance::Matrix { n, .. } = &ground {
            if *n != policy.n_actions() {
                return Err(OdrpoError::DimensionMismatch(format!(
                    "ground distance is {n}x{n} for {} actions",
                    policy.n_actions()
                )));
            }
        }
        Ok(Self { region, ground })
    }

    pub fn region(&self) -> &TrustRegion<'a> {
        &self.region
    }

    pub fn ground(&self) -> &GroundDistance {
        &self.ground
    }

    /// `k_s`: the first maximizer of `Â(s,·)`.
    pub fn best_action(&self, state: usize) -> usize {
        let row = self.advantages.row(state);
        let mut best = 0;
        for (j, &a) in row.iter().enumerate() {
            if a > row[best] {
                best = j;
            }
        }
        best
    }

    /// `gap(s,i) = Â(s,a_{k_s}) − Â(s,a_i)`.
    pub fn gap(&self, state: usize, action: usize) -> f64 {
        let row = self.advantages.row(state);
        row[self.best_action(state)] - row[action]
    }

    /// `(gap, ρ(s) π(a_i|s))` for every pair of every positively weighted state.
    fn weighted_gaps(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (s, w) in self.weighted_states() {
            let row = self.advantages.row(s);
            let top = row[self.best_action(s)];
            for (&a, &p) in row.iter().zip(self.policy.row(s)) {
                out.push((top - a, w * p));
            }
        }
        out
    }
}

/// `j*(s,i)` for every state and source action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportAssignment {
    n_actions: usize,
    target: Vec<usize>,
}

impl TransportAssignment {
    #[inline]
    pub fn get(&self, state: usize, source: usize) -> usize {
        self.target[state * self.n_actions + source]
    }

    pub fn row(&self, state: usize) -> &[usize] {
        &self.target[state * self.n_actions..(state + 1) * self.n_actions]
    }
}

/// `argmax_j Â(s,a_j) − β d(a_j, a_i)`; ties keep `j = i`, then the lowest index.
///
/// Scores are compared as differences `Â(s,a_j) − Â(s,a_i)`, the same
/// expression the solver uses for gaps, so at `β` equal to a gap the pair
/// ties exactly and stays put.
#[inline]
fn destination(adv: &[f64], ground: &GroundDistance, source: usize, beta: f64) -> usize {
    let mut best = source;
    let mut best_gain = 0.0;
    for (j, &a) in adv.iter().enumerate() {
        if j == source {
            continue;
        }
        let gain = (a - adv[source]) - beta * ground.get(j, source);
        if gain > best_gain {
            best = j;
            best_gain = gain;
        }
    }
    best
}

pub fn wass_assignment(problem: &WassProblem<'_>, beta: f64) -> TransportAssignment {
    let n_actions = problem.n_actions();
    let target = (0..problem.n_states())
        .flat_map(|s| {
            let adv = problem.advantages.row(s);
            (0..n_actions).map(move |i| destination(adv, &problem.ground, i, beta))
        })
        .collect();
    TransportAssignment { n_actions, target }
}

pub fn wass_dual_objective(problem: &WassProblem<'_>, beta: f64) -> f64 {
    let inner: f64 = problem
        .weighted_states()
        .map(|(s, w)| {
            let adv = problem.advantages.row(s);
            let pi = problem.policy.row(s);
            w * (0..adv.len())
                .map(|i| {
                    let j = destination(adv, &problem.ground, i, beta);
                    pi[i] * (adv[j] - beta * problem.ground.get(j, i))
                })
                .sum::<f64>()
        })
        .sum();
    beta * problem.delta + inner
}

/// Local optimum of the dual on the linear segment containing `beta0`, from
/// the closed-form case analysis for the 0/1 ground distance.
///
/// 1. `β₀ ≥ max gap`: the max gap.
/// 2. `β₀ ≤ min positive gap`: the min positive gap if the mass that would
///    move to the best actions exceeds `δ`, else 0.
/// 3. otherwise split pairs into `gap ≤ β₀` and `gap > β₀`; return the
///    smallest gap of the second group if its mass exceeds `δ`, else the
///    largest gap of the first group.
pub fn wass_local_beta(problem: &WassProblem<'_>, beta0: f64) -> Result<f64> {
    if !problem.ground.is_zero_one() {
        return Err(OdrpoError::UnsupportedDistance);
    }
    let gaps = problem.weighted_gaps();
    let max_gap = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    if beta0 >= max_gap {
        return Ok(max_gap);
    }
    let min_positive = gaps
        .iter()
        .map(|g| g.0)
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if beta0 <= min_positive {
        let movable: f64 = gaps.iter().filter(|g| g.0 > 0.0).map(|g| g.1).sum();
        return Ok(if problem.delta - movable < 0.0 {
            min_positive
        } else {
            0.0
        });
    }
    let moved: f64 = gaps.iter().filter(|g| g.0 > beta0).map(|g| g.1).sum();
    if problem.delta - moved < 0.0 {
        Ok(gaps
            .iter()
            .map(|g| g.0)
            .filter(|&g| g > beta0)
            .fold(f64::INFINITY, f64::min))
    } else {
        Ok(gaps
            .iter()
            .map(|g| g.0)
            .filter(|&g| g <= beta0)
            .fold(0.0, f64::max))
    }
}

/// Global minimizer of the dual.
///
/// With the 0/1 distance the candidates are `{0} ∪ {gap(s,i)}` over states
/// with `ρ(s) > 0`. The dual's slope just above a candidate `b` is
/// `δ − Σ_{gap > b} ρ(s) π(a_i|s)`, so scanning gaps in decreasing order and
/// stopping at the first one whose inclusion would exceed the budget finds
/// the lowest minimizing candidate in `O(n log n)`. General distances fall
/// back to a dense log-spaced grid plus `β = 0`.
pub fn wass_solve_beta(problem: &WassProblem<'_>) -> DualResult {
    let (beta_star, evaluations, candidates) = if problem.ground.is_zero_one() {
        let mut gaps: Vec<(f64, f64)> = problem
            .weighted_gaps()
            .into_iter()
            .filter(|g| g.0 > 0.0)
            .collect();
        gaps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut distinct = 1; // β = 0
        let mut moved = 0.0;
        let mut beta = 0.0;
        let mut idx = 0;
        while idx < gaps.len() {
            let level = gaps[idx].0;
            let mut group = 0.0;
            while idx < gaps.len() && gaps[idx].0 == level {
                group += gaps[idx].1;
                idx += 1;
            }
            distinct += 1;
            if beta == 0.0 && moved + group > problem.delta {
                beta = level;
            } else if beta == 0.0 {
                moved += group;
            }
        }
        (beta, 0, distinct)
    } else {
        grid_search(problem)
    };
    let dual_value = wass_dual_objective(problem, beta_star);
    let assignment = wass_assignment(problem, beta_star);
    let vertex = transport_cost(problem, &assignment);
    DualResult {
        beta_star,
        dual_value,
        evaluations: evaluations + 1,
        hops: 0,
        candidates,
        vertex_constraint: Some(vertex),
        boundary_tie: beta_star > 0.0 && vertex < problem.delta * (1.0 - 1e-9),
    }
}

fn grid_search(problem: &WassProblem<'_>) -> (f64, usize, usize) {
    let (min, max) = problem.advantages.range();
    let span = max - min + 1.0;
    let lo = 1e-9 * span;
    let hi = 10.0 * span / problem.ground.min_positive();
    let step = (hi / lo).ln() / (GENERAL_GRID_POINTS - 1) as f64;
    let mut best = (0.0, wass_dual_objective(problem, 0.0));
    for k in 0..GENERAL_GRID_POINTS {
        let beta = lo * (step * k as f64).exp();
        let v = wass_dual_objective(problem, beta);
        if v < best.1 {
            best = (beta, v);
        }
    }
    (best.0, GENERAL_GRID_POINTS + 1, GENERAL_GRID_POINTS + 1)
}

/// `π'(a_j|s) = Σ_{i : j*(s,i) = j} π(a_i|s)` for every state.
pub fn wass_policy_update(problem: &WassProblem<'_>, beta: f64) -> TabularPolicy {
    let assignment = wass_assignment(problem, beta);
    let (n_s, n_a) = (problem.n_states(), problem.n_actions());
    let mut probs = vec![0.0; n_s * n_a];
    for s in 0..n_s {
        let pi = problem.policy.row(s);
        for (i, &j) in assignment.row(s).iter().enumerate() {
            probs[s * n_a + j] += pi[i];
        }
    }
    TabularPolicy::from_flat_unchecked(n_s, n_a, probs)
}

/// `Σ_s ρ(s) Σ_i π(a_i|s) d(a_{j*(s,i)}, a_i)`: cost of the vertex transport
/// plan, equal to the Wasserstein distance it realizes under 0/1 costs.
pub fn transport_cost(problem: &WassProblem<'_>, assignment: &TransportAssignment) -> f64 {
    problem
        .weighted_states()
        .map(|(s, w)| {
            let pi = problem.policy.row(s);
            w * assignment
                .row(s)
                .iter()
                .enumerate()
                .map(|(i, &j)| pi[i] * problem.ground.get(j, i))
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Owned {
        rho: VisitationWeights,
        policy: TabularPolicy,
        adv: AdvantageEstimate,
    }

    impl Owned {
        fn single(adv: Vec<f64>) -> Self {
            let n = adv.len();
            Self {
                rho: VisitationWeights::uniform(1),
                policy: TabularPolicy::uniform(1, n),
                adv: AdvantageEstimate::from_rows(&[adv]).unwrap(),
            }
        }

        fn problem(&self, delta: f64) -> WassProblem<'_> {
            WassProblem::new(
                &self.rho,
                &self.policy,
                &self.adv,
                delta,
                GroundDistance::ZeroOne,
            )
            .unwrap()
        }
    }

    #[test]
    fn assignment_examples() {
        let o = Owned::single(vec![1.0, 0.0]);
        let p = o.problem(0.1);
        assert_eq!(wass_assignment(&p, 2.0).row(0), &[0, 1]);
        assert_eq!(wass_assignment(&p, 0.5).row(0), &[0, 0]);
        assert_eq!(wass_assignment(&p, 1.0).row(0), &[0, 1]);
    }

    #[test]
    fn objective_examples() {
        let z = Owned::single(vec![0.0, 0.0, 0.0]);
        for beta in [0.0, 0.3, 4.0] {
            assert!((wass_dual_objective(&z.problem(0.2), beta) - 0.2 * beta).abs() < 1e-15);
        }
        let o = Owned::single(vec![1.0, 0.0]);
        assert!((wass_dual_objective(&o.problem(0.1), 0.4) - 0.84).abs() < 1e-15);
        assert!((wass_dual_objective(&o.problem(0.1), 2.0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn local_beta_examples() {
        let z = Owned::single(vec![0.0, 0.0]);
        assert_eq!(wass_local_beta(&z.problem(0.1), 0.0).unwrap(), 0.0);
        assert_eq!(wass_local_beta(&z.problem(0.1), 5.0).unwrap(), 0.0);

        let o = Owned::single(vec![1.0, 0.0]);
        assert_eq!(wass_local_beta(&o.problem(0.1), 0.01).unwrap(), 1.0);
        assert_eq!(wass_local_beta(&o.problem(0.7), 0.01).unwrap(), 0.0);
        assert_eq!(wass_local_beta(&o.problem(0.1), 3.0).unwrap(), 1.0);
    }

    #[test]
    fn local_beta_rejects_general_distance() {
        let o = Owned::single(vec![1.0, 0.0]);
        let ground = GroundDistance::matrix(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let p = WassProblem::new(&o.rho, &o.policy, &o.adv, 0.1, ground).unwrap();
        assert_eq!(
            wass_local_beta(&p, 0.5),
            Err(OdrpoError::UnsupportedDistance)
        );
    }

    #[test]
    fn solve_examples() {
        let z = Owned::single(vec![0.0, 0.0]);
        let r = wass_solve_beta(&z.problem(0.1));
        assert_eq!((r.beta_star, r.dual_value), (0.0, 0.0));

        // Candidates {0, 1}: f(0) = 1.0, f(1) = 0.1 + 0.5 + 0.5·0 = 0.6.
        let o = Owned::single(vec![1.0, 0.0]);
        let r = wass_solve_beta(&o.problem(0.1));
        assert_eq!(r.beta_star, 1.0);
        assert!((r.dual_value - 0.6).abs() < 1e-15);
        assert_eq!(r.candidates, 2);
        assert!(r.boundary_tie);

        // Budget covers all the movable mass.
        let r = wass_solve_beta(&o.problem(0.7));
        assert_eq!(r.beta_star, 0.0);
        assert!(!r.boundary_tie);
    }

    #[test]
    fn update_examples() {
        let z = Owned::single(vec![0.0, 0.0]);
        assert_eq!(wass_policy_update(&z.problem(0.1), 0.0), z.policy);
        let o = Owned::single(vec![1.0, 0.0]);
        assert_eq!(wass_policy_update(&o.problem(0.1), 0.5).row(0), &[1.0, 0.0]);
        assert_eq!(wass_policy_update(&o.problem(0.1), 2.0), o.policy);
    }

    #[test]
    fn matrix_validation() {
        assert!(GroundDistance::matrix(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(GroundDistance::matrix(&[vec![0.1, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(GroundDistance::matrix(&[vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(GroundDistance::matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }
}
