//! Exact trust-region policy updates.
//!
//! Both solvers maximize the visitation-weighted expected advantage
//! `Σ_s ρ(s) Σ_a π'(a|s) Â(s,a)` over policies within an expected divergence
//! `δ` of the reference policy, by minimizing a scalar dual over the
//! multiplier `β ≥ 0` and mapping the optimal `β*` back to a policy.

use serde::{Deserialize, Serialize};

use crate::error::{OdrpoError, Result};
use crate::estimation::{AdvantageEstimate, VisitationWeights};
use crate::policy::TabularPolicy;

pub mod kl;
pub mod wass;

pub use kl::{KlProblem, KlSolverConfig};
pub use wass::{GroundDistance, TransportAssignment, WassProblem};

/// Outcome of a dual minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualResult {
    pub beta_star: f64,
    pub dual_value: f64,
    /// Objective (or gradient) evaluations spent.
    pub evaluations: usize,
    /// Basin hops attempted.
    pub hops: usize,
    /// Distinct candidate multipliers examined by breakpoint enumeration.
    pub candidates: usize,
    /// Transport cost of the vertex plan at `beta_star` (Wasserstein only).
    pub vertex_constraint: Option<f64>,
    /// The vertex plan leaves budget unused while `beta_star > 0`, so the
    /// exact optimum would need a fractional transport row (Wasserstein only).
    pub boundary_tie: bool,
}

/// The inputs shared by both trust-region problems.
#[derive(Debug, Clone, Copy)]
pub struct TrustRegion<'a> {
    pub rho: &'a VisitationWeights,
    pub policy: &'a TabularPolicy,
    pub advantages: &'a AdvantageEstimate,
    pub delta: f64,
}

impl<'a> TrustRegion<'a> {
    pub fn new(
        rho: &'a VisitationWeights,
        policy: &'a TabularPolicy,
        advantages: &'a AdvantageEstimate,
        delta: f64,
    ) -> Result<Self> {
        let (n_s, n_a) = (policy.n_states(), policy.n_actions());
        if rho.len() != n_s || advantages.n_states() != n_s || advantages.n_actions() != n_a {
            return Err(OdrpoError::DimensionMismatch(format!(
                "policy {n_s}x{n_a}, advantages {}x{}, visitation {}",
                advantages.n_states(),
                advantages.n_actions(),
                rho.len()
            )));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(OdrpoError::InvalidConfig(format!(
                "trust-region radius must be finite and non-negative, got {delta}"
            )));
        }
        Ok(Self {
            rho,
            policy,
            advantages,
            delta,
        })
    }

    pub fn n_states(&self) -> usize {
        self.policy.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.policy.n_actions()
    }

    /// States with positive visitation weight.
    pub fn weighted_states(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rho
            .weights()
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
    }
}

/// `Σ_s ρ(s) Σ_a π(a|s) Â(s,a)`, the objective every update maximizes.
pub fn surrogate(
    rho: &VisitationWeights,
    policy: &TabularPolicy,
    advantages: &AdvantageEstimate,
) -> f64 {
    rho.weights()
        .iter()
        .enumerate()
        .filter(|&(_, &w)| w > 0.0)
        .map(|(s, &w)| {
            w * policy
                .row(s)
                .iter()
                .zip(advantages.row(s))
                .map(|(p, a)| p * a)
                .sum::<f64>()
        })
        .sum()
}

/// Surrogate improvement of `updated` over the reference policy.
pub fn primal_gain(region: &TrustRegion<'_>, updated: &TabularPolicy) -> f64 {
    region
        .weighted_states()
        .map(|(s, w)| {
            w * updated
                .row(s)
                .iter()
                .zip(region.policy.row(s))
                .zip(region.advantages.row(s))
                .map(|((new, old), a)| (new - old) * a)
                .sum::<f64>()
        })
        .sum()
}
