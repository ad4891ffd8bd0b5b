//! Batch verification of both dual solvers against the oracles.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    duality_gap, kl_grid_oracle, wass_breakpoints, wass_dual_reference, wass_grid_oracle,
    wass_primal_optimum, Instance, InstanceGenerator, ProblemRef,
};
use crate::dro::{kl, wass, KlSolverConfig, WassProblem};

/// Relative duality gap accepted at a certified optimum.
pub const GAP_TOLERANCE: f64 = 1e-6;
/// Absolute slack between solver and oracle dual values.
pub const ORACLE_TOLERANCE: f64 = 1e-8;
/// Relative slack on the trust-region constraint.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub instances: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Scale every solved `β*` by 1.1 before checking, as a negative control.
    pub inject_bug: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            seed: 0,
            grid_points: 20_000,
            inject_bug: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceFailure {
    pub index: usize,
    pub method: &'static str,
    pub reason: String,
    pub instance: Instance,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub max_kl_gap: f64,
    pub max_wass_gap: f64,
    /// Largest `constraint − δ` seen, clamped at zero.
    pub max_constraint_violation: f64,
    /// Largest amount by which a solver dual exceeded its oracle.
    pub max_oracle_excess: f64,
    pub local_beta_checks: usize,
    pub boundary_ties: usize,
    pub failures: Vec<InstanceFailure>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel(x: f64, scale: f64) -> f64 {
    x / scale.abs().max(1.0)
}

/// Runs every check on `config.instances` generated instances.
pub fn verify(config: &VerifyConfig) -> VerifyReport {
    let start = Instant::now();
    let mut gen = InstanceGenerator::standard(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut report = VerifyReport {
        instances: config.instances,
        ..Default::default()
    };
    for index in 0..config.instances {
        let inst = gen.next_instance();
        let mut reasons = Vec::new();
        check_kl(&inst, index as u64, config, &mut report, &mut reasons);
        for reason in reasons.drain(..) {
            report.failures.push(InstanceFailure {
                index,
                method: "kl",
                reason,
                instance: inst.clone(),
            });
        }
        check_wass(&inst, config, &mut rng, &mut report, &mut reasons);
        for reason in reasons {
            report.failures.push(InstanceFailure {
                index,
                method: "wass",
                reason,
                instance: inst.clone(),
            });
        }
    }
    report.elapsed = start.elapsed();
    report
}

fn check_kl(
    inst: &Instance,
    seed: u64,
    config: &VerifyConfig,
    report: &mut VerifyReport,
    reasons: &mut Vec<String>,
) {
    let p = inst.kl();
    let solver = KlSolverConfig {
        seed,
        ..KlSolverConfig::default()
    };
    let mut result = kl::kl_solve_beta(&p, &solver);
    if config.inject_bug {
        result.beta_star *= 1.1;
        result.dual_value = kl::kl_dual_objective(&p, result.beta_star);
    }
    let updated = kl::kl_policy_update(&p, result.beta_star);
    let problem = ProblemRef::Kl(&p);
    let constraint = problem.divergence(&updated).unwrap_or(f64::INFINITY);
    let gap = rel(
        duality_gap(problem, &updated, result.dual_value),
        result.dual_value,
    );
    report.max_kl_gap = report.max_kl_gap.max(gap.abs());
    record_constraint(report, reasons, constraint, inst.delta);
    if gap.abs() > GAP_TOLERANCE {
        reasons.push(format!("duality gap {gap:e}"));
    }
    if problem.primal_value(&updated) < problem.primal_value(p.policy) - 1e-12 {
        reasons.push("update decreases the surrogate".into());
    }
    let oracle = kl_grid_oracle(&p, config.grid_points);
    let excess = result.dual_value - oracle.dual_value;
    report.max_oracle_excess = report.max_oracle_excess.max(excess);
    if excess > ORACLE_TOLERANCE {
        reasons.push(format!(
            "dual {} above grid oracle {} (β* {} vs {})",
            result.dual_value, oracle.dual_value, result.beta_star, oracle.beta
        ));
    }
}

fn check_wass(
    inst: &Instance,
    config: &VerifyConfig,
    rng: &mut ChaCha8Rng,
    report: &mut VerifyReport,
    reasons: &mut Vec<String>,
) {
    let p = inst.wass();
    let mut result = wass::wass_solve_beta(&p);
    if config.inject_bug {
        result.beta_star *= 1.1;
        result.dual_value = wass::wass_dual_objective(&p, result.beta_star);
    }
    let updated = wass::wass_policy_update(&p, result.beta_star);
    let problem = ProblemRef::Wass(&p);
    let constraint = problem.divergence(&updated).expect("0/1 ground distance");
    record_constraint(report, reasons, constraint, inst.delta);

    // A vertex plan cannot use a budget that falls strictly between two
    // vertices; those instances are checked against the exact optimum only.
    let tie = result.beta_star > 0.0 && constraint < inst.delta * (1.0 - 1e-9);
    if tie {
        report.boundary_ties += 1;
    } else {
        let gap = rel(
            duality_gap(problem, &updated, result.dual_value),
            result.dual_value,
        );
        report.max_wass_gap = report.max_wass_gap.max(gap.abs());
        if gap.abs() > GAP_TOLERANCE {
            reasons.push(format!("duality gap {gap:e}"));
        }
    }
    let (optimum, _) = wass_primal_optimum(&p).expect("0/1 ground distance");
    let strong = rel(result.dual_value - optimum, optimum);
    if strong.abs() > GAP_TOLERANCE {
        reasons.push(format!(
            "dual {} differs from primal optimum {optimum}",
            result.dual_value
        ));
    }
    let oracle = wass_grid_oracle(&p, config.grid_points).expect("0/1 ground distance");
    let excess = result.dual_value - oracle.dual_value;
    report.max_oracle_excess = report.max_oracle_excess.max(excess);
    if excess.abs() > ORACLE_TOLERANCE {
        reasons.push(format!(
            "dual {} differs from oracle {}",
            result.dual_value, oracle.dual_value
        ));
    }
    check_local_beta(&p, rng, report, reasons);
}

fn record_constraint(report: &mut VerifyReport, reasons: &mut Vec<String>, value: f64, delta: f64) {
    let over = value - delta;
    report.max_constraint_violation = report.max_constraint_violation.max(over.max(0.0));
    if over > CONSTRAINT_TOLERANCE * delta + 1e-12 {
        reasons.push(format!("constraint {value} exceeds δ = {delta}"));
    }
}

/// The local rule must return a point that is optimal on the linear piece
/// holding `β₀`; at a breakpoint either neighbouring piece qualifies.
fn check_local_beta(
    p: &WassProblem<'_>,
    rng: &mut ChaCha8Rng,
    report: &mut VerifyReport,
    reasons: &mut Vec<String>,
) {
    let breaks = wass_breakpoints(p);
    let top = *breaks.last().expect("breakpoints include zero");
    let mut probes = breaks.clone();
    probes.extend(breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    probes.push(top + 1.0);
    probes.extend((0..3).map(|_| rng.random_range(0.0..=top + 1.0)));

    let piece_min = |lo: f64, hi: f64| -> f64 {
        (0..=64)
            .map(|k| wass_dual_reference(p, lo + (hi - lo) * k as f64 / 64.0))
            .fold(f64::INFINITY, f64::min)
    };
    let piece = |i: usize| -> (f64, f64) {
        let lo = breaks[i];
        let hi = breaks.get(i + 1).copied().unwrap_or(lo + 1.0 + 2.0 * lo);
        (lo, hi)
    };
    for beta0 in probes {
        report.local_beta_checks += 1;
        let b = match wass::wass_local_beta(p, beta0) {
            Ok(b) => b,
            Err(e) => {
                reasons.push(format!("local rule failed at β₀ = {beta0}: {e}"));
                continue;
            }
        };
        let value = wass_dual_reference(p, b);
        let idx = breaks.partition_point(|&x| x <= beta0) - 1;
        let mut ok = (value - piece_min(piece(idx).0, piece(idx).1)).abs() <= ORACLE_TOLERANCE;
        if !ok && idx > 0 && breaks[idx] == beta0 {
            let (lo, hi) = piece(idx - 1);
            ok = (value - piece_min(lo, hi)).abs() <= ORACLE_TOLERANCE;
        }
        if !ok {
            reasons.push(format!(
                "local rule at β₀ = {beta0} returned non-optimal {b}"
            ));
        }
    }
}
