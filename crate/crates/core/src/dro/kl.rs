//! KL-divergence trust region.
//!
//! Dual: `min_{β ≥ 0} βδ + Σ_s ρ(s) β log Σ_a π(a|s) exp(Â(s,a)/β)`.
//! Optimal policy: `π'(a|s) ∝ π(a|s) exp(Â(s,a)/β*)`.
//!
//! Every per-state sum is evaluated with the exponent shifted by the largest
//! advantage on the support of `π(·|s)`, so nothing overflows as `β → 0`.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DualResult, TrustRegion};
use crate::error::{OdrpoError, Result};
use crate::estimation::{AdvantageEstimate, VisitationWeights};
use crate::policy::TabularPolicy;

#[derive(Debug, Clone, Copy)]
pub struct KlProblem<'a> {
    region: TrustRegion<'a>,
}

impl<'a> Deref for KlProblem<'a> {
    type Target = TrustRegion<'a>;

    fn deref(&self) -> &Self::Target {
        &self.region
    }
}

impl<'a> KlProblem<'a> {
    pub fn new(
        rho: &'a VisitationWeights,
        policy: &'a TabularPolicy,
        advantages: &'a AdvantageEstimate,
        delta: f64,
    ) -> Result<Self> {
        Ok(Self {
            region: TrustRegion::new(rho, policy, advantages, delta)?,
        })
    }

    pub fn region(&self) -> &TrustRegion<'a> {
        &self.region
    }

    /// Search interval `[β_min, β_max]` for the multiplier.
    ///
    /// Below `β_min` the update is numerically the argmax policy; above
    /// `β_max` the constraint is slack by a wide margin.
    pub fn beta_bounds(&self) -> (f64, f64) {
        let adv = self.region.advantages;
        let lo = 1e-8 * (1.0 + adv.max_abs());
        let (min, max) = adv.range();
        let hi = 10.0 * (max - min + 1.0) / self.region.delta.max(f64::MIN_POSITIVE);
        (lo, hi.max(lo))
    }
}

/// Largest advantage among actions in the support of `π(·|s)`.
fn support_max(pi: &[f64], adv: &[f64]) -> f64 {
    pi.iter()
        .zip(adv)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, a)| *a)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Shifted partition sums for one state at temperature `beta`.
struct Tilt {
    max: f64,
    /// `log Σ_a π(a) exp((Â(a) − max)/β)`.
    log_z: f64,
    /// `Σ_a π(a) exp((Â(a) − max)/β) (max − Â(a)) / Z`.
    mean_shortfall: f64,
}

fn tilt(pi: &[f64], adv: &[f64], beta: f64) -> Tilt {
    let max = support_max(pi, adv);
    let mut z = 0.0;
    let mut shortfall = 0.0;
    for (&p, &a) in pi.iter().zip(adv) {
        if p > 0.0 {
            let w = p * ((a - max) / beta).exp();
            z += w;
            shortfall += w * (max - a);
        }
    }
    Tilt {
        max,
        log_z: z.ln(),
        mean_shortfall: shortfall / z,
    }
}

/// Dual objective at `beta`; `beta = 0` returns the `β → 0⁺` limit
/// `Σ_s ρ(s) max_{a ∈ supp π(·|s)} Â(s,a)`.
pub fn kl_dual_objective(problem: &KlProblem<'_>, beta: f64) -> f64 {
    let (pi, adv) = (problem.policy, problem.advantages);
    if beta <= 0.0 {
        return problem
            .weighted_states()
            .map(|(s, w)| w * support_max(pi.row(s), adv.row(s)))
            .sum();
    }
    let inner: f64 = problem
        .weighted_states()
        .map(|(s, w)| {
            let t = tilt(pi.row(s), adv.row(s), beta);
            w * (t.max + beta * t.log_z)
        })
        .sum();
    beta * problem.delta + inner
}

/// Derivative of the dual in `β`:
/// `δ + Σ_s ρ(s) [log E_π e^{Â/β} − E_π[e^{Â/β} Â] / (β E_π e^{Â/β})]`.
///
/// It equals `δ − Σ_s ρ(s) KL(π_β(·|s) ‖ π(·|s))` for the tilted policy `π_β`.
pub fn kl_dual_gradient(problem: &KlProblem<'_>, beta: f64) -> Result<f64> {
    if beta.is_nan() || beta <= 0.0 {
        return Err(OdrpoError::InvalidConfig(format!(
            "dual gradient needs β > 0, got {beta}"
        )));
    }
    Ok(gradient_unchecked(problem, beta))
}

fn gradient_unchecked(problem: &KlProblem<'_>, beta: f64) -> f64 {
    let (pi, adv) = (problem.policy, problem.advantages);
    let inner: f64 = problem
        .weighted_states()
        .map(|(s, w)| {
            let t = tilt(pi.row(s), adv.row(s), beta);
            // log E[e^{Â/β}] − E_tilt[Â]/β with both terms shifted by max/β.
            w * (t.log_z + t.mean_shortfall / beta)
        })
        .sum();
    problem.delta + inner
}

/// Settings for the basin-hopping search over `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlSolverConfig {
    /// Number of perturb-and-descend hops after the first descent.
    pub hops: usize,
    /// Multiplicative perturbations are drawn log-uniformly from this range.
    pub perturbation: (f64, f64),
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
    pub max_bisections: usize,
    pub seed: u64,
}

impl Default for KlSolverConfig {
    fn default() -> Self {
        Self {
            hops: 10,
            perturbation: (0.2, 5.0),
            rel_tol: 1e-13,
            max_bisections: 200,
            seed: 0,
        }
    }
}

struct Search<'p, 'a> {
    problem: &'p KlProblem<'a>,
    lo: f64,
    hi: f64,
    cfg: &'p KlSolverConfig,
    evaluations: usize,
}

impl Search<'_, '_> {
    fn grad(&mut self, beta: f64) -> f64 {
        self.evaluations += 1;
        gradient_unchecked(self.problem, beta)
    }

    fn value(&mut self, beta: f64) -> f64 {
        self.evaluations += 1;
        kl_dual_objective(self.problem, beta)
    }

    /// Gradient-guided descent from `start`: bracket the sign change of the
    /// (monotone) derivative by geometric steps, then bisect in log-space.
    ///
    /// Returns the upper end of the final bracket, where the derivative is
    /// non-negative and hence the recovered policy satisfies the constraint.
    fn descend(&mut self, start: f64) -> f64 {
        const STEP: f64 = 4.0;
        let mut x = start.clamp(self.lo, self.hi);
        let gx = self.grad(x);
        let (mut below, mut above) = if gx >= 0.0 {
            loop {
                if x <= self.lo {
                    return self.lo;
                }
                let next = (x / STEP).max(self.lo);
                if self.grad(next) < 0.0 {
                    break (next, x);
                }
                x = next;
            }
        } else {
            loop {
                if x >= self.hi {
                    return self.hi;
                }
                let next = (x * STEP).min(self.hi);
                if self.grad(next) >= 0.0 {
                    break (x, next);
                }
                x = next;
            }
        };
        for _ in 0..self.cfg.max_bisections {
            if above / below - 1.0 <= self.cfg.rel_tol {
                break;
            }
            let mid = (below * above).sqrt();
            if !(mid > below && mid < above) {
                break;
            }
            if self.grad(mid) >= 0.0 {
                above = mid;
            } else {
                below = mid;
            }
        }
        above
    }
}

/// Minimizes the dual over `[β_min, β_max]` by basin hopping with a
/// gradient-sign local phase.
///
/// The first descent starts from the small-step estimate
/// `β ≈ sqrt(Σ_s ρ(s) Var_π[Â(s,·)] / 2δ)`. Each hop rescales the incumbent
/// by a random factor, descends again and is kept only if it strictly lowers
/// the dual.
pub fn kl_solve_beta(problem: &KlProblem<'_>, config: &KlSolverConfig) -> DualResult {
    let (lo, hi) = problem.beta_bounds();
    let mut search = Search {
        problem,
        lo,
        hi,
        cfg: config,
        evaluations: 0,
    };
    let start = initial_guess(problem).clamp(lo, hi);
    let mut best = search.descend(start);
    let mut best_value = search.value(best);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (f_lo, f_hi) = config.perturbation;
    for _ in 0..config.hops {
        let factor = rng.random_range(f_lo.ln()..=f_hi.ln()).exp();
        let candidate = search.descend(best * factor);
        let value = search.value(candidate);
        if value < best_value {
            best = candidate;
            best_value = value;
        }
    }
    DualResult {
        beta_star: best,
        dual_value: best_value,
        evaluations: search.evaluations,
        hops: config.hops,
        candidates: 0,
        vertex_constraint: None,
        boundary_tie: false,
    }
}

fn initial_guess(problem: &KlProblem<'_>) -> f64 {
    let (pi, adv) = (problem.policy, problem.advantages);
    let variance: f64 = problem
        .weighted_states()
        .map(|(s, w)| {
            let (p, a) = (pi.row(s), adv.row(s));
            let mean: f64 = p.iter().zip(a).map(|(p, a)| p * a).sum();
            w * p
                .iter()
                .zip(a)
                .map(|(p, a)| p * (a - mean).powi(2))
                .sum::<f64>()
        })
        .sum();
    (variance / (2.0 * problem.delta.max(f64::MIN_POSITIVE))).sqrt()
}

/// Exponential reweighting `π'(a|s) ∝ π(a|s) exp(Â(s,a)/β)` for every state.
///
/// At `beta ≤ β_min` the limit is used: mass is restricted to the
/// maximizers of `Â(s,·)` on the support of `π(·|s)`, in proportion to `π`.
pub fn kl_policy_update(problem: &KlProblem<'_>, beta: f64) -> TabularPolicy {
    let (pi, adv) = (problem.policy, problem.advantages);
    let n_actions = pi.n_actions();
    let argmax_limit = beta <= problem.beta_bounds().0;
    let mut probs = Vec::with_capacity(pi.n_states() * n_actions);
    let mut weights = vec![0.0; n_actions];
    for s in 0..pi.n_states() {
        let (p, a) = (pi.row(s), adv.row(s));
        let max = support_max(p, a);
        for (w, (&p, &a)) in weights.iter_mut().zip(p.iter().zip(a)) {
            *w = if p <= 0.0 {
                0.0
            } else if argmax_limit {
                if a == max {
                    p
                } else {
                    0.0
                }
            } else {
                p * ((a - max) / beta).exp()
            };
        }
        let z: f64 = weights.iter().sum();
        probs.extend(weights.iter().map(|w| w / z));
    }
    TabularPolicy::from_flat_unchecked(pi.n_states(), n_actions, probs)
}

/// `Σ_s ρ(s) KL(π'(·|s) ‖ π(·|s))`.
pub fn kl_constraint(problem: &KlProblem<'_>, updated: &TabularPolicy) -> f64 {
    problem
        .weighted_states()
        .map(|(s, w)| w * kl_divergence(updated.row(s), problem.policy.row(s)))
        .sum()
}

/// `KL(p ‖ q)` with `0 log 0 = 0`; infinite when `p` leaves the support of `q`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&p, &q)| {
            if p <= 0.0 {
                0.0
            } else if q <= 0.0 {
                f64::INFINITY
            } else {
                p * (p / q).ln()
            }
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
        fn single(pi: Vec<f64>, adv: Vec<f64>) -> Self {
            Self {
                rho: VisitationWeights::uniform(1),
                policy: TabularPolicy::from_rows(&[pi]).unwrap(),
                adv: AdvantageEstimate::from_rows(&[adv]).unwrap(),
            }
        }

        fn problem(&self, delta: f64) -> KlProblem<'_> {
            KlProblem::new(&self.rho, &self.policy, &self.adv, delta).unwrap()
        }
    }

    #[test]
    fn objective_examples() {
        let zero = Owned::single(vec![0.5, 0.5], vec![0.0, 0.0]);
        assert!((kl_dual_objective(&zero.problem(0.1), 3.0) - 0.3).abs() < 1e-15);

        let one = Owned::single(vec![0.5, 0.5], vec![1.0, 0.0]);
        assert_eq!(kl_dual_objective(&one.problem(0.0), 0.0), 1.0);
        assert!((kl_dual_objective(&one.problem(0.0), 1e-9) - 1.0).abs() < 1e-8);
        // 0.1 + ln(0.5e + 0.5), evaluated to 30 digits.
        let v = kl_dual_objective(&one.problem(0.1), 1.0);
        assert!((v - 0.720_114_506_958_277_5).abs() < 1e-14);
    }

    #[test]
    fn gradient_examples() {
        let zero = Owned::single(vec![0.25; 4], vec![0.0; 4]);
        for beta in [1e-6, 0.3, 7.0, 1e5] {
            assert_eq!(kl_dual_gradient(&zero.problem(0.2), beta).unwrap(), 0.2);
        }
        let one = Owned::single(vec![0.5, 0.5], vec![1.0, 0.0]);
        let g = kl_dual_gradient(&one.problem(0.1), 1.0).unwrap();
        assert!((g - -0.010_944_071_671_727_355).abs() < 1e-14);
        assert!(kl_dual_gradient(&one.problem(0.1), 0.0).is_err());
    }

    #[test]
    fn constant_advantages_give_beta_min() {
        let c = Owned::single(vec![0.2, 0.3, 0.5], vec![0.7, 0.7, 0.7]);
        let p = c.problem(0.1);
        let r = kl_solve_beta(&p, &KlSolverConfig::default());
        let (lo, _) = p.beta_bounds();
        assert_eq!(r.beta_star, lo);
        assert!((r.dual_value - (lo * 0.1 + 0.7)).abs() < 1e-15);
    }

    #[test]
    fn update_examples() {
        let zero = Owned::single(vec![0.2, 0.8], vec![0.0, 0.0]);
        assert_eq!(kl_policy_update(&zero.problem(0.1), 0.7), zero.policy);

        let one = Owned::single(vec![0.5, 0.5], vec![1.0, 0.0]);
        let upd = kl_policy_update(&one.problem(0.1), 1.0);
        let e = std::f64::consts::E;
        assert!((upd.prob(0, 0) - e / (e + 1.0)).abs() < 1e-15);
        assert!((upd.prob(0, 1) - 1.0 / (e + 1.0)).abs() < 1e-15);

        let upd = kl_policy_update(&one.problem(0.1), 1e6);
        assert!(upd.max_abs_diff(&one.policy) <= 1e-5);
    }

    #[test]
    fn argmax_limit_respects_support() {
        let c = Owned::single(vec![0.0, 0.4, 0.6], vec![5.0, 1.0, 0.0]);
        let upd = kl_policy_update(&c.problem(0.1), 0.0);
        assert_eq!(upd.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn kl_divergence_conventions() {
        assert_eq!(kl_divergence(&[0.0, 1.0], &[0.5, 0.5]), 2f64.ln());
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
    }
}
