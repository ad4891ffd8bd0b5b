//! Independent checks for the dual solvers on small random instances.
//!
//! Nothing here reuses the Wasserstein assignment code: the oracle evaluates
//! the dual from its definition, enumerates breakpoints by brute force and
//! computes the exact primal optimum as a fractional knapsack. The KL oracle
//! scans the dual on a dense grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dro::{kl, GroundDistance, KlProblem, WassProblem};
use crate::error::{OdrpoError, Result};
use crate::estimation::{AdvantageEstimate, VisitationWeights};
use crate::policy::TabularPolicy;

mod verify;

pub use verify::{verify, InstanceFailure, VerifyConfig, VerifyReport};

/// Largest instance the generator produces along either axis.
pub const MAX_DIM: usize = 6;

/// Improvement over the candidate beyond which a sampled policy counts as a
/// dominance counterexample.
pub const DOMINANCE_TOLERANCE: f64 = 1e-7;

/// A self-contained problem instance, serializable for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub rho: VisitationWeights,
    pub policy: TabularPolicy,
    pub advantages: AdvantageEstimate,
    pub delta: f64,
}

impl Instance {
    pub fn kl(&self) -> KlProblem<'_> {
        KlProblem::new(&self.rho, &self.policy, &self.advantages, self.delta)
            .expect("generated instances are consistent")
    }

    pub fn wass(&self) -> WassProblem<'_> {
        WassProblem::new(
            &self.rho,
            &self.policy,
            &self.advantages,
            self.delta,
            GroundDistance::ZeroOne,
        )
        .expect("generated instances are consistent")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OdrpoError::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Seeded source of random instances with strictly positive policies.
#[derive(Debug, Clone)]
pub struct InstanceGenerator {
    pub max_states: usize,
    pub max_actions: usize,
    pub advantage_range: (f64, f64),
    pub delta_choices: Vec<f64>,
    rng: ChaCha8Rng,
}

impl InstanceGenerator {
    pub fn new(
        max_states: usize,
        max_actions: usize,
        advantage_range: (f64, f64),
        delta_choices: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&max_states) || !(2..=MAX_DIM).contains(&max_actions) {
            return Err(OdrpoError::InvalidConfig(format!(
                "instance bounds {max_states}x{max_actions} outside 1..={MAX_DIM} x 2..={MAX_DIM}"
            )));
        }
        if advantage_range.0.partial_cmp(&advantage_range.1) != Some(std::cmp::Ordering::Less) {
            return Err(OdrpoError::InvalidConfig("empty advantage range".into()));
        }
        if delta_choices.is_empty() || delta_choices.iter().any(|d| d.is_nan() || *d <= 0.0) {
            return Err(OdrpoError::InvalidConfig(
                "delta choices must be non-empty and positive".into(),
            ));
        }
        Ok(Self {
            max_states,
            max_actions,
            advantage_range,
            delta_choices,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Instances up to 6×6 with `Â ~ U[−1, 1]` and `δ ∈ {0.01, 0.1, 0.5}`.
    pub fn standard(seed: u64) -> Self {
        Self::new(MAX_DIM, MAX_DIM, (-1.0, 1.0), vec![0.01, 0.1, 0.5], seed)
            .expect("standard bounds are valid")
    }

    pub fn next_instance(&mut self) -> Instance {
        let rng = &mut self.rng;
        let n_states = rng.random_range(1..=self.max_states);
        let n_actions = rng.random_range(2..=self.max_actions);
        let positive_row = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        };
        let rows: Vec<Vec<f64>> = (0..n_states)
            .map(|_| positive_row(&mut *rng, n_actions))
            .collect();
        let (lo, hi) = self.advantage_range;
        let adv: Vec<Vec<f64>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.random_range(lo..hi)).collect())
            .collect();
        let rho_raw = positive_row(&mut *rng, n_states);
        let delta = self.delta_choices[rng.random_range(0..self.delta_choices.len())];
        Instance {
            rho: VisitationWeights::from_unnormalized(rho_raw).expect("positive weights"),
            policy: TabularPolicy::from_rows(&rows).expect("normalized rows"),
            advantages: AdvantageEstimate::from_rows(&adv).expect("finite advantages"),
            delta,
        }
    }
}

impl Iterator for InstanceGenerator {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        Some(self.next_instance())
    }
}

/// Either trust-region problem.
#[derive(Debug, Clone, Copy)]
pub enum ProblemRef<'p, 'a> {
    Kl(&'p KlProblem<'a>),
    Wass(&'p WassProblem<'a>),
}

impl<'p, 'a> ProblemRef<'p, 'a> {
    fn parts(
        &self,
    ) -> (
        &'a VisitationWeights,
        &'a TabularPolicy,
        &'a AdvantageEstimate,
        f64,
    ) {
        match self {
            ProblemRef::Kl(p) => (p.rho, p.policy, p.advantages, p.delta),
            ProblemRef::Wass(p) => (p.rho, p.policy, p.advantages, p.delta),
        }
    }

    /// `Σ_s ρ(s) Σ_a π'(a|s) Â(s,a)`.
    pub fn primal_value(&self, candidate: &TabularPolicy) -> f64 {
        let (rho, _, adv, _) = self.parts();
        let mut total = 0.0;
        for s in 0..rho.len() {
            let mut row = 0.0;
            for a in 0..adv.n_actions() {
                row += candidate.prob(s, a) * adv.get(s, a);
            }
            total += rho.get(s) * row;
        }
        total
    }

    /// `Σ_s ρ(s) d(π'(·|s), π(·|s))` for the problem's metric.
    pub fn divergence(&self, candidate: &TabularPolicy) -> Result<f64> {
        let (rho, pi, _, _) = self.parts();
        let per_state: Box<dyn Fn(usize) -> f64> = match self {
            ProblemRef::Kl(_) => Box::new(|s| {
                let mut kl = 0.0;
                for a in 0..pi.n_actions() {
                    let (p, q) = (candidate.prob(s, a), pi.prob(s, a));
                    if p > 0.0 {
                        kl += if q > 0.0 {
                            p * (p / q).ln()
                        } else {
                            f64::INFINITY
                        };
                    }
                }
                kl
            }),
            ProblemRef::Wass(w) => {
                if !w.ground().is_zero_one() {
                    return Err(OdrpoError::UnsupportedDistance);
                }
                // Under 0/1 costs optimal transport moves exactly the total-variation mass.
                Box::new(|s| {
                    0.5 * (0..pi.n_actions())
                        .map(|a| (candidate.prob(s, a) - pi.prob(s, a)).abs())
                        .sum::<f64>()
                })
            }
        };
        Ok((0..rho.len()).map(|s| rho.get(s) * per_state(s)).sum())
    }

    pub fn delta(&self) -> f64 {
        self.parts().3
    }
}

/// `dual_value` minus the primal value of `policy`; non-negative for any
/// feasible policy by weak duality and zero at a certified optimum.
pub fn duality_gap(problem: ProblemRef<'_, '_>, policy: &TabularPolicy, dual_value: f64) -> f64 {
    dual_value - problem.primal_value(policy)
}

/// Best point found by a grid scan of the dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub beta: f64,
    pub dual_value: f64,
    /// Upper bound on how far the true minimum over the scanned interval can
    /// lie below `dual_value`, from convexity and the neighbouring secants.
    pub resolution_bound: f64,
}

fn log_grid(lo: f64, hi: f64, intervals: usize) -> impl Iterator<Item = f64> {
    let (l0, span) = (lo.ln(), hi.ln() - lo.ln());
    (0..=intervals).map(move |i| {
        if i == intervals {
            hi
        } else {
            (l0 + span * i as f64 / intervals as f64).exp()
        }
    })
}

fn scan(points: Vec<f64>, f: impl Fn(f64) -> f64) -> GridOptimum {
    let values: Vec<f64> = points.iter().map(|&b| f(b)).collect();
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    let mut bound: f64 = 0.0;
    if best > 0 && best + 1 < points.len() {
        let left_slope = (values[best] - values[best - 1]) / (points[best] - points[best - 1]);
        let right_slope = (values[best + 1] - values[best]) / (points[best + 1] - points[best]);
        bound = (left_slope.abs() * (points[best + 1] - points[best]))
            .max(right_slope.abs() * (points[best] - points[best - 1]));
    } else if best + 1 < points.len() {
        let right_slope = (values[best + 1] - values[best]) / (points[best + 1] - points[best]);
        bound = right_slope.min(0.0).abs() * (points[best + 1] - points[best]);
    } else if best > 0 {
        let left_slope = (values[best] - values[best - 1]) / (points[best] - points[best - 1]);
        bound = left_slope.max(0.0) * (points[best] - points[best - 1]);
    }
    GridOptimum {
        beta: points[best],
        dual_value: values[best],
        resolution_bound: bound,
    }
}

/// Minimizes the KL dual over `{0} ∪` a log-spaced grid of `grid_points`
/// intervals on `[β_min, β_max]`.
pub fn kl_grid_oracle(problem: &KlProblem<'_>, grid_points: usize) -> GridOptimum {
    assert!(
        grid_points >= 1000,
        "the grid oracle needs at least 10^3 points"
    );
    let (lo, hi) = problem.beta_bounds();
    let points: Vec<f64> = std::iter::once(0.0)
        .chain(log_grid(lo, hi, grid_points))
        .collect();
    scan(points, |b| kl::kl_dual_objective(problem, b))
}

/// The Wasserstein dual under 0/1 costs written straight from its definition.
fn wass_dual_reference(problem: &WassProblem<'_>, beta: f64) -> f64 {
    let mut total = beta * problem.delta;
    for s in 0..problem.n_states() {
        let w = problem.rho.get(s);
        if w == 0.0 {
            continue;
        }
        let adv = problem.advantages.row(s);
        let mut row = 0.0;
        for i in 0..adv.len() {
            let best = (0..adv.len())
                .map(|j| adv[j] - if j == i { 0.0 } else { beta })
                .fold(f64::NEG_INFINITY, f64::max);
            row += problem.policy.prob(s, i) * best;
        }
        total += w * row;
    }
    total
}

fn wass_breakpoints(problem: &WassProblem<'_>) -> Vec<f64> {
    let mut out = vec![0.0];
    for s in 0..problem.n_states() {
        if problem.rho.get(s) == 0.0 {
            continue;
        }
        let adv = problem.advantages.row(s);
        let top = adv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.extend(adv.iter().map(|a| top - a));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Minimizes the Wasserstein dual (0/1 costs) over every breakpoint plus a
/// log-spaced grid. Breakpoints make the result exact.
pub fn wass_grid_oracle(problem: &WassProblem<'_>, grid_points: usize) -> Result<GridOptimum> {
    if !problem.ground().is_zero_one() {
        return Err(OdrpoError::UnsupportedDistance);
    }
    let breaks = wass_breakpoints(problem);
    let top = breaks.last().copied().unwrap_or(0.0);
    let span = top + 1.0;
    let mut points: Vec<f64> = log_grid(1e-9 * span, 10.0 * span, grid_points)
        .chain(breaks)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    Ok(scan(points, |b| wass_dual_reference(problem, b)))
}

/// Exact optimum of the Wasserstein primal under 0/1 costs.
///
/// Moving mass from `a_i` to the best action of its state gains `gap(s,i)`
/// per unit at unit cost, so the LP is a fractional knapsack: fill the budget
/// greedily by decreasing gap. Returns `(optimal value, budget used)`.
pub fn wass_primal_optimum(problem: &WassProblem<'_>) -> Result<(f64, f64)> {
    if !problem.ground().is_zero_one() {
        return Err(OdrpoError::UnsupportedDistance);
    }
    let mut value = 0.0;
    let mut items = Vec::new();
    for s in 0..problem.n_states() {
        let w = problem.rho.get(s);
        if w == 0.0 {
            continue;
        }
        let adv = problem.advantages.row(s);
        let top = adv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, &a) in adv.iter().enumerate() {
            let mass = w * problem.policy.prob(s, i);
            value += mass * a;
            if top > a {
                items.push((top - a, mass));
            }
        }
    }
    items.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut budget = problem.delta;
    let mut used = 0.0;
    for (gain, mass) in items {
        if budget <= 0.0 {
            break;
        }
        let take = mass.min(budget);
        value += take * gain;
        budget -= take;
        used += take;
    }
    Ok((value, used))
}

/// Outcome of comparing the analytic KL dual gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub pairs: usize,
    /// Largest `|g − fd| / max(1, |fd|)`.
    pub max_rel_error: f64,
    /// The `(instance index, β)` attaining it.
    pub worst: (usize, f64),
}

/// Checks `kl_dual_gradient` against central finite differences of
/// `kl_dual_objective` on `pairs` random (instance, β) pairs.
///
/// `β` is log-uniform in `[0.05, 50]`; the step is `1e-5·β`.
pub fn kl_gradient_check(pairs: usize, seed: u64) -> GradientCheck {
    let mut gen = InstanceGenerator::standard(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut out = GradientCheck {
        pairs,
        max_rel_error: 0.0,
        worst: (0, f64::NAN),
    };
    for index in 0..pairs {
        let inst = gen.next_instance();
        let p = inst.kl();
        let beta = 10f64.powf(rng.random_range(0.05f64.log10()..=50f64.log10()));
        let h = 1e-5 * beta;
        let fd =
            (kl::kl_dual_objective(&p, beta + h) - kl::kl_dual_objective(&p, beta - h)) / (2.0 * h);
        let g = kl::kl_dual_gradient(&p, beta).expect("β > 0");
        let err = (g - fd).abs() / fd.abs().max(1.0);
        // NaN errors count as the worst.
        if err.is_nan() || err > out.max_rel_error {
            out.max_rel_error = err;
            out.worst = (index, beta);
        }
    }
    out
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Empirical optimality witness: samples random feasible policies around the
/// reference and reports whether none beats `candidate` by more than
/// [`DOMINANCE_TOLERANCE`].
///
/// Proposals perturb every row of `π` with Gaussian noise of a log-uniform
/// scale in `[1e-6, 1]`, project onto the simplex and are accepted only if
/// the trust-region constraint holds.
pub fn primal_feasible_dominance<R: Rng + ?Sized>(
    problem: ProblemRef<'_, '_>,
    candidate: &TabularPolicy,
    samples: usize,
    rng: &mut R,
) -> Result<bool> {
    let (_, pi, _, delta) = problem.parts();
    let target = problem.primal_value(candidate);
    let (mut accepted, mut proposed) = (0usize, 0usize);
    let mut dominated = false;
    while accepted < samples {
        proposed += 1;
        if proposed >= 1000 && accepted * 1000 < proposed {
            return Err(OdrpoError::RejectionRate { accepted, proposed });
        }
        let scale = 10f64.powf(rng.random_range(-6.0..=0.0));
        let rows: Vec<Vec<f64>> = pi
            .rows()
            .map(|row| {
                let noisy: Vec<f64> = row
                    .iter()
                    .map(|p| {
                        let z: f64 = StandardNormal.sample(rng);
                        p + scale * z
                    })
                    .collect();
                project_to_simplex(&noisy)
            })
            .collect();
        let Ok(proposal) = TabularPolicy::from_rows(&rows) else {
            continue;
        };
        if problem.divergence(&proposal)? > delta {
            continue;
        }
        accepted += 1;
        if problem.primal_value(&proposal) > target + DOMINANCE_TOLERANCE {
            dominated = true;
        }
    }
    Ok(!dominated)
}
