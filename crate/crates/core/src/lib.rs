//! Trust-region policy optimization for tabular MDPs with exact KL and
//! Wasserstein dual solvers.
//!
//! Each policy update maximizes the visitation-weighted expected advantage
//! over *all* policies within an expected divergence `δ` of the current one.
//! The scalar dual is minimized globally and the optimal policy is recovered
//! in closed form:
//!
//! * [`dro::kl`]: exponential reweighting at the optimal temperature, found
//!   by basin hopping on the analytic dual gradient;
//! * [`dro::wass`]: a vertex transport plan moving probability mass to
//!   better actions, with the multiplier found by exact breakpoint search.
//!
//! [`trainer`] runs the actor-critic loop on the environments in [`envs`];
//! [`oracle`] holds the brute-force and duality-gap checks that certify the
//! solvers.

pub mod dro;
pub mod envs;
pub mod error;
pub mod estimation;
pub mod oracle;
pub mod policy;
pub mod trainer;

pub use dro::{DualResult, GroundDistance, KlProblem, KlSolverConfig, WassProblem};
pub use envs::{EnvId, MdpSpec, Trajectory};
pub use error::{OdrpoError, Result};
pub use estimation::{AdvantageEstimate, ValueEstimator, ValueKind, VisitationWeights};
pub use policy::TabularPolicy;
pub use trainer::{
    default_delta, evaluate, train, EvalSummary, IterationRecord, Method, TrainConfig,
    TrainOutcome, Trainer,
};
