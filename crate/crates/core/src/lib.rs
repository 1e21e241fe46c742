//! Transfer Q-learning with re-weighted targeting (RWT).
//!
//! Source transitions are turned into Bellman-consistent pseudo-labels for
//! the target task by evaluating the *target* continuation value at the
//! source next state and re-weighting it with the transition density ratio.
//! What remains is a one-step reward difference, which a second regression
//! on target data corrects. The crate provides:
//!
//! * [`env`]: episodic MDPs, the random-reward grid world, exact DP oracles;
//! * [`align`]: density-ratio providers, pseudo-labels and residual labels;
//! * [`kernel`]: kernels, kernel ridge regression, posterior variance and
//!   complexity diagnostics;
//! * [`learners`]: tabular and kernel two-stage learners, baselines, bonuses;
//! * [`harness`]: the episodic training loop, regret accounting, seed
//!   aggregation and result files;
//! * [`verify`]: executable property suites.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the default precision.

pub mod align;
pub mod env;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod learners;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision MDP.
pub type Mdp = env::EpisodicMdp<f64>;
/// Single-precision MDP.
pub type Mdp32 = env::EpisodicMdp<f32>;
pub type Sample = env::TransitionSample<f64>;
pub type Krr = kernel::KrrModel<f64>;
pub type Kernel = kernel::KernelSpec<f64>;
pub type Config = harness::ExperimentConfig;

