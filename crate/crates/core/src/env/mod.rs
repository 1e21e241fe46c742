//! Episodic MDPs, the random-reward grid generator, rollouts and exact
//! dynamic-programming oracles.

pub mod dp;
pub mod grid;
pub mod mdp;
pub mod random;
pub mod rollout;

pub use dp::{bellman_residual, evaluate_policy, start_value, value_iteration, QTable, Reachability, VTable};
pub use grid::{build_random_reward_grid, grid_transitions, rescale_rewards_unit, GridWorldSpec};
pub use random::{perturbed_source, random_tabular_mdp};
pub use mdp::{step, EpisodicMdp, GridLayout, RewardTable, SparseRows};
pub use rollout::{
    argmax, rollout, rollout_with, sample_index, DeterministicPolicy, Policy, Trajectory,
    TransitionSample, UniformPolicy, TARGET_TASK,
};
