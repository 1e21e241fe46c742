//! Learning agents: tabular and kernel two-stage estimators, single-table
//! baselines, exploration and bonuses.

pub mod bonus;
pub mod explore;
pub mod kernel_ofu;
pub mod tabular;

pub use bonus::{bonus_from_variances, compute_bonus, optimistic_q, BetaMode, BonusParams};
pub use explore::{select_action, ExplorationKind, ExplorationSchedule};
pub use kernel_ofu::{stage1_fit_kernel, stage2_fit_kernel, KernelOfuAgent, KernelOfuSettings, StateActionEncoder};
pub use tabular::{
    check_divergence, tabular_baseline_update, tabular_two_stage_update, BaselineKind, TabularQ, TwoStageTables,
};
