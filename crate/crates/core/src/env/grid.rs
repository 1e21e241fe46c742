//! Random-reward hypercubic grid worlds.
//!
//! Action `i` moves one step along coordinate `i` in the positive direction;
//! a move that would leave the grid keeps the agent in place and still pays
//! `R(s, a)`. All tasks share these deterministic transitions, so source and
//! target differ only in their reward tables.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mdp::{EpisodicMdp, GridLayout, RewardTable, SparseRows};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub dims: usize,
    pub side: usize,
    pub horizon: usize,
    pub num_actions: usize,
    pub target_reward_std: f64,
    pub delta_std: f64,
    pub num_sources: usize,
    pub discount: f64,
    pub seed: u64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        Self {
            dims: 4,
            side: 9,
            horizon: 8,
            num_actions: 4,
            target_reward_std: 1.0,
            delta_std: 3.0,
            num_sources: 1,
            discount: 0.99,
            seed: 0,
        }
    }
}

impl GridWorldSpec {
    /// Reduced grid used by the kernel learner: 2-D, side 5, horizon 4.
    pub fn reduced() -> Self {
        Self {
            dims: 2,
            side: 5,
            horizon: 4,
            num_actions: 2,
            ..Self::default()
        }
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout {
            dims: self.dims,
            side: self.side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims < 1 {
            return Err(Error::InvalidSpec(format!("dims = {} (need >= 1)", self.dims)));
        }
        if self.side < 2 {
            return Err(Error::InvalidSpec(format!("side = {} (need >= 2)", self.side)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidSpec("horizon must be positive".into()));
        }
        if self.num_actions != self.dims {
            return Err(Error::InvalidSpec(format!(
                "num_actions = {} but each action moves along one of {} coordinates",
                self.num_actions, self.dims
            )));
        }
        if !(self.delta_std >= 0.0) || !(self.target_reward_std >= 0.0) {
            return Err(Error::InvalidSpec("reward standard deviations must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidSpec(format!("discount {} outside [0, 1]", self.discount)));
        }
        if (self.side as f64).powi(self.dims as i32) > 5e7 {
            return Err(Error::InvalidSpec("grid too large".into()));
        }
        Ok(())
    }
}

/// Shared deterministic transitions of the grid.
pub fn grid_transitions<T: Scalar>(layout: GridLayout) -> SparseRows<T> {
    let n = layout.num_cells();
    let stride: Vec<usize> = (0..layout.dims)
        .map(|i| layout.side.pow(i as u32))
        .collect();
    SparseRows::from_fn(1, n, layout.dims, |_, s, a| {
        let coord = (s / stride[a]) % layout.side;
        let next = if coord + 1 < layout.side { s + stride[a] } else { s };
        vec![(next, T::one())]
    })
}

/// Generates the target task and `num_sources` source tasks.
///
/// Target rewards are one stage-invariant table of i.i.d.
/// `N(0, target_reward_std²)` draws; source `m` adds its own i.i.d.
/// `N(0, delta_std²)` perturbation. Everything is a function of `spec.seed`.
pub fn build_random_reward_grid<T: Scalar>(
    spec: &GridWorldSpec,
) -> Result<(EpisodicMdp<T>, Vec<EpisodicMdp<T>>)> {
    spec.validate()?;
    let layout = spec.layout();
    let n = layout.num_cells();
    let mut rng: ChaCha8Rng = stream_rng(spec.seed, Stream::EnvGeneration);
    let mut gauss = |std: f64| -> T {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(std * z)
    };
    let target_rewards = RewardTable::from_fn(1, n, spec.num_actions, |_, _, _| {
        gauss(spec.target_reward_std)
    });
    let target = EpisodicMdp::new(
        spec.horizon,
        T::lit(spec.discount),
        grid_transitions(layout),
        target_rewards.clone(),
        0,
    )?
    .with_layout(layout)?;

    let mut sources = Vec::with_capacity(spec.num_sources);
    for _ in 0..spec.num_sources {
        let shifted = RewardTable::from_fn(1, n, spec.num_actions, |_, s, a| {
            target_rewards.get(0, s, a) + gauss(spec.delta_std)
        });
        sources.push(target.with_rewards(shifted)?);
    }
    Ok((target, sources))
}

/// Applies to every task the affine map that takes the rewards of
/// `tasks[0]` onto `[0, 1]`. Other tasks may land outside the unit interval;
/// additive differences between tasks keep their structure.
pub fn rescale_rewards_unit<T: Scalar>(tasks: &mut [EpisodicMdp<T>]) -> Result<()> {
    let Some(reference) = tasks.first() else {
        return Ok(());
    };
    let (lo, hi) = reference
        .rewards()
        .values()
        .iter()
        .copied()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| (lo.min(r), hi.max(r)));
    if !(hi > lo) {
        return Ok(());
    }
    let span = hi - lo;
    for task in tasks.iter_mut() {
        let scaled = task.rewards().map(|r| (r - lo) / span);
        *task = task.with_rewards(scaled)?;
    }
    Ok(())
}
