//! Small random tabular MDPs for oracle checks and statistical benchmarks.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::mdp::{EpisodicMdp, RewardTable, SparseRows};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A flat-Dirichlet row over `n` outcomes; every entry is positive.
fn dirichlet_row<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|&x| T::lit((x / total).max(1e-12))).collect()
}

/// Stage-dependent flat-Dirichlet transitions, rewards uniform on `[0, 1]`,
/// initial state 0.
pub fn random_tabular_mdp<T: Scalar, R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: T,
    rng: &mut R,
) -> Result<EpisodicMdp<T>> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidSpec("need at least one state and one action".into()));
    }
    let transitions = SparseRows::from_fn(horizon, num_states, num_actions, |_, _, _| {
        dirichlet_row::<T, R>(num_states, rng).into_iter().enumerate().collect()
    });
    let rewards = RewardTable::from_fn(horizon, num_states, num_actions, |_, _, _| T::lit(rng.random::<f64>()));
    EpisodicMdp::new(horizon, discount, transitions, rewards, 0)
}

/// A source task for `target`: transitions are the mixture
/// `(1 − mix)·P⁰ + mix·Q` with a fresh Dirichlet `Q`, rewards are the target
/// rewards plus `N(0, reward_std²)` noise.
pub fn perturbed_source<T: Scalar, R: Rng + ?Sized>(
    target: &EpisodicMdp<T>,
    mix: f64,
    reward_std: f64,
    rng: &mut R,
) -> Result<EpisodicMdp<T>> {
    if !(0.0..=1.0).contains(&mix) || !(reward_std >= 0.0) {
        return Err(Error::InvalidSpec(format!("mix {mix} or reward_std {reward_std} out of range")));
    }
    let (h, ns, na) = (target.horizon(), target.num_states(), target.num_actions());
    let m = T::lit(mix);
    let transitions = SparseRows::from_fn(h, ns, na, |stage, s, a| {
        let fresh = dirichlet_row::<T, R>(ns, rng);
        (0..ns)
            .map(|j| (j, (T::one() - m) * target.transition_prob(stage, s, a, j) + m * fresh[j]))
            .collect()
    });
    let rewards = RewardTable::from_fn(h, ns, na, |stage, s, a| {
        let z: f64 = StandardNormal.sample(rng);
        target.reward(stage, s, a) + T::lit(reward_std * z)
    });
    EpisodicMdp::new(h, target.discount(), transitions, rewards, target.initial_state())
}
