use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{step, EpisodicMdp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Task id of the target task; sources are numbered from 1.
pub const TARGET_TASK: usize = 0;

/// One observed transition `(s_h, a_h, r_h, s_{h+1})` of some task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransitionSample<T> {
    pub task_id: usize,
    /// Zero-based stage.
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Trajectory<T> {
    samples: Vec<TransitionSample<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Checks chaining, stage order and a common task id.
    pub fn new(samples: Vec<TransitionSample<T>>) -> Result<Self> {
        for (k, pair) in samples.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::InvalidMdp(format!(
                    "trajectory breaks between steps {k} and {}",
                    k + 1
                )));
            }
            if pair[0].task_id != pair[1].task_id {
                return Err(Error::InvalidMdp("trajectory mixes task ids".into()));
            }
        }
        if samples.iter().enumerate().any(|(k, s)| s.stage != k) {
            return Err(Error::InvalidMdp("trajectory stages must be 0..H in order".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TransitionSample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> T {
        self.samples.iter().map(|s| s.reward).sum()
    }
}

/// A (possibly stochastic) Markov policy over stages.
pub trait Policy<T: Scalar> {
    /// Writes the action distribution at `(stage, state)` into `out`.
    fn probabilities(&self, stage: usize, state: usize, out: &mut [T]);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UniformPolicy;

impl<T: Scalar> Policy<T> for UniformPolicy {
    fn probabilities(&self, _stage: usize, _state: usize, out: &mut [T]) {
        let p = T::one() / T::from_usize_lossy(out.len());
        out.iter_mut().for_each(|x| *x = p);
    }
}

/// Deterministic stage-indexed policy stored as a table of actions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    num_states: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn from_fn(horizon: usize, num_states: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 0..horizon {
            for s in 0..num_states {
                actions.push(f(h, s));
            }
        }
        Self { num_states, actions }
    }

    /// Greedy policy of a Q table given as `q(h, s, a)`, lowest index wins ties.
    pub fn greedy<T: Scalar>(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        q: impl Fn(usize, usize, usize) -> T,
    ) -> Self {
        Self::from_fn(horizon, num_states, |h, s| {
            argmax((0..num_actions).map(|a| q(h, s, a)))
        })
    }

    #[inline]
    pub fn action(&self, stage: usize, state: usize) -> usize {
        self.actions[stage * self.num_states + state]
    }
}

impl<T: Scalar> Policy<T> for DeterministicPolicy {
    fn probabilities(&self, stage: usize, state: usize, out: &mut [T]) {
        out.iter_mut().for_each(|x| *x = T::zero());
        out[self.action(stage, state)] = T::one();
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_value = T::neg_infinity();
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Samples an index from a probability vector.
pub fn sample_index<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > T::zero()).unwrap_or(0)
}

/// Runs one episode from the initial state, choosing actions with `choose`.
pub fn rollout_with<T, R, F>(
    mdp: &EpisodicMdp<T>,
    task_id: usize,
    rng: &mut R,
    mut choose: F,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    F: FnMut(usize, usize, &mut R) -> usize,
{
    let mut state = mdp.initial_state();
    let mut samples = Vec::with_capacity(mdp.horizon());
    for stage in 0..mdp.horizon() {
        let action = choose(stage, state, rng);
        let (reward, next_state) = step(mdp, state, action, stage, rng)?;
        samples.push(TransitionSample {
            task_id,
            stage,
            state,
            action,
            reward,
            next_state,
        });
        state = next_state;
    }
    Ok(Trajectory { samples })
}

/// Runs one episode under `policy`.
pub fn rollout<T, R, P>(
    mdp: &EpisodicMdp<T>,
    task_id: usize,
    policy: &P,
    rng: &mut R,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    P: Policy<T> + ?Sized,
{
    let mut probs = vec![T::zero(); mdp.num_actions()];
    rollout_with(mdp, task_id, rng, |h, s, rng| {
        policy.probabilities(h, s, &mut probs);
        sample_index(&probs, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::grid::{build_random_reward_grid, GridWorldSpec};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn horizon_one_gives_single_sample() {
        let spec = GridWorldSpec {
            horizon: 1,
            ..GridWorldSpec::reduced()
        };
        let (target, _) = build_random_reward_grid::<f64>(&spec).unwrap();
        let mut rng = stream_rng(1, Stream::TargetRollout);
        let traj = rollout(&target, TARGET_TASK, &UniformPolicy, &mut rng).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.samples()[0].state, 0);
    }

    #[test]
    fn greedy_rollout_is_reproducible_and_chained() {
        let (target, _) = build_random_reward_grid::<f64>(&GridWorldSpec::default()).unwrap();
        let policy = DeterministicPolicy::greedy(8, target.num_states(), 4, |h, s, a| {
            target.reward(h, s, a)
        });
        let run = |seed| {
            let mut rng = stream_rng(seed, Stream::TargetRollout);
            rollout(&target, TARGET_TASK, &policy, &mut rng).unwrap()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert_eq!(a.len(), 8);
        assert!(Trajectory::new(a.samples().to_vec()).is_ok());
    }

    #[test]
    fn broken_chain_is_rejected() {
        let s = |stage, state, next_state| TransitionSample {
            task_id: 0,
            stage,
            state,
            action: 0,
            reward: 0.0,
            next_state,
        };
        assert!(Trajectory::new(vec![s(0, 0, 1), s(1, 2, 3)]).is_err());
        assert!(Trajectory::new(vec![s(0, 0, 1), s(2, 1, 3)]).is_err());
        assert!(Trajectory::new(vec![s(0, 0, 1), s(1, 1, 3)]).is_ok());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax([0.0, 2.0, 1.0, 2.0]), 1);
        assert_eq!(argmax([f64::NEG_INFINITY; 3]), 0);
    }
}
