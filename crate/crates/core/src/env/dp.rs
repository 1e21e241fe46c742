//! Exact dynamic-programming oracles: optimal values and policy evaluation.

use serde::{Deserialize, Serialize};

use super::mdp::EpisodicMdp;
use super::rollout::Policy;
use crate::scalar::Scalar;

/// Dense table indexed `(stage, state, action)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QTable<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QTable<T> {
    pub fn filled(horizon: usize, num_states: usize, num_actions: usize, value: T) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![value; horizon * num_states * num_actions],
        }
    }

    pub fn for_mdp(mdp: &EpisodicMdp<T>, value: T) -> Self {
        Self::filled(mdp.horizon(), mdp.num_states(), mdp.num_actions(), value)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn offset(&self, stage: usize, state: usize) -> usize {
        (stage * self.num_states + state) * self.num_actions
    }

    #[inline]
    pub fn get(&self, stage: usize, state: usize, action: usize) -> T {
        self.values[self.offset(stage, state) + action]
    }

    #[inline]
    pub fn set(&mut self, stage: usize, state: usize, action: usize, value: T) {
        let i = self.offset(stage, state) + action;
        self.values[i] = value;
    }

    /// Action values at `(stage, state)`.
    #[inline]
    pub fn row(&self, stage: usize, state: usize) -> &[T] {
        let o = self.offset(stage, state);
        &self.values[o..o + self.num_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, stage: usize, state: usize) -> &mut [T] {
        let o = self.offset(stage, state);
        &mut self.values[o..o + self.num_actions]
    }

    /// `max_a Q_h(s, a)`; zero past the horizon.
    #[inline]
    pub fn max_value(&self, stage: usize, state: usize) -> T {
        if stage >= self.horizon {
            return T::zero();
        }
        self.row(stage, state)
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Dense table indexed `(stage, state)` for stages `0..=H`; stage `H` is
/// the terminal row and always zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VTable<T> {
    horizon: usize,
    num_states: usize,
    values: Vec<T>,
}

impl<T: Scalar> VTable<T> {
    pub fn zeros(horizon: usize, num_states: usize) -> Self {
        Self {
            horizon,
            num_states,
            values: vec![T::zero(); (horizon + 1) * num_states],
        }
    }

    #[inline]
    pub fn get(&self, stage: usize, state: usize) -> T {
        self.values[stage * self.num_states + state]
    }

    pub fn stage(&self, stage: usize) -> &[T] {
        &self.values[stage * self.num_states..(stage + 1) * self.num_states]
    }

    fn stage_mut(&mut self, stage: usize) -> &mut [T] {
        &mut self.values[stage * self.num_states..(stage + 1) * self.num_states]
    }
}

/// Backward induction with `V_{H} ≡ 0` and a max over actions.
pub fn value_iteration<T: Scalar>(mdp: &EpisodicMdp<T>) -> (QTable<T>, VTable<T>) {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut q = QTable::for_mdp(mdp, T::zero());
    let mut v = VTable::zeros(horizon, ns);
    for h in (0..horizon).rev() {
        let next = v.stage(h + 1).to_vec();
        let current = v.stage_mut(h);
        for s in 0..ns {
            let mut best = T::neg_infinity();
            for a in 0..na {
                let backup = mdp.backup(h, s, a, &next);
                q.set(h, s, a, backup);
                best = best.max(backup);
            }
            current[s] = best;
        }
    }
    (q, v)
}

/// Backward induction with the policy's action distribution in place of the max.
pub fn evaluate_policy<T: Scalar, P: Policy<T> + ?Sized>(mdp: &EpisodicMdp<T>, policy: &P) -> VTable<T> {
    let (horizon, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut v = VTable::zeros(horizon, ns);
    let mut probs = vec![T::zero(); na];
    for h in (0..horizon).rev() {
        let next = v.stage(h + 1).to_vec();
        let current = v.stage_mut(h);
        for (s, slot) in current.iter_mut().enumerate() {
            policy.probabilities(h, s, &mut probs);
            *slot = (0..na)
                .filter(|&a| probs[a] != T::zero())
                .fold(T::zero(), |acc, a| acc + probs[a] * mdp.backup(h, s, a, &next));
        }
    }
    v
}

/// `max_{h,s,a} |Q_h(s,a) − (R_h(s,a) + γ P_h V_{h+1})(s,a)|`.
pub fn bellman_residual<T: Scalar>(mdp: &EpisodicMdp<T>, q: &QTable<T>, v: &VTable<T>) -> T {
    let mut worst = T::zero();
    for h in 0..mdp.horizon() {
        let next = v.stage(h + 1);
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                worst = worst.max((q.get(h, s, a) - mdp.backup(h, s, a, next)).abs());
            }
        }
    }
    worst
}

/// States reachable at each stage from the initial state under any policy.
#[derive(Clone, Debug)]
pub struct Reachability {
    stages: Vec<Vec<usize>>,
}

impl Reachability {
    pub fn compute<T: Scalar>(mdp: &EpisodicMdp<T>) -> Self {
        let ns = mdp.num_states();
        let mut stages = Vec::with_capacity(mdp.horizon());
        let mut current = vec![mdp.initial_state()];
        let mut mark = vec![usize::MAX; ns];
        for h in 0..mdp.horizon() {
            let mut next = Vec::new();
            for &s in &current {
                for a in 0..mdp.num_actions() {
                    let (succ, probs) = mdp.transition_row(h, s, a);
                    for (&sp, &p) in succ.iter().zip(probs) {
                        if p > T::zero() && mark[sp] != h {
                            mark[sp] = h;
                            next.push(sp);
                        }
                    }
                }
            }
            next.sort_unstable();
            stages.push(std::mem::replace(&mut current, next));
        }
        Self { stages }
    }

    /// States reachable at each stage in at least one of `mdps`, which must
    /// share the state space and horizon.
    pub fn compute_union<T: Scalar>(mdps: &[&EpisodicMdp<T>]) -> Self {
        let mut stages: Vec<Vec<usize>> = Vec::new();
        for mdp in mdps {
            let one = Self::compute(*mdp);
            if stages.is_empty() {
                stages = one.stages;
                continue;
            }
            for (acc, add) in stages.iter_mut().zip(one.stages) {
                acc.extend(add);
                acc.sort_unstable();
                acc.dedup();
            }
        }
        Self { stages }
    }

    pub fn stage(&self, stage: usize) -> &[usize] {
        &self.stages[stage]
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn total(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }
}

/// `V^π_0(s_0)` by backward induction over reachable states only.
pub fn start_value<T: Scalar, P: Policy<T> + ?Sized>(
    mdp: &EpisodicMdp<T>,
    policy: &P,
    reach: &Reachability,
) -> T {
    let ns = mdp.num_states();
    let mut next = vec![T::zero(); ns];
    let mut current = vec![T::zero(); ns];
    let mut probs = vec![T::zero(); mdp.num_actions()];
    for h in (0..mdp.horizon()).rev() {
        for &s in reach.stage(h) {
            policy.probabilities(h, s, &mut probs);
            current[s] = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != T::zero())
                .fold(T::zero(), |acc, (a, &p)| acc + p * mdp.backup(h, s, a, &next));
        }
        std::mem::swap(&mut next, &mut current);
    }
    next[mdp.initial_state()]
}
