use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of a hypercubic grid: `side^dims` cells, state index is the
/// mixed-radix number whose digit `i` is coordinate `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub dims: usize,
    pub side: usize,
}

impl GridLayout {
    pub fn num_cells(&self) -> usize {
        self.side.pow(self.dims as u32)
    }

    pub fn coords(&self, state: usize) -> Vec<usize> {
        let mut rest = state;
        (0..self.dims)
            .map(|_| {
                let c = rest % self.side;
                rest /= self.side;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .rev()
            .fold(0, |acc, &c| acc * self.side + c)
    }
}

/// Sparse stage-indexed rows keyed by `(stage, state, action)`.
///
/// Holds either one block shared by every stage or one block per stage.
/// Used for transition probabilities and for external density-ratio tables,
/// which share the same on-disk layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SparseRows<T> {
    stages: usize,
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    next: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseRows<T> {
    /// Builds rows from a generator returning `(next_state, value)` pairs.
    /// Duplicate next states are merged and entries are kept sorted.
    pub fn from_fn(
        stages: usize,
        num_states: usize,
        num_actions: usize,
        mut row: impl FnMut(usize, usize, usize) -> Vec<(usize, T)>,
    ) -> Self {
        let mut offsets = Vec::with_capacity(stages * num_states * num_actions + 1);
        let mut next = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for h in 0..stages {
            for s in 0..num_states {
                for a in 0..num_actions {
                    let mut entries = row(h, s, a);
                    entries.sort_by_key(|e| e.0);
                    let start = next.len();
                    for (sp, v) in entries {
                        if next.len() > start && *next.last().unwrap() == sp {
                            let last = values.last_mut().unwrap();
                            *last = *last + v;
                        } else {
                            next.push(sp);
                            values.push(v);
                        }
                    }
                    offsets.push(next.len());
                }
            }
        }
        Self {
            stages,
            num_states,
            num_actions,
            offsets,
            next,
            values,
        }
    }

    /// Dense constructor: `dense[h][s][a][s']`, zero entries dropped.
    pub fn from_dense(dense: &[Vec<Vec<Vec<T>>>]) -> Result<Self> {
        let stages = dense.len();
        let num_states = dense.first().map_or(0, Vec::len);
        let num_actions = dense
            .first()
            .and_then(|d| d.first())
            .map_or(0, Vec::len);
        for block in dense {
            if block.len() != num_states
                || block
                    .iter()
                    .any(|s| s.len() != num_actions || s.iter().any(|r| r.len() != num_states))
            {
                return Err(Error::Dimension("ragged dense transition table".into()));
            }
        }
        Ok(Self::from_fn(stages, num_states, num_actions, |h, s, a| {
            dense[h][s][a]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != T::zero())
                .map(|(sp, &p)| (sp, p))
                .collect()
        }))
    }

    /// Number of stored stage blocks (1 when shared across stages).
    pub fn stored_stages(&self) -> usize {
        self.stages
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    fn row_index(&self, stage: usize, state: usize, action: usize) -> usize {
        let h = if self.stages == 1 { 0 } else { stage };
        (h * self.num_states + state) * self.num_actions + action
    }

    /// `(next_states, values)` for one row.
    #[inline]
    pub fn row(&self, stage: usize, state: usize, action: usize) -> (&[usize], &[T]) {
        let r = self.row_index(stage, state, action);
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        (&self.next[lo..hi], &self.values[lo..hi])
    }

    /// Value at `(stage, state, action, next_state)`, zero when absent.
    pub fn get(&self, stage: usize, state: usize, action: usize, next_state: usize) -> T {
        let (next, values) = self.row(stage, state, action);
        match next.binary_search(&next_state) {
            Ok(i) => values[i],
            Err(_) => T::zero(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Stage-indexed reward table `R_h(s, a)`; one block may be shared by all stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RewardTable<T> {
    stages: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> RewardTable<T> {
    pub fn from_fn(
        stages: usize,
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut values = Vec::with_capacity(stages * num_states * num_actions);
        for h in 0..stages {
            for s in 0..num_states {
                for a in 0..num_actions {
                    values.push(f(h, s, a));
                }
            }
        }
        Self {
            stages,
            num_states,
            num_actions,
            values,
        }
    }

    #[inline]
    pub fn get(&self, stage: usize, state: usize, action: usize) -> T {
        let h = if self.stages == 1 { 0 } else { stage };
        self.values[(h * self.num_states + state) * self.num_actions + action]
    }

    pub fn stored_stages(&self) -> usize {
        self.stages
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            stages: self.stages,
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.stages, self.num_states, self.num_actions)
    }
}

/// Finite-horizon MDP with stage-indexed transitions and deterministic rewards.
///
/// Stages are zero-based: `0..horizon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpisodicMdp<T> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: T,
    transitions: SparseRows<T>,
    rewards: RewardTable<T>,
    initial_state: usize,
    #[serde(default)]
    layout: Option<GridLayout>,
}

impl<T: Scalar> EpisodicMdp<T> {
    /// Validates and assembles an MDP.
    ///
    /// The discount may be zero (the myopic limit); otherwise it must lie in
    /// `(0, 1]`.
    pub fn new(
        horizon: usize,
        discount: T,
        transitions: SparseRows<T>,
        rewards: RewardTable<T>,
        initial_state: usize,
    ) -> Result<Self> {
        let mdp = Self {
            num_states: transitions.num_states(),
            num_actions: transitions.num_actions(),
            horizon,
            discount,
            transitions,
            rewards,
            initial_state,
            layout: None,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_layout(mut self, layout: GridLayout) -> Result<Self> {
        if layout.num_cells() != self.num_states {
            return Err(Error::InvalidMdp(format!(
                "grid layout has {} cells but MDP has {} states",
                layout.num_cells(),
                self.num_states
            )));
        }
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 || self.horizon == 0 {
            return Err(Error::InvalidMdp(
                "states, actions and horizon must all be positive".into(),
            ));
        }
        if !(self.discount >= T::zero() && self.discount <= T::one()) {
            return Err(Error::InvalidMdp(format!(
                "discount {} outside [0, 1]",
                self.discount
            )));
        }
        if self.initial_state >= self.num_states {
            return Err(Error::OutOfRange {
                what: "initial state",
                index: self.initial_state,
                limit: self.num_states,
            });
        }
        for (what, stored) in [
            ("transition", self.transitions.stored_stages()),
            ("reward", self.rewards.stored_stages()),
        ] {
            if stored != 1 && stored != self.horizon {
                return Err(Error::InvalidMdp(format!(
                    "{what} table has {stored} stage blocks, expected 1 or {}",
                    self.horizon
                )));
            }
        }
        let (_, rs, ra) = self.rewards.shape();
        if rs != self.num_states || ra != self.num_actions {
            return Err(Error::InvalidMdp("reward table shape mismatch".into()));
        }
        if let Some(bad) = self.rewards.values().iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward at flat index {bad}")));
        }
        let tol = T::row_sum_tolerance();
        for h in 0..self.transitions.stored_stages() {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let (next, probs) = self.transitions.row(h, s, a);
                    if let Some(&sp) = next.iter().find(|&&sp| sp >= self.num_states) {
                        return Err(Error::OutOfRange {
                            what: "next state",
                            index: sp,
                            limit: self.num_states,
                        });
                    }
                    if probs.iter().any(|&p| !(p >= T::zero()) || !p.is_finite()) {
                        return Err(Error::InvalidMdp(format!(
                            "negative or non-finite probability in row (h={h}, s={s}, a={a})"
                        )));
                    }
                    let total: T = probs.iter().copied().sum();
                    if (total - T::one()).abs() > tol {
                        return Err(Error::InvalidMdp(format!(
                            "row (h={h}, s={s}, a={a}) sums to {total}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn layout(&self) -> Option<GridLayout> {
        self.layout
    }

    pub fn transitions(&self) -> &SparseRows<T> {
        &self.transitions
    }

    pub fn rewards(&self) -> &RewardTable<T> {
        &self.rewards
    }

    #[inline]
    pub fn reward(&self, stage: usize, state: usize, action: usize) -> T {
        self.rewards.get(stage, state, action)
    }

    #[inline]
    pub fn transition_row(&self, stage: usize, state: usize, action: usize) -> (&[usize], &[T]) {
        self.transitions.row(stage, state, action)
    }

    pub fn transition_prob(&self, stage: usize, state: usize, action: usize, next: usize) -> T {
        self.transitions.get(stage, state, action, next)
    }

    /// `R_h(s,a) + γ Σ_{s'} P_h(s'|s,a) v(s')`.
    pub fn backup(&self, stage: usize, state: usize, action: usize, v_next: &[T]) -> T {
        let (next, probs) = self.transition_row(stage, state, action);
        let ev = next
            .iter()
            .zip(probs)
            .fold(T::zero(), |acc, (&sp, &p)| acc + p * v_next[sp]);
        self.reward(stage, state, action) + self.discount * ev
    }

    /// Copy with a different reward table (same transitions).
    pub fn with_rewards(&self, rewards: RewardTable<T>) -> Result<Self> {
        let mdp = Self {
            rewards,
            ..self.clone()
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn max_abs_reward(&self) -> T {
        self.rewards
            .values()
            .iter()
            .fold(T::zero(), |m, r| m.max(r.abs()))
    }

    pub fn check_indices(&self, stage: usize, state: usize, action: usize) -> Result<()> {
        if stage >= self.horizon {
            return Err(Error::OutOfRange {
                what: "stage",
                index: stage,
                limit: self.horizon,
            });
        }
        if state >= self.num_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: state,
                limit: self.num_states,
            });
        }
        if action >= self.num_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: action,
                limit: self.num_actions,
            });
        }
        Ok(())
    }
}

/// Samples `s' ~ P_h(·|s,a)` and returns the deterministic reward `R_h(s,a)`.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    mdp: &EpisodicMdp<T>,
    state: usize,
    action: usize,
    stage: usize,
    rng: &mut R,
) -> Result<(T, usize)> {
    mdp.check_indices(stage, state, action)?;
    let (next, probs) = mdp.transition_row(stage, state, action);
    let reward = mdp.reward(stage, state, action);
    if next.len() == 1 {
        return Ok((reward, next[0]));
    }
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    for (&sp, &p) in next.iter().zip(probs) {
        acc = acc + p;
        if u < acc {
            return Ok((reward, sp));
        }
    }
    // Rounding left u above the accumulated mass; take the last supported state.
    Ok((reward, *next.last().expect("validated rows are non-empty")))
}
