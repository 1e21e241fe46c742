//! Tabular learners: the two-stage baseline/correction tables and the
//! single-table Q-learning baselines.

use serde::{Deserialize, Serialize};

use crate::align::{residual_label, rwt_pseudo_label, DensityRatioProvider};
use crate::env::{QTable, TransitionSample, TARGET_TASK};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A stage-indexed Q table with its initial value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TabularQ<T> {
    pub table: QTable<T>,
    pub init_value: T,
}

impl<T: Scalar> TabularQ<T> {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, init_value: T) -> Self {
        Self {
            table: QTable::filled(horizon, num_states, num_actions, init_value),
            init_value,
        }
    }

    /// `max_a Q(stage, s, a)` for every state; zeros past the horizon.
    pub fn state_values(&self, stage: usize) -> Vec<T> {
        state_values(self.table.num_states(), |s| {
            if stage >= self.table.horizon() {
                T::zero()
            } else {
                self.table.max_value(stage, s)
            }
        })
    }
}

fn state_values<T: Scalar>(num_states: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..num_states).map(f).collect()
}

/// Baseline `q_base` fitted on aligned source labels plus a correction
/// `delta` fitted on target residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TwoStageTables<T> {
    pub q_base: QTable<T>,
    pub delta: QTable<T>,
}

impl<T: Scalar> TwoStageTables<T> {
    /// `q_base` starts at `init_value`, `delta` at zero.
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, init_value: T) -> Self {
        Self {
            q_base: QTable::filled(horizon, num_states, num_actions, init_value),
            delta: QTable::filled(horizon, num_states, num_actions, T::zero()),
        }
    }

    pub fn q_trans(&self, stage: usize, state: usize, action: usize) -> T {
        self.q_base.get(stage, state, action) + self.delta.get(stage, state, action)
    }

    pub fn q_trans_row(&self, stage: usize, state: usize, out: &mut [T]) {
        let base = self.q_base.row(stage, state);
        let delta = self.delta.row(stage, state);
        for ((o, &b), &d) in out.iter_mut().zip(base).zip(delta) {
            *o = b + d;
        }
    }

    /// `max_a (q_base + delta)(stage, s, a)` for every state; zeros past the
    /// horizon.
    pub fn state_values(&self, stage: usize) -> Vec<T> {
        let na = self.q_base.num_actions();
        state_values(self.q_base.num_states(), |s| {
            if stage >= self.q_base.horizon() {
                return T::zero();
            }
            (0..na)
                .map(|a| self.q_trans(stage, s, a))
                .fold(T::neg_infinity(), T::max)
        })
    }

    /// The combined table `q_base + delta`.
    pub fn combined(&self) -> QTable<T> {
        self.q_base.zip_map(&self.delta, |b, d| b + d)
    }
}

fn check_stage<T>(samples: &[&TransitionSample<T>], stage: usize) -> Result<()> {
    if let Some(bad) = samples.iter().find(|x| x.stage != stage) {
        return Err(Error::InvalidSpec(format!(
            "sample from stage {} in a stage-{stage} batch",
            bad.stage
        )));
    }
    Ok(())
}

/// Ratio provider for the task that produced `sample` (sources are numbered
/// from 1, `providers[m - 1]` belongs to source `m`).
fn provider_for<'a, T>(
    providers: &'a [DensityRatioProvider<T>],
    sample: &TransitionSample<T>,
) -> Result<&'a DensityRatioProvider<T>> {
    sample
        .task_id
        .checked_sub(1)
        .and_then(|i| providers.get(i))
        .ok_or(Error::OutOfRange {
            what: "source task id",
            index: sample.task_id,
            limit: providers.len() + 1,
        })
}

/// One two-stage step at `stage` with continuation values from
/// `stage + 1` of the same tables.
///
/// Source samples move `q_base` toward `r + γ ω V_next(s')`; target samples
/// then move `delta` toward `r + γ V_next(s') − q_base(s, a)`.
pub fn tabular_two_stage_update<T: Scalar>(
    tables: &mut TwoStageTables<T>,
    stage: usize,
    source_batch: &[&TransitionSample<T>],
    target_batch: &[&TransitionSample<T>],
    providers: &[DensityRatioProvider<T>],
    discount: T,
    lr: T,
) -> Result<()> {
    check_stage(source_batch, stage)?;
    check_stage(target_batch, stage)?;
    if source_batch.is_empty() && target_batch.is_empty() {
        return Ok(());
    }
    let v_next = tables.state_values(stage + 1);
    for sample in source_batch {
        if sample.task_id == TARGET_TASK {
            return Err(Error::InvalidSpec("target sample in the source batch".into()));
        }
        let omega = provider_for(providers, sample)?.ratio(stage, sample.state, sample.action, sample.next_state)?;
        let y = rwt_pseudo_label(sample, omega, &v_next, discount).value;
        let q = tables.q_base.get(stage, sample.state, sample.action);
        tables.q_base.set(stage, sample.state, sample.action, q + lr * (y - q));
    }
    for sample in target_batch {
        if sample.task_id != TARGET_TASK {
            return Err(Error::InvalidSpec("source sample in the target batch".into()));
        }
        let base = &tables.q_base;
        let z = residual_label(sample, |s, a| base.get(stage, s, a), &v_next, discount).value;
        let d = tables.delta.get(stage, sample.state, sample.action);
        tables.delta.set(stage, sample.state, sample.action, d + lr * (z - d));
    }
    Ok(())
}

/// Which samples a single-table baseline may train on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    TargetOnly,
    NaivePooled,
}

/// Plain Q-learning step `q += lr (r + γ max_a' q(h+1, s', a') − q)` for
/// every sample of the batch, treating source samples as if they were
/// target samples.
pub fn tabular_baseline_update<T: Scalar>(
    q: &mut TabularQ<T>,
    stage: usize,
    batch: &[&TransitionSample<T>],
    discount: T,
    lr: T,
    kind: BaselineKind,
) -> Result<()> {
    check_stage(batch, stage)?;
    if kind == BaselineKind::TargetOnly && batch.iter().any(|x| x.task_id != TARGET_TASK) {
        return Err(Error::InvalidSpec("target-only batch contains source samples".into()));
    }
    if batch.is_empty() {
        return Ok(());
    }
    let v_next = q.state_values(stage + 1);
    for sample in batch {
        let y = sample.reward + discount * v_next[sample.next_state];
        let cur = q.table.get(stage, sample.state, sample.action);
        q.table.set(stage, sample.state, sample.action, cur + lr * (y - cur));
    }
    Ok(())
}

/// Errors when a value is non-finite or exceeds `bound` in magnitude.
pub fn check_divergence<T: Scalar>(table: &QTable<T>, bound: T, episode: usize) -> Result<()> {
    let h_count = table.horizon();
    let per_stage = table.num_states() * table.num_actions();
    for (i, &v) in table.values().iter().enumerate() {
        if !v.is_finite() || v.abs() > bound {
            return Err(Error::Divergence {
                episode,
                stage: (i / per_stage).min(h_count.saturating_sub(1)),
                reason: format!("value {v} outside ±{bound}"),
            });
        }
    }
    Ok(())
}
