//! Bellman alignment of source data.
//!
//! A source transition `(s, a, r, s')` from task `m` becomes a target-task
//! regression label `y = r + γ ω(s'|s,a) V⁰(s')`, where `V⁰` is the target
//! continuation value and `ω = p⁰/pᵐ` the transition density ratio. In
//! expectation this equals the target Bellman backup minus the one-step
//! reward difference `R⁰ − Rᵐ`, whatever `V⁰` is.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EpisodicMdp, SparseRows, TransitionSample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub enum DensityRatioProvider<T> {
    /// `ω ≡ 1`: transitions are shared, or their mismatch is left to the
    /// correction stage.
    Identity,
    /// `ω = p⁰(s'|s,a) / pᵐ(s'|s,a)` from known transition tables.
    ExactTabular {
        target: Arc<SparseRows<T>>,
        source: Arc<SparseRows<T>>,
    },
    /// Externally supplied `ω̂_h(s'|s,a)`; absent entries read as zero.
    Table(Arc<SparseRows<T>>),
}

impl<T: Scalar> DensityRatioProvider<T> {
    pub fn exact(target: &EpisodicMdp<T>, source: &EpisodicMdp<T>) -> Result<Self> {
        if target.num_states() != source.num_states() || target.num_actions() != source.num_actions() {
            return Err(Error::Dimension(
                "target and source MDPs have different state/action spaces".into(),
            ));
        }
        Ok(Self::ExactTabular {
            target: Arc::new(target.transitions().clone()),
            source: Arc::new(source.transitions().clone()),
        })
    }

    pub fn table(values: SparseRows<T>) -> Result<Self> {
        if values.values().iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidMdp(
                "density-ratio table entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self::Table(Arc::new(values)))
    }

    /// `ω_h(s'|s,a)`.
    ///
    /// For exact ratios, a next state the source cannot reach yields 0 when
    /// the target cannot reach it either, and an absolute-continuity error
    /// otherwise.
    pub fn ratio(&self, stage: usize, state: usize, action: usize, next_state: usize) -> Result<T> {
        match self {
            Self::Identity => Ok(T::one()),
            Self::Table(values) => Ok(values.get(stage, state, action, next_state)),
            Self::ExactTabular { target, source } => {
                let p0 = target.get(stage, state, action, next_state);
                let pm = source.get(stage, state, action, next_state);
                if pm > T::zero() {
                    Ok(p0 / pm)
                } else if p0 > T::zero() {
                    Err(Error::AbsoluteContinuity {
                        stage,
                        state,
                        action,
                        next_state,
                    })
                } else {
                    Ok(T::zero())
                }
            }
        }
    }

    /// Largest ratio over the support of the source rows (1 for identity).
    pub fn max_ratio(&self) -> T {
        match self {
            Self::Identity => T::one(),
            Self::Table(values) => values.values().iter().copied().fold(T::zero(), T::max),
            Self::ExactTabular { target, source } => {
                let mut worst = T::zero();
                for h in 0..source.stored_stages().max(target.stored_stages()) {
                    for s in 0..source.num_states() {
                        for a in 0..source.num_actions() {
                            let (next, probs) = source.row(h, s, a);
                            for (&sp, &pm) in next.iter().zip(probs) {
                                if pm > T::zero() {
                                    worst = worst.max(target.get(h, s, a, sp) / pm);
                                }
                            }
                        }
                    }
                }
                worst
            }
        }
    }
}

/// Stage I regression target built from one source transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PseudoLabel<T> {
    pub value: T,
    pub sample: TransitionSample<T>,
    pub stage: usize,
}

impl<T: Scalar> PseudoLabel<T> {
    /// `|y| ≤ r_max + γ ω_max V_max`.
    pub fn within_bound(&self, r_max: T, discount: T, omega_max: T, v_max: T) -> bool {
        self.value.is_finite() && self.value.abs() <= r_max + discount * omega_max * v_max
    }
}

/// Stage II regression target built from one target transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ResidualLabel<T> {
    pub value: T,
    /// Plain target Bellman sample `r + γ V(s')` before the baseline is removed.
    pub bellman_sample: T,
    pub sample: TransitionSample<T>,
    pub stage: usize,
}

/// `y = r + γ ω V_next(s')`. `v_next` is indexed by state; pass zeros at the
/// last stage.
pub fn rwt_pseudo_label<T: Scalar>(
    sample: &TransitionSample<T>,
    omega: T,
    v_next: &[T],
    discount: T,
) -> PseudoLabel<T> {
    let continuation = if discount == T::zero() {
        T::zero()
    } else {
        discount * omega * v_next[sample.next_state]
    };
    PseudoLabel {
        value: sample.reward + continuation,
        sample: *sample,
        stage: sample.stage,
    }
}

/// `z = r + γ V_next(s') − Q_base(s, a)`.
pub fn residual_label<T: Scalar>(
    sample: &TransitionSample<T>,
    q_base: impl Fn(usize, usize) -> T,
    v_next: &[T],
    discount: T,
) -> ResidualLabel<T> {
    let y = sample.reward + discount * v_next[sample.next_state];
    ResidualLabel {
        value: y - q_base(sample.state, sample.action),
        bellman_sample: y,
        sample: *sample,
        stage: sample.stage,
    }
}

/// Exact aligned backup `Rᵐ_h(s,a) + γ Σ_{s'} Pᵐ_h(s'|s,a) ω(s'|s,a) V(s')`.
pub fn rwt_backup_exact<T: Scalar>(
    source: &EpisodicMdp<T>,
    provider: &DensityRatioProvider<T>,
    v_target_next: &[T],
    stage: usize,
    state: usize,
    action: usize,
) -> Result<T> {
    let (next, probs) = source.transition_row(stage, state, action);
    let mut expectation = T::zero();
    for (&sp, &p) in next.iter().zip(probs) {
        if p > T::zero() {
            expectation = expectation + p * provider.ratio(stage, state, action, sp)? * v_target_next[sp];
        }
    }
    Ok(source.reward(stage, state, action) + source.discount() * expectation)
}

/// Root-mean-square ratio error `sqrt(mean((ω̂ − ω)²))`; zero for empty input.
pub fn ratio_error_diagnostic<T: Scalar>(estimates: &[T], truths: &[T]) -> Result<T> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension(format!(
            "{} ratio estimates vs {} true ratios",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Ok(T::zero());
    }
    let sq: T = estimates
        .iter()
        .zip(truths)
        .map(|(&e, &t)| (e - t) * (e - t))
        .sum();
    Ok((sq / T::from_usize_lossy(estimates.len())).sqrt())
}
