//! Kernel two-stage estimator with optimistic exploration.
//!
//! Each stage keeps a source design (baseline regression on aligned
//! pseudo-labels) and a growing target design (correction regression on
//! residual labels). Both are evaluated over a fixed finite domain of
//! reachable state-action pairs through [`DomainCache`], so one backward pass
//! costs `O(n_src² + n_tgt² + (n_src + n_tgt)·|D|)` per stage.

use serde::{Deserialize, Serialize};

use super::bonus::{bonus_from_variances, optimistic_q, BonusParams};
use crate::align::{residual_label, rwt_pseudo_label, DensityRatioProvider};
use crate::env::{argmax, EpisodicMdp, GridLayout, QTable, Reachability, TransitionSample, TARGET_TASK};
use crate::error::{Error, Result};
use crate::kernel::{coverage_constant, ComplexityDiagnostics, DomainCache, KernelSpec, KrrModel, UncertaintyState};
use crate::scalar::Scalar;

/// Maps `(s, a)` to a kernel input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateActionEncoder {
    /// One-hot state followed by one-hot action.
    OneHot { num_states: usize, num_actions: usize },
    /// Grid coordinates scaled to `[0, 1]` followed by one-hot action.
    GridCoords { layout: GridLayout, num_actions: usize },
}

impl StateActionEncoder {
    /// Grid coordinates when the MDP carries a layout, one-hot otherwise.
    pub fn for_mdp<T: Scalar>(mdp: &EpisodicMdp<T>) -> Self {
        match mdp.layout() {
            Some(layout) => Self::GridCoords {
                layout,
                num_actions: mdp.num_actions(),
            },
            None => Self::OneHot {
                num_states: mdp.num_states(),
                num_actions: mdp.num_actions(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::OneHot { num_states, num_actions } => num_states + num_actions,
            Self::GridCoords { layout, num_actions } => layout.dims + num_actions,
        }
    }

    pub fn encode<T: Scalar>(&self, state: usize, action: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim()];
        match self {
            Self::OneHot { num_states, .. } => {
                x[state] = T::one();
                x[num_states + action] = T::one();
            }
            Self::GridCoords { layout, .. } => {
                let denom = T::from_usize_lossy(layout.side.saturating_sub(1).max(1));
                for (xi, c) in x.iter_mut().zip(layout.coords(state)) {
                    *xi = T::from_usize_lossy(c) / denom;
                }
                x[layout.dims + action] = T::one();
            }
        }
        x
    }
}

fn ratio_for<T: Scalar>(providers: &[DensityRatioProvider<T>], sample: &TransitionSample<T>) -> Result<T> {
    let provider = sample
        .task_id
        .checked_sub(1)
        .and_then(|i| providers.get(i))
        .ok_or(Error::OutOfRange {
            what: "source task id",
            index: sample.task_id,
            limit: providers.len() + 1,
        })?;
    provider.ratio(sample.stage, sample.state, sample.action, sample.next_state)
}

/// Stage I: kernel ridge regression on pooled pseudo-labels
/// `y = r + γ ω V_next(s')` from every source sample.
pub fn stage1_fit_kernel<T: Scalar>(
    source_samples: &[&TransitionSample<T>],
    providers: &[DensityRatioProvider<T>],
    v_next: &[T],
    discount: T,
    encoder: &StateActionEncoder,
    kernel: KernelSpec<T>,
    ridge: T,
) -> Result<KrrModel<T>> {
    let mut inputs = Vec::with_capacity(source_samples.len());
    let mut labels = Vec::with_capacity(source_samples.len());
    for sample in source_samples {
        let omega = ratio_for(providers, sample)?;
        labels.push(rwt_pseudo_label(sample, omega, v_next, discount).value);
        inputs.push(encoder.encode(sample.state, sample.action));
    }
    KrrModel::fit(inputs, labels, kernel, ridge)
}

/// Stage II: kernel ridge regression on residual labels
/// `z = r + γ V_next(s') − q_base(s, a)` from target samples.
pub fn stage2_fit_kernel<T: Scalar>(
    target_samples: &[&TransitionSample<T>],
    q_base: impl Fn(usize, usize) -> T,
    v_next: &[T],
    discount: T,
    encoder: &StateActionEncoder,
    kernel: KernelSpec<T>,
    ridge: T,
) -> Result<KrrModel<T>> {
    let mut inputs = Vec::with_capacity(target_samples.len());
    let mut labels = Vec::with_capacity(target_samples.len());
    for sample in target_samples {
        labels.push(residual_label(sample, &q_base, v_next, discount).value);
        inputs.push(encoder.encode(sample.state, sample.action));
    }
    KrrModel::fit(inputs, labels, kernel, ridge)
}

#[derive(Clone, Debug)]
struct StageModel<T> {
    /// `state * A + action` → domain index, `usize::MAX` outside the domain.
    index: Vec<usize>,
    source: UncertaintyState<T>,
    source_cache: DomainCache<T>,
    source_samples: Vec<TransitionSample<T>>,
    source_ratios: Vec<T>,
    target: UncertaintyState<T>,
    target_cache: DomainCache<T>,
    target_samples: Vec<TransitionSample<T>>,
    /// Optimistic values over the domain.
    q: Vec<T>,
    q_base: Vec<T>,
    delta: Vec<T>,
    bonus: Vec<T>,
}

/// Settings of [`KernelOfuAgent`].
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOfuSettings<T> {
    pub source_kernel: KernelSpec<T>,
    pub correction_kernel: KernelSpec<T>,
    pub bonus: BonusParams,
    pub encoder: StateActionEncoder,
}

/// Two-stage kernel estimator acting greedily on optimistic values.
#[derive(Clone, Debug)]
pub struct KernelOfuAgent<T> {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    discount: T,
    settings: KernelOfuSettings<T>,
    providers: Vec<DensityRatioProvider<T>>,
    stages: Vec<StageModel<T>>,
    updates: Vec<usize>,
}

impl<T: Scalar> KernelOfuAgent<T> {
    /// Builds the agent over the state-action pairs reachable in the target
    /// or any source. `providers[m - 1]` aligns source `m` to the target.
    pub fn new(
        target: &EpisodicMdp<T>,
        sources: &[&EpisodicMdp<T>],
        providers: Vec<DensityRatioProvider<T>>,
        settings: KernelOfuSettings<T>,
    ) -> Result<Self> {
        settings.bonus.validate()?;
        if providers.len() != sources.len() {
            return Err(Error::Config(format!(
                "{} ratio providers for {} sources",
                providers.len(),
                sources.len()
            )));
        }
        if settings.bonus.horizon != target.horizon() {
            return Err(Error::Config(format!(
                "bonus horizon {} differs from the MDP horizon {}",
                settings.bonus.horizon,
                target.horizon()
            )));
        }
        let (h_count, ns, na) = (target.horizon(), target.num_states(), target.num_actions());
        let mut all = vec![target];
        all.extend_from_slice(sources);
        let reach = Reachability::compute_union(&all);
        let ridge = T::lit(settings.bonus.ridge);
        let ridge_c = T::lit(settings.bonus.ridge_correction);
        let mut stages = Vec::with_capacity(h_count);
        for h in 0..h_count {
            let mut index = vec![usize::MAX; ns * na];
            let mut domain = Vec::new();
            for &s in reach.stage(h) {
                for a in 0..na {
                    index[s * na + a] = domain.len();
                    domain.push(settings.encoder.encode(s, a));
                }
            }
            let source = UncertaintyState::new(settings.source_kernel.clone(), ridge)?;
            let target_state = UncertaintyState::new(settings.correction_kernel.clone(), ridge_c)?;
            let cap = T::from_usize_lossy(h_count - h);
            stages.push(StageModel {
                index,
                source_cache: DomainCache::new(&source, domain.clone()),
                target_cache: DomainCache::new(&target_state, domain),
                source,
                target: target_state,
                source_samples: Vec::new(),
                source_ratios: Vec::new(),
                target_samples: Vec::new(),
                q: vec![cap; reach.stage(h).len() * na],
                q_base: vec![T::zero(); reach.stage(h).len() * na],
                delta: vec![T::zero(); reach.stage(h).len() * na],
                bonus: vec![cap; reach.stage(h).len() * na],
            });
        }
        Ok(Self {
            horizon: h_count,
            num_states: ns,
            num_actions: na,
            discount: target.discount(),
            settings,
            providers,
            stages,
            updates: vec![0; h_count],
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn domain_slot(&self, stage: usize, state: usize, action: usize) -> Option<usize> {
        let j = self.stages[stage].index[state * self.num_actions + action];
        (j != usize::MAX).then_some(j)
    }

    /// Current optimistic `Q_{n,h}(s, a)`; the cap `H − h` outside the domain.
    pub fn q_value(&self, stage: usize, state: usize, action: usize) -> T {
        match self.domain_slot(stage, state, action) {
            Some(j) => self.stages[stage].q[j],
            None => T::from_usize_lossy(self.horizon - stage),
        }
    }

    /// `(q_base, delta, bonus)` at a domain point, `None` outside the domain.
    pub fn components(&self, stage: usize, state: usize, action: usize) -> Option<(T, T, T)> {
        self.domain_slot(stage, state, action).map(|j| {
            let m = &self.stages[stage];
            (m.q_base[j], m.delta[j], m.bonus[j])
        })
    }

    pub fn greedy_action(&self, stage: usize, state: usize) -> usize {
        argmax((0..self.num_actions).map(|a| self.q_value(stage, state, a)))
    }

    pub fn q_table(&self) -> QTable<T> {
        let mut q = QTable::filled(self.horizon, self.num_states, self.num_actions, T::zero());
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    q.set(h, s, a, self.q_value(h, s, a));
                }
            }
        }
        q
    }

    /// Completed backward-pass updates per stage.
    pub fn update_counts(&self) -> &[usize] {
        &self.updates
    }

    pub fn num_source_samples(&self, stage: usize) -> usize {
        self.stages[stage].source_samples.len()
    }

    pub fn num_target_samples(&self, stage: usize) -> usize {
        self.stages[stage].target_samples.len()
    }

    fn check_sample(&self, sample: &TransitionSample<T>) -> Result<usize> {
        if sample.stage >= self.horizon {
            return Err(Error::OutOfRange {
                what: "stage",
                index: sample.stage,
                limit: self.horizon,
            });
        }
        self.domain_slot(sample.stage, sample.state, sample.action)
            .ok_or_else(|| Error::InvalidSpec(format!(
                "state-action ({}, {}) at stage {} is unreachable",
                sample.state, sample.action, sample.stage
            )))
    }

    /// Adds source transitions to the baseline designs.
    pub fn add_source_samples<'a>(&mut self, samples: impl IntoIterator<Item = &'a TransitionSample<T>>) -> Result<()>
    where
        T: 'a,
    {
        let mut touched = vec![false; self.horizon];
        let mut grouped: Vec<Vec<(TransitionSample<T>, T)>> = vec![Vec::new(); self.horizon];
        for sample in samples {
            if sample.task_id == TARGET_TASK {
                return Err(Error::InvalidSpec("target sample passed as source data".into()));
            }
            self.check_sample(sample)?;
            let omega = ratio_for(&self.providers, sample)?;
            grouped[sample.stage].push((*sample, omega));
            touched[sample.stage] = true;
        }
        for (h, group) in grouped.into_iter().enumerate() {
            if !touched[h] {
                continue;
            }
            let enc = &self.settings.encoder;
            let model = &mut self.stages[h];
            let mut inputs = model.source.inputs().to_vec();
            for (sample, omega) in group {
                inputs.push(enc.encode(sample.state, sample.action));
                model.source_samples.push(sample);
                model.source_ratios.push(omega);
            }
            // refactor in one go; cheaper than many rank-one appends for bulk loads
            model.source = UncertaintyState::with_inputs(
                self.settings.source_kernel.clone(),
                model.source.ridge(),
                inputs,
            )?;
            let domain = (0..model.source_cache.len())
                .map(|j| model.source_cache.point(j).to_vec())
                .collect();
            model.source_cache = DomainCache::new(&model.source, domain);
        }
        Ok(())
    }

    /// Adds one target transition to the correction design of its stage.
    pub fn add_target_sample(&mut self, sample: &TransitionSample<T>) -> Result<()> {
        if sample.task_id != TARGET_TASK {
            return Err(Error::InvalidSpec("source sample passed as target data".into()));
        }
        self.check_sample(sample)?;
        let x = self.settings.encoder.encode(sample.state, sample.action);
        let model = &mut self.stages[sample.stage];
        model.target.push(x)?;
        model.target_cache.sync(&model.target);
        model.target_samples.push(*sample);
        Ok(())
    }

    fn state_values(&self, stage: usize) -> Vec<T> {
        if stage >= self.horizon {
            return vec![T::zero(); self.num_states];
        }
        (0..self.num_states)
            .map(|s| {
                (0..self.num_actions)
                    .map(|a| self.q_value(stage, s, a))
                    .fold(T::neg_infinity(), T::max)
            })
            .collect()
    }

    /// Synchronous backward pass for 1-based `episode`: for `h = H−1, …, 0`,
    /// refit the baseline, then the correction, then set
    /// `Q_h = clip(q_base + δ + bonus)` using the stage `h + 1` values produced
    /// earlier in the same pass.
    pub fn backward_update(&mut self, episode: usize) -> Result<()> {
        let params = self.settings.bonus;
        let ridge = T::lit(params.ridge);
        let ridge_c = T::lit(params.ridge_correction);
        for h in (0..self.horizon).rev() {
            if h + 1 < self.horizon && self.updates[h + 1] != self.updates[h] + 1 {
                return Err(Error::Numerical(format!(
                    "stage {h} updated before stage {} in the same pass",
                    h + 1
                )));
            }
            let v_next = self.state_values(h + 1);
            let discount = self.discount;
            let model = &mut self.stages[h];

            let labels: Vec<T> = model
                .source_samples
                .iter()
                .zip(&model.source_ratios)
                .map(|(x, &w)| rwt_pseudo_label(x, w, &v_next, discount).value)
                .collect();
            let alpha_base = model.source.solve(&labels)?;
            model.q_base = model.source_cache.predict_all(&alpha_base);

            let residuals: Vec<T> = model
                .target_samples
                .iter()
                .map(|x| {
                    let base = &model.q_base;
                    let index = &model.index;
                    let na = self.num_actions;
                    residual_label(x, |s, a| base[index[s * na + a]], &v_next, discount).value
                })
                .collect();
            let alpha_delta = model.target.solve(&residuals)?;
            model.delta = model.target_cache.predict_all(&alpha_delta);

            let n_source = model.source_samples.len();
            for j in 0..model.q.len() {
                let var_s = model.source_cache.variance(j, ridge)?;
                let var_t = model.target_cache.variance(j, ridge_c)?;
                let b = bonus_from_variances(var_s, var_t, &params, episode, n_source);
                let q = optimistic_q(model.q_base[j] + model.delta[j], b, h, self.horizon, params.clip);
                if !q.is_finite() {
                    return Err(Error::Divergence {
                        episode,
                        stage: h,
                        reason: format!("non-finite optimistic value at domain point {j}"),
                    });
                }
                model.bonus[j] = b;
                model.q[j] = q;
            }
            self.updates[h] += 1;
        }
        Ok(())
    }

    /// Per-stage complexity diagnostics of the current designs.
    pub fn diagnostics(&self, episode: usize) -> Result<Vec<ComplexityDiagnostics>> {
        let p = &self.settings.bonus;
        let ridge = T::lit(p.ridge);
        self.stages
            .iter()
            .enumerate()
            .map(|(h, m)| {
                let variances = (0..m.source_cache.len())
                    .map(|j| m.source_cache.variance(j, ridge))
                    .collect::<Result<Vec<T>>>()?;
                Ok(ComplexityDiagnostics {
                    episode,
                    stage: h,
                    n: m.target.len(),
                    n_source: m.source.len(),
                    effective_dimension: m.source.effective_dimension().as_f64(),
                    information_gain: m.target.information_gain().as_f64(),
                    coverage_constant: coverage_constant(m.source.len(), &variances).as_f64(),
                    alpha0: p.alpha0,
                    alpha1: p.alpha1,
                    beta0: p.beta0,
                    beta1: p.beta1,
                })
            })
            .collect()
    }
}
