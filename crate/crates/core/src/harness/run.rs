//! The episodic training loop: roll out, update backwards over stages,
//! account regret against the exact oracle.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BatchSplit, EnvSource, ExperimentConfig, RatioKind, SourceSupply, Variant};
use super::data::{collect_source_pool, extend_source_pool, EnvBundle, ReplayBuffer};
use crate::align::DensityRatioProvider;
use crate::env::{
    rollout_with, start_value, value_iteration, DeterministicPolicy, EpisodicMdp, QTable, Reachability,
    TransitionSample, TARGET_TASK,
};
use crate::error::{Error, Result};
use crate::kernel::{ComplexityDiagnostics, KernelSpec};
use crate::learners::{
    check_divergence, select_action, tabular_baseline_update, tabular_two_stage_update, BaselineKind,
    KernelOfuAgent, KernelOfuSettings, StateActionEncoder, TabularQ, TwoStageTables,
};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    /// Undiscounted sum of rewards of the rollout.
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// `V*_0(s_0) − V^{π_n}_0(s_0)` of the greedy policy deployed in this episode.
    pub regret: f64,
    pub cum_regret: f64,
    pub epsilon: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub diagnostics: Vec<ComplexityDiagnostics>,
}

/// Cached optimal start value and reachable sets of the target.
#[derive(Clone, Debug)]
pub struct RegretOracle<T> {
    v_star: T,
    q_star: QTable<T>,
    reach: Reachability,
}

impl<T: Scalar> RegretOracle<T> {
    pub fn new(target: &EpisodicMdp<T>) -> Self {
        let (q_star, v) = value_iteration(target);
        Self {
            v_star: v.get(0, target.initial_state()),
            q_star,
            reach: Reachability::compute(target),
        }
    }

    pub fn optimal_value(&self) -> T {
        self.v_star
    }

    pub fn q_star(&self) -> &QTable<T> {
        &self.q_star
    }

    /// `V*_0(s_0) − V^π_0(s_0)`; errors if it is below `−1e-9`.
    pub fn regret(&self, target: &EpisodicMdp<T>, policy: &DeterministicPolicy) -> Result<T> {
        let gap = self.v_star - start_value(target, policy, &self.reach);
        let slack = T::lit(1e-9) * self.v_star.abs().max(T::one());
        if gap < -slack {
            return Err(Error::Numerical(format!(
                "policy value exceeds the optimum by {:e}",
                -gap
            )));
        }
        Ok(gap.max(T::zero()))
    }
}

/// Loads or builds the environment named by the config.
pub fn prepare_env<T: Scalar>(config: &ExperimentConfig) -> Result<EnvBundle<T>> {
    let mut bundle = match &config.env {
        EnvSource::Grid(spec) => EnvBundle::from_grid(spec, false)?,
        EnvSource::File(path) => EnvBundle::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read environment {}: {io}", path.display())),
            other => other,
        })?,
    };
    if config.rescale_rewards {
        bundle.rescale()?;
    }
    if bundle.target.horizon() != config.bonus.horizon {
        return Err(Error::Config(format!(
            "bonus.horizon = {} but the environment has horizon {}",
            config.bonus.horizon,
            bundle.target.horizon()
        )));
    }
    if config.variant.uses_sources() && bundle.sources.is_empty() {
        return Err(Error::Config(format!(
            "variant {} needs at least one source task",
            config.variant.name()
        )));
    }
    Ok(bundle)
}

fn providers<T: Scalar>(config: &ExperimentConfig, bundle: &EnvBundle<T>) -> Result<Vec<DensityRatioProvider<T>>> {
    bundle
        .sources
        .iter()
        .map(|src| match config.ratio {
            RatioKind::Identity => Ok(DensityRatioProvider::Identity),
            RatioKind::Exact => DensityRatioProvider::exact(&bundle.target, src),
        })
        .collect()
}

fn kernel_cast<T: Scalar>(k: &KernelSpec<f64>) -> KernelSpec<T> {
    match k {
        KernelSpec::Rbf { lengthscale, scale } => KernelSpec::Rbf {
            lengthscale: T::lit(*lengthscale),
            scale: T::lit(*scale),
        },
        KernelSpec::TabularDelta { scale } => KernelSpec::TabularDelta { scale: T::lit(*scale) },
        KernelSpec::Scaled { base, multiplier } => KernelSpec::scaled(kernel_cast(base), T::lit(*multiplier)),
    }
}

enum Learner<T> {
    TwoStage {
        tables: TwoStageTables<T>,
        providers: Vec<DensityRatioProvider<T>>,
    },
    Baseline {
        q: TabularQ<T>,
        kind: BaselineKind,
    },
    Kernel(Box<KernelOfuAgent<T>>),
}

impl<T: Scalar> Learner<T> {
    fn new(config: &ExperimentConfig, bundle: &EnvBundle<T>) -> Result<Self> {
        let t = &bundle.target;
        let (h, s, a) = (t.horizon(), t.num_states(), t.num_actions());
        let init = T::lit(config.init_value);
        Ok(match config.variant {
            Variant::RwtTabular => Learner::TwoStage {
                tables: TwoStageTables::new(h, s, a, init),
                providers: providers(config, bundle)?,
            },
            Variant::TargetOnly => Learner::Baseline {
                q: TabularQ::new(h, s, a, init),
                kind: BaselineKind::TargetOnly,
            },
            Variant::NaivePooled => Learner::Baseline {
                q: TabularQ::new(h, s, a, init),
                kind: BaselineKind::NaivePooled,
            },
            Variant::RwtKernelOfu => {
                let settings = KernelOfuSettings {
                    source_kernel: kernel_cast(&config.kernel),
                    correction_kernel: kernel_cast(&config.correction_kernel),
                    bonus: config.bonus,
                    encoder: StateActionEncoder::for_mdp(t),
                };
                let sources: Vec<_> = bundle.sources.iter().collect();
                Learner::Kernel(Box::new(KernelOfuAgent::new(
                    t,
                    &sources,
                    providers(config, bundle)?,
                    settings,
                )?))
            }
        })
    }

    fn q_value(&self, stage: usize, state: usize, action: usize) -> T {
        match self {
            Learner::TwoStage { tables, .. } => tables.q_trans(stage, state, action),
            Learner::Baseline { q, .. } => q.table.get(stage, state, action),
            Learner::Kernel(agent) => agent.q_value(stage, state, action),
        }
    }

    fn q_row(&self, stage: usize, state: usize, out: &mut [T]) {
        match self {
            Learner::TwoStage { tables, .. } => tables.q_trans_row(stage, state, out),
            Learner::Baseline { q, .. } => out.copy_from_slice(q.table.row(stage, state)),
            Learner::Kernel(agent) => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = agent.q_value(stage, state, a);
                }
            }
        }
    }

    fn check(&self, bound: T, episode: usize) -> Result<()> {
        match self {
            Learner::TwoStage { tables, .. } => {
                check_divergence(&tables.q_base, bound, episode)?;
                check_divergence(&tables.combined(), bound, episode)
            }
            Learner::Baseline { q, .. } => check_divergence(&q.table, bound, episode),
            Learner::Kernel(_) => Ok(()),
        }
    }
}

/// Uniform draws with replacement from the concatenation of `parts`.
fn draw_union<'a, T, R: Rng + ?Sized>(
    parts: &[&'a [TransitionSample<T>]],
    count: usize,
    rng: &mut R,
    out: &mut Vec<&'a TransitionSample<T>>,
) {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    if total == 0 {
        return;
    }
    for _ in 0..count {
        let mut i = rng.random_range(0..total);
        for p in parts {
            if i < p.len() {
                out.push(&p[i]);
                break;
            }
            i -= p.len();
        }
    }
}

struct TabularCtx<'a, T> {
    config: &'a ExperimentConfig,
    discount: T,
    lr: T,
}

fn tabular_backward_pass<T: Scalar, R: Rng + ?Sized>(
    learner: &mut Learner<T>,
    ctx: &TabularCtx<'_, T>,
    target_buf: &ReplayBuffer<T>,
    source_pool: &[ReplayBuffer<T>],
    rng: &mut R,
) -> Result<()> {
    let horizon = target_buf.horizon();
    let batch = ctx.config.batch_size;
    let mut src = Vec::with_capacity(batch);
    let mut tgt = Vec::with_capacity(batch);
    for h in (0..horizon).rev() {
        let src_parts: Vec<&[TransitionSample<T>]> = source_pool.iter().map(|b| b.stage(h)).collect();
        let tgt_part = [target_buf.stage(h)];
        for _ in 0..ctx.config.updates_per_stage {
            src.clear();
            tgt.clear();
            match learner {
                Learner::TwoStage { tables, providers } => {
                    let n_src: usize = src_parts.iter().map(|p| p.len()).sum();
                    let n_tgt = tgt_part[0].len();
                    let (k_src, k_tgt) = match ctx.config.batch_split {
                        BatchSplit::Proportional => {
                            // one draw over the union, then routed to its side
                            let mut k_src = 0;
                            for _ in 0..batch {
                                if rng.random_range(0..(n_src + n_tgt).max(1)) < n_src {
                                    k_src += 1;
                                }
                            }
                            (k_src, batch - k_src)
                        }
                        BatchSplit::Equal => match (n_src, n_tgt) {
                            (0, _) => (0, batch),
                            (_, 0) => (batch, 0),
                            _ => (batch / 2, batch - batch / 2),
                        },
                    };
                    draw_union(&src_parts, k_src, rng, &mut src);
                    draw_union(&tgt_part, k_tgt, rng, &mut tgt);
                    tabular_two_stage_update(tables, h, &src, &tgt, providers, ctx.discount, ctx.lr)?;
                }
                Learner::Baseline { q, kind } => {
                    match kind {
                        BaselineKind::TargetOnly => draw_union(&tgt_part, batch, rng, &mut tgt),
                        BaselineKind::NaivePooled => {
                            let mut all = src_parts.clone();
                            all.push(tgt_part[0]);
                            draw_union(&all, batch, rng, &mut tgt);
                        }
                    }
                    tabular_baseline_update(q, h, &tgt, ctx.discount, ctx.lr, *kind)?;
                }
                Learner::Kernel(_) => unreachable!("kernel learner has its own pass"),
            }
        }
    }
    Ok(())
}

/// Runs one seed of the configured experiment.
pub fn run_episode_loop<T: Scalar>(
    config: &ExperimentConfig,
    bundle: &EnvBundle<T>,
    oracle: &RegretOracle<T>,
    seed: u64,
) -> Result<RunResult> {
    config.validate()?;
    let target = &bundle.target;
    let (horizon, ns, na) = (target.horizon(), target.num_states(), target.num_actions());
    let mut env_rng: ChaCha8Rng = stream_rng(seed, Stream::TargetRollout);
    let mut agent_rng: ChaCha8Rng = stream_rng(seed, Stream::Agent);
    let mut source_rng: ChaCha8Rng = stream_rng(seed, Stream::SourceCollection);

    let sources: &[EpisodicMdp<T>] = if config.variant.uses_sources() {
        &bundle.sources
    } else {
        &[]
    };
    let (mut pool, mut collected) = match config.source {
        SourceSupply::Static { episodes } => (collect_source_pool(sources, episodes, &mut source_rng)?, episodes),
        SourceSupply::Growth { .. } => (collect_source_pool(sources, 0, &mut source_rng)?, 0),
    };
    let mut learner = Learner::new(config, bundle)?;
    if let Learner::Kernel(agent) = &mut learner {
        agent.add_source_samples(pool.iter().flat_map(ReplayBuffer::iter))?;
    }
    let mut target_buf = ReplayBuffer::new(TARGET_TASK, horizon);

    let init = T::lit(config.init_value.abs());
    let bound = T::lit(10.0) * T::from_usize_lossy(horizon) * bundle.max_abs_reward() + init;
    let ctx = TabularCtx {
        config,
        discount: target.discount(),
        lr: T::lit(config.lr),
    };
    let mut records = Vec::with_capacity(config.episodes);
    let mut diagnostics = Vec::new();
    let mut cum_regret = 0.0;
    let mut row = vec![T::zero(); na];

    for n in 1..=config.episodes {
        let started = Instant::now();
        let policy = DeterministicPolicy::greedy(horizon, ns, na, |h, s, a| learner.q_value(h, s, a));
        let regret = oracle.regret(target, &policy)?.as_f64();
        let epsilon = config.schedule.epsilon(n);

        let traj = rollout_with(target, TARGET_TASK, &mut env_rng, |h, s, _| {
            learner.q_row(h, s, &mut row);
            select_action(&row, &config.schedule, n, &mut agent_rng)
        })?;
        target_buf.extend(traj.samples())?;

        if let SourceSupply::Growth { kappa } = config.source {
            let due = (kappa * n as f64).floor() as usize;
            if due > collected {
                let before: Vec<Vec<usize>> = pool.iter().map(ReplayBuffer::stage_lens).collect();
                extend_source_pool(&mut pool, sources, due - collected, &mut source_rng)?;
                collected = due;
                if let Learner::Kernel(agent) = &mut learner {
                    let fresh: Vec<TransitionSample<T>> = pool
                        .iter()
                        .zip(&before)
                        .flat_map(|(b, lens)| b.samples_since(lens))
                        .copied()
                        .collect();
                    agent.add_source_samples(&fresh)?;
                }
            }
        }

        match &mut learner {
            Learner::Kernel(agent) => {
                for x in traj.samples() {
                    agent.add_target_sample(x)?;
                }
                agent.backward_update(n)?;
                if config.diagnostics {
                    diagnostics.extend(agent.diagnostics(n)?);
                }
            }
            _ => tabular_backward_pass(&mut learner, &ctx, &target_buf, &pool, &mut agent_rng)?,
        }
        learner.check(bound, n)?;

        cum_regret += regret;
        records.push(EpisodeRecord {
            episode: n,
            episode_return: traj.total_reward().as_f64(),
            regret,
            cum_regret,
            epsilon,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(RunResult {
        seed,
        records,
        diagnostics,
    })
}

/// Runs every configured seed, in parallel over at most `config.jobs`
/// threads (machine default when 0). Results follow `config.seeds` order.
pub fn run_seeds<T: Scalar>(config: &ExperimentConfig, bundle: &EnvBundle<T>) -> Result<Vec<RunResult>> {
    let oracle = RegretOracle::new(&bundle.target);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_episode_loop(config, bundle, &oracle, seed))
            .collect()
    })
}
