//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected. [`ExperimentConfig::to_flat`] writes every key
//! in a fixed order, so `parse(serialize(c)) == c`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::GridWorldSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::learners::{BetaMode, BonusParams, ExplorationKind, ExplorationSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RwtTabular,
    RwtKernelOfu,
    TargetOnly,
    NaivePooled,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::RwtTabular,
        Variant::RwtKernelOfu,
        Variant::TargetOnly,
        Variant::NaivePooled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RwtTabular => "rwt_tabular",
            Variant::RwtKernelOfu => "rwt_kernel_ofu",
            Variant::TargetOnly => "target_only",
            Variant::NaivePooled => "naive_pooled",
        }
    }

    /// Whether the variant consumes source data.
    pub fn uses_sources(self) -> bool {
        !matches!(self, Variant::TargetOnly)
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// How a source batch and a target batch share one minibatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSplit {
    /// Uniform draws over the union of buffers, so each side gets a share
    /// proportional to its size.
    Proportional,
    /// Half the batch from each side (all of it when one side is empty).
    Equal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    /// Exact `p⁰/pᵐ` from the tabular transition kernels.
    Exact,
    /// `ω ≡ 1`.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSource {
    Grid(GridWorldSpec),
    /// A serialized environment bundle.
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSupply {
    /// A pool of uniform-policy episodes per source, collected once per seed.
    Static { episodes: usize },
    /// `⌊κ n⌋` episodes per source available by target episode `n`.
    Growth { kappa: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub env: EnvSource,
    /// Map target rewards onto `[0, 1]`, applying the same map to sources.
    pub rescale_rewards: bool,
    pub episodes: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub batch_split: BatchSplit,
    /// Minibatch updates per stage in each backward pass.
    pub updates_per_stage: usize,
    /// Initial value of tabular tables.
    pub init_value: f64,
    pub schedule: ExplorationSchedule,
    pub bonus: BonusParams,
    pub source: SourceSupply,
    pub ratio: RatioKind,
    pub kernel: KernelSpec<f64>,
    pub correction_kernel: KernelSpec<f64>,
    pub seeds: Vec<u64>,
    /// Worker threads for seed fan-out; 0 picks the machine default.
    pub jobs: usize,
    /// Record complexity diagnostics (kernel variant only).
    pub diagnostics: bool,
}

impl Default for ExperimentConfig {
    /// The tabular grid experiment: 4-D grid of side 9, `H = 8`,
    /// `σ_Δ = 3`, `γ = 0.99`, 300 episodes, learning rate `5e-2`, batch 64,
    /// ε from 1 to 0, 1024 source episodes.
    fn default() -> Self {
        let spec = GridWorldSpec::default();
        let mut bonus = BonusParams::practical(spec.horizon, 1.0);
        bonus.clip = false;
        Self {
            variant: Variant::RwtTabular,
            env: EnvSource::Grid(spec),
            rescale_rewards: false,
            episodes: 300,
            lr: 5e-2,
            batch_size: 64,
            batch_split: BatchSplit::Equal,
            updates_per_stage: 16,
            init_value: 0.0,
            schedule: ExplorationSchedule::linear(1.0, 0.0, 300),
            bonus,
            source: SourceSupply::Static { episodes: 1024 },
            ratio: RatioKind::Exact,
            kernel: KernelSpec::rbf(0.5),
            correction_kernel: KernelSpec::rbf(0.5),
            seeds: (0..10).collect(),
            jobs: 0,
            diagnostics: false,
        }
    }
}

impl ExperimentConfig {
    /// Defaults for `variant`. The kernel learner runs on the reduced grid
    /// with rewards in `[0, 1]`, clipped optimistic values and greedy action
    /// selection.
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = Self {
            variant,
            ..Self::default()
        };
        if variant == Variant::RwtKernelOfu {
            let spec = GridWorldSpec::reduced();
            c.bonus = BonusParams::practical(spec.horizon, 0.1);
            c.bonus.ridge_correction = 0.1;
            c.bonus.clip = true;
            c.kernel = KernelSpec::rbf(0.1);
            c.correction_kernel = KernelSpec::rbf(0.1);
            c.env = EnvSource::Grid(spec);
            c.rescale_rewards = true;
            c.episodes = 400;
            c.schedule = ExplorationSchedule::greedy();
            c.source = SourceSupply::Static { episodes: 100 };
            c.diagnostics = true;
        }
        c.schedule.total_episodes = c.episodes;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr <= 1.0) {
            return bad(format!("lr = {} outside [0, 1]", self.lr));
        }
        if self.batch_size == 0 || self.updates_per_stage == 0 {
            return bad("batch_size and updates_per_stage must be positive".into());
        }
        if !self.init_value.is_finite() {
            return bad("init_value must be finite".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        self.schedule.validate()?;
        self.bonus.validate()?;
        self.kernel.validate()?;
        self.correction_kernel.validate()?;
        match self.source {
            SourceSupply::Growth { kappa } if !(kappa >= 0.0 && kappa.is_finite()) => {
                return bad(format!("source_kappa = {kappa} must be finite and >= 0"));
            }
            _ => {}
        }
        if let EnvSource::Grid(spec) = &self.env {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            if spec.horizon != self.bonus.horizon {
                return bad("bonus horizon must equal env.horizon".into());
            }
        }
        Ok(())
    }

    /// Serializes every key in a fixed order.
    pub fn to_flat(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e: Vec<(&'static str, String)> = vec![
            ("variant", self.variant.name().into()),
            ("episodes", self.episodes.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("batch_size", self.batch_size.to_string()),
            ("batch_split", enum_name(&self.batch_split)),
            ("updates_per_stage", self.updates_per_stage.to_string()),
            ("init_value", fmt_f64(self.init_value)),
            ("exploration", enum_name(&self.schedule.kind)),
            ("eps_start", fmt_f64(self.schedule.eps_start)),
            ("eps_end", fmt_f64(self.schedule.eps_end)),
        ];
        match self.source {
            SourceSupply::Static { episodes } => e.push(("source_episodes", episodes.to_string())),
            SourceSupply::Growth { kappa } => e.push(("source_kappa", fmt_f64(kappa))),
        }
        e.push(("ratio", enum_name(&self.ratio)));
        e.push((
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        ));
        e.push(("jobs", self.jobs.to_string()));
        e.push(("diagnostics", self.diagnostics.to_string()));
        match &self.env {
            EnvSource::Grid(g) => {
                e.push(("env.kind", "grid".into()));
                e.push(("env.dims", g.dims.to_string()));
                e.push(("env.side", g.side.to_string()));
                e.push(("env.horizon", g.horizon.to_string()));
                e.push(("env.num_actions", g.num_actions.to_string()));
                e.push(("env.reward_std", fmt_f64(g.target_reward_std)));
                e.push(("env.delta_std", fmt_f64(g.delta_std)));
                e.push(("env.num_sources", g.num_sources.to_string()));
                e.push(("env.discount", fmt_f64(g.discount)));
                e.push(("env.seed", g.seed.to_string()));
            }
            EnvSource::File(p) => {
                e.push(("env.kind", "file".into()));
                e.push(("env.path", p.display().to_string()));
            }
        }
        e.push(("env.rescale_rewards", self.rescale_rewards.to_string()));
        let b = &self.bonus;
        e.push(("bonus.mode", enum_name(&b.mode)));
        e.push(("bonus.horizon", b.horizon.to_string()));
        e.push(("bonus.ridge", fmt_f64(b.ridge)));
        e.push(("bonus.ridge_correction", fmt_f64(b.ridge_correction)));
        e.push(("bonus.beta_source", fmt_f64(b.beta_scale_source)));
        e.push(("bonus.beta_target", fmt_f64(b.beta_scale_target)));
        e.push(("bonus.alpha0", fmt_f64(b.alpha0)));
        e.push(("bonus.alpha1", fmt_f64(b.alpha1)));
        e.push(("bonus.beta0", fmt_f64(b.beta0)));
        e.push(("bonus.beta1", fmt_f64(b.beta1)));
        e.push(("bonus.ratio_error_sq", fmt_f64(b.ratio_error_sq)));
        e.push(("bonus.clip", b.clip.to_string()));
        push_kernel(&mut e, "kernel", &self.kernel);
        push_kernel(&mut e, "correction", &self.correction_kernel);
        e
    }

    /// Parses a flat config. Keys missing from the text keep the defaults of
    /// the declared `variant` (or of `rwt_tabular` when it is absent).
    pub fn parse_flat(text: &str) -> Result<Self> {
        Self::from_pairs(&flat_pairs(text)?)
    }

    /// Builds a config from `(key, value)` pairs; later pairs win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let variant = match pairs.iter().rev().find(|(k, _)| k == "variant") {
            Some((_, v)) => v.parse()?,
            None => Variant::RwtTabular,
        };
        let mut c = Self::for_variant(variant);
        c.apply(pairs)?;
        c.validate()?;
        Ok(c)
    }

    /// Applies overrides on top of this config, then re-validates.
    pub fn with_overrides(mut self, pairs: &[(String, String)]) -> Result<Self> {
        self.apply(pairs)?;
        self.validate()?;
        Ok(self)
    }

    fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut unknown = Vec::new();
        let mut grid = match &self.env {
            EnvSource::Grid(g) => g.clone(),
            EnvSource::File(_) => GridWorldSpec::default(),
        };
        let mut env_path = match &self.env {
            EnvSource::File(p) => Some(p.clone()),
            EnvSource::Grid(_) => None,
        };
        let mut env_kind = if env_path.is_some() { "file" } else { "grid" }.to_string();
        let mut kernel = KernelParts::from(&self.kernel);
        let mut correction = KernelParts::from(&self.correction_kernel);
        let mut source_episodes = None;
        let mut source_kappa = None;
        let mut horizon_set = false;
        for (k, v) in pairs {
            let k = k.as_str();
            match k {
                "variant" => self.variant = v.parse()?,
                "episodes" => self.episodes = num(k, v)?,
                "lr" => self.lr = num(k, v)?,
                "batch_size" => self.batch_size = num(k, v)?,
                "batch_split" => self.batch_split = enum_value(k, v)?,
                "updates_per_stage" => self.updates_per_stage = num(k, v)?,
                "init_value" => self.init_value = num(k, v)?,
                "exploration" => self.schedule.kind = enum_value::<ExplorationKind>(k, v)?,
                "eps_start" => self.schedule.eps_start = num(k, v)?,
                "eps_end" => self.schedule.eps_end = num(k, v)?,
                "source_episodes" => source_episodes = Some(num(k, v)?),
                "source_kappa" => source_kappa = Some(num(k, v)?),
                "ratio" => self.ratio = enum_value(k, v)?,
                "seeds" => self.seeds = parse_seeds(v)?,
                "jobs" => self.jobs = num(k, v)?,
                "diagnostics" => self.diagnostics = num(k, v)?,
                "env.kind" => env_kind = v.clone(),
                "env.path" => env_path = Some(PathBuf::from(v)),
                "env.dims" => grid.dims = num(k, v)?,
                "env.side" => grid.side = num(k, v)?,
                "env.horizon" => grid.horizon = num(k, v)?,
                "env.num_actions" => grid.num_actions = num(k, v)?,
                "env.reward_std" => grid.target_reward_std = num(k, v)?,
                "env.delta_std" => grid.delta_std = num(k, v)?,
                "env.num_sources" => grid.num_sources = num(k, v)?,
                "env.discount" => grid.discount = num(k, v)?,
                "env.seed" => grid.seed = num(k, v)?,
                "env.rescale_rewards" => self.rescale_rewards = num(k, v)?,
                "bonus.mode" => self.bonus.mode = enum_value::<BetaMode>(k, v)?,
                "bonus.horizon" => {
                    self.bonus.horizon = num(k, v)?;
                    horizon_set = true;
                }
                "bonus.ridge" => self.bonus.ridge = num(k, v)?,
                "bonus.ridge_correction" => self.bonus.ridge_correction = num(k, v)?,
                "bonus.beta_source" => self.bonus.beta_scale_source = num(k, v)?,
                "bonus.beta_target" => self.bonus.beta_scale_target = num(k, v)?,
                "bonus.alpha0" => self.bonus.alpha0 = num(k, v)?,
                "bonus.alpha1" => self.bonus.alpha1 = num(k, v)?,
                "bonus.beta0" => self.bonus.beta0 = num(k, v)?,
                "bonus.beta1" => self.bonus.beta1 = num(k, v)?,
                "bonus.ratio_error_sq" => self.bonus.ratio_error_sq = num(k, v)?,
                "bonus.clip" => self.bonus.clip = num(k, v)?,
                _ => {
                    if let Some(rest) = k.strip_prefix("kernel.") {
                        if !kernel.set(rest, v)? {
                            unknown.push(k.to_string());
                        }
                    } else if let Some(rest) = k.strip_prefix("correction.") {
                        if !correction.set(rest, v)? {
                            unknown.push(k.to_string());
                        }
                    } else {
                        unknown.push(k.to_string());
                    }
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        self.source = match (source_episodes, source_kappa) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set exactly one of source_episodes and source_kappa".into(),
                ))
            }
            (Some(episodes), None) => SourceSupply::Static { episodes },
            (None, Some(kappa)) => SourceSupply::Growth { kappa },
            (None, None) => self.source,
        };
        self.env = match env_kind.as_str() {
            "grid" => {
                if !horizon_set {
                    self.bonus.horizon = grid.horizon;
                }
                EnvSource::Grid(grid)
            }
            "file" => EnvSource::File(
                env_path.ok_or_else(|| Error::Config("env.kind = file needs env.path".into()))?,
            ),
            other => return Err(Error::Config(format!("unknown env.kind `{other}`"))),
        };
        self.kernel = kernel.build()?;
        self.correction_kernel = correction.build()?;
        self.schedule.total_episodes = self.episodes;
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct KernelParts {
    kind: String,
    lengthscale: f64,
    scale: f64,
}

impl From<&KernelSpec<f64>> for KernelParts {
    fn from(k: &KernelSpec<f64>) -> Self {
        match k {
            KernelSpec::Rbf { lengthscale, scale } => Self {
                kind: "rbf".into(),
                lengthscale: *lengthscale,
                scale: *scale,
            },
            KernelSpec::TabularDelta { scale } => Self {
                kind: "delta".into(),
                lengthscale: 1.0,
                scale: *scale,
            },
            KernelSpec::Scaled { base, multiplier } => {
                let mut p = Self::from(base.as_ref());
                p.scale *= multiplier;
                p
            }
        }
    }
}

impl KernelParts {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "kind" => self.kind = v.to_string(),
            "lengthscale" => self.lengthscale = num(key, v)?,
            "scale" => self.scale = num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn build(&self) -> Result<KernelSpec<f64>> {
        let k = match self.kind.as_str() {
            "rbf" => KernelSpec::Rbf {
                lengthscale: self.lengthscale,
                scale: self.scale,
            },
            "delta" => KernelSpec::TabularDelta { scale: self.scale },
            other => return Err(Error::Config(format!("unknown kernel kind `{other}`"))),
        };
        k.validate()?;
        Ok(k)
    }
}

fn push_kernel(e: &mut Vec<(&'static str, String)>, prefix: &'static str, k: &KernelSpec<f64>) {
    let p = KernelParts::from(k);
    let (kind, ls, sc) = match prefix {
        "kernel" => ("kernel.kind", "kernel.lengthscale", "kernel.scale"),
        _ => ("correction.kind", "correction.lengthscale", "correction.scale"),
    };
    e.push((kind, p.kind));
    e.push((ls, fmt_f64(p.lengthscale)));
    e.push((sc, fmt_f64(p.scale)));
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn num<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for key `{key}`")))
}

fn enum_name<E: Serialize>(e: &E) -> String {
    match serde_json::to_value(e) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize as strings"),
    }
}

fn enum_value<E: for<'de> Deserialize<'de>>(key: &str, v: &str) -> Result<E> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| Error::Config(format!("bad value `{v}` for key `{key}`")))
}

/// `0,1,2` or a range `0..10` (exclusive end).
/// Splits flat `key = value` text into pairs; `#` starts a comment.
pub fn flat_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", lineno + 1)));
        };
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = num("seeds", a.trim())?;
        let b: u64 = num("seeds", b.trim())?;
        return Ok((a..b).collect());
    }
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num("seeds", s.trim()))
        .collect()
}
