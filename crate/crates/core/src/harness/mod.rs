//! Experiment orchestration: configuration, data collection, the episode
//! loop, seed aggregation and run artifacts.

pub mod aggregate;
pub mod config;
pub mod data;
pub mod output;
pub mod run;

pub use aggregate::{aggregate_seeds, curve_stats, gap_in_pooled_se, mean_stderr, CurveStats, FinalWindow, SeedAggregate};
pub use config::{flat_pairs, parse_seeds, BatchSplit, EnvSource, ExperimentConfig, RatioKind, SourceSupply, Variant};
pub use data::{collect_source_pool, extend_source_pool, sha256_hex, EnvBundle, ReplayBuffer};
pub use output::{compare_summaries, config_hash, write_outputs, Manifest, Summary, FINAL_WINDOW};
pub use run::{prepare_env, run_episode_loop, run_seeds, EpisodeRecord, RegretOracle, RunResult};
