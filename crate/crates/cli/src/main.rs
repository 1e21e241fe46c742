//! `rwt`: generate environments, collect source data, train, compare runs,
//! export complexity diagnostics and run the property suites.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime abort,
//! 4 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwt_core::harness::{
    collect_source_pool, compare_summaries, flat_pairs, prepare_env, run_seeds, write_outputs, EnvBundle,
    ExperimentConfig, Summary, Variant,
};
use rwt_core::rng::{stream_rng, Stream};
use rwt_core::verify::{run_suite, Suite, DEFAULT_SEED};
use rwt_core::Error;

#[derive(Parser)]
#[command(name = "rwt", version, about = "Transfer Q-learning with re-weighted targeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the target and source tasks and write them as JSON.
    GenEnv {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the uniform policy on every source task.
    CollectSource {
        #[arg(long)]
        env: PathBuf,
        /// Episodes per source task.
        #[arg(long, default_value_t = 1024)]
        episodes: usize,
        /// Run seed; training with the same seed collects the same pool.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant over all seeds; writes CSVs, a summary and a manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Merge summaries from one environment into a long-format CSV.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the kernel learner and export per-episode complexity diagnostics.
    Diagnostics {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a property suite: alignment, lemmas, krr or optimism.
    Verify {
        suite: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write the full report (with any failing instance) as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// A count `N` (seeds `seed..seed+N`), a range `a..b` or a list `a,b,c`.
    #[arg(long)]
    seeds: Option<String>,
    /// First seed when `--seeds` is a count.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
                flat_pairs(&text)?
            }
            None => Vec::new(),
        };
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(v) = &self.variant {
            push("variant", v.clone());
        }
        if let Some(n) = self.episodes {
            push("episodes", n.to_string());
        }
        if let Some(s) = &self.seeds {
            let spec = match s.trim().parse::<u64>() {
                Ok(count) => format!("{}..{}", self.seed, self.seed + count),
                Err(_) => s.clone(),
            };
            push("seeds", spec);
        }
        if let Some(j) = self.jobs {
            push("jobs", j.to_string());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            push(k.trim(), v.trim().to_string());
        }
        ExperimentConfig::from_pairs(&pairs)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) => 2,
        _ => 3,
    }
}

fn gen_env(args: &ConfigArgs, out: &Path) -> Result<(), Error> {
    let config = args.load()?;
    let bundle: EnvBundle<f64> = prepare_env(&config)?;
    bundle.save(out)?;
    println!(
        "wrote {} ({} states, {} actions, horizon {}, {} sources, sha256 {})",
        out.display(),
        bundle.target.num_states(),
        bundle.target.num_actions(),
        bundle.target.horizon(),
        bundle.sources.len(),
        bundle.hash()?
    );
    Ok(())
}

fn collect_source(env: &Path, episodes: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let bundle = EnvBundle::<f64>::load(env).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read environment {}: {io}", env.display())),
        other => other,
    })?;
    let pool = collect_source_pool(&bundle.sources, episodes, &mut stream_rng(seed, Stream::SourceCollection))?;
    fs::write(out, serde_json::to_string(&pool)?)?;
    let total: usize = pool.iter().map(|b| b.len()).sum();
    println!("wrote {} ({} sources, {total} transitions)", out.display(), pool.len());
    Ok(())
}

fn train(args: &ConfigArgs, out_dir: &Path) -> Result<(), Error> {
    let config = args.load()?;
    let bundle: EnvBundle<f64> = prepare_env(&config)?;
    let runs = run_seeds(&config, &bundle)?;
    let summary = write_outputs(out_dir, &config, &bundle.hash()?, &runs)?;
    let fw = &summary.aggregate.final_window;
    println!(
        "{}: {} seeds x {} episodes, final-{} return {:.4} +/- {:.4}, cum regret {:.4}",
        summary.variant,
        runs.len(),
        summary.aggregate.episodes,
        fw.window,
        fw.mean,
        fw.stderr,
        summary.aggregate.cum_regret.mean.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn compare(paths: &[PathBuf], out: &Path) -> Result<(), Error> {
    let summaries = paths.iter().map(|p| Summary::load(p)).collect::<Result<Vec<_>, _>>()?;
    print!("{}", compare_summaries(&summaries, out)?);
    Ok(())
}

fn diagnostics(args: &ConfigArgs, out: &Path) -> Result<(), Error> {
    let mut config = args.load()?;
    if config.variant != Variant::RwtKernelOfu {
        return Err(Error::Config(format!(
            "diagnostics need variant rwt_kernel_ofu, got {}",
            config.variant.name()
        )));
    }
    config.diagnostics = true;
    let bundle: EnvBundle<f64> = prepare_env(&config)?;
    let runs = run_seeds(&config, &bundle)?;
    let records: Vec<_> = runs
        .iter()
        .map(|r| serde_json::json!({ "seed": r.seed, "records": r.diagnostics }))
        .collect();
    fs::write(out, serde_json::to_string_pretty(&records)?)?;
    println!(
        "{:>6} {:>6} {:>8} {:>8} {:>12} {:>12} {:>12}",
        "seed", "stage", "n", "n_src", "eff_dim", "info_gain", "coverage"
    );
    for r in &runs {
        for d in r.diagnostics.iter().filter(|d| d.episode == config.episodes) {
            println!(
                "{:>6} {:>6} {:>8} {:>8} {:>12.4} {:>12.4} {:>12.4}",
                r.seed, d.stage, d.n, d.n_source, d.effective_dimension, d.information_gain, d.coverage_constant
            );
        }
    }
    Ok(())
}

fn verify(name: &str, seed: u64, out: Option<&Path>) -> Result<bool, Error> {
    let suite: Suite = name.parse()?;
    let report = run_suite(suite, seed)?;
    for p in &report.properties {
        println!("{p}");
        if let Some(instance) = &p.failing_instance {
            println!("  failing instance: {instance}");
        }
    }
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenEnv { config, out } => gen_env(config, out),
        Command::CollectSource { env, episodes, seed, out } => collect_source(env, *episodes, *seed, out),
        Command::Train { config, out_dir } => train(config, out_dir),
        Command::Compare { summaries, out } => compare(summaries, out),
        Command::Diagnostics { config, out } => diagnostics(config, out),
        Command::Verify { suite, seed, out } => match verify(suite, *seed, out.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(4),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
