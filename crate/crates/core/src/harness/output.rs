//! Run artifacts: per-seed CSV, per-variant JSON summary and the manifest.
//!
//! CSV columns, in this order: `episode,return,regret,cum_regret,epsilon`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_seeds, SeedAggregate};
use super::config::ExperimentConfig;
use super::data::sha256_hex;
use super::run::{EpisodeRecord, RunResult};
use crate::error::{Error, Result};
use crate::kernel::ComplexityDiagnostics;

pub const CSV_HEADER: [&str; 5] = ["episode", "return", "regret", "cum_regret", "epsilon"];
pub const FINAL_WINDOW: usize = 50;

pub fn config_hash(config: &ExperimentConfig) -> String {
    sha256_hex(config.to_flat().as_bytes())
}

pub fn write_records_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.episode.to_string(),
            format!("{:?}", r.episode_return),
            format!("{:?}", r.regret),
            format!("{:?}", r.cum_regret),
            format!("{:?}", r.epsilon),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected CSV header {header:?}",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let field = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad number `{}`", path.display(), &row[i])))
        };
        out.push(EpisodeRecord {
            episode: field(0)? as usize,
            episode_return: field(1)?,
            regret: field(2)?,
            cum_regret: field(3)?,
            epsilon: field(4)?,
            wall_ms: 0.0,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub env_hash: String,
    pub config_hash: String,
    pub aggregate: SeedAggregate,
    /// Complexity diagnostics of the last episode, per seed and stage.
    #[serde(default)]
    pub diagnostics: Vec<ComplexityDiagnostics>,
}

impl Summary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub variant: String,
    pub config_hash: String,
    pub env_hash: String,
    pub seeds: Vec<u64>,
    /// The effective configuration in flat form.
    pub config: String,
    pub files: Vec<String>,
}

/// File name of the CSV for one seed.
pub fn run_csv_name(variant: &str, seed: u64) -> String {
    format!("{variant}_seed{seed}.csv")
}

/// Writes CSVs, `summary_<variant>.json` and `manifest_<variant>.json` into
/// `out_dir`; returns the summary.
pub fn write_outputs(
    out_dir: &Path,
    config: &ExperimentConfig,
    env_hash: &str,
    runs: &[RunResult],
) -> Result<Summary> {
    fs::create_dir_all(out_dir)?;
    let variant = config.variant.name();
    let mut files: Vec<PathBuf> = Vec::new();
    for run in runs {
        let path = out_dir.join(run_csv_name(variant, run.seed));
        write_records_csv(&path, &run.records)?;
        files.push(path);
    }
    let last = runs.first().map_or(0, |r| r.records.len());
    let summary = Summary {
        variant: variant.to_string(),
        env_hash: env_hash.to_string(),
        config_hash: config_hash(config),
        aggregate: aggregate_seeds(runs, FINAL_WINDOW)?,
        diagnostics: runs
            .iter()
            .flat_map(|r| r.diagnostics.iter().filter(|d| d.episode == last).cloned())
            .collect(),
    };
    let summary_path = out_dir.join(format!("summary_{variant}.json"));
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    files.push(summary_path);
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        variant: variant.to_string(),
        config_hash: summary.config_hash.clone(),
        env_hash: env_hash.to_string(),
        seeds: config.seeds.clone(),
        config: config.to_flat(),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    fs::write(
        out_dir.join(format!("manifest_{variant}.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(summary)
}

/// Merges summaries from one environment into a long-format CSV
/// (`variant,episode,return_mean,return_stderr,cum_regret_mean,cum_regret_stderr`)
/// and returns a text table of final-window returns.
pub fn compare_summaries(summaries: &[Summary], out_path: &Path) -> Result<String> {
    let Some(first) = summaries.first() else {
        return Err(Error::Config("no summaries to compare".into()));
    };
    if let Some(bad) = summaries.iter().find(|s| s.env_hash != first.env_hash) {
        return Err(Error::Config(format!(
            "environment hash mismatch: {} ({}) vs {} ({})",
            first.variant, first.env_hash, bad.variant, bad.env_hash
        )));
    }
    let mut w = csv::Writer::from_path(out_path)?;
    w.write_record([
        "variant",
        "episode",
        "return_mean",
        "return_stderr",
        "cum_regret_mean",
        "cum_regret_stderr",
    ])?;
    let mut table = format!("{:<16} {:>6} {:>12} {:>10}\n", "variant", "seeds", "final_mean", "stderr");
    for s in summaries {
        let a = &s.aggregate;
        for i in 0..a.episodes {
            w.write_record([
                s.variant.clone(),
                (i + 1).to_string(),
                format!("{:?}", a.episode_return.mean[i]),
                format!("{:?}", a.episode_return.stderr[i]),
                format!("{:?}", a.cum_regret.mean[i]),
                format!("{:?}", a.cum_regret.stderr[i]),
            ])?;
        }
        table.push_str(&format!(
            "{:<16} {:>6} {:>12.4} {:>10.4}\n",
            s.variant,
            a.seeds.len(),
            a.final_window.mean,
            a.final_window.stderr
        ));
    }
    w.flush()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u64, base: f64) -> RunResult {
        let records = (1..=3)
            .map(|e| EpisodeRecord {
                episode: e,
                episode_return: base + e as f64 * 0.1,
                regret: 0.5,
                cum_regret: 0.5 * e as f64,
                epsilon: 1.0 / 3.0,
                wall_ms: 1.0,
            })
            .collect();
        RunResult {
            seed,
            records,
            diagnostics: vec![],
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let r = run(0, 1.0);
        write_records_csv(&path, &r.records).unwrap();
        let back = read_records_csv(&path).unwrap();
        for (a, b) in r.records.iter().zip(&back) {
            assert_eq!((a.episode, a.episode_return, a.regret, a.cum_regret, a.epsilon),
                       (b.episode, b.episode_return, b.regret, b.cum_regret, b.epsilon));
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,return,regret,cum_regret,epsilon\n"));
    }

    #[test]
    fn outputs_and_compare() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.seeds = vec![0, 1];
        let s1 = write_outputs(dir.path(), &c, "abc", &[run(0, 1.0), run(1, 2.0)]).unwrap();
        assert!(dir.path().join("rwt_tabular_seed1.csv").exists());
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest_rwt_tabular.json")).unwrap()).unwrap();
        assert_eq!(m.config_hash, config_hash(&c));
        assert_eq!(ExperimentConfig::parse_flat(&m.config).unwrap(), c);
        let loaded = Summary::load(&dir.path().join("summary_rwt_tabular.json")).unwrap();
        assert_eq!(loaded, s1);

        let mut s2 = s1.clone();
        s2.variant = "target_only".into();
        let out = dir.path().join("cmp.csv");
        let table = compare_summaries(&[s1.clone(), s2.clone()], &out).unwrap();
        assert!(table.contains("rwt_tabular") && table.contains("target_only"));
        assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 1 + 2 * 3);
        s2.env_hash = "other".into();
        assert!(compare_summaries(&[s1, s2], &out).is_err());
    }

    #[test]
    fn config_hash_is_stable() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig::parse_flat(&a.to_flat()).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let mut c = a.clone();
        c.lr = 0.1;
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
