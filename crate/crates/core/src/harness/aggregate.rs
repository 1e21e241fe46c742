//! Pointwise mean and standard error of per-seed curves.

use serde::{Deserialize, Serialize};

use super::run::RunResult;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    /// Sample standard deviation over seeds divided by `sqrt(seeds)`; zero
    /// for a single seed.
    pub stderr: Vec<f64>,
}

/// Mean and standard error at every index of equally long curves.
pub fn curve_stats(curves: &[Vec<f64>]) -> Result<CurveStats> {
    let Some(first) = curves.first() else {
        return Err(Error::Config("cannot aggregate zero curves".into()));
    };
    let len = first.len();
    if let Some(bad) = curves.iter().position(|c| c.len() != len) {
        return Err(Error::Dimension(format!(
            "curve {bad} has {} points, curve 0 has {len}",
            curves[bad].len()
        )));
    }
    let k = curves.len() as f64;
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for i in 0..len {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / k;
        mean[i] = m;
        if curves.len() > 1 {
            let var = curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / (k - 1.0);
            stderr[i] = (var / k).sqrt();
        }
    }
    Ok(CurveStats { mean, stderr })
}

/// Mean and standard error of a set of scalars (one per seed).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
    (m, (var / k).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalWindow {
    pub window: usize,
    /// Per-seed mean return over the last `window` episodes.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate {
    pub seeds: Vec<u64>,
    pub episodes: usize,
    #[serde(rename = "return")]
    pub episode_return: CurveStats,
    pub cum_regret: CurveStats,
    pub final_window: FinalWindow,
}

pub fn aggregate_seeds(runs: &[RunResult], window: usize) -> Result<SeedAggregate> {
    let returns: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.records.iter().map(|x| x.episode_return).collect())
        .collect();
    let regrets: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.records.iter().map(|x| x.cum_regret).collect())
        .collect();
    let episode_return = curve_stats(&returns)?;
    let cum_regret = curve_stats(&regrets)?;
    let episodes = episode_return.mean.len();
    let w = window.min(episodes).max(1);
    let per_seed: Vec<f64> = returns
        .iter()
        .map(|c| c[episodes.saturating_sub(w)..].iter().sum::<f64>() / w as f64)
        .collect();
    let (mean, stderr) = mean_stderr(&per_seed);
    Ok(SeedAggregate {
        seeds: runs.iter().map(|r| r.seed).collect(),
        episodes,
        episode_return,
        cum_regret,
        final_window: FinalWindow {
            window: w,
            per_seed,
            mean,
            stderr,
        },
    })
}

/// `(mean_a − mean_b) / sqrt(se_a² + se_b²)`: the gap in units of the pooled
/// standard error. Infinite when both errors vanish and the gap is positive.
pub fn gap_in_pooled_se(a: &FinalWindow, b: &FinalWindow) -> f64 {
    let gap = a.mean - b.mean;
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    if se == 0.0 {
        return if gap > 0.0 { f64::INFINITY } else if gap < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    }
    gap / se
}
