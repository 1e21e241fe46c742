use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::argmax;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationKind {
    /// ε decays linearly from `eps_start` to `eps_end` across the run.
    EpsilonGreedyLinear,
    /// Always greedy; exploration comes from optimistic values.
    UcbGreedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub kind: ExplorationKind,
    pub eps_start: f64,
    pub eps_end: f64,
    pub total_episodes: usize,
}

impl ExplorationSchedule {
    pub fn linear(eps_start: f64, eps_end: f64, total_episodes: usize) -> Self {
        Self {
            kind: ExplorationKind::EpsilonGreedyLinear,
            eps_start,
            eps_end,
            total_episodes,
        }
    }

    pub fn greedy() -> Self {
        Self {
            kind: ExplorationKind::UcbGreedy,
            eps_start: 0.0,
            eps_end: 0.0,
            total_episodes: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= eps_end <= eps_start <= 1, got {} and {}",
                self.eps_end, self.eps_start
            )));
        }
        Ok(())
    }

    /// ε for the 1-based `episode`:
    /// `eps_start + (eps_end − eps_start)(episode − 1)/(total − 1)`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        match self.kind {
            ExplorationKind::UcbGreedy => 0.0,
            ExplorationKind::EpsilonGreedyLinear => {
                if self.total_episodes <= 1 {
                    return self.eps_start;
                }
                let frac = (episode.saturating_sub(1) as f64 / (self.total_episodes - 1) as f64).min(1.0);
                self.eps_start + (self.eps_end - self.eps_start) * frac
            }
        }
    }
}

/// With probability ε a uniform action, otherwise the argmax (lowest index
/// on ties).
pub fn select_action<T: Scalar, R: Rng + ?Sized>(
    q_values: &[T],
    schedule: &ExplorationSchedule,
    episode: usize,
    rng: &mut R,
) -> usize {
    assert!(!q_values.is_empty(), "need at least one action");
    let eps = schedule.epsilon(episode);
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn linear_decay_endpoints() {
        let s = ExplorationSchedule::linear(1.0, 0.0, 300);
        assert_eq!(s.epsilon(1), 1.0);
        assert_eq!(s.epsilon(300), 0.0);
        assert!((s.epsilon(151) - (1.0 - 150.0 / 299.0)).abs() < 1e-15);
        assert_eq!(ExplorationSchedule::linear(0.7, 0.1, 1).epsilon(1), 0.7);
        assert_eq!(ExplorationSchedule::greedy().epsilon(5), 0.0);
    }

    #[test]
    fn invalid_schedule() {
        assert!(ExplorationSchedule::linear(0.2, 0.5, 10).validate().is_err());
        assert!(ExplorationSchedule::linear(1.5, 0.0, 10).validate().is_err());
        assert!(ExplorationSchedule::linear(1.0, 0.0, 10).validate().is_ok());
    }

    #[test]
    fn greedy_with_lowest_index_ties() {
        let mut rng = stream_rng(0, Stream::Agent);
        let s = ExplorationSchedule::linear(0.0, 0.0, 10);
        assert_eq!(select_action(&[0.0, 2.0, 1.0, 2.0], &s, 1, &mut rng), 1);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = stream_rng(17, Stream::Agent);
        let s = ExplorationSchedule::linear(1.0, 1.0, 10);
        let q = [5.0, 0.0, 0.0, 0.0];
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[select_action(&q, &s, 3, &mut rng)] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 3 degrees of freedom, upper 1% point
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts {counts:?}");
    }
}
