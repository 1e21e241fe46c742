//! Environment bundles, replay buffers and source pools.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{build_random_reward_grid, rescale_rewards_unit, rollout, EpisodicMdp, GridWorldSpec, TransitionSample, UniformPolicy};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A target task and its sources, task ids `0` and `1..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EnvBundle<T> {
    pub target: EpisodicMdp<T>,
    pub sources: Vec<EpisodicMdp<T>>,
    #[serde(default)]
    pub grid: Option<GridWorldSpec>,
}

impl<T: Scalar> EnvBundle<T> {
    pub fn from_grid(spec: &GridWorldSpec, rescale: bool) -> Result<Self> {
        let (target, sources) = build_random_reward_grid(spec)?;
        let mut bundle = Self {
            target,
            sources,
            grid: Some(spec.clone()),
        };
        if rescale {
            bundle.rescale()?;
        }
        Ok(bundle)
    }

    /// Maps the target rewards onto `[0, 1]` and applies the same affine map to
    /// every source.
    pub fn rescale(&mut self) -> Result<()> {
        let mut all = Vec::with_capacity(1 + self.sources.len());
        all.push(self.target.clone());
        all.extend(self.sources.iter().cloned());
        rescale_rewards_unit(&mut all)?;
        let mut it = all.into_iter();
        self.target = it.next().expect("target present");
        self.sources = it.collect();
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        for (m, src) in self.sources.iter().enumerate() {
            src.validate()
                .map_err(|e| Error::InvalidMdp(format!("source {}: {e}", m + 1)))?;
            if src.num_states() != self.target.num_states()
                || src.num_actions() != self.target.num_actions()
                || src.horizon() != self.target.horizon()
            {
                return Err(Error::InvalidMdp(format!(
                    "source {} differs from the target in states, actions or horizon",
                    m + 1
                )));
            }
        }
        Ok(())
    }

    /// Largest `|R|` over all tasks.
    pub fn max_abs_reward(&self) -> T {
        self.sources
            .iter()
            .map(EpisodicMdp::max_abs_reward)
            .fold(self.target.max_abs_reward(), T::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Loads and validates a bundle.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let bundle: Self = serde_json::from_str(&text)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Transitions of one task grouped by stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ReplayBuffer<T> {
    task_id: usize,
    stages: Vec<Vec<TransitionSample<T>>>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(task_id: usize, horizon: usize) -> Self {
        Self {
            task_id,
            stages: vec![Vec::new(); horizon],
        }
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn push(&mut self, sample: TransitionSample<T>) -> Result<()> {
        if sample.task_id != self.task_id {
            return Err(Error::InvalidSpec(format!(
                "sample of task {} pushed into the buffer of task {}",
                sample.task_id, self.task_id
            )));
        }
        let limit = self.stages.len();
        let slot = self.stages.get_mut(sample.stage).ok_or(Error::OutOfRange {
            what: "stage",
            index: sample.stage,
            limit,
        })?;
        slot.push(sample);
        Ok(())
    }

    pub fn extend<'a>(&mut self, samples: impl IntoIterator<Item = &'a TransitionSample<T>>) -> Result<()>
    where
        T: 'a,
    {
        for s in samples {
            self.push(*s)?;
        }
        Ok(())
    }

    pub fn stage(&self, stage: usize) -> &[TransitionSample<T>] {
        &self.stages[stage]
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn len(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-stage sample counts, for use with [`Self::samples_since`].
    pub fn stage_lens(&self) -> Vec<usize> {
        self.stages.iter().map(Vec::len).collect()
    }

    /// Samples appended after the snapshot `lens` was taken.
    pub fn samples_since<'a>(&'a self, lens: &'a [usize]) -> impl Iterator<Item = &'a TransitionSample<T>> + 'a {
        self.stages
            .iter()
            .zip(lens)
            .flat_map(|(stage, &k)| stage[k.min(stage.len())..].iter())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionSample<T>> {
        self.stages.iter().flatten()
    }
}

/// Uniform-policy rollouts from every source, one buffer per source.
pub fn collect_source_pool<T: Scalar, R: Rng + ?Sized>(
    sources: &[EpisodicMdp<T>],
    episodes_per_source: usize,
    rng: &mut R,
) -> Result<Vec<ReplayBuffer<T>>> {
    let mut pool: Vec<_> = sources
        .iter()
        .enumerate()
        .map(|(m, src)| ReplayBuffer::new(m + 1, src.horizon()))
        .collect();
    extend_source_pool(&mut pool, sources, episodes_per_source, rng)?;
    Ok(pool)
}

/// Appends `episodes` uniform-policy rollouts per source.
pub fn extend_source_pool<T: Scalar, R: Rng + ?Sized>(
    pool: &mut [ReplayBuffer<T>],
    sources: &[EpisodicMdp<T>],
    episodes: usize,
    rng: &mut R,
) -> Result<()> {
    for (buffer, src) in pool.iter_mut().zip(sources) {
        for _ in 0..episodes {
            let traj = rollout(src, buffer.task_id(), &UniformPolicy, rng)?;
            buffer.extend(traj.samples())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn small_bundle() -> EnvBundle<f64> {
        let spec = GridWorldSpec {
            num_sources: 2,
            ..GridWorldSpec::reduced()
        };
        EnvBundle::from_grid(&spec, false).unwrap()
    }

    #[test]
    fn pool_sizes_and_determinism() {
        let b = small_bundle();
        let empty = collect_source_pool(&b.sources, 0, &mut stream_rng(1, Stream::SourceCollection)).unwrap();
        assert!(empty.iter().all(ReplayBuffer::is_empty));
        let p1 = collect_source_pool(&b.sources, 16, &mut stream_rng(1, Stream::SourceCollection)).unwrap();
        let p2 = collect_source_pool(&b.sources, 16, &mut stream_rng(1, Stream::SourceCollection)).unwrap();
        assert_eq!(p1, p2);
        for (m, buf) in p1.iter().enumerate() {
            assert_eq!(buf.task_id(), m + 1);
            assert_eq!(buf.len(), 16 * 4);
            for h in 0..4 {
                assert_eq!(buf.stage(h).len(), 16);
                assert!(buf.stage(h).iter().all(|x| x.stage == h && x.task_id == m + 1));
            }
        }
    }

    #[test]
    fn full_size_pool_count() {
        let b: EnvBundle<f64> = EnvBundle::from_grid(&GridWorldSpec::default(), false).unwrap();
        let p = collect_source_pool(&b.sources, 1024, &mut stream_rng(0, Stream::SourceCollection)).unwrap();
        assert_eq!(p[0].len(), 8192);
    }

    #[test]
    fn buffer_rejects_foreign_samples() {
        let mut buf = ReplayBuffer::<f64>::new(0, 2);
        let x = TransitionSample {
            task_id: 1,
            stage: 0,
            state: 0,
            action: 0,
            reward: 0.0,
            next_state: 0,
        };
        assert!(buf.push(x).is_err());
        assert!(buf.push(TransitionSample { task_id: 0, stage: 2, ..x }).is_err());
        assert!(buf.push(TransitionSample { task_id: 0, ..x }).is_ok());
    }

    #[test]
    fn bundle_round_trip_and_hash() {
        let b = small_bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("env.json");
        b.save(&path).unwrap();
        let back = EnvBundle::<f64>::load(&path).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.hash().unwrap(), b.hash().unwrap());
        let mut other = small_bundle();
        other.rescale().unwrap();
        assert_ne!(other.hash().unwrap(), b.hash().unwrap());
        assert!(other.target.max_abs_reward() <= 1.0);
    }

    #[test]
    fn load_rejects_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut b = small_bundle();
        let mut json: serde_json::Value = serde_json::to_value(&b).unwrap();
        json["target"]["horizon"] = serde_json::json!(0);
        fs::write(&path, json.to_string()).unwrap();
        assert!(EnvBundle::<f64>::load(&path).is_err());
        b.sources.push(EnvBundle::<f64>::from_grid(&GridWorldSpec::default(), false).unwrap().target);
        b.save(&path).unwrap();
        assert!(EnvBundle::<f64>::load(&path).is_err());
    }
}
