//! Executable property suites with fixed seeds.
//!
//! Each property runs a batch of random instances against an independent
//! oracle. On failure the first offending instance is kept as JSON so it can
//! be replayed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::align::{rwt_backup_exact, DensityRatioProvider};
use crate::env::{perturbed_source, random_tabular_mdp, rollout_with, value_iteration, EpisodicMdp, TARGET_TASK};
use crate::error::{Error, Result};
use crate::harness::collect_source_pool;
use crate::kernel::{
    effective_dimension, effective_dimension_of_gram, elliptical_potential_check, information_gain,
    self_normalized_check, KernelSpec, KrrModel, UncertaintyState,
};
use crate::learners::{BonusParams, KernelOfuAgent, KernelOfuSettings, StateActionEncoder};
use crate::linalg::Matrix;
use crate::rng::{stream_rng, Stream};

/// Seed used by `run_suite` when the caller has no preference.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Alignment,
    Lemmas,
    Krr,
    Optimism,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Alignment, Suite::Lemmas, Suite::Krr, Suite::Optimism];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Alignment => "alignment",
            Suite::Lemmas => "lemmas",
            Suite::Krr => "krr",
            Suite::Optimism => "optimism",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
            Error::Config(format!("unknown suite `{s}`; valid suites: {}", valid.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Largest violation or error observed (property specific).
    pub worst: f64,
    pub threshold: f64,
    pub failing_instance: Option<Value>,
}

impl PropertyResult {
    fn new(name: &str, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            instances: 0,
            failures: 0,
            worst: 0.0,
            threshold,
            failing_instance: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    /// Records one instance with error `err`, failing when `!ok`.
    fn record(&mut self, err: f64, ok: bool, instance: impl FnOnce() -> Value) {
        self.instances += 1;
        if err > self.worst || err.is_nan() {
            self.worst = err;
        }
        if !ok {
            self.failures += 1;
            if self.failing_instance.is_none() {
                self.failing_instance = Some(instance());
            }
        }
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} instances, {} failures, worst {:.3e} (threshold {:.3e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.failures,
            self.worst,
            self.threshold
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let properties = match suite {
        Suite::Alignment => vec![alignment_identity(seed, 20, 5)?],
        Suite::Lemmas => vec![self_normalized_fuzz(seed, 1000)?, elliptical_fuzz(seed, 500)?],
        Suite::Krr => vec![
            krr_direct_solve(seed, 50)?,
            krr_variance_monotone(seed, 50)?,
            diagnostics_oracles(seed, 20)?,
        ],
        Suite::Optimism => {
            let stats = optimism_frequency(seed..seed + 50, 100, 2.0)?;
            let mut p = PropertyResult::new("non-optimistic episode rate", 0.05);
            p.instances = stats.episodes;
            p.worst = 1.0 - stats.fraction();
            if stats.fraction() < 0.95 {
                p.failures = stats.episodes - stats.optimistic;
                p.failing_instance = stats.first_violation.clone();
            }
            vec![p]
        }
    };
    Ok(SuiteReport {
        suite: suite.name().to_string(),
        seed,
        properties,
    })
}

fn verification_rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Verification)
}

/// For random MDP pairs with exact density ratios and random continuation
/// values `V`, checks
/// `(R⁰ + γ P⁰V) − (Rᵐ + γ E_{Pᵐ}[ω V]) = R⁰ − Rᵐ` at every `(h, s, a)`.
/// The target backup is an explicit sum over next states.
pub fn alignment_identity(seed: u64, pairs: usize, values_per_pair: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed);
    let mut p = PropertyResult::new("alignment identity", 1e-10);
    for _ in 0..pairs {
        let ns = rng.random_range(1..=10);
        let na = rng.random_range(1..=4);
        let h = rng.random_range(1..=4);
        let discount = rng.random_range(0.5..=1.0);
        let target = random_tabular_mdp::<f64, _>(ns, na, h, discount, &mut rng)?;
        let source = perturbed_source(&target, rng.random_range(0.1..0.9), 1.0, &mut rng)?;
        let provider = DensityRatioProvider::exact(&target, &source)?;
        for _ in 0..values_per_pair {
            let v: Vec<f64> = (0..ns).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut err: f64 = 0.0;
            for stage in 0..h {
                for s in 0..ns {
                    for a in 0..na {
                        let expect: f64 = (0..ns).map(|j| target.transition_prob(stage, s, a, j) * v[j]).sum();
                        let target_backup = target.reward(stage, s, a) + discount * expect;
                        let aligned = rwt_backup_exact(&source, &provider, &v, stage, s, a)?;
                        let gap = target.reward(stage, s, a) - source.reward(stage, s, a);
                        err = err.max(((target_backup - aligned) - gap).abs());
                    }
                }
            }
            p.record(err, err <= 1e-10, || json!({ "target": target, "source": source, "v_next": v }));
        }
    }
    Ok(p)
}

fn random_vec<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Self-normalized bound on random instances with `d ≤ 5`, `t ≤ 50` and a
/// random positive-definite `Λ₀ = AAᵀ + λI`.
pub fn self_normalized_fuzz(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed ^ 0x51);
    let mut p = PropertyResult::new("self-normalized bound", 1e-9);
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let t = rng.random_range(1..=50);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let phis: Vec<Vec<f64>> = (0..t).map(|_| random_vec(&mut rng, d, scale)).collect();
        let eps = random_vec(&mut rng, t, 3.0);
        let a = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(1e-3..2.0);
        let lambda0 = Matrix::from_fn(d, d, |i, j| {
            (0..d).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { lambda } else { 0.0 }
        });
        let r = self_normalized_check(&phis, &eps, &lambda0)?;
        p.record(r.lhs - r.rhs, r.holds, || json!({ "phis": phis, "eps": eps, "lambda0": (0..d).map(|i| lambda0.row(i).to_vec()).collect::<Vec<_>>(), "report": r }));
    }
    Ok(p)
}

/// Elliptical potential bound on random sequences with `‖φ‖² ≤ λ`.
pub fn elliptical_fuzz(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed ^ 0xE1);
    let mut p = PropertyResult::new("elliptical potential", 1e-9);
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(1..=50);
        let ridge: f64 = rng.random_range(0.1..4.0);
        let phis: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v = random_vec(&mut rng, d, 1.0);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                let radius = ridge.sqrt() * rng.random::<f64>();
                v.iter().map(|x| x / norm * radius).collect()
            })
            .collect();
        let r = elliptical_potential_check(&phis, ridge)?;
        p.record(r.lhs - r.rhs, r.holds, || json!({ "phis": phis, "ridge": ridge, "report": r }));
    }
    Ok(p)
}

/// Dense Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn random_kernel<R: Rng>(rng: &mut R) -> KernelSpec<f64> {
    match rng.random_range(0..3) {
        0 => KernelSpec::rbf(rng.random_range(0.2..2.0)),
        1 => KernelSpec::scaled(KernelSpec::rbf(rng.random_range(0.2..2.0)), rng.random_range(0.2..1.0)),
        _ => KernelSpec::delta(),
    }
}

/// KRR predictions and posterior variances against a dense direct solve of
/// `(K + λI)α = y` and `(k(x,x) − k_xᵀ (K + λI)⁻¹ k_x) / λ`.
pub fn krr_direct_solve(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed ^ 0x4B);
    let mut p = PropertyResult::new("krr direct solve", 1e-8);
    for _ in 0..instances {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=4);
        let kernel = random_kernel(&mut rng);
        let ridge = rng.random_range(0.05..2.0);
        // coordinates on a coarse lattice so the delta kernel sees repeats
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| f64::from(rng.random_range(0..3u8)) * 0.5).collect())
            .collect();
        let ys = random_vec(&mut rng, n, 2.0);
        let model = KrrModel::fit(xs.clone(), ys.clone(), kernel.clone(), ridge)?;
        let mut gram: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel.eval(&xs[i], &xs[j])).collect()).collect();
        for (i, row) in gram.iter_mut().enumerate() {
            row[i] += ridge;
        }
        let alpha = gauss_solve(gram.clone(), ys.clone());
        let mut err: f64 = 0.0;
        for _ in 0..5 {
            let x: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(0..3u8)) * 0.5).collect();
            let kx: Vec<f64> = xs.iter().map(|xi| kernel.eval(xi, &x)).collect();
            let pred: f64 = kx.iter().zip(&alpha).map(|(k, a)| k * a).sum();
            let w = gauss_solve(gram.clone(), kx.clone());
            let var = kernel.eval(&x, &x) - kx.iter().zip(&w).map(|(k, v)| k * v).sum::<f64>();
            err = err
                .max((model.predict(&x) - pred).abs())
                .max((model.posterior_variance(&x)? - var.max(0.0) / ridge).abs());
        }
        p.record(err, err <= 1e-8, || json!({ "inputs": xs, "targets": ys, "kernel": kernel, "ridge": ridge }));
    }
    Ok(p)
}

/// Posterior variance never increases as data is added and stays within
/// `[0, k(x,x)/λ]`.
pub fn krr_variance_monotone(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed ^ 0x56);
    let mut p = PropertyResult::new("variance monotone", 1e-10);
    for _ in 0..instances {
        let d = rng.random_range(1..=3);
        let kernel = random_kernel(&mut rng);
        let ridge = rng.random_range(0.05..2.0);
        let probe: Vec<f64> = random_vec(&mut rng, d, 1.0);
        let mut state = UncertaintyState::new(kernel.clone(), ridge)?;
        let mut prev = state.posterior_variance(&probe)?;
        let mut worst: f64 = (prev - kernel.diag(&probe) / ridge).max(0.0);
        for _ in 0..rng.random_range(1..=25) {
            state.push(random_vec(&mut rng, d, 1.0))?;
            let v = state.posterior_variance(&probe)?;
            worst = worst.max(v - prev).max(-v);
            prev = v;
        }
        p.record(worst, worst <= 1e-10, || json!({ "kernel": kernel, "ridge": ridge, "probe": probe, "inputs": state.inputs() }));
    }
    Ok(p)
}

/// Symmetric Jacobi eigenvalues, used as an independent oracle for the
/// complexity diagnostics.
fn jacobi_eigenvalues(m: &Matrix<f64>) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for pi in 0..n {
            for q in pi + 1..n {
                if a[pi][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[pi][pi]) / (2.0 * a[pi][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][pi], a[k][q]);
                    a[k][pi] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[pi][k], a[q][k]);
                    a[pi][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Information gain and effective dimension against eigenvalue formulas.
pub fn diagnostics_oracles(seed: u64, instances: usize) -> Result<PropertyResult> {
    let mut rng = verification_rng(seed ^ 0xD1);
    let mut p = PropertyResult::new("diagnostics vs eigenvalues", 1e-10);
    for _ in 0..instances {
        let n = rng.random_range(1..=12);
        let kernel = KernelSpec::rbf(rng.random_range(0.3..2.0));
        let ridge = rng.random_range(0.1..2.0);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 2, 1.0)).collect();
        let gram = kernel.gram(&xs);
        let eig = jacobi_eigenvalues(&gram);
        let ig_oracle: f64 = eig.iter().map(|l| (1.0 + l / ridge).ln()).sum();
        let de_oracle: f64 = eig.iter().map(|l| l / (l + ridge)).sum();
        let err = (information_gain(&gram, ridge)? - ig_oracle)
            .abs()
            .max((effective_dimension_of_gram(&gram, ridge)? - de_oracle).abs())
            .max((effective_dimension(&eig, ridge)? - de_oracle).abs());
        p.record(err, err <= 1e-10, || json!({ "inputs": xs, "kernel": kernel, "ridge": ridge }));
    }
    Ok(p)
}

/// Target and source of the 2-state, 2-action, horizon-2 benchmark for one
/// seed: random target, source with mixed transitions and shifted rewards.
pub fn two_state_pair(seed: u64) -> Result<(EpisodicMdp<f64>, EpisodicMdp<f64>)> {
    let mut rng = stream_rng(seed, Stream::EnvGeneration);
    let target = random_tabular_mdp(2, 2, 2, 1.0, &mut rng)?;
    let source = perturbed_source(&target, 0.3, 0.2, &mut rng)?;
    Ok((target, source))
}

/// Kernel learner on the two-state benchmark: tabular kernels, exact
/// ratios, clipped values, practical multipliers `multiplier`.
pub fn two_state_agent(
    target: &EpisodicMdp<f64>,
    source: &EpisodicMdp<f64>,
    multiplier: f64,
    source_episodes: usize,
    seed: u64,
) -> Result<KernelOfuAgent<f64>> {
    let mut bonus = BonusParams::practical(target.horizon(), multiplier);
    bonus.clip = true;
    let settings = KernelOfuSettings {
        source_kernel: KernelSpec::delta(),
        correction_kernel: KernelSpec::delta(),
        bonus,
        encoder: StateActionEncoder::for_mdp(target),
    };
    let providers = vec![DensityRatioProvider::exact(target, source)?];
    let mut agent = KernelOfuAgent::new(target, &[source], providers, settings)?;
    let pool = collect_source_pool(std::slice::from_ref(source), source_episodes, &mut stream_rng(seed, Stream::SourceCollection))?;
    agent.add_source_samples(pool.iter().flat_map(|b| b.iter()))?;
    Ok(agent)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimismStats {
    pub episodes: usize,
    pub optimistic: usize,
    pub first_violation: Option<Value>,
}

impl OptimismStats {
    pub fn fraction(&self) -> f64 {
        if self.episodes == 0 {
            return f64::NAN;
        }
        self.optimistic as f64 / self.episodes as f64
    }
}

/// Counts episodes `n` whose values `Q_n` (fit on data from episodes before
/// `n`) dominate `Q*` at every `(h, s, a)`, on the two-state benchmark with
/// 20 source episodes per seed.
pub fn optimism_frequency(seeds: std::ops::Range<u64>, episodes: usize, multiplier: f64) -> Result<OptimismStats> {
    let mut stats = OptimismStats {
        episodes: 0,
        optimistic: 0,
        first_violation: None,
    };
    for seed in seeds {
        let (target, source) = two_state_pair(seed)?;
        let (q_star, _) = value_iteration(&target);
        let mut agent = two_state_agent(&target, &source, multiplier, 20, seed)?;
        let mut env_rng = stream_rng(seed, Stream::TargetRollout);
        for n in 1..=episodes {
            let mut worst: f64 = f64::INFINITY;
            for h in 0..target.horizon() {
                for s in 0..target.num_states() {
                    for a in 0..target.num_actions() {
                        worst = worst.min(agent.q_value(h, s, a) - q_star.get(h, s, a));
                    }
                }
            }
            stats.episodes += 1;
            if worst >= -1e-12 {
                stats.optimistic += 1;
            } else if stats.first_violation.is_none() {
                stats.first_violation = Some(json!({
                    "seed": seed, "episode": n, "gap": worst, "target": target, "source": source,
                }));
            }
            let traj = rollout_with(&target, TARGET_TASK, &mut env_rng, |h, s, _| agent.greedy_action(h, s))?;
            for x in traj.samples() {
                agent.add_target_sample(x)?;
            }
            agent.backward_update(n)?;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        let err = "bogus".parse::<Suite>().unwrap_err().to_string();
        assert!(err.contains("alignment") && err.contains("optimism"));
    }

    #[test]
    fn gauss_matches_known_system() {
        let x = gauss_solve(vec![vec![0.0, 2.0], vec![1.0, 1.0]], vec![4.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_on_diagonalizable_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let mut e = jacobi_eigenvalues(&m);
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_suites_pass() {
        assert!(alignment_identity(1, 3, 2).unwrap().passed());
        assert!(self_normalized_fuzz(1, 20).unwrap().passed());
        assert!(elliptical_fuzz(1, 20).unwrap().passed());
        let k = krr_direct_solve(1, 5).unwrap();
        assert!(k.passed(), "{k} {:?}", k.failing_instance);
        assert!(krr_variance_monotone(1, 5).unwrap().passed());
        assert!(diagnostics_oracles(1, 5).unwrap().passed());
    }

    #[test]
    fn optimism_needs_the_bonus() {
        let with = optimism_frequency(0..5, 40, 2.0).unwrap();
        let without = optimism_frequency(0..5, 40, 0.0).unwrap();
        assert_eq!(with.episodes, 200);
        assert!(with.fraction() >= 0.95);
        assert!(without.fraction() < 0.5, "{}", without.fraction());
        assert!(without.first_violation.is_some());
    }

    #[test]
    fn failing_instance_is_recorded() {
        let mut p = PropertyResult::new("x", 0.0);
        p.record(1.0, false, || json!({"k": 1}));
        p.record(2.0, false, || json!({"k": 2}));
        assert_eq!(p.failures, 2);
        assert_eq!(p.failing_instance, Some(json!({"k": 1})));
        assert_eq!(p.worst, 2.0);
    }
}
