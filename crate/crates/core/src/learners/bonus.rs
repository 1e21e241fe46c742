//! Exploration bonus `b = β_src·sqrt(var_src(x)) + β_tgt·sqrt(var_tgt(x))`
//! and the optimistic value cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::UncertaintyState;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// Literal confidence radii with configured growth exponents. Vacuous at
    /// small scale; intended for diagnostics.
    Theoretical,
    /// `β_src = c_src·H`, `β_tgt = c_tgt·H`.
    Practical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusParams {
    /// Ridge of the baseline (source) regression.
    pub ridge: f64,
    /// Ridge of the correction (target) regression.
    pub ridge_correction: f64,
    pub beta_scale_source: f64,
    pub beta_scale_target: f64,
    pub mode: BetaMode,
    pub horizon: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Source-growth exponent; reported in diagnostics, unused by the bonus.
    pub beta0: f64,
    pub beta1: f64,
    /// Accumulated squared ratio error `Σ(ω̂ − ω)²`; zero for exact ratios.
    pub ratio_error_sq: f64,
    /// Clip optimistic values to `[0, H − h]` (zero-based stage `h`).
    pub clip: bool,
}

impl BonusParams {
    pub fn practical(horizon: usize, scale: f64) -> Self {
        Self {
            ridge: 1.0,
            ridge_correction: 1.0,
            beta_scale_source: scale,
            beta_scale_target: scale,
            mode: BetaMode::Practical,
            horizon,
            alpha0: 0.5,
            alpha1: 0.5,
            beta0: 0.5,
            beta1: 0.5,
            ratio_error_sq: 0.0,
            clip: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge > 0.0 && self.ridge_correction > 0.0) {
            return Err(Error::Config("bonus ridges must be positive".into()));
        }
        if !(self.beta_scale_source >= 0.0 && self.beta_scale_target >= 0.0) {
            return Err(Error::Config("beta multipliers must be non-negative".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    /// `(β_src, β_tgt)` at 1-based episode `n` with `n_source` source samples.
    pub fn betas(&self, episode: usize, n_source: usize) -> (f64, f64) {
        let h = self.horizon as f64;
        match self.mode {
            BetaMode::Practical => (self.beta_scale_source * h, self.beta_scale_target * h),
            BetaMode::Theoretical => {
                let n = episode.max(1) as f64;
                let (lam, lam_c) = (self.ridge, self.ridge_correction);
                let target = h
                    * (lam_c
                        + n.powf(self.beta1) / (lam_c * lam_c)
                        + (n * h).ln()
                        + (n / lam_c).powf(self.alpha1))
                    .sqrt();
                let source = h
                    * (lam + (n_source as f64 / lam).powf(self.alpha0) + self.ratio_error_sq).sqrt();
                (self.beta_scale_source * source, self.beta_scale_target * target)
            }
        }
    }
}

/// Bonus from precomputed posterior variances.
pub fn bonus_from_variances<T: Scalar>(
    var_source: T,
    var_target: T,
    params: &BonusParams,
    episode: usize,
    n_source: usize,
) -> T {
    let (bs, bt) = params.betas(episode, n_source);
    let term = |beta: f64, var: T| {
        if beta == 0.0 {
            T::zero()
        } else {
            T::lit(beta) * var.max(T::zero()).sqrt()
        }
    };
    term(bs, var_source) + term(bt, var_target)
}

pub fn compute_bonus<T: Scalar>(
    source: &UncertaintyState<T>,
    target: &UncertaintyState<T>,
    x: &[T],
    params: &BonusParams,
    episode: usize,
    n_source: usize,
) -> Result<T> {
    Ok(bonus_from_variances(
        source.posterior_variance(x)?,
        target.posterior_variance(x)?,
        params,
        episode,
        n_source,
    ))
}

/// `q_trans + bonus`, capped at `H − h` (zero-based `h`) and floored at 0
/// when clipping is on.
pub fn optimistic_q<T: Scalar>(q_trans: T, bonus: T, stage: usize, horizon: usize, clip: bool) -> T {
    let value = q_trans + bonus;
    if clip {
        value
            .min(T::from_usize_lossy(horizon.saturating_sub(stage)))
            .max(T::zero())
    } else {
        value
    }
}
