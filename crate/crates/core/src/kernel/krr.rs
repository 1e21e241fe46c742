//! Kernel ridge regression in dual form.
//!
//! The fitted function is `f(x) = Σ αᵢ k(xᵢ, x)` with `(K + λI) α = y`, the
//! minimiser of `Σ (f(xᵢ) − yᵢ)² + λ‖f‖²`. The posterior variance
//! `φ(x)ᵀ(Λ + λI)⁻¹φ(x)` is evaluated through the Gram identity
//! `(k(x,x) − k_n(x)ᵀ(K + λI)⁻¹k_n(x)) / λ`.

use serde::Serialize;

use super::spec::KernelSpec;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky};
use crate::scalar::Scalar;

/// Design points with the cached factor of `K + λI`.
#[derive(Clone, Debug)]
pub struct UncertaintyState<T> {
    kernel: KernelSpec<T>,
    ridge: T,
    inputs: Vec<Vec<T>>,
    factor: Cholesky<T>,
}

impl<T: Scalar> UncertaintyState<T> {
    pub fn new(kernel: KernelSpec<T>, ridge: T) -> Result<Self> {
        kernel.validate()?;
        if !(ridge > T::zero()) {
            return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
        }
        Ok(Self {
            kernel,
            ridge,
            inputs: Vec::new(),
            factor: Cholesky::empty(),
        })
    }

    pub fn with_inputs(kernel: KernelSpec<T>, ridge: T, inputs: Vec<Vec<T>>) -> Result<Self> {
        let mut state = Self::new(kernel, ridge)?;
        let mut gram = state.kernel.gram(&inputs);
        gram.add_diagonal(ridge);
        state.factor = Cholesky::factor(&gram)?;
        state.inputs = inputs;
        Ok(state)
    }

    /// Appends one design point, extending the factor in `O(n²)`.
    pub fn push(&mut self, x: Vec<T>) -> Result<()> {
        let col = self.kernel.cross(&self.inputs, &x);
        let diag = self.kernel.diag(&x) + self.ridge;
        self.factor.append(&col, diag)?;
        self.inputs.push(x);
        Ok(())
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// Solves `(K + λI) α = y` against the cached factor.
    pub fn solve(&self, targets: &[T]) -> Result<Vec<T>> {
        if targets.len() != self.inputs.len() {
            return Err(Error::Dimension(format!(
                "{} targets for {} design points",
                targets.len(),
                self.inputs.len()
            )));
        }
        Ok(self.factor.solve(targets))
    }

    /// Posterior variance at `x`, in `[0, k(x,x)/λ]`.
    pub fn posterior_variance(&self, x: &[T]) -> Result<T> {
        let prior = self.kernel.diag(x);
        let mut v = self.kernel.cross(&self.inputs, x);
        self.factor.solve_lower_in_place(&mut v);
        let reduced = (prior - dot(&v, &v)) / self.ridge;
        clamp_variance(reduced, prior / self.ridge)
    }

    /// `log det(I + K/λ)`, read off the cached factor.
    pub fn information_gain(&self) -> T {
        let n = T::from_usize_lossy(self.inputs.len());
        self.factor.log_det() - n * self.ridge.ln()
    }

    /// `tr(K (K + λI)⁻¹) = n − λ tr((K + λI)⁻¹)`.
    pub fn effective_dimension(&self) -> T {
        let n = T::from_usize_lossy(self.inputs.len());
        (n - self.ridge * self.factor.inverse_trace()).max(T::zero())
    }
}

fn clamp_variance<T: Scalar>(value: T, prior: T) -> Result<T> {
    let tol = T::lit(1e-10) * prior.max(T::one());
    if !value.is_finite() || value < -tol {
        return Err(Error::Numerical(format!(
            "posterior variance {value:e} below zero beyond tolerance"
        )));
    }
    Ok(value.max(T::zero()).min(prior))
}

/// Fitted dual-form regressor.
#[derive(Clone, Debug)]
pub struct KrrModel<T> {
    state: UncertaintyState<T>,
    targets: Vec<T>,
    dual_weights: Vec<T>,
}

impl<T: Scalar> KrrModel<T> {
    /// Fits `(K + λI) α = y`. Empty data gives the zero function.
    pub fn fit(inputs: Vec<Vec<T>>, targets: Vec<T>, kernel: KernelSpec<T>, ridge: T) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let state = UncertaintyState::with_inputs(kernel, ridge, inputs)?;
        Self::from_state(state, targets)
    }

    /// Fits new targets on an already factored design.
    pub fn from_state(state: UncertaintyState<T>, targets: Vec<T>) -> Result<Self> {
        let dual_weights = state.solve(&targets)?;
        Ok(Self {
            state,
            targets,
            dual_weights,
        })
    }

    /// Replaces the targets, keeping the factorization.
    pub fn refit_targets(&mut self, targets: Vec<T>) -> Result<()> {
        self.dual_weights = self.state.solve(&targets)?;
        self.targets = targets;
        Ok(())
    }

    /// Appends one labelled point and re-solves.
    pub fn push(&mut self, x: Vec<T>, y: T) -> Result<()> {
        self.state.push(x)?;
        self.targets.push(y);
        self.dual_weights = self.state.solve(&self.targets)?;
        Ok(())
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.state
            .inputs
            .iter()
            .zip(&self.dual_weights)
            .fold(T::zero(), |acc, (xi, &a)| acc + a * self.state.kernel.eval(xi, x))
    }

    pub fn posterior_variance(&self, x: &[T]) -> Result<T> {
        self.state.posterior_variance(x)
    }

    pub fn uncertainty(&self) -> &UncertaintyState<T> {
        &self.state
    }

    pub fn into_uncertainty(self) -> UncertaintyState<T> {
        self.state
    }

    pub fn dual_weights(&self) -> &[T] {
        &self.dual_weights
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn ridge(&self) -> T {
        self.state.ridge
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `‖(K + λI)α − y‖_∞`; must stay below `1e-8 (1 + max|y|)`.
    pub fn solve_residual(&self) -> T {
        let xs = &self.state.inputs;
        let mut worst = T::zero();
        for (i, xi) in xs.iter().enumerate() {
            let row: T = xs
                .iter()
                .zip(&self.dual_weights)
                .fold(T::zero(), |acc, (xj, &a)| acc + a * self.state.kernel.eval(xi, xj));
            let lhs = row + self.state.ridge * self.dual_weights[i];
            worst = worst.max((lhs - self.targets[i]).abs());
        }
        worst
    }

    pub fn checkpoint(&self) -> KrrCheckpoint<T> {
        KrrCheckpoint {
            kernel: self.state.kernel.clone(),
            ridge: self.state.ridge,
            inputs: self.state.inputs.clone(),
            dual_weights: self.dual_weights.clone(),
        }
    }
}

/// Serializable dual weights of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct KrrCheckpoint<T> {
    pub kernel: KernelSpec<T>,
    pub ridge: T,
    pub inputs: Vec<Vec<T>>,
    pub dual_weights: Vec<T>,
}

/// Predictions and posterior variances over a fixed finite domain, kept in
/// step with a growing [`UncertaintyState`].
///
/// Stores `W = L⁻¹ K_{n,D}` row by row, so appending a design point costs
/// `O(n·|D|)` and every domain variance is available in `O(1)`.
#[derive(Clone, Debug)]
pub struct DomainCache<T> {
    domain: Vec<Vec<T>>,
    prior: Vec<T>,
    cross: Vec<Vec<T>>,
    whitened: Vec<Vec<T>>,
    explained: Vec<T>,
}

impl<T: Scalar> DomainCache<T> {
    /// Builds the cache for every design point already in `state`.
    pub fn new(state: &UncertaintyState<T>, domain: Vec<Vec<T>>) -> Self {
        let prior = domain.iter().map(|x| state.kernel.diag(x)).collect();
        let mut cache = Self {
            explained: vec![T::zero(); domain.len()],
            domain,
            prior,
            cross: Vec::new(),
            whitened: Vec::new(),
        };
        for i in 0..state.len() {
            cache.extend(state, i);
        }
        cache
    }

    /// Call after `state.push(..)` to absorb the newest design point.
    pub fn sync(&mut self, state: &UncertaintyState<T>) {
        while self.cross.len() < state.len() {
            let i = self.cross.len();
            self.extend(state, i);
        }
    }

    fn extend(&mut self, state: &UncertaintyState<T>, i: usize) {
        let xi = &state.inputs[i];
        let cross: Vec<T> = self.domain.iter().map(|d| state.kernel.eval(xi, d)).collect();
        let pivot = state.factor.entry(i, i);
        let mut w = cross.clone();
        for k in 0..i {
            let lik = state.factor.entry(i, k);
            if lik != T::zero() {
                for (wj, &wkj) in w.iter_mut().zip(&self.whitened[k]) {
                    *wj = *wj - lik * wkj;
                }
            }
        }
        for (j, wj) in w.iter_mut().enumerate() {
            *wj = *wj / pivot;
            self.explained[j] = self.explained[j] + *wj * *wj;
        }
        self.cross.push(cross);
        self.whitened.push(w);
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn point(&self, j: usize) -> &[T] {
        &self.domain[j]
    }

    /// Posterior variance at domain point `j`.
    pub fn variance(&self, j: usize, ridge: T) -> Result<T> {
        clamp_variance((self.prior[j] - self.explained[j]) / ridge, self.prior[j] / ridge)
    }

    /// `Σ αᵢ k(xᵢ, d_j)` for every domain point.
    pub fn predict_all(&self, dual_weights: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.domain.len()];
        for (row, &a) in self.cross.iter().zip(dual_weights) {
            if a != T::zero() {
                for (o, &k) in out.iter_mut().zip(row) {
                    *o = *o + a * k;
                }
            }
        }
        out
    }
}
