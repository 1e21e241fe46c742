//! Complexity measures of a realised design: information gain, effective
//! dimension and the source coverage constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Scalar;

/// Per-stage, per-episode diagnostic record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityDiagnostics {
    pub episode: usize,
    pub stage: usize,
    /// Number of target design points at this stage.
    pub n: usize,
    /// Number of source design points at this stage.
    #[serde(default)]
    pub n_source: usize,
    /// Effective dimension of the source (baseline) design at ridge `λ`.
    pub effective_dimension: f64,
    /// Information gain of the target (correction) design at ridge `λ̃`.
    pub information_gain: f64,
    /// Coverage constant of the source design over the stage domain.
    pub coverage_constant: f64,
    /// Growth exponents carried from the configuration, reported only.
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta0: f64,
    pub beta1: f64,
}

fn check_psd<T: Scalar>(gram: &Matrix<T>) -> Result<()> {
    if !gram.is_square() {
        return Err(Error::Dimension("Gram matrix must be square".into()));
    }
    let n = gram.rows();
    if n == 0 {
        return Ok(());
    }
    let scale = (0..n).map(|i| gram[(i, i)].abs()).fold(T::one(), T::max);
    let tol = T::lit(1e-9) * scale;
    if gram.asymmetry() > tol {
        return Err(Error::Numerical(format!(
            "Gram matrix asymmetric by {:e}",
            gram.asymmetry()
        )));
    }
    let mut shifted = gram.clone();
    shifted.add_diagonal(tol);
    Cholesky::factor(&shifted)
        .map(|_| ())
        .map_err(|e| Error::Numerical(format!("Gram matrix not positive semidefinite: {e}")))
}

/// `log det(I + G/λ̃)` for a realised Gram matrix.
pub fn information_gain<T: Scalar>(gram: &Matrix<T>, ridge: T) -> Result<T> {
    if !(ridge > T::zero()) {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    check_psd(gram)?;
    if gram.rows() == 0 {
        return Ok(T::zero());
    }
    let mut m = gram.scaled(T::one() / ridge);
    m.add_diagonal(T::one());
    Ok(Cholesky::factor(&m)?.log_det().max(T::zero()))
}

/// `Σ μᵢ / (μᵢ + λ)` over the given eigenvalues.
pub fn effective_dimension<T: Scalar>(eigenvalues: &[T], ridge: T) -> Result<T> {
    if !(ridge > T::zero()) {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    let scale = eigenvalues.iter().fold(T::one(), |m, e| m.max(e.abs()));
    let tol = T::lit(1e-10) * scale;
    let mut total = T::zero();
    for &mu in eigenvalues {
        if mu < -tol {
            return Err(Error::Numerical(format!("negative eigenvalue {mu:e}")));
        }
        let mu = mu.max(T::zero());
        total = total + mu / (mu + ridge);
    }
    Ok(total)
}

/// Effective dimension of a Gram matrix without an eigendecomposition:
/// `tr(G (G + λI)⁻¹) = n − λ tr((G + λI)⁻¹)`.
pub fn effective_dimension_of_gram<T: Scalar>(gram: &Matrix<T>, ridge: T) -> Result<T> {
    if !(ridge > T::zero()) {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    check_psd(gram)?;
    let mut m = gram.clone();
    m.add_diagonal(ridge);
    let n = T::from_usize_lossy(gram.rows());
    Ok((n - ridge * Cholesky::factor(&m)?.inverse_trace()).max(T::zero()))
}

/// Empirical coverage constant `n · max_x φ(x)ᵀ(Λ + λI)⁻¹φ(x)` over queried
/// points, the smallest `C` with `variance ≤ C / n` on those points.
pub fn coverage_constant<T: Scalar>(n: usize, variances: &[T]) -> T {
    let worst = variances.iter().copied().fold(T::zero(), T::max);
    T::from_usize_lossy(n) * worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn information_gain_closed_forms() {
        assert_eq!(information_gain(&Matrix::<f64>::zeros(3, 3), 1.0).unwrap(), 0.0);
        let g = information_gain(&Matrix::<f64>::identity(2), 1.0).unwrap();
        assert!((g - 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((g - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn rejects_indefinite_gram() {
        let g = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(information_gain(&g, 1.0).is_err());
        assert!(effective_dimension_of_gram(&g, 1.0).is_err());
    }

    #[test]
    fn effective_dimension_cases() {
        assert_eq!(effective_dimension(&[0.0, 0.0], 1.0).unwrap(), 0.0);
        assert_eq!(effective_dimension(&[0.3], 0.3).unwrap(), 0.5);
        assert!((effective_dimension::<f64>(&[4.0, 1.0], 1.0).unwrap() - 1.3).abs() < 1e-15);
        assert!(effective_dimension(&[-1.0], 1.0).is_err());
        // diag(4, 1) has exactly those eigenvalues
        let g = Matrix::<f64>::from_rows(&[vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((effective_dimension_of_gram(&g, 1.0).unwrap() - 1.3).abs() < 1e-14);
    }

    #[test]
    fn coverage_is_scaled_worst_variance() {
        assert_eq!(coverage_constant(10, &[0.01, 0.05, 0.02]), 0.5);
        assert_eq!(coverage_constant::<f64>(10, &[]), 0.0);
    }
}
