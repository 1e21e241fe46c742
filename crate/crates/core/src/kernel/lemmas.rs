//! Executable checks of two deterministic inequalities used in the regret
//! argument.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

const SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InequalityReport<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

fn check_dims<T: Scalar>(phis: &[Vec<T>], d: usize) -> Result<()> {
    if let Some(bad) = phis.iter().position(|p| p.len() != d) {
        return Err(Error::Dimension(format!(
            "feature vector {bad} has length {}, expected {d}",
            phis[bad].len()
        )));
    }
    Ok(())
}

fn add_outer<T: Scalar>(m: &mut Matrix<T>, v: &[T]) {
    for i in 0..v.len() {
        for j in 0..v.len() {
            m[(i, j)] = m[(i, j)] + v[i] * v[j];
        }
    }
}

/// `‖S_t‖_{Λ_t⁻¹} ≤ ‖ε_{1:t}‖₂` with `S_t = Σ φ_s ε_s`,
/// `Λ_t = Λ₀ + Σ φ_s φ_sᵀ`.
pub fn self_normalized_check<T: Scalar>(
    phis: &[Vec<T>],
    eps: &[T],
    lambda0: &Matrix<T>,
) -> Result<InequalityReport<T>> {
    if phis.len() != eps.len() {
        return Err(Error::Dimension(format!(
            "{} feature vectors vs {} noise terms",
            phis.len(),
            eps.len()
        )));
    }
    if !lambda0.is_square() {
        return Err(Error::Dimension("Λ₀ must be square".into()));
    }
    let d = lambda0.rows();
    check_dims(phis, d)?;
    let mut lambda = lambda0.clone();
    let mut s = vec![T::zero(); d];
    for (phi, &e) in phis.iter().zip(eps) {
        add_outer(&mut lambda, phi);
        for (si, &p) in s.iter_mut().zip(phi) {
            *si = *si + p * e;
        }
    }
    let factor = Cholesky::factor(&lambda)
        .map_err(|e| Error::Numerical(format!("Λ_t is singular: {e}")))?;
    let lhs = dot(&s, &factor.solve(&s)).max(T::zero()).sqrt();
    let rhs = eps.iter().fold(T::zero(), |a, &e| a + e * e).sqrt();
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs + T::lit(SLACK),
    })
}

/// `Σ_n sqrt(φ_nᵀ Λ_n⁻¹ φ_n) ≤ sqrt(2N log(det(λI + Σ_n φ_n φ_nᵀ) / det(λI)))`
/// with `Λ_n = λI + Σ_{i<n} φ_i φ_iᵀ`. Needs `‖φ‖² ≤ λ` for the bound to apply.
pub fn elliptical_potential_check<T: Scalar>(phis: &[Vec<T>], ridge: T) -> Result<InequalityReport<T>> {
    if !(ridge > T::zero()) {
        return Err(Error::Config(format!("ridge must be positive, got {ridge}")));
    }
    let Some(first) = phis.first() else {
        return Ok(InequalityReport {
            lhs: T::zero(),
            rhs: T::zero(),
            holds: true,
        });
    };
    let d = first.len();
    check_dims(phis, d)?;
    let mut lambda = Matrix::identity(d).scaled(ridge);
    let mut lhs = T::zero();
    for phi in phis {
        let factor = Cholesky::factor(&lambda)?;
        lhs = lhs + dot(phi, &factor.solve(phi)).max(T::zero()).sqrt();
        add_outer(&mut lambda, phi);
    }
    let log_ratio = Cholesky::factor(&lambda)?.log_det() - T::from_usize_lossy(d) * ridge.ln();
    let n = T::from_usize_lossy(phis.len());
    let rhs = (T::lit(2.0) * n * log_ratio.max(T::zero())).sqrt();
    Ok(InequalityReport {
        lhs,
        rhs,
        holds: lhs <= rhs + T::lit(SLACK),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise() {
        let phis = vec![vec![1.0, 2.0], vec![-0.5, 0.1]];
        let r = self_normalized_check(&phis, &[0.0, 0.0], &Matrix::identity(2)).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn scalar_case() {
        let r = self_normalized_check(&[vec![1.0, 0.0]], &[1.0], &Matrix::identity(2)).unwrap();
        assert!((r.lhs - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.rhs, 1.0);
        assert!(r.holds);
    }

    #[test]
    fn elliptical_one_step_and_zero() {
        let r = elliptical_potential_check::<f64>(&[vec![1.0, 0.0]], 1.0).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!((r.rhs - (2.0 * 2f64.ln()).sqrt()).abs() < 1e-14);
        assert!((r.rhs - 1.177).abs() < 1e-3);
        assert!(r.holds);
        let z = elliptical_potential_check::<f64>(&vec![vec![0.0; 3]; 4], 1.0).unwrap();
        assert_eq!((z.lhs, z.rhs, z.holds), (0.0, 0.0, true));
    }

    #[test]
    fn dimension_errors() {
        assert!(self_normalized_check(&[vec![1.0]], &[1.0, 2.0], &Matrix::identity(1)).is_err());
        assert!(self_normalized_check(&[vec![1.0, 0.0]], &[1.0], &Matrix::identity(1)).is_err());
        assert!(elliptical_potential_check(&[vec![1.0], vec![1.0, 0.0]], 1.0).is_err());
    }
}
