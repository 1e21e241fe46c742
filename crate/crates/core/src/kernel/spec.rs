use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Positive-definite kernel over real feature vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec<T> {
    /// `scale · exp(−‖x − x'‖² / (2ℓ²))`.
    Rbf { lengthscale: T, scale: T },
    /// `scale` on identical inputs, zero otherwise. With one-hot encodings
    /// this is the tabular kernel.
    TabularDelta { scale: T },
    /// `multiplier · base(x, x')`. With `multiplier ≤ 1` every Gram
    /// eigenvalue is dominated by the base kernel's.
    Scaled { base: Box<KernelSpec<T>>, multiplier: T },
}

impl<T: Scalar> KernelSpec<T> {
    pub fn rbf(lengthscale: T) -> Self {
        Self::Rbf {
            lengthscale,
            scale: T::one(),
        }
    }

    pub fn delta() -> Self {
        Self::TabularDelta { scale: T::one() }
    }

    pub fn scaled(base: Self, multiplier: T) -> Self {
        Self::Scaled {
            base: Box::new(base),
            multiplier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T, what: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("kernel {what} must be positive, got {v}")))
            }
        };
        match self {
            Self::Rbf { lengthscale, scale } => {
                positive(*lengthscale, "lengthscale")?;
                positive(*scale, "scale")
            }
            Self::TabularDelta { scale } => positive(*scale, "scale"),
            Self::Scaled { base, multiplier } => {
                positive(*multiplier, "multiplier")?;
                base.validate()
            }
        }
    }

    #[inline]
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match self {
            Self::Rbf { lengthscale, scale } => {
                let sq = x
                    .iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                *scale * (-sq / (T::lit(2.0) * *lengthscale * *lengthscale)).exp()
            }
            Self::TabularDelta { scale } => {
                if x == y {
                    *scale
                } else {
                    T::zero()
                }
            }
            Self::Scaled { base, multiplier } => *multiplier * base.eval(x, y),
        }
    }

    /// `k(x, x)`; constant for every kernel here.
    pub fn diag(&self, x: &[T]) -> T {
        self.eval(x, x)
    }

    pub fn gram(&self, xs: &[Vec<T>]) -> Matrix<T> {
        let n = xs.len();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&xs[i], &xs[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `[k(x_1, x), …, k(x_n, x)]`.
    pub fn cross(&self, xs: &[Vec<T>], x: &[T]) -> Vec<T> {
        xs.iter().map(|xi| self.eval(xi, x)).collect()
    }
}
