//! Small dense linear algebra: a row-major matrix and a growable Cholesky
//! factor with jitter escalation.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest diagonal jitter tried before a factorization is declared failed.
const MAX_JITTER: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn add_diagonal(&mut self, value: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + value;
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
///
/// Rows are stored ragged (row `i` holds `i + 1` entries) so the factor can
/// grow one row at a time when a design point is appended.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    rows: Vec<Vec<T>>,
    jitter: T,
}

impl<T: Scalar> Cholesky<T> {
    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            jitter: T::zero(),
        }
    }

    /// Factors a symmetric matrix, retrying with diagonal jitter 1e-10,
    /// 1e-9, ... up to 1e-6 when a pivot is not positive.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "cannot factor a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let mut jitter = T::zero();
        let mut last_failure;
        loop {
            match Self::try_factor(a, jitter) {
                Ok(rows) => return Ok(Self { rows, jitter }),
                Err(pivot) => last_failure = pivot,
            }
            jitter = if jitter == T::zero() {
                T::min_jitter()
            } else {
                jitter * T::lit(10.0)
            };
            if jitter > T::lit(MAX_JITTER) * (T::one() + T::lit(1e-9)) {
                break;
            }
        }
        let (index, pivot) = last_failure;
        Err(Error::Factorization(format!(
            "matrix of order {} not positive definite after jitter up to {MAX_JITTER:e}: \
             pivot {index} = {pivot:e}, diagonal range [{:e}, {:e}]",
            a.rows(),
            (0..a.rows()).map(|i| a[(i, i)]).fold(T::infinity(), T::min),
            (0..a.rows()).map(|i| a[(i, i)]).fold(T::neg_infinity(), T::max),
        )))
    }

    fn try_factor(a: &Matrix<T>, jitter: T) -> std::result::Result<Vec<Vec<T>>, (usize, T)> {
        let n = a.rows();
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
        for i in 0..n {
            let row = Self::next_row(&rows, |j| a[(i, j)], a[(i, i)] + jitter).map_err(|p| (i, p))?;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Computes the next factor row for a new symmetric row/column whose
    /// off-diagonal entries are `col(j)` for existing index `j`.
    fn next_row(
        rows: &[Vec<T>],
        col: impl Fn(usize) -> T,
        diag: T,
    ) -> std::result::Result<Vec<T>, T> {
        let n = rows.len();
        let mut new = Vec::with_capacity(n + 1);
        for j in 0..n {
            let lj = &rows[j];
            let s = dot(&new[..j], &lj[..j]);
            new.push((col(j) - s) / lj[j]);
        }
        let pivot = diag - dot(&new, &new);
        if !(pivot > T::zero()) || !pivot.is_finite() {
            return Err(pivot);
        }
        new.push(pivot.sqrt());
        Ok(new)
    }

    /// Extends the factored matrix by one symmetric row/column. `col` holds
    /// the new off-diagonal entries against the existing rows and `diag` the
    /// new diagonal entry (the current jitter is added automatically).
    pub fn append(&mut self, col: &[T], diag: T) -> Result<()> {
        if col.len() != self.rows.len() {
            return Err(Error::Dimension(format!(
                "append expects {} off-diagonal entries, got {}",
                self.rows.len(),
                col.len()
            )));
        }
        let row = Self::next_row(&self.rows, |j| col[j], diag + self.jitter).map_err(|pivot| {
            Error::Factorization(format!(
                "appended row {} has non-positive pivot {pivot:e}",
                self.rows.len()
            ))
        })?;
        self.rows.push(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [T]) {
        for i in 0..self.rows.len() {
            let row = &self.rows[i];
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [T]) {
        let n = self.rows.len();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s = s - self.rows[k][i] * b[k];
            }
            b[i] = s / self.rows[i][i];
        }
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `log det(L Lᵀ)`.
    pub fn log_det(&self) -> T {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r[i].ln())
            .fold(T::zero(), |a, b| a + b)
            * T::lit(2.0)
    }

    /// `tr((L Lᵀ)⁻¹) = ‖L⁻¹‖_F²`, computed column by column.
    pub fn inverse_trace(&self) -> T {
        let n = self.rows.len();
        let mut total = T::zero();
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            // L⁻¹ e_j is zero above index j.
            for i in j..n {
                let row = &self.rows[i];
                let s = dot(&row[j..i], &e[j..i]);
                e[i] = (e[i] - s) / row[i];
            }
            total = total + e[j..].iter().fold(T::zero(), |a, &x| a + x * x);
        }
        total
    }

    /// Entry `L[i][j]` (zero above the diagonal).
    pub fn entry(&self, i: usize, j: usize) -> T {
        if j > i {
            T::zero()
        } else {
            self.rows[i][j]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        Matrix::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ])
        .unwrap()
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let a = spd3();
        let l = Cholesky::factor(&a).unwrap();
        assert_eq!(l.jitter(), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l.entry(i, k) * l.entry(j, k)).sum();
                assert!((v - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn append_matches_full_factor() {
        let a = spd3();
        let full = Cholesky::factor(&a).unwrap();
        let top = Matrix::from_fn(2, 2, |i, j| a[(i, j)]);
        let mut grown = Cholesky::factor(&top).unwrap();
        grown.append(&[a[(2, 0)], a[(2, 1)]], a[(2, 2)]).unwrap();
        for i in 0..3 {
            for j in 0..=i {
                assert!((grown.entry(i, j) - full.entry(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn solve_log_det_and_inverse_trace() {
        let a = spd3();
        let l = Cholesky::factor(&a).unwrap();
        let b = [1.0, -2.0, 0.5];
        let x = l.solve(&b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(b) {
            assert!((u - v).abs() < 1e-12);
        }
        // det by cofactor expansion
        let det = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.4) + 0.4 * (2.0 - 5.0 * 0.4);
        assert!((l.log_det() - f64::ln(det)).abs() < 1e-12);
        // trace of inverse via solves against unit vectors
        let tr: f64 = (0..3)
            .map(|j| {
                let mut e = [0.0; 3];
                e[j] = 1.0;
                l.solve(&e)[j]
            })
            .sum();
        assert!((l.inverse_trace() - tr).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_singular_psd() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let l = Cholesky::factor(&a).unwrap();
        assert!(l.jitter() > 0.0 && l.jitter() <= 1e-6);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let err = Cholesky::factor(&a).unwrap_err();
        assert!(matches!(err, Error::Factorization(_)));
        assert!(err.to_string().contains("pivot 1"));
    }

    #[test]
    fn works_in_single_precision() {
        let a = Matrix::<f32>::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let x = Cholesky::factor(&a).unwrap().solve(&[1.0, 1.0]);
        let back = a.mul_vec(&x);
        assert!((back[0] - 1.0).abs() < 1e-5 && (back[1] - 1.0).abs() < 1e-5);
    }
}
