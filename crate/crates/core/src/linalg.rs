//! Dense Cholesky factorization for the small symmetric systems a kriging model needs.

use crate::scalar::Scalar;

/// Lower-triangular factor `L` with `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

/// Factorization failed at `pivot` with the offending diagonal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite<T> {
    pub pivot: usize,
    pub value: T,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors the symmetric `n × n` row-major matrix `a`. Only the lower triangle is read.
    pub fn factor(a: &[T], n: usize) -> Result<Self, NotPositiveDefinite<T>> {
        assert_eq!(a.len(), n * n, "matrix buffer does not match dimension");
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum = sum - l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(sum > T::zero()) || !sum.is_finite() {
                        return Err(NotPositiveDefinite { pivot: i, value: sum });
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut s = y[i];
            for (lik, yk) in row.iter().zip(&y[..i]) {
                s = s - *lik * *yk;
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n).map(|i| two * self.l[i * self.n + i].ln()).sum()
    }

    /// Smallest diagonal entry of `L`, a cheap conditioning indicator.
    pub fn min_pivot(&self) -> T {
        (0..self.n)
            .map(|i| self.l[i * self.n + i])
            .fold(T::infinity(), T::min)
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
