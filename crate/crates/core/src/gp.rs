//! Noise-free kriging surrogate with a constant trend and the squared-exponential
//! correlation `R_ij = exp(-(x_i - x_j)ᵀ Λ (x_i - x_j))`, `Λ = diag(λ)`.

use thiserror::Error;

use crate::linalg::{dot, Cholesky};
use crate::scalar::Scalar;

/// First nugget tried, relative to `trace(R) / k`.
pub const NUGGET_START: f64 = 1e-10;
/// Largest nugget before fitting gives up.
pub const NUGGET_MAX: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("a surrogate needs at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("training input {row} has {found} coordinates, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("{inputs} training inputs but {outputs} objective values")]
    LengthMismatch { inputs: usize, outputs: usize },
    #[error("length-scale weight {axis} = {value} must be positive and finite")]
    InvalidLambda { axis: usize, value: f64 },
    #[error("correlation matrix not positive definite with nugget {nugget:e} (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { nugget: f64, pivot: usize, value: f64 },
    #[error("objective values are constant, the variance estimate is zero")]
    DegenerateData,
    #[error("candidate grid is empty")]
    EmptyGrid,
}

/// Predictive mean and pointwise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub mean: T,
    pub sd: T,
}

/// `exp(-(a - b)ᵀ Λ (a - b))`.
#[inline]
pub fn correlation<T: Scalar>(a: &[T], b: &[T], lambda: &[T]) -> T {
    let mut s = T::zero();
    for ((&u, &v), &l) in a.iter().zip(b).zip(lambda) {
        let d = u - v;
        s = s + l * d * d;
    }
    (-s).exp()
}

/// Dense row-major correlation matrix of the training inputs (no nugget).
pub fn correlation_matrix<T: Scalar>(x: &[Vec<T>], lambda: &[T]) -> Vec<T> {
    let k = x.len();
    let mut r = vec![T::zero(); k * k];
    for i in 0..k {
        r[i * k + i] = T::one();
        for j in 0..i {
            let c = correlation(&x[i], &x[j], lambda);
            r[i * k + j] = c;
            r[j * k + i] = c;
        }
    }
    r
}

/// A fitted surrogate for one history. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    x: Vec<Vec<T>>,
    f: Vec<T>,
    lambda: Vec<T>,
    chol: Cholesky<T>,
    nugget: T,
    b: T,
    sigma2: T,
    r_inv_one: Vec<T>,
    one_r_inv_one: T,
    r_inv_resid: Vec<T>,
}

impl<T: Scalar> GpModel<T> {
    /// Fits the surrogate. The nugget starts at `1e-10 · trace(R)/k` and grows
    /// tenfold until the factorization succeeds or it passes `1e-4`.
    pub fn fit(x: &[Vec<T>], f: &[T], lambda: &[T]) -> Result<Self, GpError> {
        let k = x.len();
        if k != f.len() {
            return Err(GpError::LengthMismatch { inputs: k, outputs: f.len() });
        }
        if k < 2 {
            return Err(GpError::TooFewPoints(k));
        }
        let p = lambda.len();
        for (row, xi) in x.iter().enumerate() {
            if xi.len() != p {
                return Err(GpError::DimensionMismatch { row, expected: p, found: xi.len() });
            }
        }
        for (axis, &l) in lambda.iter().enumerate() {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(GpError::InvalidLambda { axis, value: l.to_f64().unwrap_or(f64::NAN) });
            }
        }

        let base = correlation_matrix(x, lambda);
        let scale = (0..k).map(|i| base[i * k + i]).sum::<T>() / T::from_usize_lossy(k);
        let mut nugget = T::lit(NUGGET_START) * scale;
        let max = T::lit(NUGGET_MAX) * scale;
        let chol = loop {
            let mut r = base.clone();
            for i in 0..k {
                r[i * k + i] = r[i * k + i] + nugget;
            }
            match Cholesky::factor(&r, k) {
                Ok(c) => break c,
                Err(e) => {
                    let next = nugget * T::lit(10.0);
                    if next > max * T::lit(1.000_001) {
                        return Err(GpError::NotPositiveDefinite {
                            nugget: nugget.to_f64().unwrap_or(f64::NAN),
                            pivot: e.pivot,
                            value: e.value.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                    nugget = next;
                }
            }
        };

        let ones = vec![T::one(); k];
        let r_inv_one = chol.solve(&ones);
        let one_r_inv_one: T = r_inv_one.iter().copied().sum();
        let b = dot(&r_inv_one, f) / one_r_inv_one;
        let resid: Vec<T> = f.iter().map(|&v| v - b).collect();
        let r_inv_resid = chol.solve(&resid);
        let sigma2 = (dot(&resid, &r_inv_resid) / T::from_usize_lossy(k)).max(T::zero());

        Ok(Self {
            x: x.to_vec(),
            f: f.to_vec(),
            lambda: lambda.to_vec(),
            chol,
            nugget,
            b,
            sigma2,
            r_inv_one,
            one_r_inv_one,
            r_inv_resid,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<T>] {
        &self.x
    }

    pub fn outputs(&self) -> &[T] {
        &self.f
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    /// Generalized least-squares constant trend `b`.
    pub fn trend(&self) -> T {
        self.b
    }

    /// Process variance estimate `σ²`.
    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn nugget(&self) -> T {
        self.nugget
    }

    /// `1ᵀ R⁻¹ 1`.
    pub fn one_r_inv_one(&self) -> T {
        self.one_r_inv_one
    }

    /// `log |R|` including the nugget.
    pub fn log_det(&self) -> T {
        self.chol.log_det()
    }

    /// `log(σ^k |R|^{1/2})`, the quantity minimized by the length-scale MLE.
    /// `-inf` when the data are constant.
    pub fn neg_log_likelihood(&self) -> T {
        let half = T::lit(0.5);
        half * T::from_usize_lossy(self.len()) * self.sigma2.ln() + half * self.log_det()
    }

    /// Predictive mean `b + rᵀR⁻¹(f - 1b)` and the ordinary-kriging standard deviation
    /// `σ sqrt(1 - rᵀR⁻¹r + (1 - 1ᵀR⁻¹r)² / 1ᵀR⁻¹1)`, clamped at zero.
    ///
    /// Panics if `x` has the wrong length.
    pub fn predict(&self, x: &[T]) -> Prediction<T> {
        assert_eq!(x.len(), self.dim(), "query point dimension mismatch");
        let r: Vec<T> = self.x.iter().map(|xi| correlation(x, xi, &self.lambda)).collect();
        let mean = self.b + dot(&r, &self.r_inv_resid);
        let w = self.chol.solve_lower(&r);
        let rr = dot(&w, &w);
        let u = T::one() - dot(&self.r_inv_one, &r);
        let v = T::one() - rr + u * u / self.one_r_inv_one;
        let sd = if v > T::zero() { (self.sigma2 * v).sqrt() } else { T::zero() };
        Prediction { mean, sd }
    }
}

/// The grid member minimizing `log(σ^k |R|^{1/2})`, with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct MleChoice<T> {
    pub lambda: Vec<T>,
    pub objective: T,
}

/// Grid-search maximum likelihood for the length-scale weights. Ties go to the
/// lexicographically smaller candidate.
pub fn mle_lambda<T: Scalar>(
    x: &[Vec<T>],
    f: &[T],
    grid: &[Vec<T>],
) -> Result<MleChoice<T>, GpError> {
    if grid.is_empty() {
        return Err(GpError::EmptyGrid);
    }
    let mut best: Option<MleChoice<T>> = None;
    let mut last_err = None;
    let mut degenerate = false;
    for cand in grid {
        let model = match GpModel::fit(x, f, cand) {
            Ok(m) => m,
            Err(e @ GpError::NotPositiveDefinite { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let obj = model.neg_log_likelihood();
        if !obj.is_finite() {
            degenerate = true;
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => obj < b.objective || (obj == b.objective && lex_less(cand, &b.lambda)),
        };
        if better {
            best = Some(MleChoice { lambda: cand.clone(), objective: obj });
        }
    }
    match (best, degenerate, last_err) {
        (Some(b), _, _) => Ok(b),
        (None, true, _) => Err(GpError::DegenerateData),
        (None, false, Some(e)) => Err(e),
        (None, false, None) => Err(GpError::EmptyGrid),
    }
}

fn lex_less<T: Scalar>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}
