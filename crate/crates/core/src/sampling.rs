//! Random designs and the partition-function estimators.
//!
//! The exploitation partition `Z = ∫ exp(α·EI(x)) dx` is estimated with a
//! two-population balance estimator: `I` uniform draws (`p = 1/D`) and `J` draws
//! from an isotropic normal `q` centred on the observed sample. Each draw
//! contributes `D g(x) / (n_pop (1 + D q(x)))`. The exploration partition is a
//! plain Monte-Carlo average over uniform draws. Everything is accumulated in
//! log space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::scalar::{log1p_exp, log_mean_exp, log_sum_exp, Scalar};
use crate::space::SearchSpace;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream path into an independent seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &s in stream {
        h = mix(h.wrapping_add(s.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15));
    }
    mix(h)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("proposal spread must be positive, got {0}")]
    NonPositiveSpread(f64),
    #[error("both proposal populations need at least one draw (uniform {uniform}, normal {normal})")]
    EmptyPopulation { uniform: usize, normal: usize },
    #[error("proposal centre has {found} coordinates, space has {expected}")]
    CentreDimension { expected: usize, found: usize },
}

/// Latin hypercube design: on every axis each of the `n` equal-width strata holds
/// exactly one point, jittered uniformly inside its stratum.
pub fn lhs_with<T: Scalar, R: Rng + ?Sized>(space: &SearchSpace<T>, n: usize, rng: &mut R) -> Vec<Vec<T>> {
    let p = space.dim();
    let mut points = vec![vec![T::zero(); p]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    let nf = n as f64;
    for axis in 0..p {
        perm.shuffle(rng);
        let (l, w) = (space.lower()[axis], space.width(axis));
        let top = space.upper()[axis];
        for (point, &stratum) in points.iter_mut().zip(&perm) {
            let u: f64 = rng.gen();
            let frac = T::lit((stratum as f64 + u) / nf);
            point[axis] = (l + frac * w).min(top);
        }
    }
    points
}

pub fn lhs<T: Scalar>(space: &SearchSpace<T>, n: usize, seed: u64) -> Vec<Vec<T>> {
    lhs_with(space, n, &mut seeded_rng(seed))
}

pub fn uniform_with<T: Scalar, R: Rng + ?Sized>(space: &SearchSpace<T>, n: usize, rng: &mut R) -> Vec<Vec<T>> {
    (0..n)
        .map(|_| {
            (0..space.dim())
                .map(|i| {
                    let u: f64 = rng.gen();
                    (space.lower()[i] + T::lit(u) * space.width(i)).min(space.upper()[i])
                })
                .collect()
        })
        .collect()
}

/// Draws from `N(mu, sigma² I)` (not truncated to any box).
pub fn isotropic_normal_with<T: Scalar, R: Rng + ?Sized>(mu: &[T], sigma: T, n: usize, rng: &mut R) -> Vec<Vec<T>> {
    (0..n)
        .map(|_| {
            mu.iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + sigma * T::lit(z)
                })
                .collect()
        })
        .collect()
}

pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&u, &v)| s + (u - v) * (u - v))
}

/// Euclidean distance from `x` to its nearest neighbour in `prev` (`+inf` when `prev` is empty).
pub fn max_min_distance<T: Scalar>(x: &[T], prev: &[Vec<T>]) -> T {
    prev.iter()
        .map(|p| squared_distance(x, p))
        .fold(T::infinity(), T::min)
        .sqrt()
}

/// Settings of the mixed uniform/normal proposal.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProposalConfig<T> {
    /// Spread of the normal population, in the units of the space it is used on.
    pub sigma: T,
    pub n_uniform: usize,
    pub n_normal: usize,
}

impl<T: Scalar> Default for ProposalConfig<T> {
    fn default() -> Self {
        Self { sigma: T::lit(0.01), n_uniform: 5000, n_normal: 5000 }
    }
}

impl<T: Scalar> ProposalConfig<T> {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if !(self.sigma > T::zero()) {
            return Err(SamplingError::NonPositiveSpread(self.sigma.to_f64().unwrap_or(f64::NAN)));
        }
        if self.n_uniform == 0 || self.n_normal == 0 {
            return Err(SamplingError::EmptyPopulation { uniform: self.n_uniform, normal: self.n_normal });
        }
        Ok(())
    }
}

/// A log-partition estimate with the delta-method standard error of `log Ẑ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPartition<T> {
    pub log_z: T,
    pub std_err: T,
}

/// One realization of the balance proposal around a centre. The same draw can be
/// re-weighted for any integrand evaluated on [`BalanceSample::points`].
#[derive(Debug, Clone)]
pub struct BalanceSample<T> {
    points: Vec<Vec<T>>,
    /// `log(D / (n_pop (1 + D q(x))))`, with `q` evaluated at the unprojected draw.
    log_weights: Vec<T>,
    n_uniform: usize,
}

impl<T: Scalar> BalanceSample<T> {
    /// Draws `I` uniform points and `J` normal points around `centre`. Normal draws
    /// that leave the box are projected onto it for evaluation.
    pub fn draw<R: Rng + ?Sized>(
        space: &SearchSpace<T>,
        centre: &[T],
        cfg: &ProposalConfig<T>,
        rng: &mut R,
    ) -> Result<Self, SamplingError> {
        cfg.validate()?;
        if centre.len() != space.dim() {
            return Err(SamplingError::CentreDimension { expected: space.dim(), found: centre.len() });
        }
        let p = T::from_usize_lossy(space.dim());
        let log_d = space.log_volume();
        let two_s2 = T::lit(2.0) * cfg.sigma * cfg.sigma;
        let log_q_norm = -p * T::lit(0.5) * T::lit(std::f64::consts::TAU).ln() - p * cfg.sigma.ln();
        let log_q = |x: &[T]| log_q_norm - squared_distance(x, centre) / two_s2;

        let uniform = uniform_with(space, cfg.n_uniform, rng);
        let normal = isotropic_normal_with(centre, cfg.sigma, cfg.n_normal, rng);

        let mut points = Vec::with_capacity(cfg.n_uniform + cfg.n_normal);
        let mut log_weights = Vec::with_capacity(points.capacity());
        let log_i = T::from_usize_lossy(cfg.n_uniform).ln();
        for x in uniform {
            log_weights.push(log_d - log_i - log1p_exp(log_d + log_q(&x)));
            points.push(x);
        }
        let log_j = T::from_usize_lossy(cfg.n_normal).ln();
        for x in normal {
            log_weights.push(log_d - log_j - log1p_exp(log_d + log_q(&x)));
            points.push(space.clamp(&x));
        }
        Ok(Self { points, log_weights, n_uniform: cfg.n_uniform })
    }

    /// Evaluation points: the uniform population followed by the (projected) normal one.
    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn n_uniform(&self) -> usize {
        self.n_uniform
    }

    /// `log Ẑ` for the integrand `exp(alpha · values[k])`.
    pub fn log_z(&self, values: &[T], alpha: T) -> T {
        self.log_z_with(values, alpha, &mut Vec::new())
    }

    /// Same as [`BalanceSample::log_z`] reusing a scratch buffer.
    pub fn log_z_with(&self, values: &[T], alpha: T, scratch: &mut Vec<T>) -> T {
        assert_eq!(values.len(), self.points.len(), "one value per proposal point");
        scratch.clear();
        scratch.extend(self.log_weights.iter().zip(values).map(|(&w, &v)| w + alpha * v));
        log_sum_exp(scratch)
    }

    /// `log Ẑ` and its standard error from the per-population sample variances.
    pub fn estimate(&self, values: &[T], alpha: T) -> LogPartition<T> {
        assert_eq!(values.len(), self.points.len(), "one value per proposal point");
        let log_z = self.log_z(values, alpha);
        let n_u = self.n_uniform;
        let n_n = self.points.len() - n_u;
        // per-draw contributions D g/(1+Dq), scaled by exp(-log_z) to stay finite
        let contrib = |k: usize, n_pop: usize| {
            (self.log_weights[k] + alpha * values[k] + T::from_usize_lossy(n_pop).ln() - log_z).exp()
        };
        let pop_var = |range: std::ops::Range<usize>, n_pop: usize| {
            if n_pop < 2 {
                return T::zero();
            }
            let c: Vec<T> = range.map(|k| contrib(k, n_pop)).collect();
            let nf = T::from_usize_lossy(n_pop);
            let mean = c.iter().copied().sum::<T>() / nf;
            let var = c.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (nf - T::one());
            var / nf
        };
        let var = pop_var(0..n_u, n_u) + pop_var(n_u..n_u + n_n, n_n);
        LogPartition { log_z, std_err: var.sqrt() }
    }
}

/// `log Ẑ_BO` for `∫ exp(alpha · ei(x)) dx` with the balance proposal centred at `centre`.
pub fn z_bo_hat<T: Scalar, F: Fn(&[T]) -> T>(
    ei: F,
    alpha: T,
    space: &SearchSpace<T>,
    centre: &[T],
    cfg: &ProposalConfig<T>,
    seed: u64,
) -> Result<T, SamplingError> {
    let sample = BalanceSample::draw(space, centre, cfg, &mut seeded_rng(seed))?;
    let values: Vec<T> = sample.points().iter().map(|x| ei(x)).collect();
    Ok(sample.log_z(&values, alpha))
}

/// Plain uniform Monte-Carlo `log(D · mean g)` for `g = exp(alpha · h(x))`.
pub fn z_uniform_hat<T: Scalar, F: Fn(&[T]) -> T>(h: F, alpha: T, space: &SearchSpace<T>, n: usize, seed: u64) -> T {
    let pts = uniform_with(space, n, &mut seeded_rng(seed));
    let vals: Vec<T> = pts.iter().map(|x| alpha * h(x)).collect();
    space.log_volume() + log_mean_exp(&vals)
}

/// `log Ẑ_INI = log D + log mean exp(alpha · d(x_u))` over `n` uniform draws.
/// Returns exactly `log D` when `alpha == 0`.
pub fn z_ini_hat<T: Scalar, F: Fn(&[T]) -> T>(
    distance: F,
    alpha: T,
    space: &SearchSpace<T>,
    n: usize,
    seed: u64,
) -> T {
    if alpha == T::zero() {
        return space.log_volume();
    }
    z_uniform_hat(distance, alpha, space, n, seed)
}
