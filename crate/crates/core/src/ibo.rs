//! Inverse Bayesian optimization: the most likely BO settings for an observed
//! trajectory.
//!
//! A trajectory `x_1 .. x_T` is explained as an exploration phase of `K₀` samples
//! followed by BO. Sample `i ≤ K₀` is scored by the max-min exploration cost
//!
//! ```text
//! l̃_i = -α_INI d(x_i, X_<i) + log(Ẑ_INI / D),        i = 2..T
//! ```
//!
//! and sample `j > K₀` by the BO cost of a Boltzmann density over EI,
//!
//! ```text
//! l_j = -α_BO EI(x_j; h_{j-1}, λ) + log(Ẑ_BO / D),    j = 3..T
//! ```
//!
//! The total `L(K₀) = Σ_{i=2..K₀} l̃_i + Σ_{j=K₀+1..T} l_j` is scanned over `K₀` and
//! minimized over `λ`, `α_BO` and `α_INI`. Positions are 1-based throughout this
//! module. All costs are computed in `[-1, 1]^p` (so `D = 2^p`); length-scale weights
//! are accepted and reported in the trajectory's own units.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::expected_improvement;
use crate::gp::{GpError, GpModel};
use crate::local::{minimize_bounded, BoundedOptions};
use crate::sampling::{
    derive_seed, lhs, max_min_distance, seeded_rng, uniform_with, BalanceSample, LogPartition, ProposalConfig,
    SamplingError,
};
use crate::scalar::{log_mean_exp, Scalar};
use crate::space::{normalize_trajectory, Normalizer, SearchSpace, Trajectory, TrajectoryError};

const INI_STREAM: u64 = 1;
const BO_STREAM: u64 = 2;
const RESTART_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum IboError {
    #[error("trajectory has {len} samples, at least {needed} are required")]
    InsufficientTrajectory { len: usize, needed: usize },
    #[error("position {index} is outside the valid range {min}..={max}")]
    PositionOutOfRange { index: usize, min: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct IboConfig<T> {
    pub alpha_bo_grid: Vec<T>,
    pub alpha_ini_values: Vec<T>,
    /// Candidate length-scale vectors for grid estimation, in trajectory units.
    pub lambda_grid: Vec<Vec<T>>,
    /// Per-axis box for continuous estimation, in trajectory units.
    pub lambda_bounds: (T, T),
    pub n_restarts: usize,
    /// Relative finite-difference step of the continuous descent (in log-λ coordinates).
    pub fd_step: T,
    pub max_descent_iter: usize,
    pub k0_fixed: Option<usize>,
    pub proposal: ProposalConfig<T>,
    /// Uniform draws per exploration partition estimate.
    pub n_ini: usize,
    pub seed: u64,
}

/// `{0.01, 0.1, 1, 10}`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    [0.01, 0.1, 1.0, 10.0].into_iter().map(T::lit).collect()
}

impl<T: Scalar> IboConfig<T> {
    /// Defaults for a `dim`-dimensional problem: isotropic `λ ∈ {0.01, 0.1, 1, 10}`,
    /// `α_BO ∈ {0.01, 0.1, 1, 10}`, `α_INI ∈ {1, 10}`, `I = J = 5000`, 10⁴ exploration draws.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            alpha_bo_grid: default_grid(),
            alpha_ini_values: vec![T::one(), T::lit(10.0)],
            lambda_grid: default_grid::<T>().into_iter().map(|v| vec![v; dim]).collect(),
            lambda_bounds: (T::lit(0.01), T::lit(10.0)),
            n_restarts: 10,
            fd_step: T::lit(1e-4),
            max_descent_iter: 30,
            k0_fixed: None,
            proposal: ProposalConfig::default(),
            n_ini: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), IboError> {
        let bad = |m: &str| Err(IboError::InvalidConfig(m.to_string()));
        if self.alpha_bo_grid.is_empty() || self.alpha_ini_values.is_empty() {
            return bad("alpha grids must be nonempty");
        }
        if self.alpha_bo_grid.iter().chain(&self.alpha_ini_values).any(|a| !(*a >= T::zero()) || !a.is_finite()) {
            return bad("alpha values must be finite and nonnegative");
        }
        if self.lambda_grid.iter().any(|l| l.len() != dim) {
            return bad("lambda grid entries must match the trajectory dimension");
        }
        let (lo, hi) = self.lambda_bounds;
        if !(lo > T::zero()) || !(hi >= lo) || !hi.is_finite() {
            return bad("lambda bounds must satisfy 0 < lower <= upper");
        }
        if self.n_restarts == 0 || self.n_ini == 0 {
            return bad("n_restarts and n_ini must be positive");
        }
        if !(self.fd_step > T::zero()) {
            return bad("fd_step must be positive");
        }
        if let Some(k0) = self.k0_fixed {
            if k0 < 2 {
                return bad("k0_fixed must be at least 2");
            }
        }
        self.proposal.validate()?;
        Ok(())
    }
}

/// Exploration cost of sample `i` (1-based, `i ≥ 2`) in a trajectory already mapped
/// to `[-1, 1]^p`. `α_INI = 0` gives exactly zero.
fn ini_term_unit<T: Scalar>(unit: &Trajectory<T>, i: usize, alpha_ini: T, n: usize, seed: u64) -> T {
    if alpha_ini == T::zero() {
        return T::zero();
    }
    let prev = &unit.xs()[..i - 1];
    let d_i = max_min_distance(&unit.samples()[i - 1].x, prev);
    let draws = uniform_with(unit.space(), n, &mut seeded_rng(seed));
    let scaled: Vec<T> = draws.iter().map(|x| alpha_ini * max_min_distance(x, prev)).collect();
    -alpha_ini * d_i + log_mean_exp(&scaled)
}

fn check_position<T: Scalar>(t: &Trajectory<T>, index: usize, min: usize) -> Result<(), IboError> {
    if t.len() < min {
        return Err(IboError::InsufficientTrajectory { len: t.len(), needed: min });
    }
    if index < min || index > t.len() {
        return Err(IboError::PositionOutOfRange { index, min, max: t.len() });
    }
    Ok(())
}

/// `l̃_i = -α_INI d(x_i, X_<i) + log(Ẑ_INI / D)` for position `i ≥ 2`, estimated with
/// `n` uniform draws seeded by `seed`.
pub fn l_ini_term<T: Scalar>(t: &Trajectory<T>, i: usize, alpha_ini: T, n: usize, seed: u64) -> Result<T, IboError> {
    check_position(t, i, 2)?;
    let (unit, _) = normalize_trajectory(t)?;
    Ok(ini_term_unit(&unit, i, alpha_ini, n, seed))
}

/// EI at the observed sample and on every proposal point, for one BO step.
#[derive(Debug, Clone)]
pub struct EiProfile<T> {
    pub at_sample: T,
    pub on_proposal: Vec<T>,
}

impl<T: Scalar> EiProfile<T> {
    fn compute(unit: &Trajectory<T>, j: usize, lambda_unit: &[T], proposal: &BalanceSample<T>) -> Result<Self, GpError> {
        let xs = unit.xs();
        let fs = unit.fs();
        let model = GpModel::fit(&xs[..j - 1], &fs[..j - 1], lambda_unit)?;
        let f_min = fs[..j - 1].iter().copied().fold(T::infinity(), T::min);
        let at_sample = expected_improvement(&model, f_min, &xs[j - 1]);
        let on_proposal = proposal.points().iter().map(|x| expected_improvement(&model, f_min, x)).collect();
        Ok(Self { at_sample, on_proposal })
    }

    /// `l̂ = -α EI(x_j) + log(Ẑ_BO / D)`; exactly zero when `α = 0`.
    pub fn cost(&self, proposal: &BalanceSample<T>, alpha: T, log_d: T) -> T {
        if alpha == T::zero() {
            return T::zero();
        }
        -alpha * self.at_sample + proposal.log_z(&self.on_proposal, alpha) - log_d
    }
}

/// `l_j = -α_BO EI(x_j; h_{j-1}, λ) + log(Ẑ_BO / D)` for position `j ≥ 3`. The GP is
/// fit to the first `j - 1` samples and the normal proposal is centred at `x_j`.
pub fn l_bo_term<T: Scalar>(
    t: &Trajectory<T>,
    j: usize,
    lambda: &[T],
    alpha_bo: T,
    proposal: &ProposalConfig<T>,
    seed: u64,
) -> Result<T, IboError> {
    check_position(t, j, 3)?;
    if alpha_bo == T::zero() {
        return Ok(T::zero());
    }
    let (unit, map) = normalize_trajectory(t)?;
    let sample = BalanceSample::draw(unit.space(), &unit.samples()[j - 1].x, proposal, &mut seeded_rng(seed))?;
    let profile = EiProfile::compute(&unit, j, &map.lambda_to_unit(lambda), &sample)?;
    Ok(profile.cost(&sample, alpha_bo, unit.space().log_volume()))
}

/// Best split of a (prefix of a) trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T> {
    pub k0: usize,
    pub cost: T,
}

/// Scans `K₀` for the first `len` samples. `ini[i-2]` holds `l̃_i` and `bo[j-3]` holds
/// `l_j`. Ties go to the smaller `K₀`.
pub fn scan_k0<T: Scalar>(ini: &[T], bo: &[T], len: usize, k0_fixed: Option<usize>) -> Split<T> {
    assert!(len >= 2, "a split needs at least 2 samples");
    assert!(ini.len() + 1 >= len && bo.len() + 2 >= len, "missing terms for prefix");
    let cost_at = |k0: usize| -> T {
        let explore: T = ini[..k0 - 1].iter().copied().sum();
        let exploit: T = bo[k0 - 2..len - 2].iter().copied().sum();
        explore + exploit
    };
    if let Some(k0) = k0_fixed {
        let k0 = k0.clamp(2, len);
        return Split { k0, cost: cost_at(k0) };
    }
    let mut best = Split { k0: 2, cost: cost_at(2) };
    for k0 in 3..=len {
        let c = cost_at(k0);
        if c < best.cost {
            best = Split { k0, cost: c };
        }
    }
    best
}

/// Every term of one cost evaluation plus the minimizing split.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown<T> {
    pub cost: T,
    pub k0: usize,
    /// `l̃_i` for `i = 2..=T`.
    pub exploration: Vec<T>,
    /// `l_j` for `j = 3..=T`.
    pub bo: Vec<T>,
}

/// One term with its 1-based trajectory position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexedTerm<T> {
    pub position: usize,
    pub value: T,
}

/// Terms that make up the reported cost: exploration terms for `2..=K₀` and BO
/// terms for `K₀+1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct TermBreakdown<T> {
    pub exploration: Vec<IndexedTerm<T>>,
    pub bo: Vec<IndexedTerm<T>>,
}

impl<T: Scalar> TermBreakdown<T> {
    fn from_split(ini: &[T], bo: &[T], len: usize, k0: usize) -> Self {
        Self {
            exploration: (2..=k0).map(|i| IndexedTerm { position: i, value: ini[i - 2] }).collect(),
            bo: (k0 + 1..=len).map(|j| IndexedTerm { position: j, value: bo[j - 3] }).collect(),
        }
    }

    pub fn total(&self) -> T {
        self.exploration.iter().chain(&self.bo).map(|t| t.value).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct IboEstimate<T> {
    /// Length-scale weights in trajectory units.
    pub lambda_hat: Vec<T>,
    pub alpha_bo_hat: T,
    pub alpha_ini_hat: T,
    pub k0_hat: usize,
    pub cost: T,
    pub terms: TermBreakdown<T>,
    /// Continuous descent never beat the best grid corner, which is returned instead.
    #[serde(default)]
    pub used_fallback: bool,
}

/// One row of the cost table: minimal `L` over `K₀` for a parameter cell and prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct CostRow<T> {
    pub lambda: Vec<T>,
    pub alpha_bo: T,
    pub alpha_ini: T,
    pub prefix_len: usize,
    pub k0: usize,
    pub cost: T,
}

pub const COST_TABLE_HEADER: &str = "lambda,alpha_bo,alpha_ini,prefix_len,k0,cost";

/// Formats a length-scale vector for a CSV cell: a single number when isotropic,
/// otherwise `;`-separated components.
pub fn format_lambda<T: Scalar>(lambda: &[T]) -> String {
    match lambda.first() {
        Some(first) if lambda.iter().all(|v| v == first) => format!("{first}"),
        _ => lambda.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
    }
}

pub fn write_cost_table<T: Scalar, W: Write>(rows: &[CostRow<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "{COST_TABLE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_lambda(&r.lambda),
            r.alpha_bo,
            r.alpha_ini,
            r.prefix_len,
            r.k0,
            r.cost
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEstimate<T> {
    pub estimate: IboEstimate<T>,
    pub table: Vec<CostRow<T>>,
}

/// A trajectory with all random draws for its cost terms fixed, so that every
/// parameter setting is scored with common random numbers.
#[derive(Debug, Clone)]
pub struct PreparedTrajectory<T> {
    unit: Trajectory<T>,
    map: Normalizer<T>,
    log_d: T,
    /// For `i = 2..=T`: distance of `x_i` to its predecessors and `d(x_u, X_<i)` on the uniform draws.
    exploration: Vec<(T, Vec<T>)>,
    /// For `j = 3..=T`: the balance proposal centred at `x_j`.
    proposals: Vec<BalanceSample<T>>,
}

impl<T: Scalar> PreparedTrajectory<T> {
    /// Draws every partition sample. Term `i` uses seed `derive_seed(seed, [1, i])`
    /// and BO term `j` uses `derive_seed(seed, [2, j])`.
    pub fn new(t: &Trajectory<T>, proposal: &ProposalConfig<T>, n_ini: usize, seed: u64) -> Result<Self, IboError> {
        if t.len() < 2 {
            return Err(IboError::InsufficientTrajectory { len: t.len(), needed: 2 });
        }
        proposal.validate()?;
        let (unit, map) = normalize_trajectory(t)?;
        let xs = unit.xs();
        let exploration = (2..=unit.len())
            .into_par_iter()
            .map(|i| {
                let prev = &xs[..i - 1];
                let d_i = max_min_distance(&xs[i - 1], prev);
                let draws = uniform_with(unit.space(), n_ini, &mut seeded_rng(derive_seed(seed, &[INI_STREAM, i as u64])));
                let ds = draws.iter().map(|x| max_min_distance(x, prev)).collect();
                (d_i, ds)
            })
            .collect();
        let proposals = (3..=unit.len())
            .into_par_iter()
            .map(|j| {
                BalanceSample::draw(
                    unit.space(),
                    &xs[j - 1],
                    proposal,
                    &mut seeded_rng(derive_seed(seed, &[BO_STREAM, j as u64])),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { log_d: unit.space().log_volume(), unit, map, exploration, proposals })
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.unit.dim()
    }

    /// The trajectory mapped to `[-1, 1]^p`.
    pub fn unit_trajectory(&self) -> &Trajectory<T> {
        &self.unit
    }

    pub fn normalizer(&self) -> &Normalizer<T> {
        &self.map
    }

    pub fn proposal(&self, j: usize) -> &BalanceSample<T> {
        &self.proposals[j - 3]
    }

    /// `l̃_i` for `i = 2..=T`.
    pub fn exploration_terms(&self, alpha_ini: T) -> Vec<T> {
        self.exploration
            .iter()
            .map(|(d_i, ds)| {
                if alpha_ini == T::zero() {
                    return T::zero();
                }
                let scaled: Vec<T> = ds.iter().map(|&d| alpha_ini * d).collect();
                -alpha_ini * *d_i + log_mean_exp(&scaled)
            })
            .collect()
    }

    /// EI profiles for `j = 3..=T` under `lambda` (trajectory units).
    pub fn ei_profiles(&self, lambda: &[T]) -> Result<Vec<EiProfile<T>>, IboError> {
        self.ei_profiles_upto(lambda, self.len())
    }

    fn ei_profiles_upto(&self, lambda: &[T], len: usize) -> Result<Vec<EiProfile<T>>, IboError> {
        let lambda_unit = self.map.lambda_to_unit(lambda);
        (3..=len)
            .into_par_iter()
            .map(|j| EiProfile::compute(&self.unit, j, &lambda_unit, &self.proposals[j - 3]).map_err(IboError::from))
            .collect()
    }

    /// `l_j` for `j = 3..=T`, one row per entry of `alphas`.
    pub fn bo_terms(&self, lambda: &[T], alphas: &[T]) -> Result<Vec<Vec<T>>, IboError> {
        let profiles = self.ei_profiles(lambda)?;
        Ok(alphas
            .iter()
            .map(|&a| {
                profiles
                    .iter()
                    .zip(&self.proposals)
                    .map(|(p, s)| p.cost(s, a, self.log_d))
                    .collect()
            })
            .collect())
    }

    /// BO term `j` with its partition standard error.
    pub fn bo_term_with_error(&self, j: usize, lambda: &[T], alpha: T) -> Result<(T, T), IboError> {
        let lambda_unit = self.map.lambda_to_unit(lambda);
        let profile = EiProfile::compute(&self.unit, j, &lambda_unit, &self.proposals[j - 3])?;
        let LogPartition { std_err, .. } = self.proposals[j - 3].estimate(&profile.on_proposal, alpha);
        Ok((profile.cost(&self.proposals[j - 3], alpha, self.log_d), std_err))
    }

    /// `L` minimized over `K₀` for one parameter setting.
    pub fn total_cost(&self, lambda: &[T], alpha_ini: T, alpha_bo: T, k0_fixed: Option<usize>) -> Result<CostBreakdown<T>, IboError> {
        let exploration = self.exploration_terms(alpha_ini);
        let bo = if alpha_bo == T::zero() {
            vec![T::zero(); self.len().saturating_sub(2)]
        } else {
            self.bo_terms(lambda, &[alpha_bo])?.pop().expect("one alpha")
        };
        let split = scan_k0(&exploration, &bo, self.len(), k0_fixed);
        Ok(CostBreakdown { cost: split.cost, k0: split.k0, exploration, bo })
    }
}

/// `L` for one parameter setting with the `K₀` scan (or `k0_fixed`).
pub fn total_cost<T: Scalar>(
    t: &Trajectory<T>,
    lambda: &[T],
    alpha_ini: T,
    alpha_bo: T,
    cfg: &IboConfig<T>,
) -> Result<CostBreakdown<T>, IboError> {
    let needed = if cfg.k0_fixed.is_some() { 2 } else { 3 };
    if t.len() < needed {
        return Err(IboError::InsufficientTrajectory { len: t.len(), needed });
    }
    let prepared = PreparedTrajectory::new(t, &cfg.proposal, cfg.n_ini, cfg.seed)?;
    prepared.total_cost(lambda, alpha_ini, alpha_bo, cfg.k0_fixed)
}

/// Exhaustive search over `lambda_grid × alpha_bo_grid × alpha_ini_values`. The cost
/// table holds one row per cell and per prefix length `3..=T`; the estimate is the
/// minimizer at full length (first cell in grid order wins ties).
pub fn estimate_grid<T: Scalar>(t: &Trajectory<T>, cfg: &IboConfig<T>) -> Result<GridEstimate<T>, IboError> {
    if t.len() < 3 {
        return Err(IboError::InsufficientTrajectory { len: t.len(), needed: 3 });
    }
    cfg.validate(t.dim())?;
    if cfg.lambda_grid.is_empty() {
        return Err(IboError::InvalidConfig("lambda grid must be nonempty".into()));
    }
    let prepared = PreparedTrajectory::new(t, &cfg.proposal, cfg.n_ini, cfg.seed)?;
    estimate_grid_prepared(&prepared, cfg)
}

/// [`estimate_grid`] on an already prepared trajectory.
pub fn estimate_grid_prepared<T: Scalar>(
    prepared: &PreparedTrajectory<T>,
    cfg: &IboConfig<T>,
) -> Result<GridEstimate<T>, IboError> {
    let len = prepared.len();
    if len < 3 {
        return Err(IboError::InsufficientTrajectory { len, needed: 3 });
    }
    let ini_by_alpha: Vec<Vec<T>> = cfg.alpha_ini_values.iter().map(|&a| prepared.exploration_terms(a)).collect();
    let bo_by_lambda: Vec<Vec<Vec<T>>> = cfg
        .lambda_grid
        .iter()
        .map(|l| prepared.bo_terms(l, &cfg.alpha_bo_grid))
        .collect::<Result<_, _>>()?;

    let mut table = Vec::new();
    let mut best: Option<(usize, usize, usize, Split<T>)> = None;
    for (li, lambda) in cfg.lambda_grid.iter().enumerate() {
        for (bi, &alpha_bo) in cfg.alpha_bo_grid.iter().enumerate() {
            for (ii, &alpha_ini) in cfg.alpha_ini_values.iter().enumerate() {
                let ini = &ini_by_alpha[ii];
                let bo = &bo_by_lambda[li][bi];
                for prefix in 3..=len {
                    let split = scan_k0(ini, bo, prefix, cfg.k0_fixed);
                    table.push(CostRow {
                        lambda: lambda.clone(),
                        alpha_bo,
                        alpha_ini,
                        prefix_len: prefix,
                        k0: split.k0,
                        cost: split.cost,
                    });
                    if prefix == len && best.map_or(true, |b| split.cost < b.3.cost) {
                        best = Some((li, bi, ii, split));
                    }
                }
            }
        }
    }
    let (li, bi, ii, split) = best.expect("nonempty grids");
    let terms = TermBreakdown::from_split(&ini_by_alpha[ii], &bo_by_lambda[li][bi], len, split.k0);
    let estimate = IboEstimate {
        lambda_hat: cfg.lambda_grid[li].clone(),
        alpha_bo_hat: cfg.alpha_bo_grid[bi],
        alpha_ini_hat: cfg.alpha_ini_values[ii],
        k0_hat: split.k0,
        cost: split.cost,
        terms,
        used_fallback: false,
    };
    Ok(GridEstimate { estimate, table })
}

/// Continuous estimation of `λ ∈ [lo, hi]^p` with `K₀` fixed (default 2): for every
/// `α_BO` in the grid, `n_restarts` bounded quasi-Newton descents in log-λ coordinates
/// from Latin-hypercube starts, using central finite differences. All cost
/// evaluations share the same random draws. `α_INI` is picked from its fixed values.
pub fn estimate_continuous<T: Scalar>(t: &Trajectory<T>, cfg: &IboConfig<T>) -> Result<IboEstimate<T>, IboError> {
    if t.len() < 3 {
        return Err(IboError::InsufficientTrajectory { len: t.len(), needed: 3 });
    }
    cfg.validate(t.dim())?;
    let prepared = PreparedTrajectory::new(t, &cfg.proposal, cfg.n_ini, cfg.seed)?;
    estimate_continuous_prepared(&prepared, cfg)
}

pub fn estimate_continuous_prepared<T: Scalar>(
    prepared: &PreparedTrajectory<T>,
    cfg: &IboConfig<T>,
) -> Result<IboEstimate<T>, IboError> {
    let len = prepared.len();
    let p = prepared.dim();
    let k0 = cfg.k0_fixed.unwrap_or(2).clamp(2, len);
    let (lo, hi) = cfg.lambda_bounds;

    // BO part of L for a given λ and α, K₀ fixed.
    let bo_cost = |lambda: &[T], alpha: T| -> Result<T, IboError> {
        if alpha == T::zero() || k0 >= len {
            return Ok(T::zero());
        }
        let lambda_unit = prepared.map.lambda_to_unit(lambda);
        let costs: Vec<T> = (k0 + 1..=len)
            .into_par_iter()
            .map(|j| {
                EiProfile::compute(&prepared.unit, j, &lambda_unit, &prepared.proposals[j - 3])
                    .map(|pr| pr.cost(&prepared.proposals[j - 3], alpha, prepared.log_d))
            })
            .collect::<Result<_, _>>()?;
        Ok(costs.into_iter().sum())
    };

    // Corners: isotropic bounds plus any grid candidate inside the box.
    let mut corners: Vec<Vec<T>> = vec![vec![lo; p], vec![hi; p]];
    for cand in &cfg.lambda_grid {
        if cand.iter().all(|&v| v >= lo && v <= hi) && !corners.contains(cand) {
            corners.push(cand.clone());
        }
    }
    let mut best_corner: Option<(Vec<T>, T, T)> = None;
    for corner in &corners {
        for &alpha in &cfg.alpha_bo_grid {
            let c = bo_cost(corner, alpha)?;
            if best_corner.as_ref().map_or(true, |b| c < b.2) {
                best_corner = Some((corner.clone(), alpha, c));
            }
        }
    }
    let best_corner = best_corner.expect("nonempty corners and alpha grid");

    let mut best_descent: Option<(Vec<T>, T, T)> = None;
    if hi > lo {
        let log_space = SearchSpace::cube(p, lo.ln(), hi.ln()).map_err(|e| IboError::InvalidConfig(e.to_string()))?;
        let opts = BoundedOptions {
            max_iter: cfg.max_descent_iter,
            fd_rel_step: cfg.fd_step,
            f_tol: T::lit(1e-9),
            initial_step: T::lit(0.25),
            ..BoundedOptions::default()
        };
        for (ai, &alpha) in cfg.alpha_bo_grid.iter().enumerate() {
            if alpha == T::zero() {
                continue;
            }
            let starts = lhs(&log_space, cfg.n_restarts, derive_seed(cfg.seed, &[RESTART_STREAM, ai as u64]));
            let results: Vec<(Vec<T>, T)> = starts
                .par_iter()
                .map(|u0| {
                    let r = minimize_bounded(
                        |u: &[T]| {
                            let lambda: Vec<T> = u.iter().map(|v| v.exp()).collect();
                            bo_cost(&lambda, alpha).unwrap_or(T::infinity())
                        },
                        u0,
                        log_space.lower(),
                        log_space.upper(),
                        &opts,
                    );
                    (r.x.iter().map(|v| v.exp().max(lo).min(hi)).collect(), r.value)
                })
                .collect();
            for (lambda, c) in results {
                if c.is_finite() && best_descent.as_ref().map_or(true, |b| c < b.2) {
                    best_descent = Some((lambda, alpha, c));
                }
            }
        }
    }

    let (lambda_hat, alpha_bo_hat, used_fallback) = match best_descent {
        Some((l, a, c)) if c < best_corner.2 => (l, a, false),
        _ => (best_corner.0, best_corner.1, hi > lo),
    };

    let bo_terms = if alpha_bo_hat == T::zero() {
        vec![T::zero(); len - 2]
    } else {
        prepared.bo_terms(&lambda_hat, &[alpha_bo_hat])?.pop().expect("one alpha")
    };
    let mut best_ini: Option<(T, Vec<T>, T)> = None;
    for &a in &cfg.alpha_ini_values {
        let ini = prepared.exploration_terms(a);
        let c = scan_k0(&ini, &bo_terms, len, Some(k0)).cost;
        if best_ini.as_ref().map_or(true, |b| c < b.2) {
            best_ini = Some((a, ini, c));
        }
    }
    let (alpha_ini_hat, ini, cost) = best_ini.expect("nonempty alpha_ini_values");
    Ok(IboEstimate {
        lambda_hat,
        alpha_bo_hat,
        alpha_ini_hat,
        k0_hat: k0,
        cost,
        terms: TermBreakdown::from_split(&ini, &bo_terms, len, k0),
        used_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Sample;

    fn small_traj() -> Trajectory<f64> {
        let space = SearchSpace::cube(1, -1.0, 1.0).unwrap();
        let pts = [(-0.8, 0.64), (0.9, 0.81), (0.1, 0.01), (-0.2, 0.04), (0.05, 0.0025)];
        Trajectory::new(space, pts.iter().map(|&(x, f)| Sample::new(vec![x], f)).collect()).unwrap()
    }

    fn quick_cfg() -> IboConfig<f64> {
        let mut cfg = IboConfig::for_dim(1);
        cfg.proposal = ProposalConfig { sigma: 0.01, n_uniform: 400, n_normal: 400 };
        cfg.n_ini = 400;
        cfg
    }

    #[test]
    fn zero_temperatures_give_zero_cost() {
        let t = small_traj();
        let cfg = quick_cfg();
        let c = total_cost(&t, &[1.0], 0.0, 0.0, &cfg).unwrap();
        assert_eq!(c.cost, 0.0);
        assert_eq!(c.k0, 2);
        assert!(c.exploration.iter().chain(&c.bo).all(|v| *v == 0.0));
        assert_eq!(l_bo_term(&t, 4, &[1.0], 0.0, &cfg.proposal, 5).unwrap().to_bits(), 0.0f64.to_bits());
        assert_eq!(l_ini_term(&t, 3, 0.0, 100, 5).unwrap().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn two_sample_trajectory_with_fixed_split() {
        let t = small_traj().prefix(2);
        let mut cfg = quick_cfg();
        cfg.k0_fixed = Some(2);
        let c = total_cost(&t, &[1.0], 10.0, 1.0, &cfg).unwrap();
        assert_eq!(c.k0, 2);
        assert!(c.bo.is_empty());
        assert_eq!(c.cost, c.exploration[0]);
        cfg.k0_fixed = None;
        assert!(matches!(
            total_cost(&t, &[1.0], 10.0, 1.0, &cfg),
            Err(IboError::InsufficientTrajectory { len: 2, needed: 3 })
        ));
        assert!(matches!(estimate_grid(&t, &cfg), Err(IboError::InsufficientTrajectory { .. })));
    }

    #[test]
    fn positions_are_checked() {
        let t = small_traj();
        assert!(matches!(l_ini_term(&t, 1, 1.0, 10, 0), Err(IboError::PositionOutOfRange { .. })));
        assert!(matches!(l_bo_term(&t, 2, &[1.0], 1.0, &ProposalConfig::default(), 0), Err(IboError::PositionOutOfRange { .. })));
        assert!(matches!(l_bo_term(&t, 6, &[1.0], 1.0, &ProposalConfig::default(), 0), Err(IboError::PositionOutOfRange { .. })));
    }

    #[test]
    fn scan_prefers_smaller_split_on_ties() {
        let s = scan_k0(&[0.0, 0.0, 0.0], &[0.0, 0.0], 4, None);
        assert_eq!(s, Split { k0: 2, cost: 0.0 });
        // ini = l̃_2..l̃_4, bo = l_3, l_4
        let s = scan_k0::<f64>(&[1.0, -3.0, 0.5], &[0.2, 0.7], 4, None);
        assert_eq!(s.k0, 4);
        assert!((s.cost - (1.0 - 3.0 + 0.5)).abs() < 1e-15);
        let s = scan_k0::<f64>(&[1.0, -3.0, 0.5], &[0.2, 0.7], 3, None);
        assert_eq!(s.k0, 3);
        assert!((s.cost - (1.0 - 3.0)).abs() < 1e-15);
        assert_eq!(scan_k0(&[1.0, -3.0, 0.5], &[0.2, 0.7], 4, Some(2)).cost, 1.0 + 0.2 + 0.7);
    }

    #[test]
    fn prepared_terms_match_standalone_terms() {
        let t = small_traj();
        let cfg = quick_cfg();
        let prepared = PreparedTrajectory::new(&t, &cfg.proposal, cfg.n_ini, 11).unwrap();
        let bo = prepared.bo_terms(&[2.0], &[1.0]).unwrap();
        for j in 3..=t.len() {
            let direct = l_bo_term(&t, j, &[2.0], 1.0, &cfg.proposal, derive_seed(11, &[BO_STREAM, j as u64])).unwrap();
            assert_eq!(direct, bo[0][j - 3]);
        }
        let ini = prepared.exploration_terms(10.0);
        for i in 2..=t.len() {
            let direct = l_ini_term(&t, i, 10.0, cfg.n_ini, derive_seed(11, &[INI_STREAM, i as u64])).unwrap();
            assert_eq!(direct, ini[i - 2]);
        }
    }

    #[test]
    fn singleton_grid_returns_its_cell() {
        let t = small_traj();
        let mut cfg = quick_cfg();
        cfg.lambda_grid = vec![vec![0.3]];
        cfg.alpha_bo_grid = vec![1.0];
        cfg.alpha_ini_values = vec![10.0];
        let g = estimate_grid(&t, &cfg).unwrap();
        let direct = total_cost(&t, &[0.3], 10.0, 1.0, &cfg).unwrap();
        assert_eq!(g.estimate.lambda_hat, vec![0.3]);
        assert_eq!(g.estimate.cost, direct.cost);
        assert_eq!(g.estimate.k0_hat, direct.k0);
        assert_eq!(g.table.len(), t.len() - 2);
        assert!((g.estimate.terms.total() - g.estimate.cost).abs() < 1e-9);
    }

    #[test]
    fn collapsed_bounds_return_the_point() {
        let t = small_traj();
        let mut cfg = quick_cfg();
        cfg.lambda_bounds = (0.7, 0.7);
        cfg.lambda_grid.clear();
        let e = estimate_continuous(&t, &cfg).unwrap();
        assert_eq!(e.lambda_hat, vec![0.7]);
        assert_eq!(e.k0_hat, 2);
        assert!(!e.used_fallback);
    }

    #[test]
    fn cost_table_csv() {
        let rows = vec![
            CostRow { lambda: vec![0.1, 0.1], alpha_bo: 1.0, alpha_ini: 10.0, prefix_len: 3, k0: 2, cost: -1.5 },
            CostRow { lambda: vec![0.1, 2.0], alpha_bo: 0.01, alpha_ini: 1.0, prefix_len: 4, k0: 3, cost: 0.25 },
        ];
        let mut buf = Vec::new();
        write_cost_table(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "lambda,alpha_bo,alpha_ini,prefix_len,k0,cost\n0.1,1,10,3,2,-1.5\n0.1;2,0.01,1,4,3,0.25\n");
    }
}
