//! Expected improvement, its multi-start maximization and the forward BO loop.

use std::fmt::Display;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpError, GpModel};
use crate::local::{minimize_bounded, BoundedOptions};
use crate::sampling::{derive_seed, lhs};
use crate::scalar::Scalar;
use crate::space::{Sample, SearchSpace, Trajectory, TrajectoryError};

/// `(f_min - μ) Φ(z) + s φ(z)` with `z = (f_min - μ) / s`; `max(0, f_min - μ)` when `s = 0`.
#[inline]
pub fn ei_from_prediction<T: Scalar>(mean: T, sd: T, f_min: T) -> T {
    let gap = f_min - mean;
    if !(sd > T::zero()) {
        return gap.max(T::zero());
    }
    let z = gap / sd;
    (gap * z.norm_cdf() + sd * z.norm_pdf()).max(T::zero())
}

pub fn expected_improvement<T: Scalar>(model: &GpModel<T>, f_min: T, x: &[T]) -> T {
    let p = model.predict(x);
    ei_from_prediction(p.mean, p.sd, f_min)
}

/// Result of maximizing the expected improvement over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct EiMaximum<T> {
    pub x: Vec<T>,
    pub ei: T,
    /// Index of the start point whose ascent produced `x`.
    pub start: usize,
    /// No start point and no ascent found any variation in EI.
    pub flat: bool,
}

/// Local-ascent settings used by [`maximize_ei`].
pub fn ei_ascent_options<T: Scalar>() -> BoundedOptions<T> {
    BoundedOptions { max_iter: 60, ..BoundedOptions::default() }
}

/// Multi-start maximization: bounded quasi-Newton ascent with central-difference
/// gradients from `n_starts` Latin-hypercube points. Highest EI wins, ties go to
/// the lowest start index.
pub fn maximize_ei<T: Scalar>(
    model: &GpModel<T>,
    f_min: T,
    space: &SearchSpace<T>,
    n_starts: usize,
    seed: u64,
) -> EiMaximum<T> {
    let starts = lhs(space, n_starts.max(1), seed);
    let opts = ei_ascent_options::<T>();
    let mut results: Vec<(Vec<T>, T, T)> = starts
        .par_iter()
        .map(|x0| {
            let start_ei = expected_improvement(model, f_min, x0);
            let r = minimize_bounded(
                |x: &[T]| -expected_improvement(model, f_min, x),
                x0,
                space.lower(),
                space.upper(),
                &opts,
            );
            let ei = -r.value;
            if ei >= start_ei {
                (r.x, ei, start_ei)
            } else {
                (x0.clone(), start_ei, start_ei)
            }
        })
        .collect();

    let mut best = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        if r.1 > results[best].1 {
            best = i;
        }
    }
    let lo = results.iter().map(|r| r.2).fold(T::infinity(), T::min);
    let hi = results.iter().map(|r| r.2).fold(T::neg_infinity(), T::max);
    let tol = T::lit(1e-12) * (T::one() + hi.abs());
    let flat = hi - lo <= tol && results[best].1 - hi <= tol;
    let (x, ei, _) = results.swap_remove(best);
    EiMaximum { x, ei, start: best, flat }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub struct BoParams<T> {
    pub lambda: Vec<T>,
    pub ei_tolerance: T,
    pub n_starts: usize,
}

impl<T: Scalar> BoParams<T> {
    pub fn new(lambda: Vec<T>, ei_tolerance: T, n_starts: usize) -> Result<Self, BoError> {
        let params = Self { lambda, ei_tolerance, n_starts };
        params.validate()?;
        Ok(params)
    }

    /// `Λ = value · I`.
    pub fn isotropic(dim: usize, value: T, ei_tolerance: T, n_starts: usize) -> Result<Self, BoError> {
        Self::new(vec![value; dim], ei_tolerance, n_starts)
    }

    pub fn validate(&self) -> Result<(), BoError> {
        for (axis, &l) in self.lambda.iter().enumerate() {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(BoError::Gp(GpError::InvalidLambda { axis, value: l.to_f64().unwrap_or(f64::NAN) }));
            }
        }
        if self.n_starts == 0 {
            return Err(BoError::InvalidParams("n_starts must be at least 1".into()));
        }
        if !(self.ei_tolerance >= T::zero()) {
            return Err(BoError::InvalidParams("ei_tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    EiBelowTolerance,
    IterationBudget,
}

/// Outcome of a forward BO run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + DeserializeOwned"))]
pub struct BoRunRecord<T> {
    /// Initial samples followed by the BO-chosen samples.
    pub trajectory: Trajectory<T>,
    pub initial_len: usize,
    /// Incumbent after 0, 1, 2, ... iterations; non-increasing.
    pub best_curve: Vec<T>,
    /// Length-scale weights used for each iteration.
    pub lambdas: Vec<Vec<T>>,
    pub terminated_by: Termination,
}

impl<T: Scalar> BoRunRecord<T> {
    pub fn iterations(&self) -> usize {
        self.trajectory.len() - self.initial_len
    }

    pub fn iterates(&self) -> &[Sample<T>] {
        &self.trajectory.samples()[self.initial_len..]
    }
}

#[derive(Debug, Error)]
pub enum BoError {
    #[error("BO needs at least 2 initial samples, got {0}")]
    TooFewInitial(usize),
    #[error("invalid BO parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("objective failed at iteration {iteration}: {message}")]
    Objective { iteration: usize, message: String, partial: Box<dyn std::any::Any + Send + Sync> },
}

impl BoError {
    /// The record accumulated before an objective failure.
    pub fn partial<T: 'static>(&self) -> Option<&BoRunRecord<T>> {
        match self {
            BoError::Objective { partial, .. } => partial.downcast_ref(),
            _ => None,
        }
    }
}

/// What one BO step did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome<T> {
    /// A new sample was evaluated and appended.
    Appended { x: Vec<T>, f: T, ei: T },
    /// The best EI fell below tolerance (or the proposal repeats a known sample); nothing was evaluated.
    Converged { ei: T },
}

/// Step-wise BO driver. Each step fits the surrogate to the full history, maximizes
/// EI, evaluates the objective and appends the sample.
#[derive(Debug, Clone)]
pub struct BoLoop<T> {
    trajectory: Trajectory<T>,
    initial_len: usize,
    params: BoParams<T>,
    best_curve: Vec<T>,
    lambdas: Vec<Vec<T>>,
    seed: u64,
    converged: bool,
}

impl<T: Scalar> BoLoop<T> {
    pub fn new(initial: Trajectory<T>, params: BoParams<T>, seed: u64) -> Result<Self, BoError> {
        params.validate()?;
        if initial.len() < 2 {
            return Err(BoError::TooFewInitial(initial.len()));
        }
        if params.lambda.len() != initial.dim() {
            return Err(BoError::InvalidParams(format!(
                "lambda has {} entries for a {}-dimensional space",
                params.lambda.len(),
                initial.dim()
            )));
        }
        let best = initial.best().expect("nonempty");
        Ok(Self {
            initial_len: initial.len(),
            trajectory: initial,
            params,
            best_curve: vec![best],
            lambdas: Vec::new(),
            seed,
            converged: false,
        })
    }

    pub fn params(&self) -> &BoParams<T> {
        &self.params
    }

    /// Changes the length-scale weights used from the next step on.
    pub fn set_lambda(&mut self, lambda: Vec<T>) {
        self.params.lambda = lambda;
    }

    pub fn trajectory(&self) -> &Trajectory<T> {
        &self.trajectory
    }

    pub fn iterations(&self) -> usize {
        self.trajectory.len() - self.initial_len
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// Fits the surrogate and maximizes EI for the current history without evaluating anything.
    pub fn propose(&self) -> Result<EiMaximum<T>, BoError> {
        let model = GpModel::fit(&self.trajectory.xs(), &self.trajectory.fs(), &self.params.lambda)?;
        let f_min = self.trajectory.best().expect("nonempty");
        let iter_seed = derive_seed(self.seed, &[self.iterations() as u64]);
        Ok(maximize_ei(&model, f_min, self.trajectory.space(), self.params.n_starts, iter_seed))
    }

    pub fn step<E: Display, F: FnMut(&[T]) -> Result<T, E>>(
        &mut self,
        objective: &mut F,
    ) -> Result<StepOutcome<T>, BoError> {
        let proposal = self.propose()?;
        // re-sampling a known point adds nothing to a noise-free model
        let known = self.trajectory.samples().iter().any(|s| s.x == proposal.x);
        if proposal.ei < self.params.ei_tolerance || known {
            self.converged = true;
            return Ok(StepOutcome::Converged { ei: proposal.ei });
        }
        let f = match objective(&proposal.x) {
            Ok(f) => f,
            Err(e) => {
                return Err(BoError::Objective {
                    iteration: self.iterations() + 1,
                    message: e.to_string(),
                    partial: Box::new(self.record(Termination::IterationBudget)),
                })
            }
        };
        self.trajectory.push(Sample::new(proposal.x.clone(), f))?;
        let best = self.best_curve.last().copied().unwrap_or(f).min(f);
        self.best_curve.push(best);
        self.lambdas.push(self.params.lambda.clone());
        Ok(StepOutcome::Appended { x: proposal.x, f, ei: proposal.ei })
    }

    pub fn record(&self, terminated_by: Termination) -> BoRunRecord<T> {
        BoRunRecord {
            trajectory: self.trajectory.clone(),
            initial_len: self.initial_len,
            best_curve: self.best_curve.clone(),
            lambdas: self.lambdas.clone(),
            terminated_by,
        }
    }

    pub fn into_record(self) -> BoRunRecord<T> {
        let terminated_by = if self.converged { Termination::EiBelowTolerance } else { Termination::IterationBudget };
        BoRunRecord {
            trajectory: self.trajectory,
            initial_len: self.initial_len,
            best_curve: self.best_curve,
            lambdas: self.lambdas,
            terminated_by,
        }
    }
}

/// Runs BO until the best EI drops below `params.ei_tolerance` or `max_iter`
/// samples have been added. Deterministic given `seed`.
pub fn run_bo<T, E, F>(
    initial: Trajectory<T>,
    params: BoParams<T>,
    mut objective: F,
    max_iter: usize,
    seed: u64,
) -> Result<BoRunRecord<T>, BoError>
where
    T: Scalar,
    E: Display,
    F: FnMut(&[T]) -> Result<T, E>,
{
    let mut bo = BoLoop::new(initial, params, seed)?;
    while bo.iterations() < max_iter {
        if let StepOutcome::Converged { .. } = bo.step(&mut objective)? {
            break;
        }
    }
    Ok(bo.into_record())
}
