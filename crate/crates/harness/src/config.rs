use serde::{Deserialize, Serialize};
use strategist_core::ibo::default_grid;
use strategist_core::{IboConfig, ProposalConfig};

use crate::HarnessError;

/// Settings shared by the recovery and transfer studies. All runs are on the
/// Rosenbrock function over `[-bound, bound]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dim: usize,
    pub bound: f64,
    /// Isotropic length-scale weights that generate trajectories; also the candidate set.
    pub lambda_cases: Vec<f64>,
    pub trials: usize,
    /// Trajectory prefix lengths (absolute sample counts, initial design included).
    pub prefix_lengths: Vec<usize>,
    /// Latin-hypercube initial design size.
    pub bo_init: usize,
    pub ei_tolerance: f64,
    pub n_starts: usize,
    pub n_bootstrap: usize,
    pub alpha_bo_grid: Vec<f64>,
    pub alpha_ini_values: Vec<f64>,
    pub proposal: ProposalConfig,
    pub n_ini: usize,
    /// BO iterations per transfer arm.
    pub transfer_iterations: usize,
    /// Length of the donor trajectory the transfer arm learns from.
    pub donor_length: usize,
    pub fixed_low: f64,
    pub fixed_high: f64,
    pub seed: u64,
}

impl StudyConfig {
    /// Full-scale settings.
    pub fn paper(dim: usize) -> Self {
        let ibo = IboConfig::for_dim(dim);
        Self {
            dim,
            bound: 2.0,
            lambda_cases: default_grid(),
            trials: 30,
            prefix_lengths: (5..=20).collect(),
            bo_init: 10,
            ei_tolerance: 1e-3,
            n_starts: 100,
            n_bootstrap: 5000,
            alpha_bo_grid: ibo.alpha_bo_grid,
            alpha_ini_values: ibo.alpha_ini_values,
            proposal: ibo.proposal,
            n_ini: ibo.n_ini,
            transfer_iterations: 50,
            donor_length: 20,
            fixed_low: 0.01,
            fixed_high: 10.0,
            seed: 0,
        }
    }

    /// A small configuration that exercises every code path in seconds.
    pub fn smoke() -> Self {
        Self {
            trials: 2,
            prefix_lengths: (5..=8).collect(),
            bo_init: 3,
            n_starts: 10,
            n_bootstrap: 200,
            proposal: ProposalConfig { sigma: 0.01, n_uniform: 300, n_normal: 300 },
            n_ini: 500,
            transfer_iterations: 10,
            donor_length: 8,
            ..Self::paper(2)
        }
    }

    pub fn max_prefix(&self) -> usize {
        self.prefix_lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn ibo_config(&self, seed: u64) -> IboConfig {
        IboConfig {
            alpha_bo_grid: self.alpha_bo_grid.clone(),
            alpha_ini_values: self.alpha_ini_values.clone(),
            lambda_grid: self.lambda_cases.iter().map(|&l| vec![l; self.dim]).collect(),
            proposal: self.proposal.clone(),
            n_ini: self.n_ini,
            seed,
            ..IboConfig::for_dim(self.dim)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return bad("bound must be positive and finite");
        }
        if self.trials < 2 {
            return bad("trials must be at least 2");
        }
        if self.lambda_cases.is_empty() || self.lambda_cases.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return bad("lambda_cases must be nonempty positive values");
        }
        if self.bo_init < 2 {
            return bad("bo_init must be at least 2");
        }
        if self.prefix_lengths.is_empty() || self.prefix_lengths.iter().any(|&k| k < 3) {
            return bad("prefix_lengths must be nonempty and at least 3");
        }
        if self.max_prefix() < self.bo_init {
            return bad("the longest prefix must cover the initial design");
        }
        if self.n_starts == 0 || self.n_ini == 0 {
            return bad("n_starts and n_ini must be positive");
        }
        if self.donor_length < 3 || self.donor_length < self.bo_init {
            return bad("donor_length must be at least 3 and cover the initial design");
        }
        if !(self.fixed_low > 0.0) || !(self.fixed_high > 0.0) {
            return bad("fixed arms need positive weights");
        }
        self.ibo_config(self.seed).validate(self.dim).map_err(|e| HarnessError::Config(e.to_string()))
    }
}
