//! Strategy transfer: BO that reuses weights estimated from another searcher's
//! trajectory, compared with fixed weights and with self-adaptive BO that refits
//! the weights by maximum likelihood at every iteration.

use std::convert::Infallible;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use strategist_core::acquisition::run_bo;
use strategist_core::gp::mle_lambda;
use strategist_core::ibo::estimate_grid;
use strategist_core::{derive_seed, BoLoop, BoParams, IboEstimate, SearchSpace, StepOutcome};

use crate::benchmarks::rosenbrock;
use crate::recovery::initial_design;
use crate::stats::bootstrap_ci;
use crate::{io_err, write_json, HarnessError, Meta, StudyConfig, Versions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    FixedLow,
    FixedHigh,
    SelfAdaptive,
    IboTransfer,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::FixedLow, Arm::FixedHigh, Arm::SelfAdaptive, Arm::IboTransfer];

    pub fn name(self) -> &'static str {
        match self {
            Arm::FixedLow => "fixed_low",
            Arm::FixedHigh => "fixed_high",
            Arm::SelfAdaptive => "self_adaptive",
            Arm::IboTransfer => "ibo_transfer",
        }
    }
}

/// One arm's run on one trial.
#[derive(Debug, Clone)]
pub struct ArmTrial {
    pub trial: usize,
    /// Incumbent after 0..=iterations steps, padded with the last value if BO stopped early.
    pub best_curve: Vec<f64>,
    /// BO iterations actually run.
    pub iterations: usize,
    /// Weight used at each iteration run.
    pub lambdas: Vec<f64>,
    /// Estimate learned from the donor trajectory (transfer arm only).
    pub donor_estimate: Option<IboEstimate>,
}

#[derive(Debug, Clone)]
pub struct ArmReport {
    pub arm: Arm,
    pub trials: Vec<ArmTrial>,
    pub excluded: Vec<(usize, String)>,
}

impl ArmReport {
    pub fn best_at(&self, iter: usize) -> Vec<f64> {
        self.trials.iter().map(|t| t.best_curve[iter]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TransferReport {
    pub config: StudyConfig,
    pub arms: Vec<ArmReport>,
}

impl TransferReport {
    pub fn arm(&self, arm: Arm) -> &ArmReport {
        self.arms.iter().find(|a| a.arm == arm).expect("every arm is run")
    }

    /// `(mean, lo, hi)` of the best value across trials at `iter`.
    pub fn band(&self, arm: Arm, iter: usize) -> (f64, f64, f64) {
        let idx = Arm::ALL.iter().position(|&a| a == arm).unwrap() as u64;
        bootstrap_ci(&self.arm(arm).best_at(iter), self.config.n_bootstrap, derive_seed(self.config.seed, &[20, idx, iter as u64]))
    }

    /// Fraction of self-adaptive trials selecting each candidate weight at `iter`
    /// (zero-based), in candidate order, over the trials that ran that iteration.
    pub fn gp_selection(&self, iter: usize) -> Vec<(f64, f64)> {
        let picks: Vec<f64> = self.arm(Arm::SelfAdaptive).trials.iter().filter_map(|t| t.lambdas.get(iter).copied()).collect();
        self.config
            .lambda_cases
            .iter()
            .map(|&l| (l, if picks.is_empty() { 0.0 } else { picks.iter().filter(|&&p| p == l).count() as f64 / picks.len() as f64 }))
            .collect()
    }
}

fn pad(mut curve: Vec<f64>, len: usize) -> Vec<f64> {
    let last = *curve.last().expect("curve starts with the initial incumbent");
    curve.resize(len, last);
    curve
}

fn run_arm(cfg: &StudyConfig, arm: Arm, trial: usize) -> Result<ArmTrial, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let space = SearchSpace::cube(cfg.dim, -cfg.bound, cfg.bound).map_err(|e| err(&e))?;
    let initial = initial_design(cfg, &space, derive_seed(cfg.seed, &[10, trial as u64]));
    let arm_idx = Arm::ALL.iter().position(|&a| a == arm).unwrap() as u64;
    let seed = derive_seed(cfg.seed, &[11, arm_idx, trial as u64]);
    let objective = |x: &[f64]| Ok::<_, Infallible>(rosenbrock(x));
    let iso = |l: f64| BoParams::isotropic(cfg.dim, l, cfg.ei_tolerance, cfg.n_starts).map_err(|e| err(&e));
    let curve_len = cfg.transfer_iterations + 1;

    let fixed = |lambda: f64, donor_estimate| -> Result<ArmTrial, String> {
        let rec = run_bo(initial.clone(), iso(lambda)?, objective, cfg.transfer_iterations, seed).map_err(|e| err(&e))?;
        Ok(ArmTrial {
            trial,
            iterations: rec.iterations(),
            lambdas: vec![lambda; rec.iterations()],
            best_curve: pad(rec.best_curve, curve_len),
            donor_estimate,
        })
    };

    match arm {
        Arm::FixedLow => fixed(cfg.fixed_low, None),
        Arm::FixedHigh => fixed(cfg.fixed_high, None),
        Arm::IboTransfer => {
            let donor_init = initial_design(cfg, &space, derive_seed(cfg.seed, &[12, trial as u64]));
            let donor = run_bo(
                donor_init,
                iso(cfg.fixed_low)?,
                objective,
                cfg.donor_length - cfg.bo_init,
                derive_seed(cfg.seed, &[13, trial as u64]),
            )
            .map_err(|e| err(&e))?;
            let ibo = cfg.ibo_config(derive_seed(cfg.seed, &[14, trial as u64]));
            let est = estimate_grid(&donor.trajectory, &ibo).map_err(|e| err(&e))?.estimate;
            fixed(est.lambda_hat[0], Some(est))
        }
        Arm::SelfAdaptive => {
            let grid: Vec<Vec<f64>> = cfg.lambda_cases.iter().map(|&l| vec![l; cfg.dim]).collect();
            let start = cfg.lambda_cases[trial % cfg.lambda_cases.len()];
            let mut bo = BoLoop::new(initial, iso(start)?, seed).map_err(|e| err(&e))?;
            let mut objective = objective;
            let mut lambdas = Vec::new();
            let mut curve = vec![bo.trajectory().best().expect("nonempty")];
            while bo.iterations() < cfg.transfer_iterations {
                if bo.iterations() > 0 {
                    let t = bo.trajectory();
                    let choice = mle_lambda(&t.xs(), &t.fs(), &grid).map_err(|e| err(&e))?;
                    bo.set_lambda(choice.lambda);
                }
                let lambda = bo.params().lambda[0];
                match bo.step(&mut objective).map_err(|e| err(&e))? {
                    StepOutcome::Appended { f, .. } => {
                        lambdas.push(lambda);
                        curve.push(curve.last().copied().unwrap().min(f));
                    }
                    StepOutcome::Converged { .. } => break,
                }
            }
            Ok(ArmTrial { trial, iterations: bo.iterations(), lambdas, best_curve: pad(curve, curve_len), donor_estimate: None })
        }
    }
}

/// Runs all four arms for `trials` trials of `transfer_iterations` BO steps from a
/// shared initial design per trial, and writes `convergence.csv`,
/// `gp_selection.csv`, `best.csv`, `donors.csv` and `meta.json` into `out_dir`.
pub fn transfer_study(cfg: &StudyConfig, out_dir: &Path) -> Result<TransferReport, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let jobs: Vec<(Arm, usize)> = Arm::ALL.iter().flat_map(|&a| (0..cfg.trials).map(move |t| (a, t))).collect();
    let results: Vec<Result<ArmTrial, String>> = jobs.par_iter().map(|&(a, t)| run_arm(cfg, a, t)).collect();

    let mut arms: Vec<ArmReport> =
        Arm::ALL.iter().map(|&arm| ArmReport { arm, trials: Vec::new(), excluded: Vec::new() }).collect();
    for (&(a, t), res) in jobs.iter().zip(results) {
        let slot = &mut arms[Arm::ALL.iter().position(|&x| x == a).unwrap()];
        match res {
            Ok(rec) => slot.trials.push(rec),
            Err(reason) => slot.excluded.push((t, reason)),
        }
    }
    let report = TransferReport { config: cfg.clone(), arms };
    write_transfer(&report, out_dir)?;
    Ok(report)
}

#[derive(Serialize)]
struct ArmSummary {
    arm: Arm,
    trials: usize,
    excluded: Vec<(usize, String)>,
    stopped_early: usize,
}

fn write_transfer(report: &TransferReport, out_dir: &Path) -> Result<(), HarnessError> {
    let cfg = &report.config;
    let mut conv = csv::Writer::from_path(out_dir.join("convergence.csv"))?;
    conv.write_record(["arm", "iter", "mean_best", "lo", "hi"])?;
    let mut best = csv::Writer::from_path(out_dir.join("best.csv"))?;
    best.write_record(["arm", "trial", "iter", "best"])?;
    for a in &report.arms {
        if a.trials.is_empty() {
            continue;
        }
        for iter in 0..=cfg.transfer_iterations {
            let (m, lo, hi) = report.band(a.arm, iter);
            conv.serialize((a.arm.name(), iter, m, lo, hi))?;
        }
        for t in &a.trials {
            for (iter, v) in t.best_curve.iter().enumerate() {
                best.serialize((a.arm.name(), t.trial, iter, v))?;
            }
        }
    }
    let mut sel = csv::Writer::from_path(out_dir.join("gp_selection.csv"))?;
    sel.write_record(["iter", "lambda_hat", "fraction"])?;
    for iter in 0..cfg.transfer_iterations {
        for (l, frac) in report.gp_selection(iter) {
            sel.serialize((iter + 1, l.to_string(), frac))?;
        }
    }
    let mut donors = csv::Writer::from_path(out_dir.join("donors.csv"))?;
    donors.write_record(["trial", "lambda_hat", "alpha_bo_hat", "alpha_ini_hat", "k0_hat", "cost"])?;
    for t in &report.arm(Arm::IboTransfer).trials {
        if let Some(e) = &t.donor_estimate {
            donors.serialize((t.trial, e.lambda_hat[0].to_string(), e.alpha_bo_hat.to_string(), e.alpha_ini_hat.to_string(), e.k0_hat, e.cost))?;
        }
    }
    for w in [&mut conv, &mut best, &mut sel, &mut donors] {
        w.flush().map_err(io_err(out_dir))?;
    }
    let summary: Vec<ArmSummary> = report
        .arms
        .iter()
        .map(|a| ArmSummary {
            arm: a.arm,
            trials: a.trials.len(),
            excluded: a.excluded.clone(),
            stopped_early: a.trials.iter().filter(|t| t.iterations < cfg.transfer_iterations).count(),
        })
        .collect();
    let meta = Meta { study: "transfer", config: cfg, versions: Versions::current(), summary };
    write_json(&out_dir.join("meta.json"), &meta)
}
