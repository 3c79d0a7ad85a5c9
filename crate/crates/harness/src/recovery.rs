//! Parameter recovery: generate BO trajectories with known isotropic weights and
//! check which candidate weight explains each trajectory prefix best.

use std::convert::Infallible;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use strategist_core::acquisition::run_bo;
use strategist_core::ibo::{estimate_grid_prepared, format_lambda, CostRow};
use strategist_core::sampling::lhs;
use strategist_core::space::save_trajectory;
use strategist_core::{derive_seed, BoParams, PreparedTrajectory, Sample, SearchSpace, Termination, Trajectory};

use crate::benchmarks::rosenbrock;
use crate::stats::mean_sd;
use crate::{io_err, write_json, HarnessError, Meta, StudyConfig, Versions};

/// One generated trajectory with its inverse-estimation results.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub trajectory: Trajectory,
    pub stopped_early: bool,
    /// Full cost table over every grid cell and prefix `3..=T`.
    pub table: Vec<CostRow<f64>>,
    /// Per `alpha_ini_values` entry, the exploration terms for positions `2..=T`.
    pub exploration: Vec<Vec<f64>>,
}

impl TrialRecord {
    /// Lowest cost of candidate `lambda` at `prefix` and `alpha_ini`, minimized over `α_BO`.
    pub fn min_cost(&self, prefix: usize, lambda: f64, alpha_ini: f64) -> Option<f64> {
        self.rows(prefix, lambda).filter(|r| r.alpha_ini == alpha_ini).map(|r| r.cost).reduce(f64::min)
    }

    /// Lowest cost of candidate `lambda` at `prefix` over all `α_BO` and `α_INI`.
    pub fn best_cost(&self, prefix: usize, lambda: f64) -> Option<f64> {
        self.rows(prefix, lambda).map(|r| r.cost).reduce(f64::min)
    }

    /// The candidate with the lowest cost at `prefix`; earlier candidates win ties.
    pub fn selected(&self, prefix: usize, candidates: &[f64]) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for &l in candidates {
            if let Some(c) = self.best_cost(prefix, l) {
                if best.map_or(true, |b| c < b.1) {
                    best = Some((l, c));
                }
            }
        }
        best.map(|b| b.0)
    }

    fn rows(&self, prefix: usize, lambda: f64) -> impl Iterator<Item = &CostRow<f64>> {
        self.table.iter().filter(move |r| r.prefix_len == prefix && r.lambda[0] == lambda)
    }
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub lambda: f64,
    pub trials: Vec<TrialRecord>,
    /// Trials that failed and were left out, with the reason.
    pub excluded: Vec<(usize, String)>,
}

impl CaseReport {
    /// Mean and sd over trials of [`TrialRecord::min_cost`]; `None` if no trial reaches `prefix`.
    pub fn curve(&self, prefix: usize, lambda_hat: f64, alpha_ini: f64) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.trials.iter().filter_map(|t| t.min_cost(prefix, lambda_hat, alpha_ini)).collect();
        (!v.is_empty()).then(|| mean_sd(&v))
    }

    /// Fraction of trials reaching `prefix` whose selected candidate is `lambda_hat`.
    pub fn selection_rate(&self, prefix: usize, lambda_hat: f64, candidates: &[f64]) -> Option<f64> {
        let picks: Vec<f64> = self.trials.iter().filter_map(|t| t.selected(prefix, candidates)).collect();
        (!picks.is_empty()).then(|| picks.iter().filter(|&&p| p == lambda_hat).count() as f64 / picks.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub config: StudyConfig,
    pub cases: Vec<CaseReport>,
}

impl RecoveryReport {
    pub fn case(&self, lambda: f64) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.lambda == lambda)
    }
}

#[derive(Serialize)]
struct CaseSummary {
    lambda: f64,
    trials: usize,
    excluded: Vec<ExcludedTrial>,
    stopped_early: usize,
}

#[derive(Serialize)]
struct ExcludedTrial {
    trial: usize,
    reason: String,
}

pub(crate) fn initial_design(cfg: &StudyConfig, space: &SearchSpace, seed: u64) -> Trajectory {
    let samples = lhs(space, cfg.bo_init, seed).into_iter().map(|x| {
        let f = rosenbrock(&x);
        Sample::new(x, f)
    });
    Trajectory::new(space.clone(), samples.collect()).expect("LHS points are distinct and inside the box")
}

fn run_trial(cfg: &StudyConfig, case: usize, lambda: f64, trial: usize) -> Result<TrialRecord, String> {
    let space = SearchSpace::cube(cfg.dim, -cfg.bound, cfg.bound).map_err(|e| e.to_string())?;
    let initial = initial_design(cfg, &space, derive_seed(cfg.seed, &[0, trial as u64]));
    let params = BoParams::isotropic(cfg.dim, lambda, cfg.ei_tolerance, cfg.n_starts).map_err(|e| e.to_string())?;
    let budget = cfg.max_prefix().saturating_sub(cfg.bo_init);
    let bo_seed = derive_seed(cfg.seed, &[1, case as u64, trial as u64]);
    let rec = run_bo(initial, params, |x: &[f64]| Ok::<_, Infallible>(rosenbrock(x)), budget, bo_seed)
        .map_err(|e| e.to_string())?;
    let ibo = cfg.ibo_config(derive_seed(cfg.seed, &[2, case as u64, trial as u64]));
    let prepared = PreparedTrajectory::new(&rec.trajectory, &ibo.proposal, ibo.n_ini, ibo.seed).map_err(|e| e.to_string())?;
    let grid = estimate_grid_prepared(&prepared, &ibo).map_err(|e| e.to_string())?;
    let exploration = ibo.alpha_ini_values.iter().map(|&a| prepared.exploration_terms(a)).collect();
    Ok(TrialRecord {
        trial,
        stopped_early: rec.terminated_by == Termination::EiBelowTolerance,
        trajectory: rec.trajectory,
        table: grid.table,
        exploration,
    })
}

/// Runs `trials` BO trajectories per weight case, estimates costs for every prefix
/// and candidate, and writes `curves.csv`, `selection.csv`, `costs.csv`,
/// `exploration.csv`, `trajectories/*.json` and `meta.json` into `out_dir`.
pub fn recovery_study(cfg: &StudyConfig, out_dir: &Path) -> Result<RecoveryReport, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir.join("trajectories")).map_err(io_err(out_dir))?;

    let jobs: Vec<(usize, usize)> =
        (0..cfg.lambda_cases.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let results: Vec<Result<TrialRecord, String>> =
        jobs.par_iter().map(|&(c, t)| run_trial(cfg, c, cfg.lambda_cases[c], t)).collect();

    let mut cases: Vec<CaseReport> =
        cfg.lambda_cases.iter().map(|&lambda| CaseReport { lambda, trials: Vec::new(), excluded: Vec::new() }).collect();
    for (&(c, t), res) in jobs.iter().zip(results) {
        match res {
            Ok(rec) => cases[c].trials.push(rec),
            Err(reason) => cases[c].excluded.push((t, reason)),
        }
    }
    let report = RecoveryReport { config: cfg.clone(), cases };
    write_recovery(&report, out_dir)?;
    Ok(report)
}

fn write_recovery(report: &RecoveryReport, out_dir: &Path) -> Result<(), HarnessError> {
    let cfg = &report.config;
    let mut curves = csv::Writer::from_path(out_dir.join("curves.csv"))?;
    curves.write_record(["case", "prefix_len", "lambda_hat", "alpha_ini", "mean_L", "sd_L"])?;
    let mut selection = csv::Writer::from_path(out_dir.join("selection.csv"))?;
    selection.write_record(["case", "prefix_len", "lambda_hat", "selection_rate"])?;
    let mut costs = csv::Writer::from_path(out_dir.join("costs.csv"))?;
    costs.write_record(["case", "trial", "lambda", "alpha_bo", "alpha_ini", "prefix_len", "k0", "cost"])?;
    let mut exploration = csv::Writer::from_path(out_dir.join("exploration.csv"))?;
    exploration.write_record(["case", "trial", "alpha_ini", "position", "l_ini"])?;

    for case in &report.cases {
        let label = case.lambda.to_string();
        for &prefix in &cfg.prefix_lengths {
            for &lambda_hat in &cfg.lambda_cases {
                for &alpha_ini in &cfg.alpha_ini_values {
                    if let Some((m, sd)) = case.curve(prefix, lambda_hat, alpha_ini) {
                        curves.serialize((&label, prefix, lambda_hat.to_string(), alpha_ini.to_string(), m, sd))?;
                    }
                }
                if let Some(rate) = case.selection_rate(prefix, lambda_hat, &cfg.lambda_cases) {
                    selection.serialize((&label, prefix, lambda_hat.to_string(), rate))?;
                }
            }
        }
        for t in &case.trials {
            for r in &t.table {
                costs.serialize((&label, t.trial, format_lambda(&r.lambda), r.alpha_bo.to_string(), r.alpha_ini.to_string(), r.prefix_len, r.k0, r.cost))?;
            }
            for (a, terms) in cfg.alpha_ini_values.iter().zip(&t.exploration) {
                for (k, v) in terms.iter().enumerate() {
                    exploration.serialize((&label, t.trial, a.to_string(), k + 2, v))?;
                }
            }
            let path = out_dir.join("trajectories").join(format!("lambda_{label}_trial_{:02}.json", t.trial));
            save_trajectory(&t.trajectory, &path)?;
        }
    }
    for w in [&mut curves, &mut selection, &mut costs, &mut exploration] {
        w.flush().map_err(io_err(out_dir))?;
    }

    let summary: Vec<CaseSummary> = report
        .cases
        .iter()
        .map(|c| CaseSummary {
            lambda: c.lambda,
            trials: c.trials.len(),
            excluded: c.excluded.iter().map(|(trial, reason)| ExcludedTrial { trial: *trial, reason: reason.clone() }).collect(),
            stopped_early: c.trials.iter().filter(|t| t.stopped_early).count(),
        })
        .collect();
    let meta = Meta { study: "recovery", config: cfg, versions: Versions::current(), summary };
    write_json(&out_dir.join("meta.json"), &meta)
}
