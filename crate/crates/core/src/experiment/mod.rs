//! End-to-end comparison protocol.
//!
//! Each trial draws one random spline. Every optimizing method starts from
//! that same spline, and every resulting trajectory is flown in simulation
//! at every quality level with the filter starting from the same perturbed
//! extrinsics. Sensor noise is shared across methods for a given
//! `(trial, quality)` pair, so method differences are not masked by noise
//! realizations.

mod config;
mod describe;
mod output;

pub use config::{ExperimentConfig, GuessOffset, LimitsConfig, Method, PriorSpec};
pub use describe::{describe_trajectory, TrajectoryReport, WindowRank};
pub use output::{format_table, read_run_series, read_summary_runs, write_run_series, RunSeriesRow, SummaryRunRow};

use std::collections::BTreeMap;

use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optim::{knot_accel_cost, optimize, random_spline, Objective, OptimizeResult};
use crate::sim::{
    cost_normalized_error, normalized_cost, simulate_run, CalibrationRunResult, QualityLevel, SimulatedRun,
};
use crate::spline::UniformSpline;
use crate::system::{AugmentedState, ExtrinsicParams, Quaternion};
use crate::{Error, Result};

/// Per-run seed derived from the master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |h, p| mix(h ^ mix(*p)))
}

/// Stage names used in the failures manifest.
const STAGE_SPLINE: &str = "random_spline";
const STAGE_OPTIMIZE: &str = "optimize";
const STAGE_SIMULATE: &str = "simulate";
const STAGE_FILTER: &str = "filter";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub trial: usize,
    pub method: Option<Method>,
    pub quality: Option<QualityLevel>,
    pub stage: String,
    pub message: String,
}

/// Outcome of optimizing one method in one trial.
#[derive(Clone, Debug)]
pub struct TrialTrajectory {
    pub trial: usize,
    pub method: Method,
    pub spline: UniformSpline,
    /// `None` for the random baseline.
    pub optimization: Option<OptimizeResult>,
    pub knot_accel_cost: f64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub trial: usize,
    pub method: Method,
    pub quality: QualityLevel,
    pub result: CalibrationRunResult,
}

/// One row of the method comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub norm_cost: f64,
    /// Mean sum-of-squared translation error per quality level.
    pub sum_sq_error: BTreeMap<QualityLevel, f64>,
    /// `norm_cost × sum_sq_error` per quality level.
    pub cost_times_error: BTreeMap<QualityLevel, f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trajectories: Vec<TrialTrajectory>,
    pub runs: Vec<RunRecord>,
    pub table: Vec<TableRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method) -> Option<&TableRow> {
        self.table.iter().find(|r| r.method == method)
    }

    pub fn mean_error(&self, method: Method, quality: QualityLevel) -> Option<f64> {
        self.row(method).and_then(|r| r.sum_sq_error.get(&quality).copied())
    }
}

/// Initial filter state: the true vehicle state with the extrinsics offset
/// by the configured magnitudes in seeded random directions.
pub fn initial_guess(truth: &AugmentedState, offset: &GuessOffset, seed: u64) -> AugmentedState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || loop {
        let d: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        if d.norm() > 1e-9 {
            return d.normalize();
        }
    };
    let dp = unit() * offset.translation;
    let dq = unit() * offset.rotation_deg.to_radians();
    let mut guess = *truth;
    guess.extrinsics = ExtrinsicParams {
        p_ic: truth.extrinsics.p_ic + dp,
        q_ic: Quaternion::exp(&dq) * truth.extrinsics.q_ic,
    };
    guess
}

fn trial_trajectories(cfg: &ExperimentConfig, trial: usize) -> (Vec<TrialTrajectory>, Vec<Failure>) {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    let fail = |method, stage: &str, e: Error| Failure {
        trial,
        method,
        quality: None,
        stage: stage.into(),
        message: e.to_string(),
    };
    let seed = derive_seed(cfg.master_seed, &[0, trial as u64]);
    let initial = match generate_spline(cfg, seed) {
        Ok(s) => s,
        Err(e) => {
            failures.push(fail(None, STAGE_SPLINE, e));
            return (out, failures);
        }
    };
    for &method in &cfg.methods {
        let optimized = match method.cost_kind() {
            None => Ok((initial.clone(), None)),
            Some(_) => optimize_spline(cfg, &initial, method).map(|r| (r.spline.clone(), Some(r))),
        };
        match optimized {
            Ok((spline, optimization)) => out.push(TrialTrajectory {
                trial,
                method,
                knot_accel_cost: knot_accel_cost(&spline),
                spline,
                optimization,
            }),
            Err(e) => failures.push(fail(Some(method), STAGE_OPTIMIZE, e)),
        }
    }
    (out, failures)
}

/// Random feasible spline from the origin with the configured layout.
pub fn generate_spline(cfg: &ExperimentConfig, seed: u64) -> Result<UniformSpline> {
    let limits = cfg.limits.with_endpoints(Vector4::zeros(), Vector4::zeros());
    random_spline(Vector4::zeros(), seed, cfg.n_knots, cfg.dt_knot, &limits, &cfg.random)
}

/// Optimizes `spline` for `method`, keeping its first and last knots as the
/// endpoint targets. The random baseline has no cost and is rejected.
pub fn optimize_spline(cfg: &ExperimentConfig, spline: &UniformSpline, method: Method) -> Result<OptimizeResult> {
    let kind = method
        .cost_kind()
        .ok_or_else(|| Error::InvalidArgument(format!("method `{method}` has no cost to optimize")))?;
    let knots = spline.knots();
    let limits = cfg.limits.with_endpoints(knots[0], knots[knots.len() - 1]);
    let objective = Objective::new(cfg.cost_spec(kind), spline)?;
    optimize(spline, &objective, &limits, &cfg.solver)
}

/// Filters one simulated run from the configured initial guess and prior.
pub fn calibrate_run(cfg: &ExperimentConfig, run: &SimulatedRun, guess_seed: u64) -> Result<CalibrationRunResult> {
    let initial = initial_guess(&run.truth[0], &cfg.guess_offset, guess_seed);
    run.calibrate(&initial, &cfg.prior.covariance())
}

fn calibration_run(
    cfg: &ExperimentConfig,
    traj: &TrialTrajectory,
    qi: usize,
) -> std::result::Result<RunRecord, Failure> {
    let quality = cfg.qualities[qi];
    let fail = |stage: &str, e: Error| Failure {
        trial: traj.trial,
        method: Some(traj.method),
        quality: Some(quality),
        stage: stage.into(),
        message: e.to_string(),
    };
    let seed = derive_seed(cfg.master_seed, &[1, traj.trial as u64, quality.n_landmarks as u64]);
    let run = simulate_run(&traj.spline, &cfg.truth, &cfg.noise, &cfg.rates, quality, seed)
        .map_err(|e| fail(STAGE_SIMULATE, e))?;
    let guess_seed = derive_seed(cfg.master_seed, &[2, traj.trial as u64]);
    let mut result = calibrate_run(cfg, &run, guess_seed).map_err(|e| fail(STAGE_FILTER, e))?;
    result.accel_cost = crate::optim::accel_cost(&traj.spline, &nalgebra::Matrix4::identity());
    result.knot_accel_cost = traj.knot_accel_cost;
    Ok(RunRecord {
        trial: traj.trial,
        method: traj.method,
        quality,
        result,
    })
}

fn comparison_table(cfg: &ExperimentConfig, trajectories: &[TrialTrajectory], runs: &[RunRecord]) -> Result<Vec<TableRow>> {
    let mut costs: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for t in trajectories {
        costs.entry(t.method).or_default().push(t.knot_accel_cost);
    }
    if costs.is_empty() {
        return Ok(Vec::new());
    }
    let norm = normalized_cost(&costs)?;
    let mut rows = Vec::new();
    for &method in cfg.methods.iter().filter(|m| norm.contains_key(m)) {
        let mut row = TableRow {
            method,
            norm_cost: norm[&method],
            sum_sq_error: BTreeMap::new(),
            cost_times_error: BTreeMap::new(),
        };
        for &q in &cfg.qualities {
            let errs: Vec<f64> = runs
                .iter()
                .filter(|r| r.method == method && r.quality == q)
                .map(|r| r.result.sum_sq_error)
                .collect();
            if errs.is_empty() {
                continue;
            }
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            row.sum_sq_error.insert(q, mean);
            row.cost_times_error.insert(q, cost_normalized_error(row.norm_cost, mean)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Runs the full protocol in memory. Module errors inside a run are
/// recorded as failures; only an invalid configuration is an error.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let per_trial: Vec<_> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|trial| trial_trajectories(cfg, trial))
        .collect();
    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for (t, f) in per_trial {
        trajectories.extend(t);
        failures.extend(f);
    }

    let jobs: Vec<(usize, usize)> = (0..trajectories.len())
        .flat_map(|ti| (0..cfg.qualities.len()).map(move |qi| (ti, qi)))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(ti, qi)| calibration_run(cfg, &trajectories[ti], qi))
        .collect();
    let mut runs = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    failures.sort_by(|a, b| {
        (a.trial, a.method, a.quality, &a.stage).cmp(&(b.trial, b.method, b.quality, &b.stage))
    });
    let table = comparison_table(cfg, &trajectories, &runs)?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        trajectories,
        runs,
        table,
        failures,
    })
}

/// Runs the protocol and writes all artifacts to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = execute(cfg)?;
    output::write_report(&report, &cfg.output_dir)?;
    Ok(report)
}
