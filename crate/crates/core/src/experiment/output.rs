//! Artifact files of an experiment run.
//!
//! ```text
//! config.json              effective configuration
//! summary_runs.csv         one row per calibration run
//! summary_table.csv/.txt   method comparison table
//! optimization.csv         optimizer outcome per (trial, method)
//! failures.json            runs that aborted, with the failing stage
//! splines/                 trajectories in the spline text format
//! logs/                    optimizer iteration logs
//! runs/                    per-run error series
//! plots/                   mean ± std error curves per (method, quality)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentReport, Method, RunRecord};
use crate::sim::{CalibrationRunResult, QualityLevel};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRunRow {
    pub method: Method,
    pub quality: u32,
    pub trial: usize,
    pub seed: u64,
    pub sum_sq_error: f64,
    pub final_sq_error: f64,
    pub accel_cost: f64,
    pub knot_accel_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSeriesRow {
    pub t: f64,
    pub ex: f64,
    pub ey: f64,
    pub ez: f64,
    pub rot_err: f64,
    pub cov_trace: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PlotRow {
    t: f64,
    trans_err_mean: f64,
    trans_err_std: f64,
    rot_err_mean: f64,
    rot_err_std: f64,
    cov_trace_mean: f64,
    cov_trace_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizationRow {
    trial: usize,
    method: Method,
    initial_cost: f64,
    final_cost: f64,
    iterations: usize,
    evaluations: usize,
    knot_accel_cost: f64,
    diagnostics: String,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_summary_runs(path: impl AsRef<Path>) -> Result<Vec<SummaryRunRow>> {
    read_rows(path.as_ref())
}

pub fn read_run_series(path: impl AsRef<Path>) -> Result<Vec<RunSeriesRow>> {
    read_rows(path.as_ref())
}

/// Writes the per-update error series of one filter run as CSV.
pub fn write_run_series(path: impl AsRef<Path>, result: &CalibrationRunResult) -> Result<()> {
    write_rows(path.as_ref(), &series_rows(result))
}

fn run_stem(method: Method, quality: QualityLevel, trial: usize) -> String {
    format!("{}_q{}_trial{:02}", method, quality.n_landmarks, trial)
}

fn series_rows(r: &CalibrationRunResult) -> Vec<RunSeriesRow> {
    (0..r.times.len())
        .map(|i| RunSeriesRow {
            t: r.times[i],
            ex: r.trans_error[i].x,
            ey: r.trans_error[i].y,
            ez: r.trans_error[i].z,
            rot_err: r.rot_error[i],
            cov_trace: r.cov_trace[i],
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Mean ± sample std across trials at each update index.
fn plot_rows(runs: &[&RunRecord]) -> Vec<PlotRow> {
    let len = runs.iter().map(|r| r.result.times.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col = |f: &dyn Fn(&RunRecord) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (tm, ts) = mean_std(&col(&|r| r.result.trans_error[i].norm()));
            let (rm, rs) = mean_std(&col(&|r| r.result.rot_error[i]));
            let (cm, cs) = mean_std(&col(&|r| r.result.cov_trace[i]));
            PlotRow {
                t: runs[0].result.times[i],
                trans_err_mean: tm,
                trans_err_std: ts,
                rot_err_mean: rm,
                rot_err_std: rs,
                cov_trace_mean: cm,
                cov_trace_std: cs,
            }
        })
        .collect()
}

/// Comparison table as aligned text.
pub fn format_table(report: &ExperimentReport) -> String {
    let qualities = &report.config.qualities;
    let mut s = String::new();
    let _ = write!(s, "{:<14} {:>10}", "method", "norm_cost");
    for q in qualities {
        let _ = write!(s, " {:>12}", format!("sse@{}", q.n_landmarks));
    }
    for q in qualities {
        let _ = write!(s, " {:>12}", format!("cxe@{}", q.n_landmarks));
    }
    s.push('\n');
    let cell = |v: Option<&f64>| v.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
    for row in &report.table {
        let _ = write!(s, "{:<14} {:>10.4}", row.method.name(), row.norm_cost);
        for q in qualities {
            let _ = write!(s, " {:>12}", cell(row.sum_sq_error.get(q)));
        }
        for q in qualities {
            let _ = write!(s, " {:>12}", cell(row.cost_times_error.get(q)));
        }
        s.push('\n');
    }
    s
}

fn write_table_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let qualities = &report.config.qualities;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["method".to_string(), "norm_cost".to_string()];
    header.extend(qualities.iter().map(|q| format!("sum_sq_error_q{}", q.n_landmarks)));
    header.extend(qualities.iter().map(|q| format!("cost_times_error_q{}", q.n_landmarks)));
    w.write_record(&header)?;
    let cell = |v: Option<&f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for row in &report.table {
        let mut rec = vec![row.method.name().to_string(), row.norm_cost.to_string()];
        rec.extend(qualities.iter().map(|q| cell(row.sum_sq_error.get(q))));
        rec.extend(qualities.iter().map(|q| cell(row.cost_times_error.get(q))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub(super) fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    for sub in ["splines", "logs", "runs", "plots"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    fs::write(dir.join("config.json"), report.config.to_json())?;

    let mut opt_rows = Vec::new();
    for t in &report.trajectories {
        let stem = format!("trial{:02}_{}", t.trial, t.method);
        t.spline.save(dir.join("splines").join(format!("{stem}.spline")))?;
        if let Some(o) = &t.optimization {
            fs::write(dir.join("logs").join(format!("{stem}.csv")), o.log_csv())?;
            opt_rows.push(OptimizationRow {
                trial: t.trial,
                method: t.method,
                initial_cost: o.initial_cost,
                final_cost: o.final_cost,
                iterations: o.log.len(),
                evaluations: o.evaluations,
                knot_accel_cost: t.knot_accel_cost,
                diagnostics: o.diagnostics.join("; "),
            });
        }
    }
    write_rows(&dir.join("optimization.csv"), &opt_rows)?;

    let mut summary = Vec::with_capacity(report.runs.len());
    for run in &report.runs {
        let stem = run_stem(run.method, run.quality, run.trial);
        write_rows(&dir.join("runs").join(format!("{stem}.csv")), &series_rows(&run.result))?;
        summary.push(SummaryRunRow {
            method: run.method,
            quality: run.quality.n_landmarks,
            trial: run.trial,
            seed: run.result.seed,
            sum_sq_error: run.result.sum_sq_error,
            final_sq_error: run.result.final_sq_error,
            accel_cost: run.result.accel_cost,
            knot_accel_cost: run.result.knot_accel_cost,
        });
    }
    write_rows(&dir.join("summary_runs.csv"), &summary)?;

    for &method in &report.config.methods {
        for &quality in &report.config.qualities {
            let group: Vec<&RunRecord> = report
                .runs
                .iter()
                .filter(|r| r.method == method && r.quality == quality)
                .collect();
            if group.is_empty() {
                continue;
            }
            let path = dir
                .join("plots")
                .join(format!("{}_q{}.csv", method, quality.n_landmarks));
            write_rows(&path, &plot_rows(&group))?;
        }
    }

    write_table_csv(report, &dir.join("summary_table.csv"))?;
    fs::write(dir.join("summary_table.txt"), format_table(report))?;
    fs::write(
        dir.join("failures.json"),
        serde_json::to_string_pretty(&report.failures)?,
    )?;
    Ok(())
}
