use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pareto::StepRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrajectory {
    pub label: String,
    pub steps: Vec<usize>,
    pub alpha2: Vec<f64>,
    /// Trailing moving average over `window` records.
    pub smoothed: Vec<f64>,
    /// Mean α2 over the last 20% of records.
    pub tail_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub window: usize,
    pub runs: Vec<RunTrajectory>,
}

/// Mean of the final `fraction` of `xs` (at least one element).
pub fn tail_mean(xs: &[f64], fraction: f64) -> f64 {
    let n = ((xs.len() as f64 * fraction).ceil() as usize).clamp(1, xs.len().max(1));
    let tail = &xs[xs.len() - n..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let part = &xs[(i + 1).saturating_sub(w)..=i];
            part.iter().sum::<f64>() / part.len() as f64
        })
        .collect()
}

/// Smoothed α2 trajectories, one per labelled run.
pub fn weight_trajectory_report(runs: &[(String, Vec<StepRecord>)], window: usize) -> Result<TrajectoryReport> {
    if runs.is_empty() {
        return Err(Error::MissingLogs("no runs given".into()));
    }
    let runs = runs
        .iter()
        .map(|(label, log)| {
            if log.is_empty() {
                return Err(Error::MissingLogs(format!("run {label} has no step records")));
            }
            let alpha2: Vec<f64> = log.iter().map(|r| r.alpha2).collect();
            Ok(RunTrajectory {
                label: label.clone(),
                steps: log.iter().map(|r| r.step).collect(),
                smoothed: moving_average(&alpha2, window),
                tail_mean: tail_mean(&alpha2, 0.2),
                alpha2,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrajectoryReport { window, runs })
}

impl TrajectoryReport {
    /// Long format: `run,step,alpha2,alpha2_smoothed`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "step", "alpha2", "alpha2_smoothed"])?;
        for r in &self.runs {
            for i in 0..r.steps.len() {
                w.write_record([r.label.clone(), r.steps[i].to_string(), r.alpha2[i].to_string(), r.smoothed[i].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "records", "tail_mean_alpha2"])?;
        for r in &self.runs {
            w.write_record([r.label.clone(), r.steps.len().to_string(), r.tail_mean.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wall-clock seconds of every training step of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedRun {
    pub label: String,
    pub step_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub label: String,
    pub steps: usize,
    pub iterations_per_second: f64,
    /// Extra time per step relative to the base, in percent.
    pub overhead_percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub base: String,
    pub warmup: usize,
    pub rows: Vec<OverheadRow>,
}

pub const OVERHEAD_WARMUP: usize = 20;
pub const OVERHEAD_MIN_STEPS: usize = 200;

fn iterations_per_second(run: &TimedRun, warmup: usize) -> Result<(usize, f64)> {
    let timed = run.step_seconds.get(warmup..).unwrap_or(&[]);
    if timed.len() < OVERHEAD_MIN_STEPS {
        return Err(Error::TooFewSteps(format!(
            "{}: {} timed steps after {warmup} warm-up, need {OVERHEAD_MIN_STEPS}",
            run.label,
            timed.len()
        )));
    }
    let total: f64 = timed.iter().sum();
    Ok((timed.len(), timed.len() as f64 / total))
}

/// Iterations per second of each run (base first) and overhead against the base.
pub fn overhead_report(base: &TimedRun, others: &[TimedRun], warmup: usize) -> Result<OverheadReport> {
    let (_, base_ips) = iterations_per_second(base, warmup)?;
    let rows = std::iter::once(base)
        .chain(others)
        .map(|r| {
            let (steps, ips) = iterations_per_second(r, warmup)?;
            Ok(OverheadRow {
                label: r.label.clone(),
                steps,
                iterations_per_second: ips,
                overhead_percent: (base_ips / ips - 1.0) * 100.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(OverheadReport { base: base.label.clone(), warmup, rows })
}

impl OverheadReport {
    pub fn overhead_of(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.overhead_percent)
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["config", "steps", "iterations_per_second", "overhead_percent"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.steps.to_string(),
                r.iterations_per_second.to_string(),
                r.overhead_percent.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pretty JSON for any report.
pub fn write_json<T: Serialize>(out: impl std::io::Write, report: &T) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}
