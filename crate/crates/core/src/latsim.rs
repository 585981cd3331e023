//! Monte Carlo completion-latency simulation.
//!
//! Each server runs its tasks back to back. A task of `c` unit
//! multiplications (`U x U` by `U x U`) takes the sum of `c` independent
//! unit delays. With `avail` servers responding the job finishes once the
//! `avail`-th fastest server has finished task `tasks_required(avail)`; the
//! completion time is the best such scenario.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{tasks_required_for, RecoveryProfile, SchemePlan};
use crate::error::{Error, Result};

/// Distribution of the time one unit multiplication takes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitDelay {
    /// Exponential with the configured mean.
    #[default]
    Exponential,
    /// Always exactly the configured mean.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Edge length `U` of the unit block, in matrix entries.
    pub unit_granule: usize,
    /// Mean seconds per unit multiplication.
    pub unit_mean: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub delay: UnitDelay,
}

impl LatencyModel {
    pub fn new(unit_granule: usize, unit_mean: f64, trials: usize, seed: u64) -> Result<Self> {
        let model = Self {
            unit_granule,
            unit_mean,
            trials,
            seed,
            delay: UnitDelay::Exponential,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_delay(mut self, delay: UnitDelay) -> Self {
        self.delay = delay;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.unit_granule == 0 {
            return Err(Error::InvalidArgument(
                "unit granule must be positive".into(),
            ));
        }
        if !(self.unit_mean > 0.0 && self.unit_mean.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "unit mean must be positive, got {}",
                self.unit_mean
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument(
                "at least one trial is required".into(),
            ));
        }
        Ok(())
    }
}

/// Per-server task sizes and how many tasks each straggler scenario needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub n_servers: usize,
    pub min_available: usize,
    /// Unit multiplications of each task, in execution order.
    pub task_units: Vec<u64>,
    /// Entry `i` is the task count needed when `min_available + i` servers respond.
    pub tasks_required: Vec<usize>,
}

impl TaskSchedule {
    /// Schedule of a plan, measuring tasks in `granule^3` units.
    pub fn from_plan(plan: &SchemePlan, granule: usize) -> Result<Self> {
        let unit = (granule as u64).pow(3);
        let mut task_units = Vec::with_capacity(plan.total_tasks());
        for k in 1..=plan.total_tasks() {
            let (layer, task) = plan.task_position(k).expect("within total tasks");
            let mults = plan.task_multiplications(layer, task);
            if !mults.is_multiple_of(unit) {
                return Err(Error::InvalidArgument(format!(
                    "task {k} has {mults} multiplications, not a multiple of {granule}^3"
                )));
            }
            task_units.push(mults / unit);
        }
        let tasks_required = (plan.profile.bottom()..=plan.n_servers)
            .map(|avail| plan.tasks_required(avail))
            .collect::<Result<_>>()?;
        Self::new(
            plan.n_servers,
            plan.profile.bottom(),
            task_units,
            tasks_required,
        )
    }

    /// A single-task code that needs any `threshold` servers.
    pub fn fixed_ep(n_servers: usize, threshold: usize, units: u64) -> Result<Self> {
        Self::new(
            n_servers,
            threshold,
            vec![units],
            vec![1; n_servers + 1 - threshold.min(n_servers + 1)],
        )
    }

    /// Schedule of a layered profile with explicit task sizes.
    pub fn layered(
        n_servers: usize,
        profile: &RecoveryProfile,
        task_units: Vec<u64>,
    ) -> Result<Self> {
        let tasks_required = (profile.bottom()..=n_servers)
            .map(|avail| tasks_required_for(profile, avail))
            .collect::<Result<_>>()?;
        Self::new(n_servers, profile.bottom(), task_units, tasks_required)
    }

    pub fn new(
        n_servers: usize,
        min_available: usize,
        task_units: Vec<u64>,
        tasks_required: Vec<usize>,
    ) -> Result<Self> {
        if min_available == 0 || min_available > n_servers {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= R <= N, got R = {min_available}, N = {n_servers}"
            )));
        }
        if tasks_required.len() != n_servers - min_available + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected {} task requirements, got {}",
                n_servers - min_available + 1,
                tasks_required.len()
            )));
        }
        if let Some(&k) = tasks_required
            .iter()
            .find(|&&k| k == 0 || k > task_units.len())
        {
            return Err(Error::InvalidArgument(format!(
                "scenario needs {k} tasks but the schedule has {}",
                task_units.len()
            )));
        }
        Ok(Self {
            n_servers,
            min_available,
            task_units,
            tasks_required,
        })
    }

    /// Units a server runs through in the slowest scenario.
    pub fn max_units(&self) -> u64 {
        let k = self.tasks_required.iter().copied().max().unwrap_or(0);
        self.task_units[..k].iter().sum()
    }

    /// Completion time and winning scenario given each server's cumulative
    /// unit finish times (`finish[s][u]` is the end of unit `u + 1`).
    fn completion(&self, finish: &[Vec<f64>], scratch: &mut Vec<f64>) -> (f64, usize) {
        let mut boundary = vec![0u64; self.task_units.len() + 1];
        for (k, &c) in self.task_units.iter().enumerate() {
            boundary[k + 1] = boundary[k] + c;
        }
        let mut best = (f64::INFINITY, self.n_servers);
        for avail in (self.min_available..=self.n_servers).rev() {
            let k = self.tasks_required[avail - self.min_available];
            let end = boundary[k] as usize;
            scratch.clear();
            scratch.extend(
                finish
                    .iter()
                    .map(|f| if end == 0 { 0.0 } else { f[end - 1] }),
            );
            let (_, t, _) = scratch.select_nth_unstable_by(avail - 1, f64::total_cmp);
            if *t < best.0 {
                best = (*t, avail);
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Completion latency of each trial, in trial order.
    pub samples: Vec<f64>,
    /// Number of responding servers whose scenario finished first, per trial.
    pub winners: Vec<usize>,
    pub mean: f64,
    /// How many trials each scenario won.
    pub breakdown: BTreeMap<usize, usize>,
}

impl LatencyReport {
    fn from_trials(trials: Vec<(f64, usize)>) -> Self {
        let (samples, winners): (Vec<f64>, Vec<usize>) = trials.into_iter().unzip();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let mut breakdown = BTreeMap::new();
        for &w in &winners {
            *breakdown.entry(w).or_insert(0) += 1;
        }
        Self {
            samples,
            winners,
            mean,
            breakdown,
        }
    }
}

pub fn simulate(schedule: &TaskSchedule, model: &LatencyModel) -> Result<LatencyReport> {
    Ok(simulate_coupled(std::slice::from_ref(schedule), model)?.remove(0))
}

/// Simulates several schedules on the same unit delays: in every trial,
/// server `s` sees the same sequence of unit times under every schedule.
pub fn simulate_coupled(
    schedules: &[TaskSchedule],
    model: &LatencyModel,
) -> Result<Vec<LatencyReport>> {
    model.validate()?;
    let Some(first) = schedules.first() else {
        return Err(Error::InvalidArgument("no schedule to simulate".into()));
    };
    let n = first.n_servers;
    if schedules.iter().any(|s| s.n_servers != n) {
        return Err(Error::InvalidArgument(
            "coupled schedules must share the server count".into(),
        ));
    }
    let units = schedules
        .iter()
        .map(TaskSchedule::max_units)
        .max()
        .unwrap_or(0) as usize;
    let exp = Exp::new(1.0 / model.unit_mean).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let per_trial: Vec<Vec<(f64, usize)>> = (0..model.trials)
        .into_par_iter()
        .map_init(
            || (vec![vec![0.0; units]; n], Vec::with_capacity(n)),
            |(finish, scratch), trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
                rng.set_stream(trial as u64);
                for server in finish.iter_mut() {
                    let mut t = 0.0;
                    for slot in server.iter_mut() {
                        t += match model.delay {
                            UnitDelay::Exponential => exp.sample(&mut rng),
                            UnitDelay::Constant => model.unit_mean,
                        };
                        *slot = t;
                    }
                }
                schedules
                    .iter()
                    .map(|s| s.completion(finish, scratch))
                    .collect()
            },
        )
        .collect();

    Ok((0..schedules.len())
        .map(|i| LatencyReport::from_trials(per_trial.iter().map(|t| t[i]).collect()))
        .collect())
}

/// One point of an empirical CDF.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub latency: f64,
    pub cdf: f64,
}

/// `resolution` evenly spaced points from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    match resolution {
        0 => Vec::new(),
        1 => vec![hi],
        r => (0..r)
            .map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64)
            .collect(),
    }
}

/// Empirical CDF of the samples at each grid point.
pub fn cdf_at(report: &LatencyReport, grid: &[f64]) -> Result<Vec<f64>> {
    if report.samples.is_empty() {
        return Err(Error::InvalidArgument("empty latency report".into()));
    }
    let mut sorted = report.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| sorted.partition_point(|&s| s <= x) as f64 / total)
        .collect())
}

/// Empirical CDF on a uniform grid spanning the observed latencies.
pub fn emit_cdf(report: &LatencyReport, resolution: usize) -> Result<Vec<CdfPoint>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let lo = report.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = report
        .samples
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let grid = uniform_grid(lo, hi, resolution);
    let cdf = cdf_at(report, &grid)?;
    Ok(grid
        .into_iter()
        .zip(cdf)
        .map(|(latency, cdf)| CdfPoint { latency, cdf })
        .collect())
}

/// Writes `latency,cdf` rows.
pub fn write_cdf_csv<W: Write>(points: &[CdfPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trial,latency,winning_R` rows, trials numbered from 1.
pub fn write_samples_csv<W: Write>(report: &LatencyReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "latency", "winning_R"])
        .map_err(csv_error)?;
    for (i, (lat, win)) in report.samples.iter().zip(&report.winners).enumerate() {
        w.write_record([(i + 1).to_string(), lat.to_string(), win.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
