use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{run_with, Propagators, TrajectoryOptions, TrajectoryRecord};
use super::OpenSystem;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::observables::Moments;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub master_seed: u64,
    pub traj: TrajectoryOptions,
    /// Fraction of `t_max` at the end used as the steady-state window.
    pub window_fraction: f64,
    /// Relative stderr and drift limit for the convergence flag.
    pub tolerance: f64,
    /// Keep every trajectory record in the result.
    pub keep_records: bool,
    /// Trajectories per checkpoint write when a checkpoint path is given.
    pub checkpoint_every: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            n_traj: 100,
            master_seed: 0,
            traj: TrajectoryOptions::default(),
            window_fraction: 0.25,
            tolerance: 0.05,
            keep_records: false,
            checkpoint_every: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn relative_error(&self) -> f64 {
        if self.mean.abs() > 1e-12 {
            self.stderr / self.mean.abs()
        } else if self.stderr > 1e-12 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Per-trajectory reduction kept for the ensemble and the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: usize,
    /// Moments averaged over the steady-state window.
    pub window: Moments,
    pub first_half_n: f64,
    pub second_half_n: f64,
    /// Mode-averaged `⟨n⟩` at every sample.
    pub series_n: Vec<f64>,
    pub series_xxx: Vec<f64>,
    pub series_xx: Vec<[f64; 3]>,
    pub jumps: usize,
    pub max_jump_probability: f64,
    pub max_edge_weight: f64,
    pub final_sector: usize,
}

/// Ensemble means at every sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub n_mean: Vec<f64>,
    pub n_stderr: Vec<f64>,
    pub coskewness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub window: (f64, f64),
    /// Window- and ensemble-averaged moments.
    pub moments: Moments,
    /// Mode-averaged photon number.
    pub n_mean: Estimate,
    pub n_rescaled: Estimate,
    pub n_modes: [Estimate; 3],
    /// Mode-averaged `g²(0)`; `NaN` when the photon number vanishes.
    pub g2: Estimate,
    pub coskewness: Estimate,
    /// Relative change of `⟨n⟩` between the halves of the window.
    pub drift: f64,
    pub converged: bool,
    pub series: TimeSeries,
    pub total_jumps: usize,
    pub max_jump_probability: f64,
    pub max_edge_weight: f64,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

/// Versioned resume file: completed trajectory summaries plus the settings they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: ModelParams,
    pub cutoff: usize,
    pub options: EnsembleOptions,
    pub completed: Vec<TrajectorySummary>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Input(format!("bad checkpoint: {e}")))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!("checkpoint version {} is not {CHECKPOINT_VERSION}", c.version)));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(self).expect("checkpoint serializes"))?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    fn matches(&self, sys: &OpenSystem, opts: &EnsembleOptions) -> bool {
        let mut a = self.options.clone();
        let mut b = opts.clone();
        a.n_traj = 0;
        b.n_traj = 0;
        a.checkpoint_every = 0;
        b.checkpoint_every = 0;
        self.params == sys.params && self.cutoff == sys.cutoff() && a == b
    }
}

fn summarize(index: usize, rec: &TrajectoryRecord, t0: f64, t_mid: f64, keep: bool) -> (TrajectorySummary, Option<TrajectoryRecord>) {
    let in_window: Vec<usize> = (0..rec.times.len()).filter(|&k| rec.times[k] >= t0 - 1e-9).collect();
    let w = 1.0 / in_window.len() as f64;
    let window = Moments::weighted_sum(in_window.iter().map(|&k| (w, &rec.moments[k])));
    let half = |pred: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> =
            in_window.iter().filter(|&&k| pred(rec.times[k])).map(|&k| rec.moments[k].mean_photon_number()).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let s = TrajectorySummary {
        index,
        window,
        first_half_n: half(&|t| t < t_mid),
        second_half_n: half(&|t| t >= t_mid),
        series_n: rec.moments.iter().map(|m| m.mean_photon_number()).collect(),
        series_xxx: rec.moments.iter().map(|m| m.xxx).collect(),
        series_xx: rec.moments.iter().map(|m| [m.xx[0][0], m.xx[1][1], m.xx[2][2]]).collect(),
        jumps: rec.jumps.len(),
        max_jump_probability: rec.max_jump_probability,
        max_edge_weight: rec.max_edge_weight,
        final_sector: rec.final_sector,
    };
    (s, keep.then(|| rec.clone()))
}

fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { mean, stderr: (var / n).sqrt() }
}

/// Jackknife estimate of a smooth function of the mean moments.
fn jackknife(items: &[Moments], f: impl Fn(&Moments) -> f64) -> Estimate {
    let n = items.len();
    let total = Moments::weighted_sum(items.iter().map(|m| (1.0, m)));
    let full = f(&Moments::weighted_sum([(1.0 / n as f64, &total)]));
    let loo: Vec<f64> = items
        .iter()
        .map(|m| {
            let s = Moments::weighted_sum([(1.0, &total), (-1.0, m)]);
            f(&Moments::weighted_sum([(1.0 / (n - 1) as f64, &s)]))
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|x| (x - mean_loo).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Estimate { mean: full, stderr: var.sqrt() }
}

fn g2_mean(m: &Moments) -> f64 {
    (0..3).map(|k| m.nn[k] / (m.n[k] * m.n[k])).sum::<f64>() / 3.0
}

fn reduce(sys: &OpenSystem, opts: &EnsembleOptions, sums: &[TrajectorySummary], records: Vec<TrajectoryRecord>) -> EnsembleStats {
    let n = sums.len();
    let times = opts.traj.sample_times();
    let t_max = times.last().copied().unwrap_or(0.0);
    let t0 = t_max * (1.0 - opts.window_fraction);
    let windows: Vec<Moments> = sums.iter().map(|s| s.window).collect();
    let moments = Moments::mean(&windows);
    let n_mean = mean_se(&windows.iter().map(|m| m.mean_photon_number()).collect::<Vec<_>>());
    let eta = sys.params.eta;
    let n_modes = std::array::from_fn(|k| mean_se(&windows.iter().map(|m| m.n[k]).collect::<Vec<_>>()));
    let g2 = jackknife(&windows, g2_mean);
    let coskewness = jackknife(&windows, |m| m.coskewness_unchecked());
    let first = sums.iter().map(|s| s.first_half_n).sum::<f64>() / n as f64;
    let second = sums.iter().map(|s| s.second_half_n).sum::<f64>() / n as f64;
    let drift = if n_mean.mean.abs() > 1e-12 { (second - first).abs() / n_mean.mean.abs() } else { (second - first).abs() };
    let converged = n_mean.relative_error() < opts.tolerance && drift < opts.tolerance;
    let ns = times.len();
    let mut series = TimeSeries { times, n_mean: vec![0.0; ns], n_stderr: vec![0.0; ns], coskewness: vec![0.0; ns] };
    for k in 0..ns {
        let col: Vec<f64> = sums.iter().map(|s| s.series_n[k]).collect();
        let e = mean_se(&col);
        series.n_mean[k] = e.mean;
        series.n_stderr[k] = e.stderr;
        let xxx = sums.iter().map(|s| s.series_xxx[k]).sum::<f64>() / n as f64;
        let xx: [f64; 3] = std::array::from_fn(|j| sums.iter().map(|s| s.series_xx[k][j]).sum::<f64>() / n as f64);
        series.coskewness[k] = xxx / (xx[0] * xx[1] * xx[2]).sqrt();
    }
    EnsembleStats {
        n_traj: n,
        window: (t0, t_max),
        moments,
        n_rescaled: Estimate { mean: n_mean.mean / eta, stderr: n_mean.stderr / eta },
        n_mean,
        n_modes,
        g2,
        coskewness,
        drift,
        converged,
        series,
        total_jumps: sums.iter().map(|s| s.jumps).sum(),
        max_jump_probability: sums.iter().map(|s| s.max_jump_probability).fold(0.0, f64::max),
        max_edge_weight: sums.iter().map(|s| s.max_edge_weight).fold(0.0, f64::max),
        records,
    }
}

/// Runs `n_traj` trajectories in parallel. Trajectory `j` uses stream `j` of the master seed,
/// so results do not depend on the number of worker threads.
pub fn ensemble_run(sys: &OpenSystem, opts: &EnsembleOptions) -> Result<EnsembleStats> {
    ensemble_run_with(sys, opts, None, &|_, _| {})
}

/// As [`ensemble_run`], resuming from and periodically writing `checkpoint`; `progress` gets `(done, total)`.
pub fn ensemble_run_with(
    sys: &OpenSystem,
    opts: &EnsembleOptions,
    checkpoint: Option<PathBuf>,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<EnsembleStats> {
    if opts.n_traj < 2 {
        return Err(Error::Input("an ensemble needs at least two trajectories".into()));
    }
    if !(opts.window_fraction > 0.0 && opts.window_fraction <= 1.0) {
        return Err(Error::Input("window fraction must lie in (0, 1]".into()));
    }
    opts.traj.validate()?;
    let times = opts.traj.sample_times();
    let t_max = *times.last().expect("at least t = 0");
    let t0 = t_max * (1.0 - opts.window_fraction);
    let t_mid = 0.5 * (t0 + t_max);
    let props = Propagators::new(sys, &opts.traj);

    let mut done: Vec<TrajectorySummary> = Vec::new();
    if let Some(path) = &checkpoint {
        if path.exists() {
            let c = Checkpoint::load(path)?;
            if !c.matches(sys, opts) {
                return Err(Error::Input(format!("checkpoint {} belongs to different settings", path.display())));
            }
            done = c.completed.into_iter().filter(|s| s.index < opts.n_traj).collect();
            done.sort_by_key(|s| s.index);
        }
    }
    let mut records = Vec::new();
    let chunk = if checkpoint.is_some() { opts.checkpoint_every.max(1) } else { opts.n_traj };
    while done.len() < opts.n_traj {
        let start = done.len();
        let end = (start + chunk).min(opts.n_traj);
        let out: Vec<Result<(TrajectorySummary, Option<TrajectoryRecord>)>> = (start..end)
            .into_par_iter()
            .map(|j| {
                let rec = run_with(sys, &props, opts.master_seed, j as u64, &opts.traj, &mut |_, _, _| {})?;
                Ok(summarize(j, &rec, t0, t_mid, opts.keep_records))
            })
            .collect();
        for r in out {
            let (s, rec) = r?;
            done.push(s);
            records.extend(rec);
        }
        progress(done.len(), opts.n_traj);
        if let Some(path) = &checkpoint {
            Checkpoint {
                version: CHECKPOINT_VERSION,
                params: sys.params,
                cutoff: sys.cutoff(),
                options: opts.clone(),
                completed: done.clone(),
            }
            .save(path)?;
        }
    }
    Ok(reduce(sys, opts, &done, records))
}
