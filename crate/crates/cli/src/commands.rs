//! Subcommand implementations. Each returns tables and per-point failures; `main` does the I/O.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use trimer::bogoliubov::fluctuation_table;
use trimer::dynamics::{ensemble_run_with, EnsembleOptions, EnsembleStats, OpenSystem, TrajectoryOptions};
use trimer::eigen::EigenOptions;
use trimer::error::Error;
use trimer::freqplan::{DetuningReference, DrivePlan, PlanOptions, ResonatorTable, DEFAULT_THRESHOLD};
use trimer::hilbert::SectorLabel;
use trimer::meanfield::{classify_phase, meanfield_observables};
use trimer::model::ModelParams;
use trimer::spectral::{converged_spectrum, SpectralOptions, SweepPoint, OVERLAP_TOLERANCE};

use crate::config::{positive, ConfigError, GridSettings, Overrides};
use crate::schema::{self, num, opt_num, Kind};

/// One emitted table.
#[derive(Debug, Clone)]
pub struct TableOut {
    pub path: Option<PathBuf>,
    pub kind: Kind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// A grid point that failed.
#[derive(Debug, Clone, Serialize)]
pub struct PointFailure {
    pub eta: f64,
    pub g0: f64,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<TableOut>,
    /// Free-form text for standard output (freqplan report).
    pub text: Option<String>,
    /// JSON document for `--out` (freqplan plan).
    pub json: Option<(Option<PathBuf>, String)>,
    pub settings: Value,
    pub failures: Vec<PointFailure>,
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "domain",
        Error::Capacity(_) => "capacity",
        Error::Structure { .. } => "structure",
        Error::Solver { .. } => "solver",
        Error::Convergence { .. } => "convergence",
        Error::Input(_) => "input",
        Error::Undefined(_) => "undefined",
        Error::Symmetry { .. } => "symmetry",
        Error::Unsupported(_) => "unsupported",
        Error::Truncation { .. } => "truncation",
        Error::Precondition(_) => "precondition",
        Error::Infeasible(_) => "infeasible",
        Error::Degenerate(_) => "degenerate",
        Error::Io(_) => "io",
    }
}

fn failure(eta: f64, g0: f64, e: &Error) -> PointFailure {
    PointFailure { eta, g0, kind: error_kind(e), message: e.to_string() }
}

/// Runs `f` on every grid point in parallel and keeps the results in grid order.
fn over_grid<T: Send>(
    grid: &GridSettings,
    f: impl Fn(ModelParams) -> Result<T, Error> + Sync,
) -> (Vec<(f64, f64, T)>, Vec<PointFailure>) {
    let results: Vec<_> =
        grid.points().into_par_iter().map(|(eta, g0)| (eta, g0, f(grid.params(eta, g0)))).collect();
    split(results)
}

fn split<T>(results: Vec<(f64, f64, Result<T, Error>)>) -> (Vec<(f64, f64, T)>, Vec<PointFailure>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (eta, g0, r) in results {
        match r {
            Ok(v) => ok.push((eta, g0, v)),
            Err(e) => bad.push(failure(eta, g0, &e)),
        }
    }
    (ok, bad)
}

fn sector_code(s: SectorLabel) -> String {
    let c = |x: i8| if x > 0 { '+' } else { '-' };
    format!("{}{}", c(s.s1()), c(s.s2()))
}

/// Mode-averaged `g2`, when defined for all three modes.
fn mean_g2(g: &[Option<f64>; 3]) -> Option<f64> {
    let mut s = 0.0;
    for x in g {
        s += (*x)?;
    }
    Some(s / 3.0)
}

#[derive(Debug, Clone, Serialize)]
struct SpectralSettings {
    #[serde(flatten)]
    grid: GridSettings,
    cutoff_start: usize,
    auto_start: bool,
    cutoff_max: usize,
    levels: usize,
    overlap_tol: f64,
    eig_tol: f64,
}

fn spectral_settings(o: &Overrides) -> Result<(SpectralSettings, SpectralOptions), ConfigError> {
    let grid = GridSettings::resolve(o, 0.0)?;
    let d = SpectralOptions::default();
    let s = SpectralSettings {
        grid,
        cutoff_start: o.cutoff_start.unwrap_or(d.c_start),
        auto_start: o.cutoff_start.is_none(),
        cutoff_max: o.cutoff_max.unwrap_or(d.c_max),
        levels: o.levels.unwrap_or(d.k),
        overlap_tol: o.overlap_tol.unwrap_or(OVERLAP_TOLERANCE),
        eig_tol: o.eig_tol.unwrap_or(EigenOptions::default().tol),
    };
    if s.cutoff_start < 2 || s.cutoff_max < s.cutoff_start {
        return Err(ConfigError::new("need 2 <= cutoff_start <= cutoff_max"));
    }
    if s.levels == 0 {
        return Err(ConfigError::new("levels must be at least 1"));
    }
    positive("overlap_tol", s.overlap_tol)?;
    positive("eig_tol", s.eig_tol)?;
    let opts = SpectralOptions {
        k: s.levels,
        c_start: s.cutoff_start,
        c_max: s.cutoff_max,
        auto_start: s.auto_start,
        overlap_tol: s.overlap_tol,
        eigen: EigenOptions { tol: s.eig_tol, ..Default::default() },
    };
    Ok((s, opts))
}

fn spectral_row(eta: f64, g0: f64, p: &SweepPoint) -> Vec<String> {
    let mut r = vec![num(g0), num(eta), num(p.lambda)];
    r.extend(p.levels.as_array().iter().map(|&e| num(e)));
    r.push(num(p.n_rescaled()));
    r.push(opt_num(mean_g2(&p.observables.g2_zero)));
    r.push(num(p.observables.coskewness));
    for i in 0..schema::SECTOR_COLUMNS {
        r.push(p.merged.get(i).map(|m| sector_code(m.sector)).unwrap_or_default());
    }
    r.push(p.cutoff.to_string());
    r.push(num(p.worst_deficit));
    r
}

/// Converged spectra and ground-state observables on the grid.
pub fn sweep(o: &Overrides) -> Result<Outcome, ConfigError> {
    let (s, opts) = spectral_settings(o)?;
    let (ok, failures) =
        over_grid(&s.grid, |p| converged_spectrum(&p, &opts).and_then(|r| SweepPoint::from_result(&r)));
    let rows = ok.iter().map(|(eta, g0, p)| spectral_row(*eta, *g0, p)).collect();
    Ok(Outcome {
        tables: vec![TableOut { path: o.out.clone(), kind: Kind::Spectral, columns: schema::spectral_columns(), rows }],
        text: None,
        json: None,
        settings: json!(s),
        failures,
    })
}

/// Low-lying merged levels at each grid point, one row per level.
pub fn spectrum(o: &Overrides) -> Result<Outcome, ConfigError> {
    let (s, opts) = spectral_settings(o)?;
    let (ok, failures) = over_grid(&s.grid, |p| converged_spectrum(&p, &opts).and_then(|r| SweepPoint::from_result(&r)));
    let mut rows = Vec::new();
    for (eta, g0, p) in &ok {
        let e0 = p.merged.first().map(|m| m.energy).unwrap_or(f64::NAN);
        for (rank, m) in p.merged.iter().take(s.levels).enumerate() {
            rows.push(vec![
                num(*g0),
                num(*eta),
                num(p.lambda),
                rank.to_string(),
                sector_code(m.sector),
                m.local.to_string(),
                num(m.energy),
                num(m.energy - e0),
                p.cutoff.to_string(),
            ]);
        }
    }
    let columns = ["g0", "eta", "lambda", "rank", "sector", "local", "energy", "gap", "cutoff"].map(String::from).to_vec();
    Ok(Outcome {
        tables: vec![TableOut { path: o.out.clone(), kind: Kind::Spectrum, columns, rows }],
        text: None,
        json: None,
        settings: json!(s),
        failures,
    })
}

/// Phase regime and mean-field ground-state predictions.
pub fn meanfield(o: &Overrides) -> Result<Outcome, ConfigError> {
    let grid = GridSettings::resolve(o, 0.0)?;
    let (ok, failures) = over_grid(&grid, |p| Ok((classify_phase(&p)?, meanfield_observables(&p)?)));
    let rows = ok
        .iter()
        .map(|(eta, g0, (rep, pred))| {
            vec![
                num(*g0),
                num(*eta),
                num(rep.lambda),
                rep.regime.as_str().to_string(),
                num(rep.stability_window),
                num(rep.lambda_max),
                opt_num(rep.e_plus),
                opt_num(rep.e_minus),
                num(pred.n_rescaled),
                num(pred.coskewness),
                opt_num(pred.xbar),
            ]
        })
        .collect();
    let columns = [
        "g0",
        "eta",
        "lambda",
        "regime",
        "stability_window",
        "lambda_max",
        "e_plus",
        "e_minus",
        "n_rescaled",
        "coskewness",
        "xbar",
    ]
    .map(String::from)
    .to_vec();
    Ok(Outcome {
        tables: vec![TableOut { path: o.out.clone(), kind: Kind::Meanfield, columns, rows }],
        text: None,
        json: None,
        settings: json!(grid),
        failures,
    })
}

/// Gaussian fluctuations around the displaced branch; requires `lambda >= 1`.
pub fn bogoliubov(o: &Overrides) -> Result<Outcome, ConfigError> {
    let grid = GridSettings::resolve(o, 0.0)?;
    let (ok, failures) = over_grid(&grid, |p| fluctuation_table(p.lambda(), &p));
    let rows = ok
        .iter()
        .map(|(eta, g0, r)| {
            let mut row = vec![num(*g0), num(*eta), num(r.lambda), num(r.lambda_tilde), num(r.omega_tilde)];
            row.push(r.stable.to_string());
            match &r.polariton {
                Some(m) => row.extend([m.u2, m.y2, m.z2, m.pu2, m.py2, m.pz2].map(num)),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            match &r.local {
                Some(m) => row.extend([m.x2, m.xx, m.p2, m.pp, m.xxx, m.ppp].map(num)),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            row
        })
        .collect();
    let columns = [
        "g0",
        "eta",
        "lambda",
        "lambda_tilde",
        "omega_tilde",
        "stable",
        "u2",
        "y2",
        "z2",
        "pu2",
        "py2",
        "pz2",
        "x2",
        "xx",
        "p2",
        "pp",
        "xxx",
        "ppp",
    ]
    .map(String::from)
    .to_vec();
    Ok(Outcome {
        tables: vec![TableOut { path: o.out.clone(), kind: Kind::Bogoliubov, columns, rows }],
        text: None,
        json: None,
        settings: json!(grid),
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
struct TrajectorySettings {
    #[serde(flatten)]
    grid: GridSettings,
    cutoff: usize,
    ntraj: usize,
    tmax: f64,
    dt: f64,
    sample_dt: f64,
    seed: u64,
    window: f64,
    checkpoint: Option<PathBuf>,
}

fn trajectory_row(eta: f64, g0: f64, s: &TrajectorySettings, st: &EnsembleStats) -> Vec<String> {
    let lambda = s.grid.params(eta, g0).lambda();
    let mut r = vec![num(g0), num(eta), num(lambda)];
    r.extend(std::iter::repeat_n(num(f64::NAN), 5));
    r.push(num(st.n_rescaled.mean));
    r.push(num(st.g2.mean));
    r.push(num(st.coskewness.mean));
    r.extend(std::iter::repeat_n(String::new(), schema::SECTOR_COLUMNS));
    r.push(num(st.n_rescaled.stderr));
    r.push(num(st.coskewness.stderr));
    r.push(st.converged.to_string());
    r.push(num(st.g2.stderr));
    r.push(num(st.drift));
    r.push(num(s.grid.kappa));
    r.push(s.cutoff.to_string());
    r.push(st.n_traj.to_string());
    r
}

/// Quantum-jump ensembles at a fixed cutoff. Grid points run one after another;
/// trajectories within a point run in parallel.
pub fn trajectories(o: &Overrides, progress: bool) -> Result<Outcome, ConfigError> {
    let grid = GridSettings::resolve(o, 1.0)?;
    let d = TrajectoryOptions::default();
    let s = TrajectorySettings {
        cutoff: o.cutoff_start.unwrap_or(6),
        ntraj: o.ntraj.unwrap_or(EnsembleOptions::default().n_traj),
        tmax: o.tmax.unwrap_or(60.0),
        dt: o.dt.unwrap_or(d.dt),
        sample_dt: o.sample_dt.unwrap_or(d.sample_dt),
        seed: o.seed.unwrap_or(0),
        window: o.window.unwrap_or(EnsembleOptions::default().window_fraction),
        checkpoint: o.checkpoint.clone(),
        grid,
    };
    if s.grid.kappa <= 0.0 {
        return Err(ConfigError::new("trajectories need kappa > 0"));
    }
    if s.cutoff < 1 {
        return Err(ConfigError::new("cutoff must be at least 1"));
    }
    if s.ntraj < 2 {
        return Err(ConfigError::new("ntraj must be at least 2"));
    }
    positive("tmax", s.tmax)?;
    positive("dt", s.dt)?;
    positive("sample_dt", s.sample_dt)?;
    if !(s.window > 0.0 && s.window <= 1.0) {
        return Err(ConfigError::new("window must lie in (0, 1]"));
    }
    let points = s.grid.points();
    if s.checkpoint.is_some() && points.len() != 1 {
        return Err(ConfigError::new("checkpoint needs a single grid point"));
    }
    let opts = EnsembleOptions {
        n_traj: s.ntraj,
        master_seed: s.seed,
        traj: TrajectoryOptions { t_max: s.tmax, dt: s.dt, sample_dt: s.sample_dt, ..d },
        window_fraction: s.window,
        ..Default::default()
    };
    let mut results = Vec::new();
    for &(eta, g0) in &points {
        let p = s.grid.params(eta, g0);
        let report = |done: usize, total: usize| {
            if progress {
                eprintln!("eta {eta} g0 {g0}: {done}/{total}");
            }
        };
        let r = OpenSystem::new(&p, s.cutoff).and_then(|sys| ensemble_run_with(&sys, &opts, s.checkpoint.clone(), &report));
        results.push((eta, g0, r));
    }
    let (ok, failures) = split(results);
    let rows = ok.iter().map(|(eta, g0, st)| trajectory_row(*eta, *g0, &s, st)).collect();
    let mut tables =
        vec![TableOut { path: o.out.clone(), kind: Kind::Trajectories, columns: schema::trajectory_columns(), rows }];
    if let Some(path) = &o.series {
        let mut rows = Vec::new();
        for (eta, g0, st) in &ok {
            let ts = &st.series;
            for i in 0..ts.times.len() {
                rows.push(vec![
                    num(*g0),
                    num(*eta),
                    num(ts.times[i]),
                    num(ts.n_mean[i]),
                    num(ts.n_stderr[i]),
                    num(ts.coskewness[i]),
                ]);
            }
        }
        let columns = ["g0", "eta", "t", "n_mean", "n_stderr", "coskewness"].map(String::from).to_vec();
        tables.push(TableOut { path: Some(path.clone()), kind: Kind::Timeseries, columns, rows });
    }
    Ok(Outcome { tables, text: None, json: None, settings: json!(s), failures })
}

#[derive(Debug, Clone, Serialize)]
struct PlanSettings {
    mode_a: Vec<f64>,
    mode_b: Vec<f64>,
    mode_c: Vec<f64>,
    omega_ghz: f64,
    u_ghz: f64,
    beta_d: Option<f64>,
    chi3: Option<f64>,
    reference: String,
    threshold: f64,
}

/// Drive tones and the spurious-resonance check. Frequencies are cyclic GHz;
/// the effective Kerr strength is `u0 / eta` (u0 defaults to omega).
pub fn freqplan(o: &Overrides) -> Result<Outcome, ConfigError> {
    let list = |name: &str, l: &Option<crate::config::FloatList>| {
        l.clone().map(|l| l.0).filter(|v| !v.is_empty()).ok_or_else(|| ConfigError::new(format!("{name} is required")))
    };
    let omega = positive("omega", o.omega.ok_or_else(|| ConfigError::new("omega (GHz) is required"))?)?;
    let eta = match &o.eta {
        None => 1.0,
        Some(l) if l.0.len() == 1 => positive("eta", l.0[0])?,
        Some(_) => return Err(ConfigError::new("freqplan takes a single eta")),
    };
    let s = PlanSettings {
        mode_a: list("mode_a", &o.mode_a)?,
        mode_b: list("mode_b", &o.mode_b)?,
        mode_c: list("mode_c", &o.mode_c)?,
        omega_ghz: omega,
        u_ghz: positive("u0", o.u0.unwrap_or(omega))? / eta,
        beta_d: o.beta_d,
        chi3: o.chi3.map(|c| c * TAU),
        reference: o.reference.clone().unwrap_or_else(|| "carrier".into()),
        threshold: positive("threshold", o.threshold.unwrap_or(DEFAULT_THRESHOLD))?,
    };
    let reference = match s.reference.as_str() {
        "carrier" => DetuningReference::Carrier,
        "drive" => DetuningReference::Drive,
        other => return Err(ConfigError::new(format!("reference must be carrier or drive, got '{other}'"))),
    };
    let ghz = |v: &[f64]| v.iter().map(|x| TAU * x).collect::<Vec<_>>();
    let built = ResonatorTable::new(ghz(&s.mode_a), ghz(&s.mode_b), ghz(&s.mode_c)).and_then(|table| {
        let opts = PlanOptions {
            beta_d: s.beta_d,
            chi3: s.chi3,
            reference,
            threshold: s.threshold,
            ..PlanOptions::new(TAU * s.omega_ghz, TAU * s.u_ghz)
        };
        DrivePlan::build(&table, &opts)
    });
    let (text, json_doc, failures) = match built {
        Ok(plan) => (Some(plan.report(TAU, "GHz", 20)), Some((o.out.clone(), plan.to_json())), vec![]),
        Err(e) => (None, None, vec![failure(eta, f64::NAN, &e)]),
    };
    Ok(Outcome { tables: vec![], text, json: json_doc, settings: json!(s), failures })
}
