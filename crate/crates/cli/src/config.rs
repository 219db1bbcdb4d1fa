//! Run configuration: a flat TOML file overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Deserializer, Serialize};

/// Comma-separated list of floats. In a config file it may also be a number or an array.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number '{}': {e}", t.trim())))
            .collect::<Result<Vec<_>, _>>()
            .map(FloatList)
    }
}

impl fmt::Display for FloatList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl<'de> Deserialize<'de> for FloatList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(f64),
            Int(i64),
            Many(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::One(x) => Ok(FloatList(vec![x])),
            Raw::Int(x) => Ok(FloatList(vec![x as f64])),
            Raw::Many(v) => Ok(FloatList(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Every tunable of every subcommand. Unset fields fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Bare mode frequency (GHz for freqplan, the energy unit otherwise)
    #[arg(long)]
    pub omega: Option<f64>,
    /// Bare Kerr strength before the 1/eta scaling
    #[arg(long)]
    pub u0: Option<f64>,
    /// Single coupling; shorthand for g0-min = g0-max and one step
    #[arg(long)]
    pub g0: Option<f64>,
    #[arg(long)]
    pub g0_min: Option<f64>,
    #[arg(long)]
    pub g0_max: Option<f64>,
    #[arg(long)]
    pub g0_steps: Option<usize>,
    /// Comma-separated list of eta values
    #[arg(long)]
    pub eta: Option<FloatList>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Starting cutoff; for trajectories the fixed cutoff
    #[arg(long)]
    pub cutoff_start: Option<usize>,
    #[arg(long)]
    pub cutoff_max: Option<usize>,
    /// Number of low-lying states whose cutoff convergence is enforced
    #[arg(long)]
    pub levels: Option<usize>,
    /// Largest accepted overlap deficit between successive cutoffs
    #[arg(long)]
    pub overlap_tol: Option<f64>,
    /// Eigenvalue residual tolerance
    #[arg(long)]
    pub eig_tol: Option<f64>,
    #[arg(long)]
    pub ntraj: Option<usize>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the run, counted from the end, used for steady-state averages
    #[arg(long)]
    pub window: Option<f64>,
    /// Main output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ensemble time series output (trajectories only)
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Checkpoint file for resumable ensembles (single grid point only)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Mode frequencies of resonator a in GHz, fundamental first
    #[arg(long)]
    pub mode_a: Option<FloatList>,
    #[arg(long)]
    pub mode_b: Option<FloatList>,
    #[arg(long)]
    pub mode_c: Option<FloatList>,
    /// Pump amplitude; with chi3 fixes g = beta_d * chi3 / 2
    #[arg(long)]
    pub beta_d: Option<f64>,
    #[arg(long)]
    pub chi3: Option<f64>,
    /// Detuning reference for the spurious scan: carrier or drive
    #[arg(long)]
    pub reference: Option<String>,
    /// Largest acceptable g/delta
    #[arg(long)]
    pub threshold: Option<f64>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Overrides { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Overrides {
    /// Field-wise `self` where set, otherwise `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        overlay!(
            self, base, omega, u0, g0, g0_min, g0_max, g0_steps, eta, kappa, cutoff_start, cutoff_max, levels,
            overlap_tol, eig_tol, ntraj, tmax, dt, sample_dt, seed, window, out, series, checkpoint, mode_a, mode_b,
            mode_c, beta_d, chi3, reference, threshold
        )
    }

    pub fn from_file(path: &Path) -> Result<Overrides, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError::new(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parameters shared by the commands that walk a `(eta, g0)` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSettings {
    pub omega: f64,
    pub u0: f64,
    pub kappa: f64,
    pub g0_min: f64,
    pub g0_max: f64,
    pub g0_steps: usize,
    pub eta: Vec<f64>,
}

impl GridSettings {
    pub fn resolve(o: &Overrides, default_kappa: f64) -> Result<Self, ConfigError> {
        let (g0_min, g0_max, g0_steps) = match o.g0 {
            Some(g) => {
                if o.g0_min.is_some() || o.g0_max.is_some() || o.g0_steps.is_some() {
                    return Err(ConfigError::new("g0 excludes g0_min, g0_max and g0_steps"));
                }
                (g, g, 1)
            }
            None => (o.g0_min.unwrap_or(0.5), o.g0_max.unwrap_or(1.0), o.g0_steps.unwrap_or(51)),
        };
        let s = GridSettings {
            omega: o.omega.unwrap_or(1.0),
            u0: o.u0.unwrap_or(1.0),
            kappa: o.kappa.unwrap_or(default_kappa),
            g0_min,
            g0_max,
            g0_steps,
            eta: o.eta.clone().map(|l| l.0).unwrap_or_else(|| vec![1.0]),
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let pos = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(format!("{name} must be positive and finite, got {x}")))
            }
        };
        pos("omega", self.omega)?;
        pos("u0", self.u0)?;
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(ConfigError::new(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if !(self.g0_min.is_finite() && self.g0_max.is_finite() && self.g0_min >= 0.0) {
            return Err(ConfigError::new("g0 range must be finite and non-negative"));
        }
        if self.g0_steps == 0 {
            return Err(ConfigError::new("g0_steps must be at least 1"));
        }
        if self.g0_max < self.g0_min || (self.g0_steps == 1 && self.g0_max != self.g0_min) {
            return Err(ConfigError::new("need g0_min <= g0_max, and g0_min = g0_max for a single step"));
        }
        if self.eta.is_empty() {
            return Err(ConfigError::new("eta list is empty"));
        }
        for &e in &self.eta {
            pos("eta", e)?;
        }
        Ok(())
    }

    /// Coupling grid, endpoints exact.
    pub fn g0_grid(&self) -> Vec<f64> {
        let n = self.g0_steps;
        if n == 1 {
            return vec![self.g0_min];
        }
        let h = (self.g0_max - self.g0_min) / (n - 1) as f64;
        (0..n).map(|i| if i + 1 == n { self.g0_max } else { self.g0_min + h * i as f64 }).collect()
    }

    /// `(eta, g0)` pairs, eta outermost.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let g = self.g0_grid();
        self.eta.iter().flat_map(|&e| g.iter().map(move |&x| (e, x))).collect()
    }

    pub fn params(&self, eta: f64, g0: f64) -> trimer::model::ModelParams {
        trimer::model::ModelParams::new(g0, eta).with_omega(self.omega).with_u0(self.u0).with_kappa(self.kappa)
    }
}

pub fn positive(name: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::new(format!("{name} must be positive and finite, got {x}")))
    }
}
