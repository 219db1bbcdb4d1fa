//! Physical parameters and the η scaling of the couplings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical value of the dimensionless coupling, 3/(2√2).
pub const LAMBDA_C: f64 = 1.5 * std::f64::consts::FRAC_1_SQRT_2;

/// Bare couplings of the trimer plus the loss rate.
///
/// The Hamiltonian uses `g = g0/√η` and `U = U0/η`; the combination
/// `λ = g0·√(2/(ω·U0))` does not depend on `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub u0: f64,
    pub g0: f64,
    pub eta: f64,
    pub kappa: f64,
}

/// Couplings that enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub g: f64,
    pub u: f64,
    pub lambda: f64,
}

/// Location of the first-order transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub lambda_c: f64,
    pub g0_c: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { omega: 1.0, u0: 1.0, g0: 0.0, eta: 1.0, kappa: 0.0 }
    }
}

impl ModelParams {
    /// Closed-system parameters with ω = U0 = 1.
    pub fn new(g0: f64, eta: f64) -> Self {
        ModelParams { g0, eta, ..Default::default() }
    }

    pub fn with_g0(mut self, g0: f64) -> Self {
        self.g0 = g0;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_u0(mut self, u0: f64) -> Self {
        self.u0 = u0;
        self
    }

    /// Checks positivity of ω, U0, η and non-negativity of κ.
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.omega) {
            return Err(Error::Domain(format!("omega must be positive, got {}", self.omega)));
        }
        if !ok(self.u0) {
            return Err(Error::Domain(format!("U0 must be positive, got {}", self.u0)));
        }
        if !ok(self.eta) {
            return Err(Error::Domain(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Domain(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if !self.g0.is_finite() {
            return Err(Error::Domain("g0 must be finite".into()));
        }
        Ok(())
    }

    /// Dimensionless coupling λ = g0·√(2/(ω·U0)).
    pub fn lambda(&self) -> f64 {
        self.g0 * (2.0 / (self.omega * self.u0)).sqrt()
    }

    /// g0 that realises a given λ at these ω, U0.
    pub fn g0_for_lambda(&self, lambda: f64) -> f64 {
        lambda * (self.omega * self.u0 / 2.0).sqrt()
    }
}

/// g = g0/√η, U = U0/η and λ.
pub fn derive_couplings(p: &ModelParams) -> Result<Couplings> {
    p.validate()?;
    Ok(Couplings { g: p.g0 / p.eta.sqrt(), u: p.u0 / p.eta, lambda: p.lambda() })
}

/// λc = 3/(2√2) and the matching g0.
pub fn critical_coupling(p: &ModelParams) -> Result<CriticalPoint> {
    p.validate()?;
    Ok(CriticalPoint { lambda_c: LAMBDA_C, g0_c: p.g0_for_lambda(LAMBDA_C) })
}
