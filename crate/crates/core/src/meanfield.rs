//! Semiclassical analysis with real coherent amplitudes.
//!
//! Replacing each mode by a real amplitude gives the potential
//! `V(α,β,γ) = ω Σα² + 8g αβγ + U Σα⁴`. For `λ > 1` it has nine stationary
//! points: the vacuum plus two branches `|α| = √(ωη/2U0) f±(λ)` with
//! `f± = λ ± √(λ²-1)`, each in four sign patterns.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{derive_couplings, ModelParams, LAMBDA_C};

pub fn f_plus(lambda: f64) -> f64 {
    lambda + (lambda * lambda - 1.0).max(0.0).sqrt()
}

pub fn f_minus(lambda: f64) -> f64 {
    lambda - (lambda * lambda - 1.0).max(0.0).sqrt()
}

/// `√(ωη/2U0)`, the amplitude scale of the displaced branches.
pub fn amplitude_scale(p: &ModelParams) -> f64 {
    (p.omega * p.eta / (2.0 * p.u0)).sqrt()
}

/// Energy of a displaced branch in units of `3ω²η/4U0`.
pub fn reduced_energy(lambda: f64, f: f64) -> f64 {
    f * f * (2.0 - 8.0 / 3.0 * lambda * f + f * f)
}

/// `(E+, E-)` for `λ ≥ 1`.
pub fn branch_energies(p: &ModelParams, lambda: f64) -> (f64, f64) {
    let scale = 3.0 * p.omega * p.omega * p.eta / (4.0 * p.u0);
    (scale * reduced_energy(lambda, f_plus(lambda)), scale * reduced_energy(lambda, f_minus(lambda)))
}

/// Root of `E+(λ)` in `(1, 10]` by bisection.
pub fn critical_lambda_root() -> f64 {
    let e = |l: f64| reduced_energy(l, f_plus(l));
    let (mut lo, mut hi) = (1.0, 10.0);
    while hi - lo > 4.0 * f64::EPSILON {
        let mid = 0.5 * (lo + hi);
        if e(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `V(α, β, γ)`.
pub fn potential(p: &ModelParams, a: [f64; 3]) -> Result<f64> {
    let c = derive_couplings(p)?;
    Ok(a.iter().map(|x| p.omega * x * x + c.u * x.powi(4)).sum::<f64>() + 8.0 * c.g * a[0] * a[1] * a[2])
}

pub fn gradient(p: &ModelParams, a: [f64; 3]) -> Result<[f64; 3]> {
    let c = derive_couplings(p)?;
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        out[i] = 2.0 * p.omega * a[i] + 4.0 * c.u * a[i].powi(3) + 8.0 * c.g * a[j] * a[k];
    }
    Ok(out)
}

pub fn hessian(p: &ModelParams, a: [f64; 3]) -> Result<Matrix3<f64>> {
    let c = derive_couplings(p)?;
    Ok(Matrix3::from_fn(|i, j| {
        if i == j {
            2.0 * p.omega + 12.0 * c.u * a[i] * a[i]
        } else {
            8.0 * c.g * a[3 - i - j]
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Vacuum,
    XPlus,
    XMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nature {
    Minimum,
    Maximum,
    Saddle,
}

/// Signs multiplying the common amplitude `X̄ < 0` of a displaced point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignPattern(pub [i8; 3]);

impl SignPattern {
    pub const ALL: [SignPattern; 4] =
        [SignPattern([1, 1, 1]), SignPattern([1, -1, -1]), SignPattern([-1, 1, -1]), SignPattern([-1, -1, 1])];

    pub fn apply(&self, x: f64) -> [f64; 3] {
        self.0.map(|s| s as f64 * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub amplitudes: [f64; 3],
    pub branch: Branch,
    pub signs: Option<SignPattern>,
    pub energy: f64,
    pub nature: Nature,
}

fn nature(h: Matrix3<f64>) -> Nature {
    let ev = SymmetricEigen::new(h).eigenvalues;
    if ev.iter().all(|&e| e > 0.0) {
        Nature::Minimum
    } else if ev.iter().all(|&e| e < 0.0) {
        Nature::Maximum
    } else {
        Nature::Saddle
    }
}

/// The vacuum, plus the eight displaced points when `λ > 1`.
pub fn stationary_points(p: &ModelParams) -> Result<Vec<StationaryPoint>> {
    let lambda = derive_couplings(p)?.lambda;
    let vac = [0.0; 3];
    let mut out = vec![StationaryPoint {
        amplitudes: vac,
        branch: Branch::Vacuum,
        signs: None,
        energy: 0.0,
        nature: nature(hessian(p, vac)?),
    }];
    if lambda > 1.0 {
        let (ep, em) = branch_energies(p, lambda);
        let s = amplitude_scale(p);
        for (branch, f, e) in [(Branch::XPlus, f_plus(lambda), ep), (Branch::XMinus, f_minus(lambda), em)] {
            for sp in SignPattern::ALL {
                let a = sp.apply(-s * f);
                out.push(StationaryPoint { amplitudes: a, branch, signs: Some(sp), energy: e, nature: nature(hessian(p, a)?) });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NormalOnly,
    SuperradiantUnstable,
    SuperradiantMetastable,
    SuperradiantGround,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::NormalOnly => "normal_only",
            Regime::SuperradiantUnstable => "superradiant_unstable",
            Regime::SuperradiantMetastable => "superradiant_metastable",
            Regime::SuperradiantGround => "superradiant_ground",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub lambda: f64,
    pub regime: Regime,
    /// Width `l = (U0/ηω)^(4/5)` of the fluctuation-dominated window above `λ = 1`.
    pub stability_window: f64,
    /// Order-of-magnitude coupling at which the vacuum itself stops being reliable.
    pub lambda_max: f64,
    pub e_plus: Option<f64>,
    pub e_minus: Option<f64>,
}

/// `(U0/ηω)^(4/5)`.
pub fn stability_width(p: &ModelParams) -> f64 {
    (p.u0 / (p.eta * p.omega)).powf(0.8)
}

/// Regime of `λ`. The ground-state boundary takes precedence over the
/// fluctuation window, which can extend past `λc` at small `η`.
pub fn classify_phase(p: &ModelParams) -> Result<PhaseReport> {
    let lambda = derive_couplings(p)?.lambda;
    let l = stability_width(p);
    let regime = if lambda <= 1.0 {
        Regime::NormalOnly
    } else if lambda >= LAMBDA_C - 1e-12 {
        Regime::SuperradiantGround
    } else if lambda <= 1.0 + l {
        Regime::SuperradiantUnstable
    } else {
        Regime::SuperradiantMetastable
    };
    let (e_plus, e_minus) = if lambda >= 1.0 {
        let (a, b) = branch_energies(p, lambda);
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    Ok(PhaseReport {
        lambda,
        regime,
        stability_window: l,
        lambda_max: (p.omega * p.eta / p.u0).sqrt(),
        e_plus,
        e_minus,
    })
}

/// Coskewness of the equal-weight superposition of the four degenerate
/// coherent states with amplitudes `X̄·(±1, ±1, ±1)` (even number of minus signs).
pub fn superposition_coskewness(xbar: f64) -> f64 {
    let x2 = xbar * xbar;
    8.0 * xbar.powi(3) / (4.0 * x2 + 1.0 + (4.0 * x2 + 3.0) * (-4.0 * x2).exp()).powf(1.5)
}

/// The common amplitude `X̄ = -√(ωη/2U0) f+(λ)` of the ground pattern.
pub fn xbar(p: &ModelParams) -> f64 {
    -amplitude_scale(p) * f_plus(p.lambda())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPrediction {
    pub regime: Regime,
    pub n_rescaled: f64,
    pub coskewness: f64,
    pub xbar: Option<f64>,
}

/// Ground-state predictions: vacuum values unless the displaced branch is the ground state.
pub fn meanfield_observables(p: &ModelParams) -> Result<MeanFieldPrediction> {
    let rep = classify_phase(p)?;
    if rep.regime != Regime::SuperradiantGround {
        return Ok(MeanFieldPrediction { regime: rep.regime, n_rescaled: 0.0, coskewness: 0.0, xbar: None });
    }
    let x = xbar(p);
    Ok(MeanFieldPrediction {
        regime: rep.regime,
        n_rescaled: p.omega / (2.0 * p.u0) * f_plus(rep.lambda).powi(2),
        coskewness: superposition_coskewness(x),
        xbar: Some(x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_lambda(lambda: f64, eta: f64) -> ModelParams {
        let p = ModelParams::new(0.0, eta);
        p.with_g0(p.g0_for_lambda(lambda))
    }

    #[test]
    fn vacuum_only_below_one() {
        let pts = stationary_points(&at_lambda(0.5, 3.0)).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].energy, 0.0);
        assert_eq!(pts[0].nature, Nature::Minimum);
    }

    #[test]
    fn nine_points_above_one() {
        let p = at_lambda(1.3, 4.0);
        let pts = stationary_points(&p).unwrap();
        assert_eq!(pts.len(), 9);
        for s in &pts {
            let v = potential(&p, s.amplitudes).unwrap();
            assert!((v - s.energy).abs() < 1e-10 * v.abs().max(1.0), "{v} vs {}", s.energy);
            let g = gradient(&p, s.amplitudes).unwrap();
            assert!(g.iter().all(|x| x.abs() < 1e-9));
        }
    }

    #[test]
    fn degenerate_branches_at_one() {
        assert_eq!(f_plus(1.0), 1.0);
        assert_eq!(f_minus(1.0), 1.0);
    }

    #[test]
    fn critical_point_energy() {
        let (ep, _) = branch_energies(&ModelParams::default(), LAMBDA_C);
        assert!(ep.abs() < 1e-12);
        assert!((critical_lambda_root() - LAMBDA_C).abs() < 1e-12);
        assert!((f_plus(LAMBDA_C) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn regimes() {
        let p = ModelParams::new(0.5, 10.0);
        assert_eq!(classify_phase(&p).unwrap().regime, Regime::NormalOnly);
        let p = ModelParams::new(0.75, 10.0);
        assert_eq!(classify_phase(&p).unwrap().regime, Regime::SuperradiantGround);
        let rep = classify_phase(&at_lambda(1.05, 10.0)).unwrap();
        assert!((rep.stability_window - 0.1f64.powf(0.8)).abs() < 1e-15);
        assert_eq!(rep.regime, Regime::SuperradiantUnstable);
        assert_eq!(classify_phase(&at_lambda(1.03, 1000.0)).unwrap().regime, Regime::SuperradiantMetastable);
    }

    #[test]
    fn superposition_limits() {
        assert_eq!(superposition_coskewness(0.0), 0.0);
        assert!((superposition_coskewness(-1e4) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn prediction_at_threshold() {
        let m = meanfield_observables(&ModelParams::new(0.75, 10.0)).unwrap();
        assert!((m.n_rescaled - 1.0).abs() < 1e-12);
        let m0 = meanfield_observables(&ModelParams::new(0.0, 10.0)).unwrap();
        assert_eq!((m0.n_rescaled, m0.coskewness), (0.0, 0.0));
    }
}
