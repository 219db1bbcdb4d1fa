//! Gaussian fluctuations around the displaced mean-field point.
//!
//! Expanding every mode as `a → X̄ + μ` about the `(+++)` point and keeping
//! quadratic terms gives a form in the quadratures `x = μ + μ†`,
//! `p = -i(μ - μ†)`. The closed-form table below diagonalizes it with a fixed
//! orthogonal polariton basis `(u, y, z)`; [`symplectic_oracle`] re-derives
//! the ground-state covariance numerically from the same expansion.

use nalgebra::{DMatrix, Matrix3, Matrix6, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{amplitude_scale, f_plus, stability_width, SignPattern};
use crate::model::{derive_couplings, ModelParams};

/// Orthogonal polariton matrix; columns are the `u`, `y`, `z` directions.
pub fn polariton_matrix() -> Matrix3<f64> {
    let s3 = 3f64.sqrt();
    let m = Matrix3::new(
        1.0,
        1.0,
        1.0,
        -(1.0 + s3) / 2.0,
        1.0,
        (s3 - 1.0) / 2.0,
        (s3 - 1.0) / 2.0,
        1.0,
        -(1.0 + s3) / 2.0,
    );
    m / s3
}

/// `(λ̃, ω̃)` at the `X+` branch.
pub fn renormalized_params(lambda: f64, p: &ModelParams) -> Result<(f64, f64)> {
    p.validate()?;
    if !(lambda >= 1.0) {
        return Err(Error::Domain(format!("no displaced expansion point for lambda = {lambda} < 1")));
    }
    let s = (lambda * lambda - 1.0).sqrt();
    let one_minus = s * (lambda + s) / (3.0 * lambda * s + 3.0 * lambda * lambda - 1.0);
    let f = f_plus(lambda);
    Ok((1.0 - one_minus, p.omega * ((1.0 + f * f) * (1.0 + 3.0 * f * f)).sqrt()))
}

/// Second moments of the polariton quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolaritonMoments {
    pub u2: f64,
    pub y2: f64,
    pub z2: f64,
    pub pu2: f64,
    pub py2: f64,
    pub pz2: f64,
}

/// Second moments of the local fluctuation quadratures (equal for every mode or pair).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMoments {
    pub x2: f64,
    pub xx: f64,
    pub p2: f64,
    pub pp: f64,
    pub xxx: f64,
    pub ppp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovReport {
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub omega_tilde: f64,
    /// The `y` polariton is stable iff `λ̃ < 1`.
    pub stable: bool,
    pub polariton: Option<PolaritonMoments>,
    pub local: Option<LocalMoments>,
}

/// Closed-form fluctuation table.
pub fn fluctuation_table(lambda: f64, p: &ModelParams) -> Result<BogoliubovReport> {
    let (lt, wt) = renormalized_params(lambda, p)?;
    let stable = lt < 1.0;
    let mut rep =
        BogoliubovReport { lambda, lambda_tilde: lt, omega_tilde: wt, stable, polariton: None, local: None };
    if !stable {
        return Ok(rep);
    }
    let f = f_plus(lambda);
    let r = ((1.0 + f * f) / (1.0 + 3.0 * f * f)).sqrt();
    let pol = PolaritonMoments {
        u2: 1.0 / (1.0 + lt / 2.0).sqrt(),
        z2: 1.0 / (1.0 + lt / 2.0).sqrt(),
        y2: 1.0 / (1.0 - lt).sqrt(),
        pu2: (1.0 + lt / 2.0).sqrt(),
        pz2: (1.0 + lt / 2.0).sqrt(),
        py2: (1.0 - lt).sqrt(),
    };
    rep.polariton = Some(pol);
    rep.local = Some(LocalMoments {
        x2: r / 3.0 * (2.0 * pol.z2 + pol.y2),
        xx: r / 3.0 * (pol.y2 - pol.z2),
        p2: 1.0 / (3.0 * r) * (2.0 * pol.pz2 + pol.py2),
        pp: 1.0 / (3.0 * r) * (pol.py2 - pol.pz2),
        xxx: 0.0,
        ppp: 0.0,
    });
    Ok(rep)
}

/// Ground state of the quadratic form, obtained by symplectic diagonalization.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Stable {
        /// Symmetrized covariance of `(x_a, x_b, x_c, p_a, p_b, p_c)`; the vacuum gives the identity.
        covariance: Matrix6<f64>,
        /// Normal-mode frequencies, ascending.
        frequencies: [f64; 3],
    },
    /// The quadratic form is not positive definite.
    Unstable { min_eigenvalue: f64 },
}

impl OracleOutcome {
    pub fn covariance(&self) -> Option<&Matrix6<f64>> {
        match self {
            OracleOutcome::Stable { covariance, .. } => Some(covariance),
            OracleOutcome::Unstable { .. } => None,
        }
    }

    /// Polariton moments `(⟨u²⟩, ⟨y²⟩, ⟨z²⟩, ⟨p_u²⟩, ⟨p_y²⟩, ⟨p_z²⟩)` in the
    /// normalization of the closed-form table, for the `(+++)` expansion and branch `f`.
    pub fn polariton_moments(&self, f: f64) -> Option<PolaritonMoments> {
        let v = self.covariance()?;
        let r = ((1.0 + f * f) / (1.0 + 3.0 * f * f)).sqrt();
        let rm = polariton_matrix();
        let vx: Matrix3<f64> = v.fixed_view::<3, 3>(0, 0).into_owned();
        let vp: Matrix3<f64> = v.fixed_view::<3, 3>(3, 3).into_owned();
        let qx = rm.transpose() * vx * rm / r;
        let qp = rm.transpose() * vp * rm * r;
        Some(PolaritonMoments {
            u2: qx[(0, 0)],
            y2: qx[(1, 1)],
            z2: qx[(2, 2)],
            pu2: qp[(0, 0)],
            py2: qp[(1, 1)],
            pz2: qp[(2, 2)],
        })
    }
}

/// `M` in `H2 = ½ rᵀ M r` for the expansion about amplitudes `amps`.
///
/// Per mode: `ω/4 (x² + p²) + U X² (3x² + p²)/2`; per pair: `2g X_k x_i x_j`.
pub fn quadratic_form(p: &ModelParams, amps: [f64; 3]) -> Result<Matrix6<f64>> {
    let c = derive_couplings(p)?;
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        let x2 = amps[i] * amps[i];
        m[(i, i)] = 2.0 * (p.omega / 4.0 + 1.5 * c.u * x2);
        m[(i + 3, i + 3)] = 2.0 * (p.omega / 4.0 + 0.5 * c.u * x2);
        for j in 0..3 {
            if i != j {
                m[(i, j)] = 2.0 * c.g * amps[3 - i - j];
            }
        }
    }
    Ok(m)
}

fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Ground-state covariance of `½ rᵀ M r` with `[x_i, p_j] = 2i δ_ij`.
pub fn gaussian_ground_state(m: &Matrix6<f64>) -> OracleOutcome {
    let md = DMatrix::from_iterator(6, 6, m.iter().copied());
    let md = (&md + md.transpose()) * 0.5;
    let ev = SymmetricEigen::new(md.clone()).eigenvalues;
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return OracleOutcome::Unstable { min_eigenvalue: min };
    }
    let mut omega = DMatrix::zeros(6, 6);
    for i in 0..3 {
        omega[(i, i + 3)] = 1.0;
        omega[(i + 3, i)] = -1.0;
    }
    let sq = sym_fn(&md, f64::sqrt);
    let isq = sym_fn(&md, |x| 1.0 / x.sqrt());
    let k = &sq * omega * &sq;
    let ktk = k.transpose() * &k;
    let ktk = (&ktk + ktk.transpose()) * 0.5;
    let abs_k = sym_fn(&ktk, |x| x.max(0.0).sqrt());
    let v = &isq * &abs_k * &isq;
    let mut nu: Vec<f64> = SymmetricEigen::new(abs_k).eigenvalues.iter().map(|x| 2.0 * x).collect();
    nu.sort_by(f64::total_cmp);
    let covariance = Matrix6::from_fn(|i, j| 0.5 * (v[(i, j)] + v[(j, i)]));
    OracleOutcome::Stable { covariance, frequencies: [nu[0], nu[2], nu[4]] }
}

/// Oracle at the `X+` point of `λ` for a given sign pattern.
pub fn symplectic_oracle_pattern(lambda: f64, p: &ModelParams, signs: SignPattern) -> Result<OracleOutcome> {
    if !(lambda >= 1.0) {
        return Err(Error::Domain(format!("no displaced expansion point for lambda = {lambda} < 1")));
    }
    symplectic_oracle_branch(f_plus(lambda), p, signs)
}

/// Oracle at the `(+++)` `X+` point of `λ`. Uses the `g0` implied by `λ` and `p.omega`, `p.u0`, `p.eta`.
pub fn symplectic_oracle(lambda: f64, p: &ModelParams) -> Result<OracleOutcome> {
    symplectic_oracle_pattern(lambda, p, SignPattern::ALL[0])
}

/// Oracle at the stationary point with branch value `f`, which belongs to
/// `λ(f) = (1 + f²)/(2f)`; `f > 1` is the `X+` branch, `f < 1` the `X-` branch.
pub fn symplectic_oracle_branch(f: f64, p: &ModelParams, signs: SignPattern) -> Result<OracleOutcome> {
    let lambda = (1.0 + f * f) / (2.0 * f);
    let q = p.with_g0(p.g0_for_lambda(lambda));
    let amps = signs.apply(-amplitude_scale(&q) * f);
    Ok(gaussian_ground_state(&quadratic_form(&q, amps)?))
}

/// Renormalized coupling along the branch parameter `f`, `λ̃ = 4λf/(1 + 3f²)`.
pub fn lambda_tilde_of_branch(f: f64) -> f64 {
    let lambda = (1.0 + f * f) / (2.0 * f);
    4.0 * lambda * f / (1.0 + 3.0 * f * f)
}

/// Fluctuation-dominated window `(1, 1 + l]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityWindow {
    pub l: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn stability_window(p: &ModelParams) -> Result<StabilityWindow> {
    p.validate()?;
    let l = stability_width(p);
    Ok(StabilityWindow { l, lower: 1.0, upper: 1.0 + l })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polariton_matrix_is_orthogonal() {
        let r = polariton_matrix();
        assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-15);
        // The y column is the symmetric mode.
        assert!((r.column(1) - nalgebra::Vector3::repeat(1.0 / 3f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn threshold_values() {
        let p = ModelParams::default();
        let (lt, wt) = renormalized_params(1.0, &p).unwrap();
        assert_eq!(lt, 1.0);
        assert!((wt - 8f64.sqrt()).abs() < 1e-15);
        assert!(!fluctuation_table(1.0, &p).unwrap().stable);
        assert!(renormalized_params(0.9, &p).is_err());
        let (lt, _) = renormalized_params(100.0, &p).unwrap();
        assert!(((1.0 - lt) - 1.0 / 3.0).abs() < 0.01 / 3.0);
    }

    #[test]
    fn closed_forms_agree() {
        for lambda in [1.01, 1.3, 2.0, 7.0] {
            let f = f_plus(lambda);
            let (lt, _) = renormalized_params(lambda, &ModelParams::default()).unwrap();
            assert!((lt - 4.0 * lambda * f / (1.0 + 3.0 * f * f)).abs() < 1e-12);
        }
    }

    #[test]
    fn uncertainty_products() {
        let rep = fluctuation_table(1.5, &ModelParams::default()).unwrap();
        let pol = rep.polariton.unwrap();
        assert!((pol.y2 * pol.py2 - 1.0).abs() < 1e-14);
        assert!(pol.u2 * pol.pu2 >= 1.0 - 1e-14);
    }

    #[test]
    fn decoupled_oracle_is_vacuum() {
        let p = ModelParams::default();
        let out = gaussian_ground_state(&quadratic_form(&p, [0.0; 3]).unwrap());
        let v = out.covariance().unwrap();
        assert!((v - Matrix6::identity()).abs().max() < 1e-13);
    }

    #[test]
    fn windows() {
        assert!((stability_window(&ModelParams::default()).unwrap().l - 1.0).abs() < 1e-15);
        let w = stability_window(&ModelParams::new(0.0, 10.0)).unwrap();
        assert!((w.l - 10f64.powf(-0.8)).abs() < 1e-15);
    }
}
