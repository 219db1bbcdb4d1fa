//! Photon numbers, g²(0), quadrature moments and the coskewness.
//!
//! Quadrature moments use the matrix elements of the untruncated operators
//! between states inside the cutoff, so `⟨x²⟩ = 2n + 1` holds even for
//! occupations at the cutoff edge.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{FockBasis, FockState, Mode, SectorBasis};
use crate::operators::apply_quadrature_powers;

/// Tolerance on `|‖ψ‖ - 1|`.
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Largest first moment accepted before computing the coskewness.
pub const FIRST_MOMENT_TOLERANCE: f64 = 1e-8;

/// Amplitude type of a state vector.
pub trait Amplitude: Copy + Send + Sync {
    /// `Re(conj(self)·other)`.
    fn re_conj_mul(self, other: Self) -> f64;
    fn norm_sqr(self) -> f64;
    fn is_zero(self) -> bool;
}

impl Amplitude for f64 {
    fn re_conj_mul(self, other: Self) -> f64 {
        self * other
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_zero(self) -> bool {
        self == 0.0
    }
}

impl Amplitude for Complex64 {
    fn re_conj_mul(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_zero(self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

/// A state vector together with the basis it is written in.
pub trait StateView: Sync {
    type Amp: Amplitude;
    fn len(&self) -> usize;
    fn state(&self, i: usize) -> FockState;
    fn amp(&self, i: usize) -> Self::Amp;
    fn find(&self, s: &FockState) -> Option<usize>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// State on the full basis.
pub struct Global<'a, A> {
    pub basis: &'a FockBasis,
    pub psi: &'a [A],
}

/// State supported on one sector, indexed by sector-local position.
pub struct Local<'a, A> {
    pub sector: SectorBasis<'a>,
    pub psi: &'a [A],
}

impl<A: Amplitude> StateView for Global<'_, A> {
    type Amp = A;
    fn len(&self) -> usize {
        self.psi.len()
    }
    fn state(&self, i: usize) -> FockState {
        self.basis.state(i)
    }
    fn amp(&self, i: usize) -> A {
        self.psi[i]
    }
    fn find(&self, s: &FockState) -> Option<usize> {
        self.basis.index(s)
    }
}

impl<A: Amplitude> StateView for Local<'_, A> {
    type Amp = A;
    fn len(&self) -> usize {
        self.psi.len()
    }
    fn state(&self, i: usize) -> FockState {
        self.sector.state(i)
    }
    fn amp(&self, i: usize) -> A {
        self.psi[i]
    }
    fn find(&self, s: &FockState) -> Option<usize> {
        self.sector.local_index(s)
    }
}

fn check_len<V: StateView>(v: &V, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Input(format!("state has {} amplitudes, basis has {expected}", v.len())));
    }
    Ok(())
}

/// `⟨ψ| x_a^ka x_b^kb x_c^kc |ψ⟩` for a view, without normalization checks.
pub fn monomial_expectation<V: StateView>(v: &V, powers: [u8; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        let ai = v.amp(i);
        if ai.is_zero() {
            continue;
        }
        for (m, c) in apply_quadrature_powers(&v.state(i), powers) {
            if let Some(j) = v.find(&m) {
                s += c * v.amp(j).re_conj_mul(ai);
            }
        }
    }
    s
}

/// Raw moments from which every reported observable follows.
///
/// Ensemble and mixed-state observables are formed from averaged moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub norm: f64,
    /// `⟨n_i⟩`.
    pub n: [f64; 3],
    /// `⟨a_i† a_i† a_i a_i⟩`.
    pub nn: [f64; 3],
    /// `⟨x_i⟩`.
    pub x: [f64; 3],
    /// `⟨x_i x_j⟩`.
    pub xx: [[f64; 3]; 3],
    /// `⟨x_a x_b x_c⟩`.
    pub xxx: f64,
}

impl Moments {
    /// Moments of a (not necessarily normalized) pure state.
    pub fn of_view<V: StateView>(v: &V) -> Moments {
        let mut m = Moments::default();
        for i in 0..v.len() {
            let p = v.amp(i).norm_sqr();
            if p == 0.0 {
                continue;
            }
            let s = v.state(i).as_array();
            m.norm += p;
            for k in 0..3 {
                let n = s[k] as f64;
                m.n[k] += p * n;
                m.nn[k] += p * n * (n - 1.0);
            }
        }
        let e = |k: usize| {
            let mut p = [0u8; 3];
            p[k] = 1;
            p
        };
        for i in 0..3 {
            m.x[i] = monomial_expectation(v, e(i));
            for j in i..3 {
                let mut p = e(i);
                p[j] += 1;
                let val = monomial_expectation(v, p);
                m.xx[i][j] = val;
                m.xx[j][i] = val;
            }
        }
        m.xxx = monomial_expectation(v, [1, 1, 1]);
        m
    }

    /// Weighted sum `Σ w_k M_k`.
    pub fn weighted_sum<'a>(items: impl IntoIterator<Item = (f64, &'a Moments)>) -> Moments {
        let mut out = Moments::default();
        for (w, m) in items {
            out.norm += w * m.norm;
            out.xxx += w * m.xxx;
            for i in 0..3 {
                out.n[i] += w * m.n[i];
                out.nn[i] += w * m.nn[i];
                out.x[i] += w * m.x[i];
                for j in 0..3 {
                    out.xx[i][j] += w * m.xx[i][j];
                }
            }
        }
        out
    }

    /// Arithmetic mean of a non-empty list.
    pub fn mean(items: &[Moments]) -> Moments {
        let w = 1.0 / items.len() as f64;
        Self::weighted_sum(items.iter().map(|m| (w, m)))
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.n.iter().sum::<f64>() / 3.0
    }

    /// `⟨a†a†aa⟩ / ⟨a†a⟩²` for one mode.
    pub fn g2(&self, mode: Mode) -> Result<f64> {
        let i = mode.index();
        if self.n[i] <= 1e-14 {
            return Err(Error::Undefined(format!("g2 of mode {} needs a nonzero photon number", mode.label())));
        }
        Ok(self.nn[i] / (self.n[i] * self.n[i]))
    }

    /// Symmetry-checked coskewness.
    pub fn coskewness(&self) -> Result<f64> {
        for (i, m) in Mode::ALL.iter().enumerate() {
            if self.x[i].abs() > FIRST_MOMENT_TOLERANCE {
                return Err(Error::Symmetry { mode: m.label(), value: self.x[i] });
            }
        }
        Ok(self.coskewness_unchecked())
    }

    /// `⟨x_a x_b x_c⟩ / √(⟨x_a²⟩⟨x_b²⟩⟨x_c²⟩)`.
    pub fn coskewness_unchecked(&self) -> f64 {
        self.xxx / (self.xx[0][0] * self.xx[1][1] * self.xx[2][2]).sqrt()
    }
}

/// Per-mode photon numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumbers {
    pub mean: [f64; 3],
    pub rescaled: [f64; 3],
}

/// Observables of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSet {
    pub n_mean: [f64; 3],
    pub n_rescaled: [f64; 3],
    /// `None` where the photon number vanishes.
    pub g2_zero: [Option<f64>; 3],
    pub coskewness: f64,
    pub xx: [[f64; 3]; 3],
    pub xxx: f64,
}

impl ObservableSet {
    pub fn from_moments(m: &Moments, eta: f64) -> Result<Self> {
        Ok(ObservableSet {
            n_mean: m.n,
            n_rescaled: m.n.map(|n| n / eta),
            g2_zero: Mode::ALL.map(|md| m.g2(md).ok()),
            coskewness: m.coskewness()?,
            xx: m.xx,
            xxx: m.xxx,
        })
    }

    /// Mode-averaged `⟨n⟩/η`.
    pub fn n_rescaled_mean(&self) -> f64 {
        self.n_rescaled.iter().sum::<f64>() / 3.0
    }
}

fn normalized<V: StateView>(v: &V) -> Result<()> {
    let norm: f64 = (0..v.len()).map(|i| v.amp(i).norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Input(format!("state norm {norm} differs from 1")));
    }
    Ok(())
}

/// Photon numbers of a normalized state on the full basis.
pub fn photon_numbers<A: Amplitude>(psi: &[A], basis: &FockBasis, eta: f64) -> Result<PhotonNumbers> {
    let v = Global { basis, psi };
    check_len(&v, basis.dim())?;
    normalized(&v)?;
    let m = Moments::of_view(&v);
    Ok(PhotonNumbers { mean: m.n, rescaled: m.n.map(|n| n / eta) })
}

pub fn g2_zero<A: Amplitude>(psi: &[A], basis: &FockBasis, mode: Mode) -> Result<f64> {
    let v = Global { basis, psi };
    check_len(&v, basis.dim())?;
    normalized(&v)?;
    Moments::of_view(&v).g2(mode)
}

pub fn coskewness<A: Amplitude>(psi: &[A], basis: &FockBasis) -> Result<f64> {
    let v = Global { basis, psi };
    check_len(&v, basis.dim())?;
    normalized(&v)?;
    Moments::of_view(&v).coskewness()
}

/// `⟨x_a^ka x_b^kb x_c^kc⟩` for total order up to 4.
pub fn quadrature_moment<A: Amplitude>(psi: &[A], basis: &FockBasis, powers: [u8; 3]) -> Result<f64> {
    if powers.iter().map(|&k| k as u32).sum::<u32>() > 4 {
        return Err(Error::Unsupported(format!("moment order of {powers:?} exceeds 4")));
    }
    let v = Global { basis, psi };
    check_len(&v, basis.dim())?;
    normalized(&v)?;
    Ok(monomial_expectation(&v, powers))
}

/// Every observable of a normalized state on the full basis.
pub fn evaluate<A: Amplitude>(psi: &[A], basis: &FockBasis, eta: f64) -> Result<ObservableSet> {
    let v = Global { basis, psi };
    check_len(&v, basis.dim())?;
    normalized(&v)?;
    ObservableSet::from_moments(&Moments::of_view(&v), eta)
}

/// Every observable of a normalized state living in one sector.
pub fn evaluate_local<A: Amplitude>(psi: &[A], sector: SectorBasis<'_>, eta: f64) -> Result<ObservableSet> {
    let v = Local { sector, psi };
    check_len(&v, sector.len())?;
    normalized(&v)?;
    ObservableSet::from_moments(&Moments::of_view(&v), eta)
}

/// Product of real coherent states `|α⟩|β⟩|γ⟩` on a truncated basis (not renormalized).
pub fn coherent_product(basis: &FockBasis, amps: [f64; 3]) -> Vec<f64> {
    let c = basis.cutoff();
    let one = |a: f64| {
        let mut v = vec![0.0; c];
        let mut coef = (-a * a / 2.0).exp();
        for (n, x) in v.iter_mut().enumerate() {
            if n > 0 {
                coef *= a / (n as f64).sqrt();
            }
            *x = coef;
        }
        v
    };
    let [va, vb, vc] = amps.map(one);
    basis.states().map(|s| va[s.na as usize] * vb[s.nb as usize] * vc[s.nc as usize]).collect()
}

/// Normalizes a real vector in place, returning the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::build_basis;

    fn fock(b: &FockBasis, s: FockState) -> Vec<f64> {
        let mut v = vec![0.0; b.dim()];
        v[b.index(&s).unwrap()] = 1.0;
        v
    }

    #[test]
    fn fock_states() {
        let b = build_basis(4).unwrap();
        let vac = fock(&b, FockState::VACUUM);
        assert_eq!(photon_numbers(&vac, &b, 1.0).unwrap().mean, [0.0; 3]);
        assert!(matches!(g2_zero(&vac, &b, Mode::A), Err(Error::Undefined(_))));
        assert_eq!(coskewness(&vac, &b).unwrap(), 0.0);
        assert_eq!(quadrature_moment(&vac, &b, [2, 0, 0]).unwrap(), 1.0);
        assert_eq!(quadrature_moment(&vac, &b, [1, 1, 0]).unwrap(), 0.0);
        let one = fock(&b, FockState::new(1, 1, 1));
        assert_eq!(photon_numbers(&one, &b, 2.0).unwrap().rescaled, [0.5; 3]);
        assert_eq!(g2_zero(&one, &b, Mode::B).unwrap(), 0.0);
        assert!((quadrature_moment(&one, &b, [2, 0, 0]).unwrap() - 3.0).abs() < 1e-14);
        let two = fock(&b, FockState::new(0, 2, 0));
        assert!((g2_zero(&two, &b, Mode::B).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(quadrature_moment(&one, &b, [2, 2, 1]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn edge_of_cutoff_is_exact() {
        let b = build_basis(2).unwrap();
        let one = fock(&b, FockState::new(1, 1, 1));
        assert!((quadrature_moment(&one, &b, [2, 0, 0]).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cat_like_superposition() {
        let b = build_basis(4).unwrap();
        let mut v = fock(&b, FockState::VACUUM);
        v[b.index(&FockState::new(2, 2, 2)).unwrap()] = 1.0;
        normalize(&mut v);
        assert!(photon_numbers(&v, &b, 1.0).unwrap().mean.iter().all(|&n| (n - 1.0).abs() < 1e-14));
    }

    #[test]
    fn unnormalized_rejected() {
        let b = build_basis(3).unwrap();
        let v = vec![0.5; b.dim()];
        assert!(matches!(photon_numbers(&v, &b, 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn coherent_state_is_poissonian() {
        let b = build_basis(20).unwrap();
        let mut v = coherent_product(&b, [0.5f64.sqrt(), 0.0, 0.0]);
        normalize(&mut v);
        assert!((g2_zero(&v, &b, Mode::A).unwrap() - 1.0).abs() < 1e-6);
        // A displaced state breaks the parity symmetry, which the coskewness refuses.
        assert!(matches!(coskewness(&v, &b), Err(Error::Symmetry { mode: 'a', .. })));
    }
}
