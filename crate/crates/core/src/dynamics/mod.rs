//! Driven-dissipative dynamics with single-photon loss on every mode.
//!
//! All solvers work sector by sector. The Hamiltonian keeps each parity
//! sector, and a jump through mode `m` moves a state to
//! [`SectorLabel::flipped`]. A density matrix grown from a sector-definite
//! initial state stays block diagonal, with one block per sector.

mod ensemble;
mod liouvillian;
mod steady;
mod trajectory;

pub use ensemble::{
    ensemble_run, ensemble_run_with, Checkpoint, EnsembleOptions, EnsembleStats, Estimate, TimeSeries,
    CHECKPOINT_VERSION,
};
pub use liouvillian::{
    evolve_master, liouvillian_block, liouvillian_dense, superoperator_commutator, BlockState, MasterOptions,
    DENSE_LIMIT,
};
pub use steady::{steady_state, steady_state_direct, DirectSteady, SteadyMethod, SteadyOptions, SteadyState};
pub use trajectory::{run_trajectory, JumpEvent, PropagatorKind, TrajectoryOptions, TrajectoryRecord};

use crate::error::{Error, Result};
use crate::hilbert::{build_basis, FockBasis, FockState, Mode, SectorLabel};
use crate::model::ModelParams;
use crate::observables::Moments;
use crate::operators::{quadrature_monomial, restrict_to_sector, sector_hamiltonians};
use crate::sparse::CsrMatrix;
use num_complex::Complex64;

/// Sector-resolved operators of the open system.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    pub params: ModelParams,
    basis: FockBasis,
    /// Sector Hamiltonians.
    h: [CsrMatrix; 4],
    /// Diagonal of `H` per sector.
    h_diag: [Vec<f64>; 4],
    /// Photon numbers `[n_a, n_b, n_c]` per local index.
    occupation: [Vec<[u32; 3]>; 4],
    /// `raise[s][m][i]`: local index in `s.flipped(m)` of `a_m† |i>` and `√(n_m + 1)`.
    raise: [[Vec<Option<(u32, f64)>>; 3]; 4],
    /// `lower[s][m][i]`: local index in `s.flipped(m)` of `a_m |i>` and `√n_m`.
    lower: [[Vec<Option<(u32, f64)>>; 3]; 4],
    x2: [[CsrMatrix; 3]; 4],
    xxx: [CsrMatrix; 4],
}

impl OpenSystem {
    pub fn new(params: &ModelParams, cutoff: usize) -> Result<Self> {
        params.validate()?;
        let basis = build_basis(cutoff)?;
        let h = sector_hamiltonians(params, &basis)?.map(|o| o.matrix);
        let h_diag = std::array::from_fn(|s| h[s].diagonal());
        let sectors = basis.sector_decompose();
        let occupation = std::array::from_fn(|s| (0..sectors[s].len()).map(|i| sectors[s].state(i).as_array()).collect());
        let ladder = |up: bool| -> [[Vec<Option<(u32, f64)>>; 3]; 4] {
            std::array::from_fn(|s| {
                let src = sectors[s];
                std::array::from_fn(|m| {
                    let mode = Mode::ALL[m];
                    let dst = basis.sector(src.label.flipped(mode));
                    (0..src.len())
                        .map(|i| {
                            let st = src.state(i);
                            let n = st.get(mode) as f64;
                            let (t, c) = if up { (Some(st.raised(mode)), (n + 1.0).sqrt()) } else { (st.lowered(mode), n.sqrt()) };
                            t.and_then(|t| dst.local_index(&t)).map(|k| (k as u32, c))
                        })
                        .collect()
                })
            })
        };
        let raise = ladder(true);
        let lower = ladder(false);
        let restrict = |powers: [u8; 3]| -> Result<[CsrMatrix; 4]> {
            let op = quadrature_monomial(&basis, powers);
            let v: Vec<CsrMatrix> =
                SectorLabel::ALL.iter().map(|&l| restrict_to_sector(&op, l, &basis).map(|o| o.matrix)).collect::<Result<_>>()?;
            Ok(v.try_into().expect("four sectors"))
        };
        let [xa, xb, xc] = [[2, 0, 0], [0, 2, 0], [0, 0, 2]].map(restrict);
        let (xa, xb, xc) = (xa?, xb?, xc?);
        let x2 = std::array::from_fn(|s| [xa[s].clone(), xb[s].clone(), xc[s].clone()]);
        let xxx = restrict([1, 1, 1])?;
        Ok(OpenSystem { params: *params, basis, h, h_diag, occupation, raise, lower, x2, xxx })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn cutoff(&self) -> usize {
        self.basis.cutoff()
    }

    pub fn kappa(&self) -> f64 {
        self.params.kappa
    }

    pub fn sector_dim(&self, s: usize) -> usize {
        self.h_diag[s].len()
    }

    pub fn hamiltonian(&self, s: usize) -> &CsrMatrix {
        &self.h[s]
    }

    /// Total photon number of each local basis state.
    pub fn total_number(&self, s: usize) -> impl Iterator<Item = u32> + '_ {
        self.occupation[s].iter().map(|n| n[0] + n[1] + n[2])
    }

    /// `(sector, local index)` of a basis state.
    pub fn locate(&self, st: &FockState) -> Result<(usize, usize)> {
        let g = self
            .basis
            .index(st)
            .ok_or_else(|| Error::Input(format!("state {st} lies outside cutoff {}", self.cutoff())))?;
        let (l, k) = self.basis.locate(g);
        Ok((l.index(), k))
    }

    /// `a_m ψ` for `ψ` in sector `s`, written into `out` in sector `s.flipped(m)`.
    pub fn apply_lowering(&self, s: usize, m: usize, psi: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        for (i, e) in self.lower[s][m].iter().enumerate() {
            if let Some((k, c)) = e {
                out[*k as usize] += psi[i] * *c;
            }
        }
    }

    pub fn target_sector(&self, s: usize, m: usize) -> usize {
        SectorLabel::ALL[s].flipped(Mode::ALL[m]).index()
    }

    /// Moments of a pure state living in sector `s`; parity-odd moments vanish there.
    pub fn pure_moments(&self, s: usize, psi: &[Complex64]) -> Moments {
        let mut m = Moments::default();
        for (amp, occ) in psi.iter().zip(&self.occupation[s]) {
            let p = amp.norm_sqr();
            m.norm += p;
            for k in 0..3 {
                let n = occ[k] as f64;
                m.n[k] += p * n;
                m.nn[k] += p * n * (n - 1.0);
            }
        }
        for k in 0..3 {
            m.xx[k][k] = self.x2[s][k].bilinear_c(psi, psi).re;
        }
        m.xxx = self.xxx[s].bilinear_c(psi, psi).re;
        m
    }

    /// Weight of local basis states with some mode at the top level.
    pub fn edge_weight(&self, s: usize, psi: &[Complex64]) -> f64 {
        let top = self.cutoff() as u32 - 1;
        psi.iter().zip(&self.occupation[s]).filter(|(_, o)| o.iter().any(|&n| n == top)).map(|(a, _)| a.norm_sqr()).sum()
    }
}
