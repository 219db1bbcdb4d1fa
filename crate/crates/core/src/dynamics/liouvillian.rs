use nalgebra::DMatrix;
use num_complex::Complex64;

use super::OpenSystem;
use crate::error::{Error, Result};
use crate::hilbert::{FockState, Mode};
use crate::observables::Moments;
use crate::operators::{build_hamiltonian, mode_operator, OpKind};

/// Largest superoperator dimension assembled densely.
pub const DENSE_LIMIT: usize = 4096;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Block-diagonal density matrix, one row-major block per sector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub data: Vec<Complex64>,
    offsets: [usize; 5],
    dims: [usize; 4],
}

impl BlockState {
    pub fn zeros(sys: &OpenSystem) -> Self {
        let dims: [usize; 4] = std::array::from_fn(|s| sys.sector_dim(s));
        let mut offsets = [0; 5];
        for s in 0..4 {
            offsets[s + 1] = offsets[s] + dims[s] * dims[s];
        }
        BlockState { data: vec![ZERO; offsets[4]], offsets, dims }
    }

    /// `|st><st|`.
    pub fn pure_fock(sys: &OpenSystem, st: &FockState) -> Result<Self> {
        let mut r = Self::zeros(sys);
        let (s, k) = sys.locate(st)?;
        let d = r.dims[s];
        r.data[r.offsets[s] + k * d + k] = Complex64::new(1.0, 0.0);
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, s: usize) -> usize {
        self.dims[s]
    }

    pub fn block(&self, s: usize) -> &[Complex64] {
        &self.data[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn block_matrix(&self, s: usize) -> DMatrix<Complex64> {
        let d = self.dims[s];
        DMatrix::from_row_slice(d, d, self.block(s))
    }

    pub(crate) fn offsets(&self) -> &[usize; 5] {
        &self.offsets
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|s| (0..self.dims[s]).map(|i| self.block(s)[i * self.dims[s] + i]).sum::<Complex64>()).sum()
    }

    pub fn scale(&mut self, c: Complex64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    /// Replaces each block by its Hermitian part.
    pub fn hermitize(&mut self) {
        for s in 0..4 {
            let (o, d) = (self.offsets[s], self.dims[s]);
            for i in 0..d {
                for j in i..d {
                    let a = self.data[o + i * d + j];
                    let b = self.data[o + j * d + i];
                    let h = (a + b.conj()) * 0.5;
                    self.data[o + i * d + j] = h;
                    self.data[o + j * d + i] = h.conj();
                }
            }
        }
    }

    /// Largest `|ρ_ij - conj(ρ_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for s in 0..4 {
            let (b, d) = (self.block(s), self.dims[s]);
            for i in 0..d {
                for j in 0..d {
                    e = e.max((b[i * d + j] - b[j * d + i].conj()).norm());
                }
            }
        }
        e
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..4)
            .filter(|&s| self.dims[s] > 0)
            .map(|s| {
                let m = self.block_matrix(s);
                let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
                h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn moments(&self, sys: &OpenSystem) -> Moments {
        let mut m = Moments::default();
        for s in 0..4 {
            let (b, d) = (self.block(s), self.dims[s]);
            for (i, occ) in sys.occupation[s].iter().enumerate() {
                let p = b[i * d + i].re;
                m.norm += p;
                for k in 0..3 {
                    let n = occ[k] as f64;
                    m.n[k] += p * n;
                    m.nn[k] += p * n * (n - 1.0);
                }
            }
            let tr = |a: &crate::sparse::CsrMatrix| -> f64 {
                let mut acc = 0.0;
                for i in 0..d {
                    let (c, v) = a.row(i);
                    for (&j, &x) in c.iter().zip(v) {
                        acc += x * b[j * d + i].re;
                    }
                }
                acc
            };
            for k in 0..3 {
                m.xx[k][k] += tr(&sys.x2[s][k]);
            }
            m.xxx += tr(&sys.xxx[s]);
        }
        m
    }

    /// The state as a dense matrix on the full basis.
    pub fn to_global(&self, sys: &OpenSystem) -> DMatrix<Complex64> {
        let n = sys.basis().dim();
        let mut out = DMatrix::zeros(n, n);
        for (s, sec) in sys.basis().sector_decompose().iter().enumerate() {
            let (b, d) = (self.block(s), self.dims[s]);
            for i in 0..d {
                for j in 0..d {
                    out[(sec.indices[i], sec.indices[j])] = b[i * d + j];
                }
            }
        }
        out
    }
}

impl OpenSystem {
    /// `y = L x` on the block-diagonal subspace.
    pub(crate) fn apply_liouvillian(&self, x: &[Complex64], y: &mut [Complex64], offsets: &[usize; 5]) {
        let kappa = self.kappa();
        for s in 0..4 {
            let d = self.sector_dim(s);
            let o = offsets[s];
            let rho = &x[o..o + d * d];
            let out = &mut y[o..o + d * d];
            let h = &self.h[s];
            let ntot: Vec<f64> = self.total_number(s).map(|n| n as f64).collect();
            for i in 0..d {
                let row = &mut out[i * d..(i + 1) * d];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = rho[i * d + j] * (-0.5 * kappa * (ntot[i] + ntot[j]));
                }
                // -i H ρ
                let (cols, vals) = h.row(i);
                for (&k, &v) in cols.iter().zip(vals) {
                    let src = &rho[k * d..(k + 1) * d];
                    let c = -I * v;
                    for (r, &z) in row.iter_mut().zip(src) {
                        *r += c * z;
                    }
                }
                // +i ρ H; H is real symmetric
                let src = &rho[i * d..(i + 1) * d];
                for (j, r) in row.iter_mut().enumerate() {
                    let (cols, vals) = h.row(j);
                    let mut acc = ZERO;
                    for (&k, &v) in cols.iter().zip(vals) {
                        acc += src[k] * v;
                    }
                    *r += I * acc;
                }
            }
            if kappa != 0.0 {
                for m in 0..3 {
                    let t = self.target_sector(s, m);
                    let dt = self.sector_dim(t);
                    let src = &x[offsets[t]..offsets[t] + dt * dt];
                    let map = &self.raise[s][m];
                    for i in 0..d {
                        let Some((ki, ci)) = map[i] else { continue };
                        let row = &mut out[i * d..(i + 1) * d];
                        let srow = &src[ki as usize * dt..(ki as usize + 1) * dt];
                        for (j, r) in row.iter_mut().enumerate() {
                            if let Some((kj, cj)) = map[j] {
                                *r += srow[kj as usize] * (kappa * ci * cj);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Bound on the spectral radius of the block Liouvillian.
    pub(crate) fn liouvillian_bound(&self) -> f64 {
        let hn = self.h.iter().map(|h| h.norm_inf()).fold(0.0, f64::max);
        let nmax = 3.0 * (self.cutoff() as f64 - 1.0);
        2.0 * hn + 2.0 * self.kappa() * nmax
    }
}

/// Liouvillian on the full `d² × d²` space, `vec(ρ)` row-major.
pub fn liouvillian_dense(sys: &OpenSystem) -> Result<DMatrix<Complex64>> {
    let b = sys.basis();
    let d = b.dim();
    if d * d > DENSE_LIMIT {
        return Err(Error::Capacity(format!(
            "dense Liouvillian needs d^2 <= {DENSE_LIMIT}, cutoff {} gives {}",
            b.cutoff(),
            d * d
        )));
    }
    let h = build_hamiltonian(&sys.params, b)?.matrix.to_dense();
    let kappa = sys.kappa();
    let mut l = DMatrix::<Complex64>::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let r = i * d + j;
            for k in 0..d {
                if h[(i, k)] != 0.0 {
                    l[(r, k * d + j)] -= I * h[(i, k)];
                }
                if h[(k, j)] != 0.0 {
                    l[(r, i * d + k)] += I * h[(k, j)];
                }
            }
        }
    }
    for m in Mode::ALL {
        let a = mode_operator(b, m, OpKind::Annihilate).matrix;
        let ad = a.to_dense();
        let n = ad.transpose() * &ad;
        for (i, k, aik) in a.triplets() {
            for (j, l2, ajl) in a.triplets() {
                l[(i * d + j, k * d + l2)] += Complex64::new(kappa * aik * ajl, 0.0);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let r = i * d + j;
                for k in 0..d {
                    if n[(i, k)] != 0.0 {
                        l[(r, k * d + j)] -= Complex64::new(0.5 * kappa * n[(i, k)], 0.0);
                    }
                    if n[(k, j)] != 0.0 {
                        l[(r, i * d + k)] -= Complex64::new(0.5 * kappa * n[(k, j)], 0.0);
                    }
                }
            }
        }
    }
    Ok(l)
}

/// `max |[S, L]|` for the superoperator `S(ρ) = S_k ρ S_k†`, `k = 1, 2, 3`.
pub fn superoperator_commutator(sys: &OpenSystem, l: &DMatrix<Complex64>, which: u8) -> f64 {
    let par = sys.basis().parity_diagonal(which);
    let d = par.len();
    let mut worst: f64 = 0.0;
    for r in 0..d * d {
        let sr = par[r / d] * par[r % d];
        for c in 0..d * d {
            let sc = par[c / d] * par[c % d];
            worst = worst.max((l[(r, c)] * (sc - sr)).norm());
        }
    }
    worst
}

/// Liouvillian restricted to block-diagonal states, assembled densely.
pub fn liouvillian_block(sys: &OpenSystem) -> Result<DMatrix<Complex64>> {
    let proto = BlockState::zeros(sys);
    let n = proto.len();
    if n > DENSE_LIMIT {
        return Err(Error::Capacity(format!("block Liouvillian of dimension {n} exceeds {DENSE_LIMIT}")));
    }
    let mut l = DMatrix::zeros(n, n);
    let mut e = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    for c in 0..n {
        e[c] = Complex64::new(1.0, 0.0);
        sys.apply_liouvillian(&e, &mut y, proto.offsets());
        l.set_column(c, &nalgebra::DVector::from_column_slice(&y));
        e[c] = ZERO;
    }
    Ok(l)
}

/// Settings for [`evolve_master`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterOptions {
    pub t_max: f64,
    /// Largest step; reduced automatically for stability.
    pub dt: f64,
    /// Interval between recorded moments.
    pub sample_dt: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions { t_max: 20.0, dt: 0.01, sample_dt: 0.1 }
    }
}

/// Integrates the master equation with classical RK4.
///
/// Returns the sampled moments (including `t = 0`) and the final state.
pub fn evolve_master(sys: &OpenSystem, rho0: &BlockState, opts: &MasterOptions) -> Result<(Vec<(f64, Moments)>, BlockState)> {
    if !(opts.t_max >= 0.0 && opts.dt > 0.0 && opts.sample_dt > 0.0) {
        return Err(Error::Input("master equation needs t_max >= 0 and positive steps".into()));
    }
    let mut rho = rho0.clone();
    let per_sample = (opts.sample_dt / opts.dt.min(2.5 / sys.liouvillian_bound())).ceil().max(1.0) as usize;
    let h = opts.sample_dt / per_sample as f64;
    let samples = (opts.t_max / opts.sample_dt).round() as usize;
    let n = rho.len();
    let off = *rho.offsets();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
    let mut out = vec![(0.0, rho.moments(sys))];
    for step in 1..=samples {
        for _ in 0..per_sample {
            let x = &rho.data;
            sys.apply_liouvillian(x, &mut k1, &off);
            for i in 0..n {
                tmp[i] = x[i] + k1[i] * (0.5 * h);
            }
            sys.apply_liouvillian(&tmp, &mut k2, &off);
            for i in 0..n {
                tmp[i] = x[i] + k2[i] * (0.5 * h);
            }
            sys.apply_liouvillian(&tmp, &mut k3, &off);
            for i in 0..n {
                tmp[i] = x[i] + k3[i] * h;
            }
            sys.apply_liouvillian(&tmp, &mut k4, &off);
            for i in 0..n {
                rho.data[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        rho.hermitize();
        out.push((step as f64 * opts.sample_dt, rho.moments(sys)));
    }
    Ok((out, rho))
}
