use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::liouvillian::{liouvillian_block, BlockState, DENSE_LIMIT};
use super::OpenSystem;
use crate::error::{Error, Result};
use crate::hilbert::FockState;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteadyMethod {
    /// Dense LU when the block Liouvillian fits in [`DENSE_LIMIT`], GMRES otherwise.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Relative residual of the bordered system.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions { method: SteadyMethod::Auto, tol: 1e-11, restart: 40, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: BlockState,
    /// `‖L ρ‖₂` after normalization.
    pub residual: f64,
    pub iterations: usize,
    pub method: SteadyMethod,
}

/// Steady state in the block-diagonal subspace, which holds the state reached from any Fock state.
///
/// Solves `L ρ + Tr(ρ) |0><0| = |0><0|`, whose solution has unit trace and `L ρ = 0`.
pub fn steady_state(sys: &OpenSystem, opts: &SteadyOptions) -> Result<SteadyState> {
    if sys.kappa() <= 0.0 {
        return Err(Error::Domain("a steady state needs kappa > 0".into()));
    }
    let proto = BlockState::zeros(sys);
    let method = match opts.method {
        SteadyMethod::Auto if proto.len() <= DENSE_LIMIT => SteadyMethod::Dense,
        SteadyMethod::Auto => SteadyMethod::Iterative,
        m => m,
    };
    let (vs, vk) = sys.locate(&FockState::VACUUM)?;
    let vac = proto.offsets()[vs] + vk * proto.dim(vs) + vk;
    let diag: Vec<usize> =
        (0..4).flat_map(|s| (0..proto.dim(s)).map(move |i| (s, i))).map(|(s, i)| proto.offsets()[s] + i * proto.dim(s) + i).collect();
    let (data, iterations) = match method {
        SteadyMethod::Dense => {
            let mut l = liouvillian_block(sys)?;
            for &c in &diag {
                l[(vac, c)] += Complex64::new(1.0, 0.0);
            }
            let mut b = DVector::zeros(proto.len());
            b[vac] = Complex64::new(1.0, 0.0);
            let x = l.lu().solve(&b).ok_or_else(|| Error::Solver { iterations: 0, residual: f64::INFINITY })?;
            (x.as_slice().to_vec(), 1)
        }
        _ => gmres_steady(sys, &proto, vac, &diag, opts)?,
    };
    let mut state = proto;
    state.data = data;
    state.hermitize();
    let tr = state.trace();
    state.scale(Complex64::new(1.0, 0.0) / tr);
    let mut y = vec![ZERO; state.len()];
    sys.apply_liouvillian(&state.data, &mut y, state.offsets());
    let residual = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(SteadyState { state, residual, iterations, method })
}

/// Exact inverse of the diagonal, jump and trace parts of the bordered operator.
///
/// Jumps lower the total photon number of both indices by one, so the
/// system is triangular when solved from the highest `N_i + N_j` down.
struct Preconditioner {
    order: Vec<u32>,
    /// Per flat index: inverse diagonal; for the vacuum entry 1.
    inv_diag: Vec<Complex64>,
    /// Per flat index: sources `(flat index, κ c_i c_j)` of the jump term.
    jumps: Vec<[(u32, f64); 3]>,
    vac: usize,
    diag: Vec<usize>,
}

impl Preconditioner {
    fn new(sys: &OpenSystem, proto: &BlockState, vac: usize, diag: &[usize]) -> Self {
        let n = proto.len();
        let off = proto.offsets();
        let kappa = sys.kappa();
        let mut inv_diag = vec![ZERO; n];
        let mut jumps = vec![[(u32::MAX, 0.0); 3]; n];
        let mut key = vec![0u32; n];
        for s in 0..4 {
            let d = proto.dim(s);
            let e = sys.h_diag[s].as_slice();
            let nt: Vec<u32> = sys.total_number(s).collect();
            for i in 0..d {
                for j in 0..d {
                    let f = off[s] + i * d + j;
                    key[f] = nt[i] + nt[j];
                    let z = Complex64::new(-0.5 * kappa * (nt[i] + nt[j]) as f64, -(e[i] - e[j]));
                    inv_diag[f] = if f == vac { Complex64::new(1.0, 0.0) } else { 1.0 / z };
                    for m in 0..3 {
                        let map = &sys.raise[s][m];
                        if let (Some((ki, ci)), Some((kj, cj))) = (map[i], map[j]) {
                            let t = sys.target_sector(s, m);
                            let src = off[t] + ki as usize * proto.dim(t) + kj as usize;
                            jumps[f][m] = (src as u32, kappa * ci * cj);
                        }
                    }
                }
            }
        }
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by_key(|&f| std::cmp::Reverse(key[f as usize]));
        Preconditioner { order, inv_diag, jumps, vac, diag: diag.to_vec() }
    }

    fn solve(&self, r: &[Complex64], z: &mut [Complex64]) {
        for &f in &self.order {
            let f = f as usize;
            let mut acc = r[f];
            for &(src, c) in &self.jumps[f] {
                if src != u32::MAX {
                    acc -= z[src as usize] * c;
                }
            }
            if f == self.vac {
                for &dgl in &self.diag {
                    if dgl != f {
                        acc -= z[dgl];
                    }
                }
            }
            z[f] = acc * self.inv_diag[f];
        }
    }
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted right-preconditioned GMRES on the bordered system.
fn gmres_steady(
    sys: &OpenSystem,
    proto: &BlockState,
    vac: usize,
    diag: &[usize],
    opts: &SteadyOptions,
) -> Result<(Vec<Complex64>, usize)> {
    let n = proto.len();
    let off = *proto.offsets();
    let pre = Preconditioner::new(sys, proto, vac, diag);
    let apply = |x: &[Complex64], y: &mut [Complex64]| {
        sys.apply_liouvillian(x, y, &off);
        let tr: Complex64 = diag.iter().map(|&i| x[i]).sum();
        y[vac] += tr;
    };
    let m = opts.restart.max(1);
    let mut x = vec![ZERO; n];
    let mut b = vec![ZERO; n];
    b[vac] = Complex64::new(1.0, 0.0);
    // Start from the preconditioned right-hand side.
    pre.solve(&b, &mut x);
    let mut r = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    let mut z = vec![ZERO; n];
    let mut total = 0;
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut resid = f64::INFINITY;
    while total < opts.max_iter {
        apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        resid = beta;
        if beta < opts.tol {
            return Ok((x, total));
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hcol: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, Complex64)> = Vec::with_capacity(m);
        let mut g = vec![ZERO; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            pre.solve(&basis[k], &mut z);
            apply(&z, &mut w);
            let mut h = vec![ZERO; k + 2];
            for (j, v) in basis.iter().enumerate() {
                let c = dotc(v, &w);
                h[j] = c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            let hn = norm(&w);
            h[k + 1] = Complex64::new(hn, 0.0);
            for (j, &(c, s)) in cs.iter().enumerate() {
                let (a, bb) = (h[j], h[j + 1]);
                h[j] = a * c + s * bb;
                h[j + 1] = -s.conj() * a + bb * c;
            }
            let (a, bb) = (h[k], h[k + 1]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, Complex64::new(1.0, 0.0))
            } else {
                (a.norm() / rho, (a / a.norm()) * bb.conj() / rho)
            };
            h[k] = a * c + s * bb;
            h[k + 1] = ZERO;
            let gk = g[k];
            g[k] = gk * c;
            g[k + 1] = -s.conj() * gk;
            cs.push((c, s));
            hcol.push(h);
            total += 1;
            k_used = k + 1;
            resid = g[k + 1].norm();
            if resid < opts.tol || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hcol[j][i] * y[j];
            }
            y[i] = acc / hcol[i][i];
        }
        let mut comb = vec![ZERO; n];
        for (j, yj) in y.iter().enumerate() {
            for (c, v) in comb.iter_mut().zip(&basis[j]) {
                *c += yj * v;
            }
        }
        pre.solve(&comb, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
    Err(Error::Solver { iterations: total, residual: resid })
}

/// Null space of a dense Liouvillian on the full space.
#[derive(Debug, Clone)]
pub struct DirectSteady {
    /// Dimension of the numerical null space.
    pub multiplicity: usize,
    /// One density matrix per null vector; unit trace where the trace is nonzero, otherwise unit Frobenius norm.
    pub states: Vec<DMatrix<Complex64>>,
    pub singular_values: Vec<f64>,
}

impl DirectSteady {
    pub fn unique(&self) -> Result<&DMatrix<Complex64>> {
        if self.multiplicity == 1 {
            Ok(&self.states[0])
        } else {
            Err(Error::Degenerate(self.multiplicity))
        }
    }
}

/// Null vectors of `L` from its SVD, reshaped to `d × d` matrices.
pub fn steady_state_direct(l: &DMatrix<Complex64>, tol: f64) -> Result<DirectSteady> {
    let n = l.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || l.ncols() != n {
        return Err(Error::Input(format!("superoperator of shape {}x{} is not d^2 x d^2", n, l.ncols())));
    }
    let svd = l.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^H");
    let smax = svd.singular_values.max();
    let mut states = Vec::new();
    for (k, &sv) in svd.singular_values.iter().enumerate() {
        if sv > tol * smax.max(1.0) {
            continue;
        }
        let v = vt.row(k).adjoint();
        let mut rho = DMatrix::from_fn(d, d, |i, j| v[i * d + j]);
        let tr = rho.trace();
        if tr.norm() > 1e-8 {
            rho /= tr;
            rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        } else {
            let f = rho.norm();
            rho /= Complex64::new(f, 0.0);
        }
        states.push(rho);
    }
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(f64::total_cmp);
    Ok(DirectSteady { multiplicity: states.len(), states, singular_values })
}
