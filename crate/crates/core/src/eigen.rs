//! Lowest eigenpairs of real symmetric sparse matrices.
//!
//! Small blocks go to a dense symmetric eigensolver. Larger ones use a block
//! Davidson iteration with a diagonal (Olsen-corrected) preconditioner and
//! thick restarts, which copes with the exact two-fold degeneracies of the
//! fully symmetric sector.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operators::SparseOperator;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Dense below `dense_threshold`, iterative above.
    Auto,
    Dense,
    /// Chebyshev-filtered subspace iteration.
    Iterative,
    /// Block Davidson with a diagonal preconditioner.
    Davidson,
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Residual target relative to `max(1, |E|)`.
    pub tol: f64,
    pub max_iter: usize,
    pub dense_threshold: usize,
    pub solver: SolverKind,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-9, max_iter: 3000, dense_threshold: 512, solver: SolverKind::Auto }
    }
}

/// Eigenvalues in ascending order with unit eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// The `k` smallest eigenpairs of a Hermitian operator.
pub fn lowest_eigenpairs(h: &SparseOperator, k: usize, opts: &EigenOptions) -> Result<Eigenpairs> {
    if !h.hermitian {
        return Err(Error::Input("eigensolver needs a Hermitian operator".into()));
    }
    lowest_eigenpairs_csr(&h.matrix, k, &[], opts)
}

/// Like [`lowest_eigenpairs`] on a bare matrix, with optional starting vectors.
pub fn lowest_eigenpairs_csr(
    a: &CsrMatrix,
    k: usize,
    guesses: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<Eigenpairs> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Input("matrix is not square".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Input(format!("requested {k} eigenpairs of a {n}-dimensional block")));
    }
    let block = (k + 4).min(n);
    let dense = match opts.solver {
        SolverKind::Dense => true,
        SolverKind::Auto => n <= opts.dense_threshold,
        SolverKind::Iterative | SolverKind::Davidson => false,
    };
    if dense || (opts.solver == SolverKind::Auto && n < 3 * block) {
        dense_lowest(a, k)
    } else if opts.solver == SolverKind::Davidson {
        davidson(a, k, (k + 2).min(n), guesses, opts)
    } else {
        chebyshev(a, k, block, guesses, opts)
    }
}

fn dense_lowest(a: &CsrMatrix, k: usize) -> Result<Eigenpairs> {
    let m = a.to_dense();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut out = Eigenpairs { values: vec![], vectors: vec![], residuals: vec![], iterations: 0 };
    for &i in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        normalize_sign(&mut v);
        let e = eig.eigenvalues[i];
        out.residuals.push(residual(a, &v, e));
        out.values.push(e);
        out.vectors.push(v);
    }
    Ok(out)
}

/// `‖A v - e v‖`.
pub fn residual(a: &CsrMatrix, v: &[f64], e: f64) -> f64 {
    let av = a.mul_vec(v);
    av.iter().zip(v).map(|(x, y)| (x - e * y).powi(2)).sum::<f64>().sqrt()
}

/// Unit norm with the largest-magnitude entry positive.
fn normalize_sign(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    let mut imax = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[imax].abs() * (1.0 + 1e-9) {
            imax = i;
        }
    }
    let s = if v[imax] < 0.0 { -1.0 / norm } else { 1.0 / norm };
    v.iter_mut().for_each(|x| *x *= s);
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (cx, rx) = x.split_at(x.len() / 4 * 4);
    let (cy, ry) = y.split_at(cx.len());
    for (a, b) in cx.chunks_exact(4).zip(cy.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += a[l] * b[l];
        }
    }
    let tail: f64 = rx.iter().zip(ry).map(|(a, b)| a * b).sum();
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Column-major workspace of `cap` vectors of length `n`.
struct Basis {
    n: usize,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    t: DMatrix<f64>,
    m: usize,
}

impl Basis {
    fn col(&self, j: usize) -> &[f64] {
        &self.v.as_slice()[j * self.n..(j + 1) * self.n]
    }

    /// Orthonormalizes `x` against the basis and appends it; `false` if it was dependent.
    fn append(&mut self, a: &CsrMatrix, mut x: Vec<f64>) -> bool {
        let n = self.n;
        let x0 = dot(&x, &x).sqrt();
        if x0 == 0.0 || !x0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            if self.m == 0 {
                break;
            }
            let vm = self.v.columns(0, self.m);
            let xv = nalgebra::DVectorView::from_slice(&x, n);
            let h = vm.tr_mul(&xv);
            let proj = vm * h;
            x.iter_mut().zip(proj.iter()).for_each(|(a, b)| *a -= b);
        }
        let norm = dot(&x, &x).sqrt();
        if norm < 1e-10 * x0 {
            return false;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let j = self.m;
        self.v.as_mut_slice()[j * n..(j + 1) * n].copy_from_slice(&x);
        a.mul_vec_into(&x, &mut self.w.as_mut_slice()[j * n..(j + 1) * n]);
        let wj = &self.w.as_slice()[j * n..(j + 1) * n];
        for i in 0..=j {
            let tij = dot(self.col(i), wj);
            self.t[(i, j)] = tij;
            self.t[(j, i)] = tij;
        }
        self.m += 1;
        true
    }
}

fn davidson(a: &CsrMatrix, k: usize, block: usize, guesses: &[Vec<f64>], opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = a.nrows();
    let diag = a.diagonal();
    let cap = (4 * block).max(24).min(n);
    let keep = (2 * block).min(cap - block).max(k);
    let mut b = Basis {
        n,
        v: DMatrix::zeros(n, cap),
        w: DMatrix::zeros(n, cap),
        t: DMatrix::zeros(cap, cap),
        m: 0,
    };

    for g in guesses.iter().filter(|g| g.len() == n).take(block) {
        b.append(a, g.clone());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(i.cmp(&j)));
    let mut units = order.into_iter();
    let mut salt = 0usize;
    while b.m < block {
        let Some(i) = units.next() else { break };
        // A small deterministic admixture breaks exact symmetries of unit vectors.
        salt += 1;
        let mut e: Vec<f64> =
            (0..n).map(|j| 1e-3 * (((j + 1) as f64 * 0.618_033_988_749_895 * salt as f64).fract() - 0.5)).collect();
        e[i] += 1.0;
        b.append(a, e);
    }

    let mut worst = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let m = b.m;
        let tm = b.t.view((0, 0), (m, m)).clone_owned();
        let eig = SymmetricEigen::new(tm);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let nb = block.min(m);
        let theta: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = DMatrix::from_fn(m, nb, |r, c| eig.eigenvectors[(r, idx[c])]);
        let x = b.v.columns(0, m) * &y;
        let ax = b.w.columns(0, m) * &y;

        let mut resid = Vec::with_capacity(nb);
        let mut rvecs = Vec::with_capacity(nb);
        for c in 0..nb {
            let r: Vec<f64> = ax.column(c).iter().zip(x.column(c).iter()).map(|(p, q)| p - theta[c] * q).collect();
            resid.push(dot(&r, &r).sqrt());
            rvecs.push(r);
        }
        let done = |c: usize| resid[c] <= opts.tol * theta[c].abs().max(1.0);
        worst = (0..k.min(nb)).map(|c| resid[c] / theta[c].abs().max(1.0)).fold(0.0, f64::max);
        if nb >= k && (0..k).all(done) {
            let mut out = Eigenpairs { values: vec![], vectors: vec![], residuals: vec![], iterations: iter + 1 };
            for c in 0..k {
                let mut v: Vec<f64> = x.column(c).iter().copied().collect();
                normalize_sign(&mut v);
                out.residuals.push(residual(a, &v, theta[c]));
                out.values.push(theta[c]);
                out.vectors.push(v);
            }
            return Ok(out);
        }

        let corrections: Vec<Vec<f64>> = (0..nb)
            .filter(|&c| !done(c))
            .map(|c| olsen(&diag, theta[c], &rvecs[c], &x.column(c).iter().copied().collect::<Vec<_>>()))
            .collect();

        if m + corrections.len() > cap {
            let kk = keep.min(m);
            let yk = DMatrix::from_fn(m, kk, |r, c| eig.eigenvectors[(r, idx[c])]);
            let vk = b.v.columns(0, m) * &yk;
            let wk = b.w.columns(0, m) * &yk;
            b.v.columns_mut(0, kk).copy_from(&vk);
            b.w.columns_mut(0, kk).copy_from(&wk);
            let tk = vk.tr_mul(&wk);
            b.t.fill(0.0);
            for i in 0..kk {
                for j in 0..kk {
                    b.t[(i, j)] = 0.5 * (tk[(i, j)] + tk[(j, i)]);
                }
            }
            b.m = kk;
        }
        let mut added = 0;
        for t in corrections {
            if b.m < cap && b.append(a, t) {
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
    }
    Err(Error::Solver { iterations: opts.max_iter, residual: worst })
}

/// Gershgorin upper bound on the largest eigenvalue.
fn upper_bound(a: &CsrMatrix) -> f64 {
    (0..a.nrows())
        .map(|i| {
            let (c, v) = a.row(i);
            c.iter().zip(v).map(|(&j, &x)| if j == i { x } else { x.abs() }).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `A·X` for a block stored as the columns of `xt` (shape `b × n`).
fn block_apply(a: &CsrMatrix, xt: &DMatrix<f64>, yt: &mut DMatrix<f64>) {
    a.mul_block_row_major(xt.as_slice(), yt.as_mut_slice(), xt.nrows());
}

/// Orthonormalizes the rows of `xt` (shape `b × n`) by two Cholesky-QR passes,
/// falling back to Householder QR when the Gram matrix is singular.
fn orthonormal_rows(mut xt: DMatrix<f64>) -> DMatrix<f64> {
    for _ in 0..2 {
        let g = &xt * xt.transpose();
        match g.cholesky() {
            Some(ch) => {
                let l = ch.l();
                xt = l.solve_lower_triangular(&xt).expect("nonsingular factor");
            }
            None => {
                let b = xt.nrows();
                let q = xt.transpose().qr().q();
                return q.columns(0, b).transpose();
            }
        }
    }
    xt
}

/// Chebyshev-filtered subspace iteration.
///
/// Each sweep applies a degree-`degree` Chebyshev polynomial that damps the
/// interval `[cut, upper]` above the current block, then performs a
/// Rayleigh-Ritz step. Blocks are kept row-major so that one pass over the
/// matrix serves every vector.
fn chebyshev(a: &CsrMatrix, k: usize, block: usize, guesses: &[Vec<f64>], opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = a.nrows();
    let degree = 32;
    let upper = upper_bound(a);
    let mut x = DMatrix::<f64>::zeros(block, n);
    let mut filled = 0;
    for g in guesses.iter().filter(|g| g.len() == n).take(block) {
        for (i, &v) in g.iter().enumerate() {
            x[(filled, i)] = v;
        }
        filled += 1;
    }
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for j in filled..block {
        for i in 0..n {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            x[(j, i)] = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
    }
    let mut x = orthonormal_rows(x);
    let mut ax = DMatrix::<f64>::zeros(block, n);
    let mut prev = DMatrix::<f64>::zeros(block, n);
    let mut tmp = DMatrix::<f64>::zeros(block, n);
    let mut worst = f64::INFINITY;
    for iter in 0..opts.max_iter {
        block_apply(a, &x, &mut ax);
        let t = &x * ax.transpose();
        let t = (&t + t.transpose()) * 0.5;
        let eig = SymmetricEigen::new(t);
        let mut idx: Vec<usize> = (0..block).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let theta: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let yt = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(c, idx[r])]);
        x = &yt * &x;
        ax = &yt * &ax;
        let resid: Vec<f64> = (0..k)
            .map(|c| {
                let r = ax.row(c) - x.row(c) * theta[c];
                r.norm() / theta[c].abs().max(1.0)
            })
            .collect();
        worst = resid.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tol {
            let mut out = Eigenpairs { values: vec![], vectors: vec![], residuals: vec![], iterations: iter + 1 };
            for c in 0..k {
                let mut v: Vec<f64> = x.row(c).iter().copied().collect();
                normalize_sign(&mut v);
                out.residuals.push(residual(a, &v, theta[c]));
                out.values.push(theta[c]);
                out.vectors.push(v);
            }
            return Ok(out);
        }
        let cut = theta[block - 1];
        let low = theta[0];
        if !(cut < upper) {
            break;
        }
        let e = (upper - cut) / 2.0;
        let c = (upper + cut) / 2.0;
        let mut sigma = e / (low - c);
        let tau = 2.0 / sigma;
        // First step reuses A·X from the Rayleigh-Ritz stage.
        prev.copy_from(&x);
        let mut cur = ax.clone();
        let s = sigma / e;
        cur.as_mut_slice().iter_mut().zip(x.as_slice()).for_each(|(y, &xv)| *y = (*y - c * xv) * s);
        for _ in 1..degree {
            let s_new = 1.0 / (tau - sigma);
            block_apply(a, &cur, &mut tmp);
            let (p, q) = (2.0 * s_new / e, sigma * s_new);
            for ((pv, &tv), &cv) in prev.as_mut_slice().iter_mut().zip(tmp.as_slice()).zip(cur.as_slice()) {
                *pv = p * (tv - c * cv) - q * *pv;
            }
            std::mem::swap(&mut prev, &mut cur);
            sigma = s_new;
        }
        x = orthonormal_rows(cur);
    }
    Err(Error::Solver { iterations: opts.max_iter, residual: worst })
}

/// Diagonal preconditioner with the Olsen correction keeping `t ⟂ x`.
fn olsen(diag: &[f64], theta: f64, r: &[f64], x: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = diag
        .iter()
        .map(|&d| {
            let den = theta - d;
            if den.abs() < 1e-3 {
                1e3_f64.copysign(den)
            } else {
                1.0 / den
            }
        })
        .collect();
    let mr: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mx: Vec<f64> = x.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let den = dot(x, &mx);
    let eps = if den.abs() > 1e-300 { dot(x, &mr) / den } else { 0.0 };
    mr.iter().zip(&mx).map(|(a, b)| a - eps * b).collect()
}
