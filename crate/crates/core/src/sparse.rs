//! Compressed sparse row storage for real matrices.

use std::io::Write;
use std::ops::{Add, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Entries with magnitude at or below this are not stored.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// Element type a real CSR matrix can act on.
pub trait Scalar: Copy + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn zero() -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .expect("diagonal indices in range")
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = t.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::Input(format!("triplet ({r}, {c}) outside {nrows}x{ncols}")));
        }
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data = Vec::with_capacity(t.len());
        let mut i = 0;
        while i < t.len() {
            let (r, c, mut v) = t[i];
            i += 1;
            while i < t.len() && t[i].0 == r && t[i].1 == c {
                v += t[i].2;
                i += 1;
            }
            if v.abs() > DROP_TOLERANCE {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(CsrMatrix { nrows, ncols, indptr, indices, data })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let mut acc = T::zero();
            for k in a..b {
                acc = acc + x[self.indices[k]] * self.data[k];
            }
            *yi = acc;
        }
    }

    /// `Y = A X` for `b` vectors stored row-major (`x[i*b + j]` is row `i` of vector `j`).
    pub fn mul_block_row_major(&self, x: &[f64], y: &mut [f64], b: usize) {
        assert_eq!(x.len(), self.ncols * b);
        assert_eq!(y.len(), self.nrows * b);
        for (i, yi) in y.chunks_exact_mut(b).enumerate() {
            yi.fill(0.0);
            for k in self.indptr[i]..self.indptr[i + 1] {
                let a = self.data[k];
                let j = self.indices[k];
                let xj = &x[j * b..(j + 1) * b];
                for (u, &v) in yi.iter_mut().zip(xj) {
                    *u += a * v;
                }
            }
        }
    }

    pub fn mul_vec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `⟨x|A|y⟩` for real vectors.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                x[i] * c.iter().zip(v).map(|(&j, &a)| a * y[j]).sum::<f64>()
            })
            .sum()
    }

    /// `⟨x|A|y⟩` for complex vectors (conjugating `x`).
    pub fn bilinear_c(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (i, xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for (&j, &a) in c.iter().zip(v) {
                acc += y[j] * a;
            }
            s += xi.conj() * acc;
        }
        s
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.ncols != other.nrows {
            return Err(Error::Input(format!(
                "shape mismatch {}x{} times {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                if acc[j].abs() > DROP_TOLERANCE {
                    indices.push(j);
                    data.push(acc[j]);
                }
            }
            indptr[i + 1] = indices.len();
        }
        Ok(CsrMatrix { nrows: self.nrows, ncols: other.ncols, indptr, indices, data })
    }

    /// `A + alpha·B`.
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> Result<CsrMatrix> {
        if (self.nrows, self.ncols) != (other.nrows, other.ncols) {
            return Err(Error::Input("shape mismatch in sum".into()));
        }
        let t = self.triplets().chain(other.triplets().map(|(i, j, v)| (i, j, alpha * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
            .expect("transpose stays in range")
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets().map(|(i, j, v)| (v - self.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Block `A[rows, cols]`; `col_map[j]` gives the new column of global column `j`.
    pub fn extract(&self, rows: &[usize], ncols: usize, col_map: impl Fn(usize) -> Option<usize>) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for &r in rows {
            let (c, v) = self.row(r);
            for (&j, &x) in c.iter().zip(v) {
                if let Some(k) = col_map(j) {
                    indices.push(k);
                    data.push(x);
                }
            }
            indptr.push(indices.len());
        }
        // Column order is preserved because col_map is monotone on a sector.
        CsrMatrix { nrows: rows.len(), ncols, indptr, indices, data }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// One `row col value` line per stored entry.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, 3, [(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (2, 0, 2.0), (0, 2, 0.5), (2, 1, 1e-17)])
            .unwrap()
    }

    #[test]
    fn assembly_sums_and_drops() {
        let a = sample();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 2), 2.5);
        assert_eq!(a.get(2, 1), 0.0);
        assert!(CsrMatrix::from_triplets(2, 2, [(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn product_matches_dense() {
        let a = sample();
        let b = a.transpose().add_scaled(&CsrMatrix::identity(3), 2.0).unwrap();
        let p = a.matmul(&b).unwrap().to_dense();
        let q = a.to_dense() * b.to_dense();
        assert!((p - q).abs().max() < 1e-14);
    }

    #[test]
    fn matvec_real_and_complex() {
        let a = sample();
        let x = [1.0, -2.0, 0.5];
        assert_eq!(a.mul_vec(&x), vec![1.0 + 1.25, -6.0, 2.0]);
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(0.0, v)).collect();
        let yc = a.mul_vec(&xc);
        assert_eq!(yc[0], Complex64::new(0.0, 2.25));
        let xb = [1.0, 0.0, -2.0, 1.0, 0.5, 0.0];
        let mut yb = [0.0; 6];
        a.mul_block_row_major(&xb, &mut yb, 2);
        assert_eq!([yb[0], yb[2], yb[4]], [2.25, -6.0, 2.0]);
        assert!((a.bilinear(&x, &x) - a.bilinear_c(&xc, &xc).re).abs() < 1e-14);
    }

    #[test]
    fn triplet_dump() {
        let mut out = Vec::new();
        sample().write_triplets(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert_eq!(s.lines().count(), 5);
        assert!(s.lines().nth(1).unwrap().starts_with("0 0 1.0"));
    }
}
